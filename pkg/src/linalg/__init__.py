from src.linalg.tridiag import (
    TridiagSym,
    CholBidiag,
    PartialInverse,
    DenseOracle,
    cholesky,
    solve,
    sample_gaussian,
    partial_inverse,
    dense_oracle,
)

__all__ = ['TridiagSym', 'CholBidiag', 'PartialInverse', 'DenseOracle', 'cholesky', 'solve',
           'sample_gaussian', 'partial_inverse', 'dense_oracle']
