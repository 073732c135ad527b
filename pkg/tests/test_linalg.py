import numpy as np
import pytest

from src.linalg.tridiag import (
    TridiagSym,
    cholesky,
    dense_oracle,
    partial_inverse,
    sample_gaussian,
    solve,
)
from src.models.base_model import ar1_prior_precision
from src.utils.errors import DimensionMismatch, DimensionTooLarge, NotPositiveDefinite


def _random_spd(n, rng):
    offdiag = rng.normal(size=n - 1)
    diag = np.abs(rng.normal(size=n)) + 2.5 + np.abs(np.r_[offdiag, 0]) + np.abs(np.r_[0, offdiag])
    return TridiagSym(diag, offdiag)


@pytest.fixture
def spd(rng):
    return _random_spd(40, rng)


class TestTridiagSym:
    def test_dense_round_trip(self, spd):
        again = TridiagSym.from_dense(spd.to_dense())
        np.testing.assert_allclose(again.diag, spd.diag)
        np.testing.assert_allclose(again.offdiag, spd.offdiag)

    def test_matvec_matches_dense(self, spd, rng):
        x = rng.normal(size=spd.n)
        np.testing.assert_allclose(spd.matvec(x), spd.to_dense() @ x, atol=1e-12)
        assert spd.quadratic_form(x) == pytest.approx(x @ spd.to_dense() @ x)

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatch):
            TridiagSym([1.0, 2.0, 3.0], [0.1])

    def test_immutable(self, spd):
        with pytest.raises(ValueError):
            spd.diag[0] = 0.0

    def test_drop_index_coupling(self, spd):
        reduced, coupling = spd.drop_index(5)
        dense = spd.to_dense()
        keep = [j for j in range(spd.n) if j != 5]
        np.testing.assert_allclose(reduced.to_dense(), dense[np.ix_(keep, keep)])
        np.testing.assert_allclose(coupling, dense[keep, 5])


class TestCholesky:
    def test_recompose(self, spd):
        L = cholesky(spd)
        np.testing.assert_allclose(L.recompose().to_dense(), spd.to_dense(), atol=1e-10)

    def test_logdet_matches_dense(self, spd):
        assert cholesky(spd).logdet == pytest.approx(dense_oracle(spd).logdet, abs=1e-9)

    def test_solve(self, spd, rng):
        b = rng.normal(size=spd.n)
        x = solve(cholesky(spd), b)
        np.testing.assert_allclose(spd.matvec(x), b, atol=1e-10)

    def test_not_positive_definite(self):
        with pytest.raises(NotPositiveDefinite):
            cholesky(TridiagSym([1.0, 1.0], [2.0]))

    def test_one_by_one(self):
        L = cholesky(TridiagSym([4.0], []))
        assert L.logdet == pytest.approx(np.log(4.0))


class TestPartialInverse:
    def test_matches_dense_inverse(self, spd):
        partial = partial_inverse(cholesky(spd))
        inverse = dense_oracle(spd).inverse
        np.testing.assert_allclose(partial.var, np.diag(inverse), rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(partial.cov1, np.diag(inverse, 1), rtol=1e-10, atol=1e-12)

    def test_ar1_two_steps(self, theta):
        # rho=0.7, sigma=0.5: 平稳方差为 sigma^2 / (1 - rho^2)
        Q = ar1_prior_precision(2, theta)
        np.testing.assert_allclose(Q.diag, [4.0, 4.0])
        np.testing.assert_allclose(Q.offdiag, [-2.8])
        partial = partial_inverse(cholesky(Q))
        stationary = 0.25 / (1 - 0.49)
        np.testing.assert_allclose(partial.var, [stationary, stationary])
        np.testing.assert_allclose(partial.cov1, [0.7 * stationary])
        np.testing.assert_allclose(partial.correlation(), [0.7])


class TestSampling:
    def test_sample_moments(self, rng):
        Q = TridiagSym([2.0, 2.0, 2.0], [-0.8, -0.8])
        mean = np.array([1.0, -1.0, 0.5])
        draws = sample_gaussian(cholesky(Q), mean, rng, size=40000)
        assert draws.shape == (40000, 3)
        np.testing.assert_allclose(draws.mean(axis=0), mean, atol=0.03)
        np.testing.assert_allclose(np.cov(draws.T), dense_oracle(Q).inverse, atol=0.03)

    def test_single_draw_shape(self, spd, rng):
        assert sample_gaussian(cholesky(spd), np.zeros(spd.n), rng).shape == (spd.n,)

    def test_mean_length_checked(self, spd, rng):
        with pytest.raises(DimensionMismatch):
            sample_gaussian(cholesky(spd), np.zeros(spd.n + 1), rng)


class TestDenseOracle:
    def test_too_large(self):
        n = 600
        with pytest.raises(DimensionTooLarge):
            dense_oracle(TridiagSym(np.full(n, 2.0), np.full(n - 1, -0.5)))

    def test_size_cap_boundary(self):
        oracle = dense_oracle(TridiagSym(np.full(512, 2.0), np.full(511, -0.5)))
        assert oracle.inverse.shape == (512, 512)
        with pytest.raises(DimensionTooLarge):
            dense_oracle(TridiagSym(np.full(513, 2.0), np.full(512, -0.5)))
