"""
对称三对角精度矩阵的精确线性代数

链式GMRF的精度矩阵是对称三对角的：本模块提供分解、求解、对数行列式、
高斯采样、部分逆（Takahashi递推）以及仅供测试使用的稠密对照计算。
带状分解和求解由 scipy.linalg 的带状LAPACK封装完成。
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from src.utils.errors import (
    DimensionMismatch,
    DimensionTooLarge,
    NotPositiveDefinite,
)

logger = logging.getLogger(__name__)

# 主元下溢保护
PIVOT_TOLERANCE = 1e-300
# 稠密对照计算允许的最大维度
DENSE_ORACLE_MAX_N = 512


def _frozen(values, length: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if arr.shape[0] != length:
        raise DimensionMismatch(f"{name} 长度应为 {length}，实际为 {arr.shape[0]}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TridiagSym:
    """
    对称三对角矩阵

    参数:
        diag: 主对角线，长度 n
        offdiag: 次对角线，长度 n-1
    """
    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        diag = np.array(self.diag, dtype=float).reshape(-1)
        if diag.shape[0] < 1:
            raise DimensionMismatch("三对角矩阵维度必须 >= 1")
        object.__setattr__(self, "diag", _frozen(diag, diag.shape[0], "diag"))
        object.__setattr__(self, "offdiag", _frozen(self.offdiag, diag.shape[0] - 1, "offdiag"))

    @property
    def n(self) -> int:
        return self.diag.shape[0]

    @classmethod
    def from_dense(cls, matrix: np.ndarray) -> "TridiagSym":
        """从稠密矩阵提取三对角部分（测试用）"""
        matrix = np.asarray(matrix, dtype=float)
        return cls(np.diag(matrix).copy(), np.diag(matrix, -1).copy())

    def to_dense(self) -> np.ndarray:
        dense = np.diag(self.diag)
        if self.n > 1:
            dense += np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)
        return dense

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """计算 Q x"""
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.n:
            raise DimensionMismatch(f"向量长度 {x.shape[0]} 与矩阵维度 {self.n} 不一致")
        result = self.diag * x
        if self.n > 1:
            result[:-1] += self.offdiag * x[1:]
            result[1:] += self.offdiag * x[:-1]
        return result

    def quadratic_form(self, x: np.ndarray) -> float:
        """计算 x' Q x"""
        return float(np.dot(x, self.matvec(x)))

    def add_diagonal(self, values) -> "TridiagSym":
        """返回 Q + diag(values)"""
        return TridiagSym(self.diag + np.asarray(values, dtype=float), self.offdiag)

    def scaled(self, factor: float) -> "TridiagSym":
        return TridiagSym(self.diag * factor, self.offdiag * factor)

    def drop_index(self, i: int) -> Tuple["TridiagSym", np.ndarray]:
        """
        删除第 i 行和第 i 列

        删除后链在 i 处断开，两段仍为三对角（连接处次对角元为0）。

        参数:
            i: 要删除的索引（从0开始）

        返回:
            (约化矩阵 Q_{-i,-i}, 耦合列 Q_{-i,i})
        """
        n = self.n
        if n < 2:
            raise DimensionMismatch("维度为1的矩阵不能再删除索引")
        if not 0 <= i < n:
            raise DimensionMismatch(f"索引 {i} 超出范围 [0, {n})")
        diag = np.delete(self.diag, i)
        off = self.offdiag
        if i == 0:
            offdiag = off[1:]
        elif i == n - 1:
            offdiag = off[:n - 2]
        else:
            offdiag = np.concatenate([off[:i - 1], [0.0], off[i + 1:]])
        coupling = np.zeros(n - 1)
        if i > 0:
            coupling[i - 1] = off[i - 1]
        if i < n - 1:
            coupling[i] = off[i]
        return TridiagSym(diag, offdiag), coupling


@dataclass(frozen=True)
class CholBidiag:
    """
    三对角矩阵的Cholesky因子 L（下双对角），满足 L L' = Q

    参数:
        d: L 的对角线
        e: L 的次对角线 L[i+1, i]
        logdet: log|Q| = 2 * sum(log d)
    """
    d: np.ndarray
    e: np.ndarray
    logdet: float

    @property
    def n(self) -> int:
        return self.d.shape[0]

    def lower_banded(self) -> np.ndarray:
        """scipy 下三角带状存储格式"""
        return np.vstack([self.d, np.append(self.e, 0.0)])

    def upper_banded(self) -> np.ndarray:
        """L' 的上三角带状存储格式，供 solve_banded((0, 1), ...) 使用"""
        return np.vstack([np.insert(self.e, 0, 0.0), self.d])

    def recompose(self) -> TridiagSym:
        """重构 L L'"""
        diag = self.d ** 2
        diag[1:] += self.e ** 2
        return TridiagSym(diag, self.e * self.d[:-1])


@dataclass(frozen=True)
class PartialInverse:
    """
    Q^{-1} 的三对角部分

    参数:
        var: Sigma_{t,t}
        cov1: Sigma_{t,t+1}
    """
    var: np.ndarray
    cov1: np.ndarray

    def correlation(self) -> np.ndarray:
        """相邻状态的相关系数"""
        return self.cov1 / np.sqrt(self.var[:-1] * self.var[1:])


@dataclass(frozen=True)
class DenseOracle:
    """稠密逆矩阵与对数行列式（仅测试使用）"""
    inverse: np.ndarray
    logdet: float


def cholesky(Q: TridiagSym) -> CholBidiag:
    """
    对称三对角矩阵的Cholesky分解

    参数:
        Q: 对称三对角矩阵

    返回:
        下双对角因子

    异常:
        NotPositiveDefinite: 任一主元 <= 1e-300
    """
    ab = np.vstack([Q.diag, np.append(Q.offdiag, 0.0)])
    try:
        factor = linalg.cholesky_banded(ab, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as e:
        raise NotPositiveDefinite(f"三对角矩阵非正定 (n={Q.n}): {e}") from e
    d = factor[0].copy()
    if np.any(d ** 2 <= PIVOT_TOLERANCE):
        raise NotPositiveDefinite(f"Cholesky主元下溢 (最小主元 {np.min(d ** 2):.3e})")
    e = factor[1, :-1].copy()
    d.setflags(write=False)
    e.setflags(write=False)
    return CholBidiag(d=d, e=e, logdet=float(2.0 * np.sum(np.log(d))))


def solve(L: CholBidiag, b: np.ndarray) -> np.ndarray:
    """
    求解 Q x = b

    参数:
        L: Q 的Cholesky因子
        b: 右端向量（或按列堆叠的矩阵）

    返回:
        x
    """
    b = np.asarray(b, dtype=float)
    if b.shape[0] != L.n:
        raise DimensionMismatch(f"右端长度 {b.shape[0]} 与矩阵维度 {L.n} 不一致")
    return linalg.cho_solve_banded((L.lower_banded(), True), b)


def sample_gaussian(L: CholBidiag, mean: np.ndarray, rng: np.random.Generator,
                    size: Optional[int] = None) -> np.ndarray:
    """
    从 N(mean, Q^{-1}) 采样：x = mean + L'^{-1} z

    参数:
        L: 精度矩阵的Cholesky因子
        mean: 均值向量
        rng: 调用者持有的随机数生成器
        size: 样本数，None 表示单个样本

    返回:
        单个样本 (n,) 或样本矩阵 (size, n)
    """
    mean = np.asarray(mean, dtype=float)
    if mean.shape[0] != L.n:
        raise DimensionMismatch(f"均值长度 {mean.shape[0]} 与矩阵维度 {L.n} 不一致")
    shape = (L.n,) if size is None else (L.n, size)
    z = rng.standard_normal(shape)
    x = linalg.solve_banded((0, 1), L.upper_banded(), z)
    if size is None:
        return mean + x
    return mean[None, :] + x.T


def partial_inverse(L: CholBidiag) -> PartialInverse:
    """
    Takahashi后向递推计算 Q^{-1} 的对角线和第一超对角线，O(n)

    Sigma_{n,n} = 1/d_n^2
    Sigma_{i,i+1} = -(e_i/d_i) Sigma_{i+1,i+1}
    Sigma_{i,i} = 1/d_i^2 - (e_i/d_i) Sigma_{i,i+1}
    """
    n = L.n
    var = np.empty(n)
    cov1 = np.empty(n - 1)
    var[-1] = 1.0 / L.d[-1] ** 2
    for i in range(n - 2, -1, -1):
        ratio = L.e[i] / L.d[i]
        cov1[i] = -ratio * var[i + 1]
        var[i] = 1.0 / L.d[i] ** 2 - ratio * cov1[i]
    return PartialInverse(var=var, cov1=cov1)


def dense_oracle(Q: TridiagSym) -> DenseOracle:
    """
    稠密逆矩阵和对数行列式，只在测试中作为对照

    异常:
        DimensionTooLarge: n > 512
    """
    if Q.n > DENSE_ORACLE_MAX_N:
        raise DimensionTooLarge(f"稠密对照计算仅支持 n <= {DENSE_ORACLE_MAX_N}，当前 n={Q.n}")
    dense = Q.to_dense()
    sign, logdet = np.linalg.slogdet(dense)
    if sign <= 0:
        raise NotPositiveDefinite("稠密对照：矩阵行列式非正")
    return DenseOracle(inverse=np.linalg.inv(dense), logdet=float(logdet))
