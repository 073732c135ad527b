"""
潜变量场的高斯近似 pi_G(x | theta, y)

通过牛顿迭代最大化 x -> -1/2 x'Qx + sum log g(y_t | x_t, theta)，
在众数处匹配曲率得到精度 Q + diag(c)，c_t = -d^2/dx_t^2 log g。
精度矩阵保持三对角，所有求解和对数行列式都走 src.linalg.tridiag。
"""
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional

import numpy as np

from src.linalg.tridiag import (
    CholBidiag,
    PartialInverse,
    TridiagSym,
    cholesky,
    partial_inverse,
    solve,
)
from src.models.base_model import SsmModel
from src.models.hyperparams import HyperParams
from src.utils.errors import NoConvergence

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NewtonConfig:
    """
    牛顿迭代设置

    参数:
        tol: 梯度无穷范数收敛阈值
        max_iter: 最大迭代次数
        max_halvings: 每步最多步长减半次数
    """
    tol: float = 1e-8
    max_iter: int = 100
    max_halvings: int = 30

    @classmethod
    def from_config(cls, inla_config: Optional[Dict]) -> "NewtonConfig":
        inla_config = inla_config or {}
        return cls(tol=float(inla_config.get("newton_tol", 1e-8)),
                   max_iter=int(inla_config.get("newton_max_iter", 100)),
                   max_halvings=int(inla_config.get("max_halvings", 30)))


@dataclass
class NewtonResult:
    """牛顿迭代结果：众数、众数处的后验精度及其分解、目标函数轨迹"""
    mode: np.ndarray
    prec: TridiagSym
    chol: CholBidiag
    objective: float
    iterations: int
    grad_norm: float
    history: List[float] = field(default_factory=list)


def newton_mode(model: SsmModel, y: np.ndarray, theta: HyperParams, A: TridiagSym,
                b: Optional[np.ndarray] = None, config: Optional[NewtonConfig] = None) -> NewtonResult:
    """
    最大化 h(z) = -1/2 z'Az + b'z + sum log g(y_k | z_k)

    从 z = 0 出发，带步长减半线搜索保证目标函数不下降。

    参数:
        model: 提供观测对数密度及其导数的模型
        y: 与 z 对齐的观测
        theta: 超参数
        A: 三对角先验精度
        b: 线性项（条件化时来自固定分量），默认为0
        config: 牛顿迭代设置

    返回:
        NewtonResult

    异常:
        NoConvergence: 超过迭代上限或线搜索失败
        NotPositiveDefinite: 曲率矩阵非正定
    """
    config = config or NewtonConfig()
    n = A.n
    b = np.zeros(n) if b is None else np.asarray(b, dtype=float)

    def objective(z: np.ndarray) -> float:
        return -0.5 * A.quadratic_form(z) + float(b @ z) + float(np.sum(model.log_observation(y, z, theta)))

    z = np.zeros(n)
    value = objective(z)
    history = [value]
    for iteration in range(config.max_iter + 1):
        g_obs, curvature = model.observation_derivatives(y, z, theta)
        grad = -A.matvec(z) + b + g_obs
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm <= config.tol:
            break
        if iteration == config.max_iter:
            raise NoConvergence(f"牛顿迭代 {config.max_iter} 次未收敛，梯度范数 {grad_norm:.3e} (theta={theta})")

        step = solve(cholesky(A.add_diagonal(curvature)), grad)
        scale = 1.0
        for _ in range(config.max_halvings + 1):
            candidate = z + scale * step
            candidate_value = objective(candidate)
            if math.isfinite(candidate_value) and candidate_value >= value - 1e-12 * (1.0 + abs(value)):
                break
            scale *= 0.5
        else:
            raise NoConvergence(f"线搜索在 {config.max_halvings} 次减半后仍未上升 (theta={theta})")
        z, value = candidate, candidate_value
        history.append(value)
        logger.debug(f"牛顿迭代 {iteration + 1}: 目标 {value:.10g}, 梯度范数 {grad_norm:.3e}, 步长 {scale}")

    _, curvature = model.observation_derivatives(y, z, theta)
    prec = A.add_diagonal(curvature)
    return NewtonResult(mode=z, prec=prec, chol=cholesky(prec), objective=value,
                        iterations=iteration, grad_norm=grad_norm, history=history)


@dataclass(frozen=True)
class GaussianChain:
    """
    高斯近似 N(mean, prec^{-1})，prec 为三对角精度

    参数:
        mean: 牛顿众数 m(theta)
        prec: 后验精度 Q + diag(c)
        chol: prec 的Cholesky因子
        theta: 对应的超参数
        iterations: 牛顿迭代次数
    """
    mean: np.ndarray
    prec: TridiagSym
    chol: CholBidiag
    theta: HyperParams
    iterations: int = 0

    @property
    def T(self) -> int:
        return self.mean.shape[0]

    @cached_property
    def partial(self) -> PartialInverse:
        """协方差矩阵的三对角部分"""
        return partial_inverse(self.chol)

    @property
    def marginal_variances(self) -> np.ndarray:
        return self.partial.var

    def logpdf(self, x: np.ndarray) -> float:
        """联合高斯对数密度 log pi_G(x)"""
        diff = np.asarray(x, dtype=float) - self.mean
        return 0.5 * self.chol.logdet - 0.5 * self.T * math.log(2.0 * math.pi) - 0.5 * self.prec.quadratic_form(diff)


def gaussian_approx(model: SsmModel, dataset, theta: HyperParams,
                    config: Optional[NewtonConfig] = None) -> GaussianChain:
    """
    在给定 theta 下构造 pi_G(x | theta, y)

    参数:
        model: 状态空间模型
        dataset: Dataset 或观测向量
        theta: 超参数
        config: 牛顿迭代设置

    返回:
        GaussianChain
    """
    y = np.asarray(getattr(dataset, "y", dataset), dtype=float)
    Q = model.latent_precision(y.shape[0], theta)
    result = newton_mode(model, y, theta, Q, config=config)
    return GaussianChain(mean=result.mode, prec=result.prec, chol=result.chol, theta=theta,
                         iterations=result.iterations)


def conditional_mode(model: SsmModel, y: np.ndarray, theta: HyperParams, Q: TridiagSym, i: int,
                     value: float, config: Optional[NewtonConfig] = None) -> NewtonResult:
    """
    固定 x_i = value，求 x_{-i} 的条件众数

    去掉第 i 个分量后链在 i 处断开，两段仍为三对角；x_i 的作用通过线性项
    -Q_{-i,i} * value 进入。

    参数:
        model: 状态空间模型
        y: 完整观测向量
        theta: 超参数
        Q: 完整先验精度
        i: 固定的时间索引（从0开始）
        value: x_i 的取值
        config: 牛顿迭代设置

    返回:
        x_{-i} 的 NewtonResult
    """
    A, coupling = Q.drop_index(i)
    return newton_mode(model, np.delete(y, i), theta, A, -coupling * value, config=config)
