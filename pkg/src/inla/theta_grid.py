"""
超参数后验 pi~(theta | y) 的拉普拉斯近似与积分网格

    log pi~(theta|y) = log pi(theta) + log pi(m|theta) + sum log g(y|m, theta) - log pi_G(m|theta, y)

其中 m 为高斯近似的众数。众数由单纯形法在内部尺度上求得，
随后在标准化特征坐标 z 上铺设网格，保留对数下降不超过阈值的点。
"""
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import optimize

from src.inla.gaussian_approx import GaussianChain, NewtonConfig, gaussian_approx
from src.linalg.tridiag import cholesky
from src.models.base_model import SsmModel
from src.models.hyperparams import HyperParams, PriorSpec, log_prior
from src.utils.errors import HessianNotPD, InvalidHyperParams, NumericalError, OptimFailed

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InlaConfig:
    """
    INLA 引擎设置，对应配置文件的 inla 段

    参数:
        newton: 牛顿迭代设置
        grid_step: z 空间网格步长 delta_z
        grid_drop: 保留点的最大对数下降 delta_drop
        grid_max_steps: 每个坐标轴方向最多探索的步数
        hessian_step: 有限差分海森矩阵的步长
        simplex_step: 单纯形初始边长
        xatol / fatol: 单纯形收敛阈值
        max_evaluations: 单纯形最多函数求值次数
        laplace_points / laplace_width / laplace_max_T: 嵌套拉普拉斯的横坐标设计与长度上限
        hessian_fallback: 海森矩阵非正定时是否退回单位矩阵缩放（否则抛出 HessianNotPD）
        max_workers: 网格点并行求值的线程数
    """
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    grid_step: float = 1.0
    grid_drop: float = 2.5
    grid_max_steps: int = 6
    hessian_step: float = 1e-3
    simplex_step: float = 0.5
    xatol: float = 1e-7
    fatol: float = 1e-9
    max_evaluations: int = 4000
    laplace_points: int = 31
    laplace_width: float = 5.0
    laplace_max_T: int = 200
    hessian_fallback: bool = True
    max_workers: int = 4

    @classmethod
    def from_config(cls, inla_config: Optional[Dict] = None, max_workers: int = 4) -> "InlaConfig":
        inla_config = inla_config or {}
        return cls(
            newton=NewtonConfig.from_config(inla_config),
            grid_step=float(inla_config.get("grid_step", 1.0)),
            grid_drop=float(inla_config.get("grid_drop", 2.5)),
            grid_max_steps=int(inla_config.get("grid_max_steps", 6)),
            hessian_step=float(inla_config.get("hessian_step", 1e-3)),
            simplex_step=float(inla_config.get("simplex_step", 0.5)),
            xatol=float(inla_config.get("xatol", 1e-7)),
            fatol=float(inla_config.get("fatol", 1e-9)),
            max_evaluations=int(inla_config.get("max_evaluations", 4000)),
            laplace_points=int(inla_config.get("laplace_points", 31)),
            laplace_width=float(inla_config.get("laplace_width", 5.0)),
            laplace_max_T=int(inla_config.get("laplace_max_T", 200)),
            hessian_fallback=bool(inla_config.get("hessian_fallback", True)),
            max_workers=int(max_workers),
        )


@dataclass
class ThetaPoint:
    """
    一个积分点

    参数:
        index: 网格内序号（按 z 排序）
        z: 标准化特征坐标上的整数格点
        internal: 内部尺度坐标 (rho~, log sigma^-2, alpha)
        theta: 自然尺度超参数
        log_post: 未归一化的 log pi~(theta|y)
        weight: 步长权重 Delta_k = delta_z^3
    """
    index: int
    z: Tuple[int, ...]
    internal: np.ndarray
    theta: Optional[HyperParams]
    log_post: float
    weight: float


@dataclass
class ThetaGrid:
    """超参数积分网格及其众数信息"""
    points: List[ThetaPoint]
    mode: Optional[HyperParams]
    mode_internal: np.ndarray
    mode_log_post: float
    hessian: np.ndarray
    hessian_chol: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray
    step: float
    drop: float
    hessian_fallback: bool = False
    optimizer_converged: bool = True
    n_evaluations: int = 0

    def __len__(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.mode_internal.shape[0]

    @property
    def scale(self) -> np.ndarray:
        """z -> 内部坐标的线性映射 V diag(lambda^{-1/2})"""
        return self.eigvecs / np.sqrt(self.eigvals)[None, :]

    def to_internal(self, z: Sequence[float]) -> np.ndarray:
        return self.mode_internal + self.scale @ (np.asarray(z, dtype=float) * self.step)

    def internal_points(self) -> np.ndarray:
        return np.array([p.internal for p in self.points])

    def log_posts(self) -> np.ndarray:
        return np.array([p.log_post for p in self.points])

    def normalized_weights(self) -> np.ndarray:
        """exp(log_post - max) * Delta 归一化后的积分权重"""
        log_w = self.log_posts() + np.log([p.weight for p in self.points])
        w = np.exp(log_w - np.max(log_w))
        return w / np.sum(w)

    def expectation(self, fn: Callable[[np.ndarray], float]) -> float:
        """sum_k w_k fn(u_k)，u_k 为内部坐标"""
        weights = self.normalized_weights()
        return float(sum(w * fn(p.internal) for w, p in zip(weights, self.points)))

    def to_frame(self):
        """网格点表：index, z, 内部坐标, 自然尺度参数, 未归一化对数后验, 权重"""
        weights = self.normalized_weights()
        rows = []
        for p, w in zip(self.points, weights):
            row = {"index": p.index, "z": " ".join(str(v) for v in p.z)}
            row.update({f"u{j}": float(p.internal[j]) for j in range(self.dim)})
            if p.theta is not None:
                row.update(p.theta.as_dict())
            row["log_post_unnormalized"] = p.log_post
            row["weight"] = float(w)
            rows.append(row)
        return pd.DataFrame(rows)

    @classmethod
    def single_point(cls, theta: HyperParams, log_post: float = 0.0) -> "ThetaGrid":
        """只含一个点的网格（固定 theta 的计算）"""
        u = theta.transformed()
        eye = np.eye(u.shape[0])
        point = ThetaPoint(0, (0,) * u.shape[0], u, theta, float(log_post), 1.0)
        return cls(points=[point], mode=theta, mode_internal=u, mode_log_post=float(log_post),
                   hessian=eye, hessian_chol=eye, eigvals=np.ones(u.shape[0]), eigvecs=eye,
                   step=1.0, drop=0.0)


def log_theta_posterior(model: SsmModel, dataset, theta: HyperParams, prior: PriorSpec,
                        config: Optional[NewtonConfig] = None, chain: Optional[GaussianChain] = None) -> float:
    """
    未归一化的 log pi~(theta | y)

    参数:
        model: 状态空间模型
        dataset: Dataset 或观测向量
        theta: 超参数
        prior: 先验
        config: 牛顿迭代设置
        chain: 已算好的高斯近似（可选）

    返回:
        对数后验（差一个与 theta 无关的常数）
    """
    y = np.asarray(getattr(dataset, "y", dataset), dtype=float)
    if chain is None:
        chain = gaussian_approx(model, y, theta, config)
    Q = model.latent_precision(y.shape[0], theta)
    m = chain.mean
    # log N(m; 0, Q^-1) - log pi_G(m)，两个 2pi 常数相互抵消
    log_latent = 0.5 * cholesky(Q).logdet - 0.5 * Q.quadratic_form(m)
    log_lik = float(np.sum(model.log_observation(y, m, theta)))
    return log_prior(theta, prior) + log_latent + log_lik - 0.5 * chain.chol.logdet


def finite_difference_hessian(fn: Callable[[np.ndarray], float], x: np.ndarray, h: float) -> np.ndarray:
    """中心差分海森矩阵"""
    x = np.asarray(x, dtype=float)
    dim = x.shape[0]
    f0 = fn(x)
    hessian = np.empty((dim, dim))
    for i in range(dim):
        ei = np.zeros(dim)
        ei[i] = h
        hessian[i, i] = (fn(x + ei) - 2.0 * f0 + fn(x - ei)) / h ** 2
        for j in range(i + 1, dim):
            ej = np.zeros(dim)
            ej[j] = h
            value = (fn(x + ei + ej) - fn(x + ei - ej) - fn(x - ei + ej) + fn(x - ei - ej)) / (4.0 * h ** 2)
            hessian[i, j] = hessian[j, i] = value
    return hessian


def _safe_theta(u: np.ndarray) -> Optional[HyperParams]:
    try:
        return HyperParams.from_internal(u)
    except InvalidHyperParams:
        return None


def explore_log_density(log_density: Callable[[np.ndarray], float], start: Sequence[float],
                        config: Optional[InlaConfig] = None) -> ThetaGrid:
    """
    对任意内部尺度上的对数密度做众数搜索和网格探索

    参数:
        log_density: u -> 未归一化对数密度，数值失败时可以抛出 NumericalError
        start: 单纯形起点
        config: INLA 设置

    返回:
        ThetaGrid（点按 z 元组排序，与线程完成顺序无关）
    """
    config = config or InlaConfig()
    start = np.asarray(start, dtype=float)
    dim = start.shape[0]
    n_evaluations = 0

    def safe_log_density(u: np.ndarray) -> float:
        try:
            value = float(log_density(u))
        except (NumericalError, InvalidHyperParams) as e:
            logger.debug(f"对数后验在 u={u} 处求值失败: {e}")
            return -np.inf
        return value if math.isfinite(value) else -np.inf

    def objective(u: np.ndarray) -> float:
        nonlocal n_evaluations
        n_evaluations += 1
        return -safe_log_density(u)

    logger.info(f"开始搜索超参数后验众数，起点 {np.round(start, 4).tolist()}")
    simplex = np.vstack([start, start + config.simplex_step * np.eye(dim)])
    result = optimize.minimize(objective, start, method="Nelder-Mead",
                               options={"initial_simplex": simplex, "xatol": config.xatol,
                                        "fatol": config.fatol, "maxfev": config.max_evaluations,
                                        "maxiter": config.max_evaluations})
    if not math.isfinite(result.fun):
        raise OptimFailed(f"单纯形搜索没有找到有限的对数后验值: {result.message}")
    if not result.success:
        logger.warning(f"单纯形搜索未完全收敛: {result.message}，继续使用当前最优点")
    mode = np.asarray(result.x, dtype=float)
    mode_log_post = -float(result.fun)

    hessian = finite_difference_hessian(objective, mode, config.hessian_step)
    fallback = False
    eigvals = eigvecs = None
    if np.all(np.isfinite(hessian)):
        hessian = 0.5 * (hessian + hessian.T)
        eigvals, eigvecs = np.linalg.eigh(hessian)
    if eigvals is None or np.min(eigvals) <= 0:
        if not config.hessian_fallback:
            raise HessianNotPD(f"众数 {np.round(mode, 4).tolist()} 处的海森矩阵不是正定的")
        logger.warning("众数处的海森矩阵不是正定的，改用单位矩阵缩放网格")
        fallback = True
        hessian = np.eye(dim)
        eigvals, eigvecs = np.ones(dim), np.eye(dim)
    hessian_chol = np.linalg.cholesky(hessian)

    grid = ThetaGrid(points=[], mode=_safe_theta(mode), mode_internal=mode, mode_log_post=mode_log_post,
                     hessian=hessian, hessian_chol=hessian_chol, eigvals=eigvals, eigvecs=eigvecs,
                     step=config.grid_step, drop=config.grid_drop, hessian_fallback=fallback,
                     optimizer_converged=bool(result.success))

    cache: Dict[Tuple[int, ...], float] = {(0,) * dim: mode_log_post}

    def evaluate(z: Tuple[int, ...]) -> float:
        return safe_log_density(grid.to_internal(z))

    # 沿每个坐标轴两个方向前进，直到对数下降超过阈值
    extents = []
    for d in range(dim):
        extent = []
        for sign in (-1, 1):
            steps = 0
            while steps < config.grid_max_steps:
                z = [0] * dim
                z[d] = sign * (steps + 1)
                z = tuple(z)
                if z not in cache:
                    cache[z] = evaluate(z)
                if mode_log_post - cache[z] > config.grid_drop:
                    break
                steps += 1
            extent.append(steps)
        extents.append(extent)

    candidates = [z for z in itertools.product(*[range(-lo, hi + 1) for lo, hi in extents]) if z not in cache]
    values: List[float] = [0.0] * len(candidates)
    with ThreadPoolExecutor(max_workers=max(1, config.max_workers)) as executor:
        future_to_index = {executor.submit(evaluate, z): i for i, z in enumerate(candidates)}
        for future in as_completed(future_to_index):
            values[future_to_index[future]] = future.result()
    cache.update(zip(candidates, values))
    n_evaluations += len(cache) - 1

    kept = sorted(z for z, value in cache.items() if mode_log_post - value <= config.grid_drop)
    weight = config.grid_step ** dim
    for index, z in enumerate(kept):
        u = grid.to_internal(z)
        grid.points.append(ThetaPoint(index, z, u, _safe_theta(u), cache[z], weight))
    grid.n_evaluations = n_evaluations
    logger.info(f"超参数网格完成: {len(grid)} 个积分点，各轴范围 {extents}，"
                f"众数处未归一化对数后验 {mode_log_post:.4f}")
    return grid


def explore_theta(model: SsmModel, dataset, prior: PriorSpec, config: Optional[InlaConfig] = None,
                  start: Optional[Sequence[float]] = None) -> ThetaGrid:
    """
    求 theta* 并在其周围构造积分网格

    参数:
        model: 状态空间模型
        dataset: Dataset
        prior: 先验
        config: INLA 设置
        start: 优化起点（默认为先验中心）

    返回:
        ThetaGrid
    """
    config = config or InlaConfig()
    y = np.asarray(getattr(dataset, "y", dataset), dtype=float)

    def log_density(u: np.ndarray) -> float:
        return log_theta_posterior(model, y, HyperParams.from_internal(u), prior, config.newton)

    start = prior.mean_internal() if start is None else np.asarray(start, dtype=float)
    grid = explore_log_density(log_density, start, config)
    if grid.mode is None:
        raise OptimFailed(f"后验众数落在参数空间边界: {grid.mode_internal}")
    return grid


@dataclass
class InlaFit:
    """INLA 拟合结果：网格以及每个积分点上的高斯近似"""
    grid: ThetaGrid
    chains: List[GaussianChain]

    def latent_summary(self):
        """高斯混合的潜变量后验均值和标准差，t 从1开始"""
        weights = self.grid.normalized_weights()
        means = np.array([c.mean for c in self.chains])
        variances = np.array([c.marginal_variances for c in self.chains])
        mean = weights @ means
        second = weights @ (variances + means ** 2)
        sd = np.sqrt(np.maximum(second - mean ** 2, 0.0))
        return pd.DataFrame({"t": np.arange(1, mean.shape[0] + 1), "mean": mean, "sd": sd})


def grid_chains(model: SsmModel, dataset, grid: ThetaGrid, config: Optional[InlaConfig] = None) -> List[GaussianChain]:
    """在每个积分点上计算高斯近似，结果按网格序号排列"""
    config = config or InlaConfig()
    y = np.asarray(getattr(dataset, "y", dataset), dtype=float)
    chains: List[Optional[GaussianChain]] = [None] * len(grid)
    with ThreadPoolExecutor(max_workers=max(1, config.max_workers)) as executor:
        future_to_index = {executor.submit(gaussian_approx, model, y, p.theta, config.newton): i
                           for i, p in enumerate(grid.points)}
        for future in as_completed(future_to_index):
            chains[future_to_index[future]] = future.result()
    return chains


def fit_inla(model: SsmModel, dataset, prior: PriorSpec, config: Optional[InlaConfig] = None) -> InlaFit:
    """
    完整的 INLA 拟合：众数搜索、网格探索、各点高斯近似

    参数:
        model: 状态空间模型
        dataset: Dataset
        prior: 先验
        config: INLA 设置

    返回:
        InlaFit
    """
    config = config or InlaConfig()
    grid = explore_theta(model, dataset, prior, config)
    return InlaFit(grid=grid, chains=grid_chains(model, dataset, grid, config))
