"""
一维边际后验：超参数边际和潜变量边际（高斯混合与嵌套拉普拉斯两种形式）
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import pandas as pd
from scipy import integrate, interpolate, special, stats

from src.inla.gaussian_approx import GaussianChain, NewtonConfig, conditional_mode
from src.inla.theta_grid import InlaConfig, ThetaGrid, grid_chains
from src.models.base_model import SsmModel
from src.models.hyperparams import PARAM_NAMES, internal_to_natural, log_abs_dinternal_dnatural
from src.utils.errors import ConfigError, IndexOutOfRange, NumericalError

logger = logging.getLogger(__name__)

HYPER_MARGINAL_POINTS = 201
LATENT_MARGINAL_POINTS = 401
LATENT_MARGINAL_WIDTH = 6.0


@dataclass(frozen=True)
class Marginal1D:
    """
    网格上的一维密度

    参数:
        grid: 递增的横坐标
        log_density: 归一化后的对数密度
        normalization: 归一化时减去的对数常数
    """
    grid: np.ndarray
    log_density: np.ndarray
    normalization: float

    @classmethod
    def from_log_unnormalized(cls, grid, log_unnormalized) -> "Marginal1D":
        grid = np.asarray(grid, dtype=float)
        log_unnormalized = np.asarray(log_unnormalized, dtype=float)
        shift = float(np.max(log_unnormalized))
        log_z = shift + math.log(integrate.trapezoid(np.exp(log_unnormalized - shift), grid))
        return cls(grid=grid, log_density=log_unnormalized - log_z, normalization=log_z)

    def density(self) -> np.ndarray:
        return np.exp(self.log_density)

    def integral(self) -> float:
        return float(integrate.trapezoid(self.density(), self.grid))

    def pdf(self, x) -> np.ndarray:
        """线性插值的密度，网格外为0"""
        return np.interp(x, self.grid, self.density(), left=0.0, right=0.0)

    def mode(self) -> float:
        return float(self.grid[np.argmax(self.log_density)])

    def mean(self) -> float:
        return float(integrate.trapezoid(self.grid * self.density(), self.grid))

    def variance(self) -> float:
        centered = self.grid - self.mean()
        return float(integrate.trapezoid(centered ** 2 * self.density(), self.grid))

    def sd(self) -> float:
        return math.sqrt(max(self.variance(), 0.0))

    def skewness(self) -> float:
        centered = self.grid - self.mean()
        third = float(integrate.trapezoid(centered ** 3 * self.density(), self.grid))
        return third / self.sd() ** 3

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"value": self.grid, "density": self.density()})


def _spike(value: float) -> Marginal1D:
    width = 1e-6 * max(1.0, abs(value))
    grid = np.array([value - width, value, value + width])
    with np.errstate(divide="ignore"):
        return Marginal1D.from_log_unnormalized(grid, np.log([0.0, 1.0, 0.0]))


def hyper_marginal(grid: ThetaGrid, j: int, natural: bool = True,
                   n_points: int = HYPER_MARGINAL_POINTS) -> Marginal1D:
    """
    第 j 个超参数的边际后验

    按第 j 个内部坐标分箱（箱宽为网格在该轴上的最大投影步长），累加权重，
    对数密度三次样条插值到光滑横坐标上；natural=True 时乘以变量替换的雅可比。

    参数:
        grid: 超参数网格
        j: 坐标轴（0: rho, 1: sigma, 2: alpha）
        natural: 是否返回自然尺度上的密度

    返回:
        Marginal1D
    """
    if not 0 <= j < grid.dim:
        raise IndexOutOfRange(f"超参数坐标 {j} 超出范围 [0, {grid.dim})")
    u = grid.internal_points()[:, j]
    weights = grid.normalized_weights()
    if len(grid) == 1 or np.ptp(u) == 0.0:
        value = float(u[0])
        return _spike(float(internal_to_natural(j, value)) if natural else value)

    width = grid.step * float(np.max(np.abs(grid.scale[j, :])))
    center0 = grid.mode_internal[j]
    bins = np.round((u - center0) / width).astype(int)
    unique_bins = np.unique(bins)
    if unique_bins.shape[0] == 1:
        value = float(center0 + unique_bins[0] * width)
        return _spike(float(internal_to_natural(j, value)) if natural else value)

    centers = center0 + unique_bins * width
    mass = np.array([weights[bins == b].sum() for b in unique_bins])
    log_dens = np.log(mass / width)
    # 横坐标覆盖到最外侧箱的边界，箱外半宽按端点斜率线性外推对数密度
    abscissa = np.linspace(centers[0] - 0.5 * width, centers[-1] + 0.5 * width, n_points)
    inside = np.clip(abscissa, centers[0], centers[-1])
    if centers.shape[0] >= 3:
        spline = interpolate.CubicSpline(centers, log_dens)
        log_u = spline(inside) + spline(inside, 1) * (abscissa - inside)
    else:
        slope = (log_dens[1] - log_dens[0]) / (centers[1] - centers[0])
        log_u = log_dens[0] + slope * (abscissa - centers[0])

    if not natural:
        return Marginal1D.from_log_unnormalized(abscissa, log_u)
    x = internal_to_natural(j, abscissa)
    log_x = log_u + log_abs_dinternal_dnatural(j, abscissa)
    order = np.argsort(x)
    return Marginal1D.from_log_unnormalized(x[order], log_x[order])


def hyper_marginals(grid: ThetaGrid, natural: bool = True) -> dict:
    """所有超参数的边际后验，按参数名索引"""
    return {name: hyper_marginal(grid, j, natural) for j, name in enumerate(PARAM_NAMES[:grid.dim])}


def _latent_abscissa(chains: List[GaussianChain], i: int, n_points: int) -> np.ndarray:
    means = np.array([c.mean[i] for c in chains])
    sds = np.sqrt([c.marginal_variances[i] for c in chains])
    lo = float(np.min(means - LATENT_MARGINAL_WIDTH * sds))
    hi = float(np.max(means + LATENT_MARGINAL_WIDTH * sds))
    return np.linspace(lo, hi, n_points)


def _check_time_index(chains: List[GaussianChain], i: int):
    if not chains:
        raise ConfigError("潜变量边际需要至少一个高斯近似")
    if not 0 <= i < chains[0].T:
        raise IndexOutOfRange(f"时间索引 {i} 超出范围 [0, {chains[0].T})")


def latent_marginal_gaussian(grid: ThetaGrid, chains: List[GaussianChain], i: int,
                             n_points: int = LATENT_MARGINAL_POINTS) -> Marginal1D:
    """
    x_i 的边际后验：各积分点高斯边际 N(mean_i, var_i) 按网格权重混合

    参数:
        grid: 超参数网格
        chains: 与网格点一一对应的高斯近似
        i: 时间索引（从0开始）

    返回:
        Marginal1D
    """
    _check_time_index(chains, i)
    weights = grid.normalized_weights()
    x = _latent_abscissa(chains, i, n_points)
    components = np.array([stats.norm.logpdf(x, c.mean[i], math.sqrt(c.marginal_variances[i])) for c in chains])
    with np.errstate(divide="ignore"):
        log_mix = special.logsumexp(components + np.log(weights)[:, None], axis=0)
    return Marginal1D.from_log_unnormalized(x, log_mix)


def _nested_log_density(model: SsmModel, y: np.ndarray, chain: GaussianChain, i: int, value: float,
                        config: NewtonConfig) -> float:
    """x_i = value 处的 log pi(x, theta|y) - log pi_G(x_{-i}|x_i, theta, y)，省略与 value 无关的常数"""
    theta = chain.theta
    Q = model.latent_precision(y.shape[0], theta)
    if y.shape[0] == 1:
        x = np.array([value])
        return -0.5 * Q.quadratic_form(x) + float(np.sum(model.log_observation(y, x, theta)))
    result = conditional_mode(model, y, theta, Q, i, value, config)
    x = np.insert(result.mode, i, value)
    return (-0.5 * Q.quadratic_form(x) + float(np.sum(model.log_observation(y, x, theta)))
            - 0.5 * result.chol.logdet)


def latent_marginal_laplace(model: SsmModel, dataset, grid: ThetaGrid, i: int,
                            chains: Optional[List[GaussianChain]] = None,
                            config: Optional[InlaConfig] = None,
                            n_points: int = LATENT_MARGINAL_POINTS) -> Marginal1D:
    """
    x_i 的嵌套拉普拉斯边际后验

    对每个积分点，在高斯边际均值 ±width 个标准差内取若干横坐标，固定 x_i
    后对 x_{-i} 做牛顿优化，得到相对高斯边际的对数修正；修正量用三次样条
    插值（横坐标范围外取端点值），逐点归一化后按网格权重混合。

    参数:
        model: 状态空间模型
        dataset: Dataset 或观测向量
        grid: 超参数网格
        i: 时间索引（从0开始）
        chains: 各积分点上的高斯近似（缺省时重新计算）
        config: INLA 设置

    返回:
        Marginal1D
    """
    config = config or InlaConfig()
    y = np.asarray(getattr(dataset, "y", dataset), dtype=float)
    if y.shape[0] > config.laplace_max_T:
        raise ConfigError(f"嵌套拉普拉斯仅支持 T <= {config.laplace_max_T}，当前 T={y.shape[0]}")
    if chains is None:
        chains = grid_chains(model, y, grid, config)
    _check_time_index(chains, i)

    weights = grid.normalized_weights()
    x = _latent_abscissa(chains, i, n_points)
    offsets = np.linspace(-config.laplace_width, config.laplace_width, config.laplace_points)
    log_components = []
    for k, chain in enumerate(chains):
        mean, sd = chain.mean[i], math.sqrt(chain.marginal_variances[i])
        gaussian_log = stats.norm.logpdf(x, mean, sd)
        values = mean + sd * offsets
        log_nested = np.full(values.shape, np.nan)
        for m, value in enumerate(values):
            try:
                log_nested[m] = _nested_log_density(model, y, chain, i, value, config.newton)
            except NumericalError as e:
                logger.warning(f"嵌套拉普拉斯在 x_{i}={value:.4f} (积分点 {k}) 处失败，跳过该点: {e}")
        valid = np.isfinite(log_nested)
        if np.count_nonzero(valid) < 4:
            logger.warning(f"积分点 {k} 的有效横坐标不足，退回高斯边际")
            log_components.append(gaussian_log)
            continue
        correction = log_nested[valid] - stats.norm.logpdf(values[valid], mean, sd)
        correction -= np.max(correction)
        spline = interpolate.CubicSpline(values[valid], correction)
        clipped = np.clip(x, values[valid][0], values[valid][-1])
        log_component = gaussian_log + spline(clipped)
        log_z = special.logsumexp(log_component) + math.log(
            integrate.trapezoid(np.exp(log_component - special.logsumexp(log_component)), x))
        log_components.append(log_component - log_z)

    with np.errstate(divide="ignore"):
        log_mix = special.logsumexp(np.array(log_components) + np.log(weights)[:, None], axis=0)
    return Marginal1D.from_log_unnormalized(x, log_mix)
