"""
重采样方案：系统、分层、多项式

所有函数返回从0开始、升序排列的祖先索引。
"""
import logging
from typing import Callable, Dict

import numpy as np

from src.utils.errors import ConfigError, UnnormalizedWeights

logger = logging.getLogger(__name__)

WEIGHT_SUM_TOLERANCE = 1e-9


def _check_weights(W) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if W.ndim != 1 or W.shape[0] == 0:
        raise UnnormalizedWeights("权重必须是非空一维数组")
    if np.any(W < 0) or abs(float(np.sum(W)) - 1.0) > WEIGHT_SUM_TOLERANCE:
        raise UnnormalizedWeights(f"权重未归一化: sum(W) = {np.sum(W):.12g}")
    return W


def _inverse_cdf(W: np.ndarray, points: np.ndarray) -> np.ndarray:
    cumulative = np.cumsum(W)
    cumulative[-1] = 1.0
    indices = np.searchsorted(cumulative, points, side="right")
    return np.minimum(indices, W.shape[0] - 1)


def resample_systematic(W, N: int, rng: np.random.Generator) -> np.ndarray:
    """
    系统重采样：单个均匀偏移 u，网格点 (u + k)/N

    参数:
        W: 归一化权重
        N: 输出的祖先个数
        rng: 随机数生成器

    返回:
        祖先索引
    """
    W = _check_weights(W)
    return _inverse_cdf(W, (rng.random() + np.arange(N)) / N)


def resample_stratified(W, N: int, rng: np.random.Generator) -> np.ndarray:
    """分层重采样：每个区间 [k/N, (k+1)/N) 内独立取一个均匀点"""
    W = _check_weights(W)
    return _inverse_cdf(W, (rng.random(N) + np.arange(N)) / N)


def resample_multinomial(W, N: int, rng: np.random.Generator) -> np.ndarray:
    """多项式重采样"""
    W = _check_weights(W)
    counts = rng.multinomial(N, W / np.sum(W))
    return np.repeat(np.arange(W.shape[0]), counts)


RESAMPLERS: Dict[str, Callable[[np.ndarray, int, np.random.Generator], np.ndarray]] = {
    "systematic": resample_systematic,
    "stratified": resample_stratified,
    "multinomial": resample_multinomial,
}


def get_resampler(name: str):
    """按名称取重采样函数"""
    try:
        return RESAMPLERS[name.lower()]
    except KeyError:
        raise ConfigError(f"不支持的重采样方案: {name}，可选 {sorted(RESAMPLERS)}") from None
