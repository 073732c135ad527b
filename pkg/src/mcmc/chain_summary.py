import logging
from typing import Dict, Tuple, Union

import numpy as np
import pandas as pd

from src.mcmc.pmmh import PmmhChain
from src.models.hyperparams import PARAM_NAMES
from src.utils.errors import EmptyChain

logger = logging.getLogger(__name__)

HISTOGRAM_BINS = 50


def histogram_frame(values: np.ndarray, bins: int = HISTOGRAM_BINS) -> pd.DataFrame:
    """
    直方图表：bin_left, bin_right, bin_center, mass, density

    mass 之和为1，density = mass / 箱宽
    """
    values = np.asarray(values, dtype=float)
    counts, edges = np.histogram(values, bins=bins)
    mass = counts / counts.sum()
    widths = np.diff(edges)
    return pd.DataFrame({"bin_left": edges[:-1], "bin_right": edges[1:], "bin_center": 0.5 * (edges[:-1] + edges[1:]),
                         "mass": mass, "density": mass / widths})


def histogram_mode(values: np.ndarray, bins: int = HISTOGRAM_BINS) -> float:
    """直方图最高箱的中心；常数序列直接返回该常数"""
    values = np.asarray(values, dtype=float)
    if np.ptp(values) == 0.0:
        return float(values[0])
    frame = histogram_frame(values, bins)
    return float(frame["bin_center"].iloc[int(np.argmax(frame["mass"].to_numpy()))])


def chain_summary(chain: Union[PmmhChain, np.ndarray], bins: int = HISTOGRAM_BINS) -> Tuple[pd.DataFrame, Dict[str, pd.DataFrame]]:
    """
    每个参数的后验均值、标准差和直方图众数

    参数:
        chain: PmmhChain 或形状为 (样本数, 3) 的数组
        bins: 直方图箱数

    返回:
        (汇总表 parameter, mean, sd, mode, n_samples；按参数名索引的直方图表)
    """
    samples = chain.sample_array() if isinstance(chain, PmmhChain) else np.asarray(chain, dtype=float)
    if samples.ndim == 1:
        samples = samples.reshape(-1, 1)
    if samples.shape[0] == 0:
        raise EmptyChain("链中没有保留样本，无法汇总")

    rows = []
    histograms = {}
    for j, name in enumerate(PARAM_NAMES[:samples.shape[1]]):
        values = samples[:, j]
        rows.append({
            "parameter": name,
            "mean": float(np.mean(values)),
            "sd": float(np.std(values, ddof=1)) if values.shape[0] > 1 else 0.0,
            "mode": histogram_mode(values, bins),
            "n_samples": int(values.shape[0]),
        })
        histograms[name] = histogram_frame(values, bins)
    return pd.DataFrame(rows), histograms
