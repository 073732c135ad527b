"""
重复运行粒子滤波并汇总：对数似然的均值与方差、平均ESS曲线、滤波均值误差
"""
import concurrent.futures
import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.models.base_model import SsmModel
from src.models.hyperparams import HyperParams
from src.smc.particle_filter import FilterOutput, run_filter
from src.smc.proposals import Proposal
from src.utils.errors import ConfigError
from src.utils.rng import SeedLike, spawn_seeds

logger = logging.getLogger(__name__)


@dataclass
class FilterSpec:
    """
    一组重复运行共用的滤波设置

    参数:
        model: 状态空间模型
        dataset: 数据集
        theta: 超参数
        proposal: 提议分布（构造一次，所有重复共用）
        N: 粒子数
        resampler: 重采样方案
        ess_threshold: 自适应重采样阈值
        method: 方法标签（写入结果表）
    """
    model: SsmModel
    dataset: object
    theta: HyperParams
    proposal: Proposal
    N: int
    resampler: str = "systematic"
    ess_threshold: Optional[float] = None
    method: str = ""

    def run(self, seed: SeedLike, keep_history: bool = False) -> FilterOutput:
        return run_filter(self.model, self.dataset, self.theta, self.proposal, self.N, seed,
                          self.resampler, self.ess_threshold, keep_history)


@dataclass
class ReplicateSummary:
    """
    重复运行的汇总

    参数:
        outputs: 按重复编号排列的 FilterOutput
        loglik: 各次对数似然估计
        loglik_mean / loglik_var: 对数似然的均值与样本方差（R=1 时方差为0）
        mean_ess: 各时刻的平均ESS
        abs_error: 各时刻滤波均值相对参考值的平均绝对误差（无参考值时为 None）
    """
    outputs: List[FilterOutput]
    loglik: np.ndarray
    loglik_mean: float
    loglik_var: float
    mean_ess: np.ndarray
    abs_error: Optional[np.ndarray] = None
    method: str = ""
    N: int = 0

    @property
    def R(self) -> int:
        return len(self.outputs)

    def loglik_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"replicate": np.arange(1, self.R + 1), "loglik": self.loglik})

    def ess_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": np.arange(1, self.mean_ess.shape[0] + 1), "mean_ess": self.mean_ess})


def summarize(outputs: List[FilterOutput], reference: Optional[np.ndarray] = None,
              method: str = "", N: int = 0) -> ReplicateSummary:
    """汇总一组滤波结果"""
    if not outputs:
        raise ConfigError("至少需要一次滤波结果")
    loglik = np.array([o.loglik for o in outputs])
    mean_ess = np.mean([o.ess for o in outputs], axis=0)
    abs_error = None
    if reference is not None:
        reference = np.asarray(reference, dtype=float)
        abs_error = np.mean([np.abs(o.filt_mean - reference) for o in outputs], axis=0)
    return ReplicateSummary(outputs=outputs, loglik=loglik, loglik_mean=float(np.mean(loglik)),
                            loglik_var=float(np.var(loglik, ddof=1)) if len(outputs) > 1 else 0.0,
                            mean_ess=mean_ess, abs_error=abs_error, method=method, N=N)


def replicate_filters(spec: FilterSpec, R: int, base_seed: SeedLike, max_workers: int = 4,
                      reference: Optional[np.ndarray] = None, show_progress: bool = False,
                      progress_callback=None) -> ReplicateSummary:
    """
    用独立子流重复运行 R 次粒子滤波

    参数:
        spec: 滤波设置
        R: 重复次数
        base_seed: 主种子，第 r 次运行使用其第 r 个子流
        max_workers: 线程数
        reference: 滤波均值的参考值（用于误差曲线）
        show_progress: 是否显示 tqdm 进度条
        progress_callback: 进度回调 (完成数, 总数, 标签)

    返回:
        ReplicateSummary，结果按重复编号排列，与线程完成顺序无关
    """
    if int(R) < 1:
        raise ConfigError(f"重复次数 R 必须 >= 1，当前 R={R}")
    seeds = spawn_seeds(base_seed, int(R))
    results: List[Optional[FilterOutput]] = [None] * int(R)
    label = spec.method or spec.proposal.name

    with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, int(max_workers))) as executor:
        future_to_index = {executor.submit(spec.run, seed): i for i, seed in enumerate(seeds)}
        completed_count = 0
        with tqdm(total=len(future_to_index), desc=f"{label} N={spec.N}", disable=not show_progress) as bar:
            for future in concurrent.futures.as_completed(future_to_index):
                index = future_to_index[future]
                results[index] = future.result()
                completed_count += 1
                bar.update(1)
                if progress_callback:
                    progress_callback(completed_count, len(seeds), label)

    summary = summarize(results, reference, method=label, N=spec.N)
    logger.info(f"{label} N={spec.N}: {R} 次重复，对数似然均值 {summary.loglik_mean:.4f}，"
                f"方差 {summary.loglik_var:.4f}")
    return summary
