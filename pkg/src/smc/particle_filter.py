"""
通用粒子滤波

任意 SsmModel 与提议分布的组合。权重全部在对数空间计算，
每步似然因子在归一化之前以 log-mean-exp 的形式累加：
    log p^(y_t | y_{1:t-1}) = log sum_i W~_{t-1}^i w_t^i
其中 W~ 在重采样后为 1/N，不重采样时为上一步的归一化权重。
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from scipy import special

from src.models.base_model import SsmModel
from src.models.hyperparams import HyperParams
from src.smc.proposals import Proposal
from src.smc.resampling import get_resampler
from src.utils.errors import AllWeightsZero, ConfigError
from src.utils.rng import SeedLike, make_rng

logger = logging.getLogger(__name__)


@dataclass
class ParticleSystem:
    """
    单个时刻的粒子系统

    参数:
        x: 粒子
        ancestors: 祖先索引（从0开始，指向上一时刻的粒子）
        logw: 未归一化对数权重
        W: 归一化权重
        loglik_running: 到当前时刻为止的 log p^(y_{1:t})
    """
    x: np.ndarray
    ancestors: np.ndarray
    logw: np.ndarray
    W: np.ndarray
    loglik_running: float = 0.0

    @property
    def N(self) -> int:
        return self.x.shape[0]

    @property
    def ess(self) -> float:
        return float(np.clip(1.0 / np.sum(self.W ** 2), 1.0, self.N))

    def filtering_mean(self) -> float:
        return float(np.dot(self.W, self.x))


@dataclass
class FilterOutput:
    """
    粒子滤波结果

    参数:
        loglik: log p^_theta(y_{1:T})
        ess: 每个时刻的有效样本量
        filt_mean: 滤波均值 E^[X_t | y_{1:t}]
        per_step_loglik: log p^(y_t | y_{1:t-1})
        resampled: 每个时刻传播前是否重采样
        final_weights: 最后时刻的归一化权重
        particles / ancestors: 保留历史时的粒子与祖先矩阵，形状 (T, N)
    """
    loglik: float
    ess: np.ndarray
    filt_mean: np.ndarray
    per_step_loglik: np.ndarray
    resampled: np.ndarray
    final_weights: np.ndarray
    particles: Optional[np.ndarray] = None
    ancestors: Optional[np.ndarray] = None
    seed: Optional[int] = field(default=None, repr=False)

    @property
    def T(self) -> int:
        return self.ess.shape[0]

    def sample_trajectory(self, rng: np.random.Generator) -> np.ndarray:
        """
        按最终权重抽一个粒子并沿祖先回溯出整条轨迹

        参数:
            rng: 随机数生成器

        返回:
            长度 T 的潜变量轨迹
        """
        if self.particles is None:
            raise ConfigError("回溯轨迹需要 keep_history=True")
        k = int(rng.choice(self.final_weights.shape[0], p=self.final_weights))
        path = np.empty(self.T)
        for t in range(self.T - 1, -1, -1):
            path[t] = self.particles[t, k]
            k = int(self.ancestors[t, k])
        return path

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": np.arange(1, self.T + 1), "ess": self.ess, "filt_mean": self.filt_mean,
                             "step_loglik": self.per_step_loglik, "resampled": self.resampled})


def _normalize(logw: np.ndarray, t: int):
    if not np.any(np.isfinite(logw)) or np.any(np.isnan(logw)):
        raise AllWeightsZero(f"时刻 t={t + 1} 所有粒子权重为零或无效")
    log_total = float(special.logsumexp(logw))
    W = np.exp(logw - log_total)
    return W / np.sum(W), log_total


def _should_resample(ess: float, N: int, ess_threshold: Optional[float]) -> bool:
    if ess_threshold is None:
        return True
    if ess_threshold <= 0:
        return False
    return ess < ess_threshold * N


def run_filter(model: SsmModel, dataset, theta: HyperParams, proposal: Proposal, N: int, seed: SeedLike,
               resampler: str = "systematic", ess_threshold: Optional[float] = None,
               keep_history: bool = False) -> FilterOutput:
    """
    顺序重要性采样-重采样粒子滤波

    参数:
        model: 状态空间模型
        dataset: Dataset 或观测向量
        theta: 超参数
        proposal: 提议分布
        N: 粒子数 (>= 2)
        seed: 随机种子
        resampler: 重采样方案名称
        ess_threshold: None 每步重采样；c in (0,1] 在 ESS < cN 时重采样；0 从不重采样
        keep_history: 是否保留粒子和祖先历史

    返回:
        FilterOutput
    """
    if int(N) < 2:
        raise ConfigError(f"粒子数 N 必须 >= 2，当前 N={N}")
    if ess_threshold is not None and ess_threshold > 1:
        raise ConfigError(f"ess_threshold 必须在 [0, 1] 内，当前 {ess_threshold}")
    N = int(N)
    y = model.validate_observations(getattr(dataset, "y", dataset))
    T = y.shape[0]
    rng = make_rng(seed)
    resample = get_resampler(resampler)
    log_uniform = -math.log(N)

    ess = np.empty(T)
    filt_mean = np.empty(T)
    step_loglik = np.empty(T)
    resampled = np.zeros(T, dtype=bool)
    particles = np.empty((T, N)) if keep_history else None
    ancestor_history = np.empty((T, N), dtype=int) if keep_history else None

    x, log_inc = proposal.propose_initial(model, y[0], theta, N, rng)
    logw = log_uniform + np.asarray(log_inc, dtype=float)
    W, step_loglik[0] = _normalize(logw, 0)
    system = ParticleSystem(np.asarray(x, dtype=float), np.arange(N), logw, W, step_loglik[0])
    resampled[0] = True
    ess[0], filt_mean[0] = system.ess, system.filtering_mean()
    if keep_history:
        particles[0], ancestor_history[0] = system.x, system.ancestors

    for t in range(1, T):
        if _should_resample(system.ess, N, ess_threshold):
            ancestors = resample(system.W, N, rng)
            log_prev = np.full(N, log_uniform)
            resampled[t] = True
        else:
            ancestors = np.arange(N)
            with np.errstate(divide="ignore"):
                log_prev = np.log(system.W)
        x, log_inc = proposal.propose(t, system.x[ancestors], model, y[t], theta, rng)
        logw = log_prev + np.asarray(log_inc, dtype=float)
        W, step_loglik[t] = _normalize(logw, t)
        system = ParticleSystem(np.asarray(x, dtype=float), ancestors, logw, W,
                                system.loglik_running + step_loglik[t])
        ess[t], filt_mean[t] = system.ess, system.filtering_mean()
        if keep_history:
            particles[t], ancestor_history[t] = system.x, system.ancestors

    return FilterOutput(loglik=float(system.loglik_running), ess=ess, filt_mean=filt_mean,
                        per_step_loglik=step_loglik, resampled=resampled, final_weights=system.W,
                        particles=particles, ancestors=ancestor_history,
                        seed=int(seed) if isinstance(seed, (int, np.integer)) else None)
