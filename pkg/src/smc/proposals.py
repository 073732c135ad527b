"""
粒子滤波的提议分布

ProposalChain 把联合高斯近似 pi_G(x_{1:T} | y_{1:T}, theta) 拆成顺序条件核：
    q_1(x_1)          = N(mu_1, v_1)
    q_t(x_t | x_{t-1}) = N(mu_t + a_t (x_{t-1} - mu_{t-1}), v_t)
精度矩阵三对角意味着链是马尔可夫的，全历史条件分布只依赖 x_{t-1}，
系数由部分逆的对角线和第一超对角线给出，构造代价 O(T)。
"""
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from src.inla.gaussian_approx import GaussianChain, NewtonConfig, gaussian_approx
from src.models.base_model import SsmModel
from src.models.hyperparams import HyperParams
from src.utils.errors import ConfigError, IndexOutOfRange, NonPositiveConditionalVariance

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProposalChain:
    """
    顺序高斯提议核的参数（时间索引从0开始）

    参数:
        mu: 联合近似的均值，长度 T
        a: x_t 对 x_{t-1} 的回归系数，a[t-1] 对应时刻 t，长度 T-1
        v: 条件方差，v[0] 为 x_0 的边际方差，长度 T
    """
    mu: np.ndarray
    a: np.ndarray
    v: np.ndarray

    @property
    def T(self) -> int:
        return self.mu.shape[0]

    def _check_t(self, t: int):
        if not 1 <= t < self.T:
            raise IndexOutOfRange(f"条件提议的时间索引 {t} 超出范围 [1, {self.T})")

    def q1_sample(self, rng: np.random.Generator, size: Optional[int] = None):
        return self.mu[0] + math.sqrt(self.v[0]) * rng.standard_normal(size)

    def q1_logpdf(self, x1):
        return stats.norm.logpdf(x1, self.mu[0], math.sqrt(self.v[0]))

    def conditional_mean(self, t: int, x_prev):
        self._check_t(t)
        return self.mu[t] + self.a[t - 1] * (np.asarray(x_prev, dtype=float) - self.mu[t - 1])

    def qt_sample(self, t: int, x_prev, rng: np.random.Generator):
        mean = self.conditional_mean(t, x_prev)
        return mean + math.sqrt(self.v[t]) * rng.standard_normal(np.shape(mean))

    def qt_logpdf(self, t: int, x_prev, x_t):
        return stats.norm.logpdf(x_t, self.conditional_mean(t, x_prev), math.sqrt(self.v[t]))

    def joint_logpdf(self, x) -> float:
        """log q_1(x_1) + sum_t log q_t(x_t | x_{t-1})"""
        x = np.asarray(x, dtype=float)
        total = float(self.q1_logpdf(x[0]))
        if self.T > 1:
            means = self.mu[1:] + self.a * (x[:-1] - self.mu[:-1])
            total += float(np.sum(stats.norm.logpdf(x[1:], means, np.sqrt(self.v[1:]))))
        return total

    def to_frame(self) -> pd.DataFrame:
        """调试输出：t, mu, a, v（t 从1开始，t=1 时 a 为空）"""
        return pd.DataFrame({"t": np.arange(1, self.T + 1), "mu": self.mu,
                             "a": np.concatenate([[np.nan], self.a]), "v": self.v})


def build_proposal(chain: GaussianChain, inflation: float = 1.0) -> ProposalChain:
    """
    由高斯近似构造顺序提议核

    参数:
        chain: 高斯近似
        inflation: 条件方差放大因子 kappa >= 1

    返回:
        ProposalChain

    异常:
        NonPositiveConditionalVariance: 数值失效导致条件方差非正
    """
    if inflation < 1.0:
        raise ConfigError(f"方差放大因子必须 >= 1，当前 {inflation}")
    partial = chain.partial
    var, cov1 = partial.var, partial.cov1
    a = cov1 / var[:-1]
    v = np.empty_like(var)
    v[0] = var[0]
    v[1:] = var[1:] - cov1 ** 2 / var[:-1]
    if np.any(~np.isfinite(v)) or np.any(v <= 0.0):
        raise NonPositiveConditionalVariance(f"条件方差非正: 最小值 {np.min(v):.3e}")
    return ProposalChain(mu=np.array(chain.mean, dtype=float), a=a, v=v * inflation)


class Proposal(ABC):
    """粒子滤波提议：返回新粒子及其对数增量权重"""

    name = "abstract"

    @abstractmethod
    def propose_initial(self, model: SsmModel, y0: float, theta: HyperParams, N: int,
                        rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        """
        初始时刻采样

        返回:
            (粒子, log mu + log g - log q_1)
        """
        pass

    @abstractmethod
    def propose(self, t: int, x_prev: np.ndarray, model: SsmModel, y_t: float, theta: HyperParams,
                rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        """
        时刻 t (>= 1) 的传播

        返回:
            (粒子, log f + log g - log q_t)
        """
        pass


class BootstrapProposal(Proposal):
    """以先验动态为提议，权重化简为观测似然"""

    name = "bootstrap"

    def propose_initial(self, model, y0, theta, N, rng):
        x = np.asarray(model.sample_initial(theta, rng, size=N), dtype=float)
        return x, model.log_observation(y0, x, theta)

    def propose(self, t, x_prev, model, y_t, theta, rng):
        x = model.sample_transition(x_prev, theta, rng)
        return x, model.log_observation(y_t, x, theta)


class InlaProposal(Proposal):
    """基于联合高斯近似的条件提议"""

    name = "inla"

    def __init__(self, chain: ProposalChain):
        self.chain = chain

    def propose_initial(self, model, y0, theta, N, rng):
        x = self.chain.q1_sample(rng, size=N)
        log_w = model.log_initial(x, theta) + model.log_observation(y0, x, theta) - self.chain.q1_logpdf(x)
        return x, log_w

    def propose(self, t, x_prev, model, y_t, theta, rng):
        x = self.chain.qt_sample(t, x_prev, rng)
        log_w = (model.log_transition(x, x_prev, theta) + model.log_observation(y_t, x, theta)
                 - self.chain.qt_logpdf(t, x_prev, x))
        return x, log_w


PROPOSAL_KINDS = ("bootstrap", "inla")


def create_proposal(kind: str, model: SsmModel = None, dataset=None, theta: HyperParams = None,
                    inflation: float = 1.0, newton: Optional[NewtonConfig] = None) -> Proposal:
    """
    创建提议分布的工厂函数

    参数:
        kind: "bootstrap" 或 "inla"
        model / dataset / theta: inla 提议需要，用于构造 pi_G(x | y, theta)
        inflation: 条件方差放大因子
        newton: 牛顿迭代设置

    返回:
        Proposal 实例
    """
    kind = kind.lower()
    if kind == "bootstrap":
        return BootstrapProposal()
    elif kind == "inla":
        if model is None or dataset is None or theta is None:
            raise ConfigError("inla 提议需要模型、数据集和超参数")
        chain = gaussian_approx(model, dataset, theta, newton)
        return InlaProposal(build_proposal(chain, inflation))
    else:
        raise ConfigError(f"不支持的提议类型: {kind}，可选 {PROPOSAL_KINDS}")
