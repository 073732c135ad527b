"""
超参数 theta = (rho, sigma, alpha)、先验设定与变换

所有采样器和优化器都在内部无约束尺度 (rho~, log sigma^-2, alpha) 上工作：
    rho~ = log(1+rho) - log(1-rho)     (rho = tanh(rho~/2))
    log sigma^-2 = -2 log sigma
先验是 rho~ ~ N(m_rho, s_rho^2)，alpha ~ N(m_alpha, s_alpha^2)，
sigma^-2 ~ Gamma(a, b)（形状-速率参数化）。log_prior 返回内部尺度上的密度，
包含 sigma^-2 -> log sigma^-2 的雅可比项；rho~ 的先验本身就定义在内部坐标上，
其雅可比项为0。
"""
import math
from dataclasses import dataclass, asdict
from typing import Dict, Tuple

import numpy as np
from scipy import special, stats

from src.utils.errors import InvalidHyperParams, InvalidInit

PARAM_NAMES: Tuple[str, str, str] = ("rho", "sigma", "alpha")
INTERNAL_NAMES: Tuple[str, str, str] = ("rho_tilde", "log_precision", "alpha")


@dataclass(frozen=True)
class HyperParams:
    """
    AR(1)-潜变量状态空间模型的超参数

    参数:
        rho: AR系数，|rho| < 1
        sigma: 新息标准差，> 0
        alpha: 对数强度偏移
    """
    rho: float
    sigma: float
    alpha: float

    def __post_init__(self):
        for name in PARAM_NAMES:
            object.__setattr__(self, name, float(getattr(self, name)))
        if not all(math.isfinite(v) for v in (self.rho, self.sigma, self.alpha)):
            raise InvalidHyperParams(f"超参数必须为有限值: {self}")
        if not abs(self.rho) < 1.0:
            raise InvalidHyperParams(f"rho 必须满足 |rho| < 1，当前 rho={self.rho}")
        if not self.sigma > 0.0:
            raise InvalidHyperParams(f"sigma 必须 > 0，当前 sigma={self.sigma}")

    @property
    def rho_tilde(self) -> float:
        return float(np.log1p(self.rho) - np.log1p(-self.rho))

    @property
    def log_precision(self) -> float:
        """log sigma^-2"""
        return -2.0 * math.log(self.sigma)

    def transformed(self) -> np.ndarray:
        """内部尺度向量 (rho~, log sigma^-2, alpha)"""
        return np.array([self.rho_tilde, self.log_precision, self.alpha])

    to_internal = transformed

    @classmethod
    def from_internal(cls, u) -> "HyperParams":
        """
        从内部尺度向量构造超参数

        参数:
            u: (rho~, log sigma^-2, alpha)

        返回:
            HyperParams；数值饱和（|rho| 舍入为1、sigma 下溢）时抛出 InvalidHyperParams
        """
        u = np.asarray(u, dtype=float)
        with np.errstate(over="ignore"):
            sigma = float(np.exp(-u[1] / 2.0))
        return cls(rho=math.tanh(u[0] / 2.0), sigma=sigma, alpha=u[2])

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)

    def __getitem__(self, index: int) -> float:
        return getattr(self, PARAM_NAMES[index])


@dataclass(frozen=True)
class PriorSpec:
    """
    超参数先验，默认值为 a=b=0.01, m_rho=0, s_rho=0.15, m_alpha=0, s_alpha=10
    Gamma(a, b) 采用形状-速率参数化
    """
    m_rho: float = 0.0
    s_rho: float = 0.15
    m_alpha: float = 0.0
    s_alpha: float = 10.0
    a: float = 0.01
    b: float = 0.01

    def __post_init__(self):
        for name in ("s_rho", "s_alpha", "a", "b"):
            if not getattr(self, name) > 0:
                raise InvalidHyperParams(f"先验参数 {name} 必须 > 0")

    @classmethod
    def from_config(cls, prior_config: Dict) -> "PriorSpec":
        return cls(**{k: float(v) for k, v in prior_config.items()})

    def mean_internal(self) -> np.ndarray:
        """内部尺度上的先验中心 (m_rho, log(a/b), m_alpha)，用作优化起点"""
        return np.array([self.m_rho, math.log(self.a / self.b), self.m_alpha])


def log_prior_terms(theta: HyperParams, prior: PriorSpec) -> Dict[str, float]:
    """
    分项计算内部尺度上的对数先验

    返回:
        字典：rho_tilde、alpha、precision（Gamma对数密度）、jacobian（log sigma^-2）
    """
    log_lambda = theta.log_precision
    with np.errstate(over="ignore"):
        lam = float(np.exp(log_lambda))
    gamma_term = (prior.a * math.log(prior.b) - special.gammaln(prior.a)
                  + (prior.a - 1.0) * log_lambda - prior.b * lam)
    return {
        "rho_tilde": float(stats.norm.logpdf(theta.rho_tilde, prior.m_rho, prior.s_rho)),
        "alpha": float(stats.norm.logpdf(theta.alpha, prior.m_alpha, prior.s_alpha)),
        "precision": float(gamma_term),
        "jacobian": log_lambda,
    }


def log_prior(theta: HyperParams, prior: PriorSpec) -> float:
    """
    内部尺度 (rho~, log sigma^-2, alpha) 上的对数先验密度

    参数:
        theta: 超参数
        prior: 先验设定

    返回:
        对数先验
    """
    return float(sum(log_prior_terms(theta, prior).values()))


def sample_prior(prior: PriorSpec, rng: np.random.Generator, max_tries: int = 100) -> HyperParams:
    """
    从先验抽取一组有效的超参数

    a 很小时 Gamma 抽样可能下溢为0，此时重抽；连续失败则抛出 InvalidInit。
    """
    for _ in range(max_tries):
        rho_tilde = rng.normal(prior.m_rho, prior.s_rho)
        lam = rng.gamma(prior.a, 1.0 / prior.b)
        alpha = rng.normal(prior.m_alpha, prior.s_alpha)
        if lam <= 0 or not math.isfinite(math.log(lam)):
            continue
        try:
            return HyperParams.from_internal([rho_tilde, math.log(lam), alpha])
        except InvalidHyperParams:
            continue
    raise InvalidInit(f"连续 {max_tries} 次先验抽样都没有得到有效超参数")


def internal_to_natural(j: int, u):
    """第 j 个内部坐标映射到自然尺度"""
    u = np.asarray(u, dtype=float)
    if j == 0:
        return np.tanh(u / 2.0)
    if j == 1:
        return np.exp(-u / 2.0)
    return u


def log_abs_dinternal_dnatural(j: int, u):
    """
    log |du/dx|，u 为内部坐标，x 为自然尺度参数

    rho: du/drho = 2/(1-rho^2) = 2 cosh^2(u/2)
    sigma: |du/dsigma| = 2/sigma = 2 exp(u/2)
    alpha: 1
    """
    u = np.asarray(u, dtype=float)
    if j == 0:
        half = u / 2.0
        return math.log(2.0) + 2.0 * (np.logaddexp(half, -half) - math.log(2.0))
    if j == 1:
        return math.log(2.0) + u / 2.0
    return np.zeros_like(u)
