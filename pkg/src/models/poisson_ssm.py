import logging

import numpy as np
from scipy import special

from src.models.base_model import Ar1LatentModel
from src.models.hyperparams import HyperParams
from src.utils.errors import NegativeCount

logger = logging.getLogger(__name__)


def poisson_log_obs(y, x, alpha: float):
    """
    Poisson观测对数概率 Y_t | X_t = x ~ Poisson(exp(x + alpha))

    log g = y (x + alpha) - exp(x + alpha) - log(y!)，log(y!) 由对数伽马函数计算

    参数:
        y: 非负整数计数（标量或数组）
        x: 潜变量（标量或数组，可与 y 广播）
        alpha: 对数强度偏移

    返回:
        对数概率
    """
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise NegativeCount(f"Poisson计数不能为负: 最小值 {np.min(y)}")
    eta = np.asarray(x, dtype=float) + alpha
    return y * eta - np.exp(eta) - special.gammaln(y + 1.0)


class PoissonSsm(Ar1LatentModel):
    """
    Poisson状态空间模型：AR(1)潜变量 + Poisson(exp(x_t + alpha)) 观测
    """

    name = "poisson"

    def log_observation(self, y, x, theta: HyperParams):
        return poisson_log_obs(y, x, theta.alpha)

    def sample_observation(self, x, theta: HyperParams, rng: np.random.Generator):
        return rng.poisson(np.exp(np.asarray(x, dtype=float) + theta.alpha))

    def observation_derivatives(self, y, x, theta: HyperParams):
        rate = np.exp(np.asarray(x, dtype=float) + theta.alpha)
        return np.asarray(y, dtype=float) - rate, rate

    def validate_observations(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if np.any(y < 0):
            raise NegativeCount("Poisson数据集中存在负计数")
        if np.any(y != np.round(y)):
            raise ValueError("Poisson数据集中存在非整数计数")
        return y
