"""
线性高斯状态空间模型及其精确卡尔曼滤波

    X_t 为平稳AR(1)，Y_t = X_t + alpha + eps_t，eps_t ~ N(0, obs_noise^2)

该模型的似然可以精确计算，用作粒子滤波似然估计和INLA精确性的对照。
"""
import logging
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import stats

from src.models.base_model import Ar1LatentModel
from src.models.hyperparams import HyperParams

logger = logging.getLogger(__name__)


class LinearGaussianSsm(Ar1LatentModel):
    """AR(1)潜变量 + 高斯观测"""

    name = "linear_gaussian"

    def __init__(self, obs_noise: float = 1.0):
        if not obs_noise > 0:
            raise ValueError(f"观测噪声标准差必须 > 0，当前 {obs_noise}")
        self.obs_noise = float(obs_noise)

    def log_observation(self, y, x, theta: HyperParams):
        return stats.norm.logpdf(y, np.asarray(x, dtype=float) + theta.alpha, self.obs_noise)

    def sample_observation(self, x, theta: HyperParams, rng: np.random.Generator):
        x = np.asarray(x, dtype=float)
        return x + theta.alpha + self.obs_noise * rng.standard_normal(x.shape)

    def observation_derivatives(self, y, x, theta: HyperParams):
        precision = 1.0 / self.obs_noise ** 2
        residual = np.asarray(y, dtype=float) - np.asarray(x, dtype=float) - theta.alpha
        return residual * precision, np.full(residual.shape, precision)

    def __repr__(self):
        return f"LinearGaussianSsm(obs_noise={self.obs_noise})"


@dataclass
class KalmanResult:
    """
    卡尔曼滤波结果

    参数:
        loglik: log p_theta(y_{1:T})
        filt_mean: E[X_t | y_{1:t}]
        filt_var: Var[X_t | y_{1:t}]
        step_loglik: log p(y_t | y_{1:t-1})
    """
    loglik: float
    filt_mean: np.ndarray
    filt_var: np.ndarray
    step_loglik: np.ndarray


def kalman_filter(data, theta: HyperParams, obs_noise: float) -> KalmanResult:
    """
    标量卡尔曼滤波

    参数:
        data: Dataset 或观测向量
        theta: 超参数
        obs_noise: 观测噪声标准差

    返回:
        KalmanResult
    """
    y = np.asarray(getattr(data, "y", data), dtype=float)
    T = y.shape[0]
    rho, sigma2, alpha = theta.rho, theta.sigma ** 2, theta.alpha
    noise2 = obs_noise ** 2
    filt_mean = np.empty(T)
    filt_var = np.empty(T)
    step_loglik = np.empty(T)

    mean, var = 0.0, sigma2 / (1.0 - rho ** 2)
    for t in range(T):
        if t > 0:
            mean = rho * mean
            var = rho ** 2 * var + sigma2
        innovation_var = var + noise2
        innovation = y[t] - mean - alpha
        step_loglik[t] = -0.5 * (math.log(2.0 * math.pi * innovation_var) + innovation ** 2 / innovation_var)
        gain = var / innovation_var
        mean = mean + gain * innovation
        var = (1.0 - gain) * var
        filt_mean[t] = mean
        filt_var[t] = var

    return KalmanResult(loglik=float(np.sum(step_loglik)), filt_mean=filt_mean,
                        filt_var=filt_var, step_loglik=step_loglik)


def kalman_loglik(data, theta: HyperParams, obs_noise: float) -> float:
    """
    线性高斯模型的精确对数似然 log p_theta(y_{1:T})

    参数:
        data: Dataset 或观测向量
        theta: 超参数
        obs_noise: 观测噪声标准差

    返回:
        精确对数似然
    """
    return kalman_filter(data, theta, obs_noise).loglik


def exact_loglik_fn(model: Union[LinearGaussianSsm, float], data):
    """
    构造 theta -> 精确对数似然 的函数，供PMMH的精确似然模式使用

    参数:
        model: 线性高斯模型（或直接给出观测噪声标准差）
        data: Dataset 或观测向量
    """
    obs_noise = model.obs_noise if isinstance(model, LinearGaussianSsm) else float(model)

    def loglik(theta: HyperParams, seed=None) -> float:
        return kalman_loglik(data, theta, obs_noise)

    return loglik
