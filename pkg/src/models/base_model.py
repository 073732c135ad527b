from abc import ABC, abstractmethod
import logging
import math
from typing import Optional, Tuple

import numpy as np
from scipy import stats

from src.linalg.tridiag import TridiagSym
from src.models.hyperparams import HyperParams

logger = logging.getLogger(__name__)


class SsmModel(ABC):
    """
    状态空间模型基类，定义初始密度 mu、转移密度 f 和观测密度 g 的接口
    所有具体模型应继承这个基类并实现其抽象方法；所有方法对粒子数组向量化
    """

    name = "abstract"

    @abstractmethod
    def log_initial(self, x, theta: HyperParams):
        """
        log mu_theta(x_1)

        参数:
            x: 初始状态（标量或粒子数组）
            theta: 超参数

        返回:
            对数密度，与 x 同形状
        """
        pass

    @abstractmethod
    def log_transition(self, x, x_prev, theta: HyperParams):
        """log f_theta(x_t | x_{t-1})"""
        pass

    @abstractmethod
    def log_observation(self, y, x, theta: HyperParams):
        """log g_theta(y_t | x_t)"""
        pass

    @abstractmethod
    def sample_initial(self, theta: HyperParams, rng: np.random.Generator, size: Optional[int] = None):
        """从 mu_theta 采样"""
        pass

    @abstractmethod
    def sample_transition(self, x_prev, theta: HyperParams, rng: np.random.Generator):
        """从 f_theta(. | x_prev) 采样，x_prev 可为粒子数组"""
        pass

    @abstractmethod
    def sample_observation(self, x, theta: HyperParams, rng: np.random.Generator):
        """从 g_theta(. | x) 采样"""
        pass

    @abstractmethod
    def observation_derivatives(self, y, x, theta: HyperParams) -> Tuple[np.ndarray, np.ndarray]:
        """
        观测对数密度对 x 的一阶导数和负二阶导数

        参数:
            y: 观测向量
            x: 潜变量向量

        返回:
            (d/dx log g, -d^2/dx^2 log g)，供高斯近似的牛顿迭代使用
        """
        pass

    @abstractmethod
    def latent_precision(self, T: int, theta: HyperParams) -> TridiagSym:
        """潜变量链 x_{1:T} 先验的三对角精度矩阵"""
        pass

    def validate_observations(self, y: np.ndarray) -> np.ndarray:
        """
        检查观测是否在模型支撑集内

        参数:
            y: 观测向量

        返回:
            转换后的观测数组
        """
        return np.asarray(y, dtype=float)

    def log_joint(self, x: np.ndarray, y: np.ndarray, theta: HyperParams) -> float:
        """
        联合对数密度 log mu(x_1) + sum log f(x_t|x_{t-1}) + sum log g(y_t|x_t)
        """
        x = np.asarray(x, dtype=float)
        total = float(self.log_initial(x[0], theta))
        if x.shape[0] > 1:
            total += float(np.sum(self.log_transition(x[1:], x[:-1], theta)))
        total += float(np.sum(self.log_observation(y, x, theta)))
        return total

    def get_model_type(self) -> str:
        return self.name


def ar1_prior_precision(T: int, theta: HyperParams) -> TridiagSym:
    """
    平稳AR(1)链 x_{1:T} 的先验精度矩阵

    Q = (1/sigma^2) * tridiag(对角 (1, 1+rho^2, ..., 1+rho^2, 1), 次对角 -rho)
    T = 1 时 Q = (1-rho^2)/sigma^2

    参数:
        T: 链长度
        theta: 超参数

    返回:
        三对角精度矩阵
    """
    if T < 1:
        raise ValueError(f"链长度 T 必须 >= 1，当前 T={T}")
    inv_var = 1.0 / theta.sigma ** 2
    if T == 1:
        return TridiagSym(np.array([(1.0 - theta.rho ** 2) * inv_var]), np.empty(0))
    diag = np.full(T, (1.0 + theta.rho ** 2) * inv_var)
    diag[0] = diag[-1] = inv_var
    offdiag = np.full(T - 1, -theta.rho * inv_var)
    return TridiagSym(diag, offdiag)


class Ar1LatentModel(SsmModel):
    """
    潜变量为平稳AR(1)过程的模型：
        X_1 ~ N(0, sigma^2/(1-rho^2))
        X_t | X_{t-1} ~ N(rho X_{t-1}, sigma^2)
    子类只需实现观测部分
    """

    @staticmethod
    def stationary_sd(theta: HyperParams) -> float:
        return theta.sigma / math.sqrt(1.0 - theta.rho ** 2)

    def log_initial(self, x, theta: HyperParams):
        return stats.norm.logpdf(x, 0.0, self.stationary_sd(theta))

    def log_transition(self, x, x_prev, theta: HyperParams):
        return stats.norm.logpdf(x, theta.rho * np.asarray(x_prev), theta.sigma)

    def sample_initial(self, theta: HyperParams, rng: np.random.Generator, size: Optional[int] = None):
        return rng.normal(0.0, self.stationary_sd(theta), size=size)

    def sample_transition(self, x_prev, theta: HyperParams, rng: np.random.Generator):
        x_prev = np.asarray(x_prev, dtype=float)
        return theta.rho * x_prev + theta.sigma * rng.standard_normal(x_prev.shape)

    def latent_precision(self, T: int, theta: HyperParams) -> TridiagSym:
        return ar1_prior_precision(T, theta)
