"""
粒子边际 Metropolis-Hastings

在内部尺度 (rho~, log sigma^-2, alpha) 上做高斯随机游走，提议 N(当前值, step_sd^2 I)，
对称提议使提议比为1。每个候选点用一次新的粒子滤波似然估计；被接受状态的
估计值随状态一起保存，之后不再重新估计（伪边际的正确性依赖这一点）。
"""
import concurrent.futures
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.inla.marginals import hyper_marginal
from src.inla.theta_grid import InlaConfig, ThetaGrid, explore_theta
from src.models.base_model import SsmModel
from src.models.hyperparams import PARAM_NAMES, HyperParams, PriorSpec, log_prior, sample_prior
from src.smc.particle_filter import run_filter
from src.smc.proposals import create_proposal
from src.utils.errors import ConfigError, InvalidHyperParams, InvalidInit, NumericalError
from src.utils.rng import SeedLike, as_seed_sequence, make_rng, spawn_seeds

logger = logging.getLogger(__name__)

INIT_KINDS = ("inla", "prior", "explicit")

# theta, 种子 -> 对数似然估计
LoglikFn = Callable[[HyperParams, np.random.SeedSequence], float]


@dataclass
class PmmhConfig:
    """
    PMMH 设置

    参数:
        iterations: 迭代次数 K
        burn_in: 预烧期
        thin: 稀疏间隔
        step_sd: 随机游走步长 sqrt(tau)
        n_particles: 粒子数 N
        init: 初始化方式 inla / prior / explicit
        init_theta: explicit 初始化时的 {rho, sigma, alpha}
        proposal: 滤波内的提议分布 bootstrap / inla
        resampler: 重采样方案
        ess_threshold: 自适应重采样阈值
        store_trajectories: 是否为每个保留样本保存一条潜变量轨迹
        fixed: 固定不动的参数 {名称: 值}
    """
    iterations: int = 10000
    burn_in: int = 1000
    thin: int = 10
    step_sd: float = 0.3
    n_particles: int = 100
    init: str = "inla"
    init_theta: Optional[Dict[str, float]] = None
    proposal: str = "bootstrap"
    resampler: str = "systematic"
    ess_threshold: Optional[float] = None
    store_trajectories: bool = False
    fixed: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.burn_in < self.iterations:
            raise ConfigError(f"需要 0 <= burn_in < iterations，当前 burn_in={self.burn_in}, iterations={self.iterations}")
        if self.thin < 1:
            raise ConfigError(f"thin 必须 >= 1，当前 {self.thin}")
        if not self.step_sd > 0:
            raise ConfigError(f"step_sd 必须 > 0，当前 {self.step_sd}")
        if self.init not in INIT_KINDS:
            raise ConfigError(f"不支持的初始化方式: {self.init}，可选 {INIT_KINDS}")
        if self.init == "explicit" and not self.init_theta:
            raise ConfigError("explicit 初始化需要 init_theta")
        unknown = set(self.fixed) - set(PARAM_NAMES)
        if unknown:
            raise ConfigError(f"fixed 中有未知参数: {sorted(unknown)}")
        if len(self.fixed) == len(PARAM_NAMES):
            raise ConfigError("所有参数都被固定，没有可以游走的坐标")

    @property
    def n_samples(self) -> int:
        """保留样本数 floor((K - burn_in) / thin)"""
        return (self.iterations - self.burn_in) // self.thin

    @classmethod
    def from_config(cls, pmmh_config: Optional[Dict] = None, filter_config: Optional[Dict] = None) -> "PmmhConfig":
        pmmh_config = dict(pmmh_config or {})
        filter_config = filter_config or {}
        pmmh_config.setdefault("resampler", filter_config.get("resampler", "systematic"))
        pmmh_config.setdefault("ess_threshold", filter_config.get("ess_threshold"))
        pmmh_config["fixed"] = dict(pmmh_config.get("fixed") or {})
        return cls(**pmmh_config)


@dataclass
class PmmhChain:
    """
    PMMH 输出

    参数:
        samples: 预烧和稀疏之后的样本
        loglik_trace: 每次迭代后当前状态的对数似然估计，长度 K
        accept_rate: K 次提议中的接受比例
        init_used: 实际使用的初始值
        trace: 每次迭代的状态表 (iteration, rho, sigma, alpha, loglik, accepted)
        trajectories: 可选的潜变量轨迹，形状 (样本数, T)
        n_evaluations: 似然估计调用次数；超出参数空间的候选不估计似然，
            因此 n_evaluations + n_invalid = K + 1
        n_invalid: 超出参数空间、未估计似然即被拒绝的候选数
    """
    samples: List[HyperParams]
    loglik_trace: np.ndarray
    accept_rate: float
    init_used: HyperParams
    trace: pd.DataFrame
    trajectories: Optional[np.ndarray] = None
    n_evaluations: int = 0
    n_invalid: int = 0

    def sample_array(self) -> np.ndarray:
        return np.array([[s.rho, s.sigma, s.alpha] for s in self.samples]).reshape(-1, len(PARAM_NAMES))

    def samples_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.sample_array(), columns=list(PARAM_NAMES))


def log_acceptance_ratio(loglik_new: float, log_prior_new: float, loglik_old: float, log_prior_old: float) -> float:
    """对称提议下的对数接受比 log p^* + log pi* - log p^ - log pi"""
    return (loglik_new + log_prior_new) - (loglik_old + log_prior_old)


def init_from_inla(grid: ThetaGrid) -> HyperParams:
    """
    以 INLA 各超参数边际后验（自然尺度）的众数作为初始值

    参数:
        grid: 超参数网格

    返回:
        HyperParams
    """
    modes = [hyper_marginal(grid, j, natural=True).mode() for j in range(len(PARAM_NAMES))]
    return HyperParams(*modes)


def _with_fixed(theta: HyperParams, fixed: Dict[str, float]) -> HyperParams:
    values = theta.as_dict()
    values.update({k: float(v) for k, v in fixed.items()})
    return HyperParams(**values)


def particle_loglik_fn(model: SsmModel, dataset, config: PmmhConfig, inla_config: Optional[InlaConfig] = None,
                       inflation: float = 1.0):
    """
    构造粒子滤波似然估计器

    返回:
        estimate(theta, seed, keep_history) -> FilterOutput
    """
    newton = (inla_config or InlaConfig()).newton

    def estimate(theta: HyperParams, seed: np.random.SeedSequence, keep_history: bool = False):
        proposal = create_proposal(config.proposal, model, dataset, theta, inflation, newton)
        return run_filter(model, dataset, theta, proposal, config.n_particles, seed,
                          config.resampler, config.ess_threshold, keep_history)

    return estimate


def _initial_theta(model: SsmModel, dataset, prior: PriorSpec, config: PmmhConfig, rng: np.random.Generator,
                   grid: Optional[ThetaGrid], inla_config: Optional[InlaConfig]) -> HyperParams:
    if config.init == "explicit":
        try:
            theta = HyperParams(**{k: float(v) for k, v in config.init_theta.items()})
        except (InvalidHyperParams, TypeError) as e:
            raise InvalidInit(f"显式初始值无效: {config.init_theta} ({e})") from e
    elif config.init == "prior":
        theta = sample_prior(prior, rng)
    else:
        if grid is None:
            logger.info("PMMH 初始化：运行 INLA 获取超参数边际众数")
            grid = explore_theta(model, dataset, prior, inla_config)
        theta = init_from_inla(grid)
    try:
        return _with_fixed(theta, config.fixed)
    except InvalidHyperParams as e:
        raise InvalidInit(f"固定参数与初始值组合无效: {e}") from e


def pmmh_run(model: SsmModel, dataset, prior: PriorSpec, config: PmmhConfig, seed: SeedLike,
             loglik_fn: Optional[LoglikFn] = None, grid: Optional[ThetaGrid] = None,
             inla_config: Optional[InlaConfig] = None, inflation: float = 1.0,
             show_progress: bool = False) -> PmmhChain:
    """
    运行一条 PMMH 链

    参数:
        model: 状态空间模型
        dataset: 数据集
        prior: 先验
        config: PMMH 设置
        seed: 主种子（游走和似然估计各用一个子流）
        loglik_fn: 自定义似然（如线性高斯模型的精确卡尔曼似然），缺省时用粒子滤波
        grid: 已有的 INLA 网格（init=inla 时使用，缺省则现算）
        inla_config: INLA 设置
        inflation: INLA 提议的方差放大因子
        show_progress: 是否显示进度条

    返回:
        PmmhChain
    """
    walk_seed, estimate_seed = spawn_seeds(seed, 2)
    rng = make_rng(walk_seed)
    estimate_seed = as_seed_sequence(estimate_seed)
    store = config.store_trajectories and loglik_fn is None
    if config.store_trajectories and loglik_fn is not None:
        logger.warning("自定义似然函数不产生粒子历史，忽略 store_trajectories")
    pf_estimate = particle_loglik_fn(model, dataset, config, inla_config, inflation) if loglik_fn is None else None
    n_evaluations = 0
    n_invalid = 0

    def estimate(theta: HyperParams) -> Tuple[float, Optional[np.ndarray]]:
        nonlocal n_evaluations
        n_evaluations += 1
        sub_seed = estimate_seed.spawn(1)[0]
        if pf_estimate is None:
            return float(loglik_fn(theta, sub_seed)), None
        try:
            output = pf_estimate(theta, sub_seed, store)
        except NumericalError as e:
            if config.proposal == "bootstrap":
                raise
            logger.warning(f"theta={theta} 处无法构造 INLA 提议，拒绝该候选: {e}")
            return -math.inf, None
        trajectory = output.sample_trajectory(make_rng(sub_seed.spawn(1)[0])) if store else None
        return output.loglik, trajectory

    theta = _initial_theta(model, dataset, prior, config, rng, grid, inla_config)
    init_used = theta
    logger.info(f"PMMH 初始值: {theta}（方式 {config.init}）")
    loglik, trajectory = estimate(theta)
    if not math.isfinite(loglik):
        raise InvalidInit(f"初始值 {theta} 处的似然估计无效: {loglik}")
    log_pi = log_prior(theta, prior)

    free = np.array([name not in config.fixed for name in PARAM_NAMES])
    K = config.iterations
    trace = np.empty((K, len(PARAM_NAMES)))
    loglik_trace = np.empty(K)
    accepted = np.zeros(K, dtype=bool)
    samples: List[HyperParams] = []
    trajectories: List[np.ndarray] = []
    u = theta.transformed()

    for k in tqdm(range(1, K + 1), desc="PMMH", disable=not show_progress):
        u_new = u + config.step_sd * rng.standard_normal(u.shape[0]) * free
        try:
            theta_new = _with_fixed(HyperParams.from_internal(u_new), config.fixed)
        except InvalidHyperParams:
            logger.warning(f"第 {k} 次迭代的候选点超出参数空间，直接拒绝")
            theta_new = None
            n_invalid += 1
        if theta_new is not None:
            loglik_new, trajectory_new = estimate(theta_new)
            log_pi_new = log_prior(theta_new, prior)
            ratio = log_acceptance_ratio(loglik_new, log_pi_new, loglik, log_pi)
            if math.log(rng.random()) < ratio:
                theta, u, loglik, log_pi, trajectory = theta_new, u_new, loglik_new, log_pi_new, trajectory_new
                accepted[k - 1] = True

        trace[k - 1] = (theta.rho, theta.sigma, theta.alpha)
        loglik_trace[k - 1] = loglik
        if k > config.burn_in and (k - config.burn_in) % config.thin == 0:
            samples.append(theta)
            if store:
                trajectories.append(trajectory)

    accept_rate = float(np.mean(accepted))
    logger.info(f"PMMH 完成: {K} 次迭代，接受率 {accept_rate:.3f}，保留 {len(samples)} 个样本")
    trace_frame = pd.DataFrame({"iteration": np.arange(1, K + 1), "rho": trace[:, 0], "sigma": trace[:, 1],
                                "alpha": trace[:, 2], "loglik": loglik_trace, "accepted": accepted.astype(int)})
    return PmmhChain(samples=samples, loglik_trace=loglik_trace, accept_rate=accept_rate,
                     init_used=init_used,
                     trace=trace_frame, trajectories=np.array(trajectories) if store else None,
                     n_evaluations=n_evaluations, n_invalid=n_invalid)



def pmmh_run_chains(model: SsmModel, dataset, prior: PriorSpec, config: PmmhConfig, seed: SeedLike,
                    n_chains: int, max_workers: int = 4, **kwargs) -> List[PmmhChain]:
    """
    用独立种子并行运行多条链，结果按链编号排列

    参数:
        n_chains: 链的条数
        max_workers: 线程数
        **kwargs: 传给 pmmh_run 的其他参数
    """
    seeds = spawn_seeds(seed, n_chains)
    chains: List[Optional[PmmhChain]] = [None] * n_chains
    with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, max_workers)) as executor:
        future_to_index = {executor.submit(pmmh_run, model, dataset, prior, config, s, **kwargs): i
                           for i, s in enumerate(seeds)}
        for future in concurrent.futures.as_completed(future_to_index):
            chains[future_to_index[future]] = future.result()
    return chains
