"""
实验设置与预设解析
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from src.config.config_manager import check_unknown_keys, get_preset, merge_config
from src.models.hyperparams import HyperParams
from src.utils.errors import ConfigError, InvalidHyperParams

logger = logging.getLogger(__name__)

EXPERIMENT_KEYS = {
    "model": None,
    "T": None,
    "theta": None,
    "N": None,
    "replicates": None,
    "reference_n": None,
    "seed": None,
    "obs_noise": None,
}
PRESET_KEYS = {"name": None, "description": None, "experiment": EXPERIMENT_KEYS, "config": None,
               "quick": {"experiment": EXPERIMENT_KEYS, "config": None}}


def _as_int_list(value, name: str) -> List[int]:
    values = value if isinstance(value, (list, tuple)) else [value]
    try:
        result = [int(v) for v in values]
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{name} 必须是整数或整数列表，当前 {value}") from e
    if not result:
        raise ConfigError(f"{name} 不能为空")
    return result


@dataclass
class ExperimentConfig:
    """
    一次实验的设置

    参数:
        experiment_id: 实验名（预设名）
        model_name: 模型名称
        T: 时间长度列表（每个 T 各自模拟一个数据集）
        theta_true: 模拟数据使用的真实超参数
        N: 粒子数列表
        replicates: 每个 (方法, N, T) 的重复次数 R
        seed: 主种子
        reference_n: 参考滤波的粒子数
        obs_noise: 线性高斯模型的观测噪声
        out_dir: 输出目录
        config_overrides: 预设对主配置各段的覆盖
    """
    experiment_id: str = "custom"
    model_name: str = "poisson"
    T: List[int] = field(default_factory=lambda: [100])
    theta_true: HyperParams = field(default_factory=lambda: HyperParams(0.7, 0.5, 1.0))
    N: List[int] = field(default_factory=lambda: [100])
    replicates: int = 1
    seed: int = 1
    reference_n: int = 100000
    obs_noise: Optional[float] = None
    out_dir: str = "data/output"
    config_overrides: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.T = _as_int_list(self.T, "T")
        self.N = _as_int_list(self.N, "N")
        if min(self.T) < 1:
            raise ConfigError(f"T 必须 >= 1，当前 {self.T}")
        if min(self.N) < 2:
            raise ConfigError(f"N 必须 >= 2，当前 {self.N}")
        if int(self.replicates) < 1:
            raise ConfigError(f"replicates 必须 >= 1，当前 {self.replicates}")
        if int(self.reference_n) < 2:
            raise ConfigError(f"reference_n 必须 >= 2，当前 {self.reference_n}")

    @property
    def T_max(self) -> int:
        return max(self.T)

    @classmethod
    def from_dict(cls, experiment: Dict, experiment_id: str = "custom", out_dir: str = "data/output",
                  config_overrides: Optional[Dict] = None) -> "ExperimentConfig":
        experiment = dict(experiment or {})
        theta = experiment.get("theta") or {"rho": 0.7, "sigma": 0.5, "alpha": 1.0}
        try:
            theta_true = HyperParams(**{k: float(v) for k, v in theta.items()})
        except (InvalidHyperParams, TypeError) as e:
            raise ConfigError(f"theta 设置无效: {theta} ({e})") from e
        return cls(experiment_id=experiment_id,
                   model_name=str(experiment.get("model", "poisson")),
                   T=experiment.get("T", [100]),
                   theta_true=theta_true,
                   N=experiment.get("N", [100]),
                   replicates=int(experiment.get("replicates", 1)),
                   seed=int(experiment.get("seed", 1)),
                   reference_n=int(experiment.get("reference_n", 100000)),
                   obs_noise=experiment.get("obs_noise"),
                   out_dir=out_dir,
                   config_overrides=config_overrides or {})


def resolve_preset(name: str, quick: bool = False, presets_dir: Optional[str] = None) -> Tuple[Dict, Dict]:
    """
    读取预设并应用 quick 覆盖

    参数:
        name: 预设名称
        quick: 是否应用 quick 段
        presets_dir: 预设目录

    返回:
        (experiment 段, 对主配置的覆盖)
    """
    preset = get_preset(name, presets_dir)
    body = {k: v for k, v in preset.items() if not k.startswith("_")}
    check_unknown_keys(body, PRESET_KEYS, preset.get("_lines", {}), preset.get("_path", name),
                       free_form={("config",), ("quick", "config")})
    experiment = dict(body.get("experiment") or {})
    overrides = dict(body.get("config") or {})
    if quick and body.get("quick"):
        experiment = merge_config(experiment, body["quick"].get("experiment"))
        overrides = merge_config(overrides, body["quick"].get("config"))
        logger.info(f"预设 {name} 使用 quick 设置")
    return experiment, overrides


def experiment_from_preset(name: str, quick: bool = False, out_dir: str = "data/output",
                           presets_dir: Optional[str] = None, **changes) -> ExperimentConfig:
    """
    由预设构造 ExperimentConfig，changes 中非 None 的字段覆盖预设值（如命令行的 seed、T）
    """
    experiment, overrides = resolve_preset(name, quick, presets_dir)
    experiment.update({k: v for k, v in changes.items() if v is not None})
    return ExperimentConfig.from_dict(experiment, experiment_id=name, out_dir=out_dir, config_overrides=overrides)
