import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
import pandas as pd

from src.models.base_model import SsmModel
from src.models.hyperparams import HyperParams
from src.utils.errors import ConfigError
from src.utils.rng import SeedLike, make_rng

logger = logging.getLogger(__name__)


@dataclass
class Dataset:
    """
    观测序列 y_{1:T}，模拟数据同时带有真实潜变量

    参数:
        y: 观测向量
        x_true: 真实潜变量（仅模拟数据）
        seed: 模拟使用的种子
        model_name: 生成模型名称
        theta: 生成数据所用的超参数
        extra: 其他元数据（如线性高斯模型的观测噪声）
    """
    y: np.ndarray
    x_true: Optional[np.ndarray] = None
    seed: Optional[int] = None
    model_name: str = "poisson"
    theta: Optional[HyperParams] = None
    extra: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        if self.y.ndim != 1 or self.y.shape[0] < 1:
            raise ConfigError("数据集至少需要一个观测")
        if self.x_true is not None:
            self.x_true = np.asarray(self.x_true, dtype=float)
            if self.x_true.shape != self.y.shape:
                raise ConfigError("x_true 与 y 长度不一致")

    @property
    def T(self) -> int:
        return self.y.shape[0]

    def truncated(self, T: int) -> "Dataset":
        """返回前 T 个观测构成的数据集"""
        if not 1 <= T <= self.T:
            raise ConfigError(f"截断长度 {T} 超出范围 [1, {self.T}]")
        x_true = None if self.x_true is None else self.x_true[:T]
        return Dataset(self.y[:T], x_true, self.seed, self.model_name, self.theta, dict(self.extra))

    def to_frame(self) -> pd.DataFrame:
        """CSV表：t, y[, x_true]，t 从1开始"""
        frame = pd.DataFrame({"t": np.arange(1, self.T + 1), "y": self.y})
        if self.model_name == "poisson":
            frame["y"] = frame["y"].astype(int)
        if self.x_true is not None:
            frame["x_true"] = self.x_true
        return frame

    def metadata(self) -> Dict:
        return {
            "model": self.model_name,
            "T": self.T,
            "seed": self.seed,
            "theta": None if self.theta is None else self.theta.as_dict(),
            **self.extra,
        }

    def save(self, csv_path: str) -> str:
        """
        保存数据集为CSV，并在旁边写入元数据文件 <name>.meta.json

        参数:
            csv_path: CSV输出路径

        返回:
            元数据文件路径
        """
        output_dir = os.path.dirname(csv_path)
        if output_dir and not os.path.exists(output_dir):
            os.makedirs(output_dir)
        self.to_frame().to_csv(csv_path, index=False)
        meta_path = metadata_path(csv_path)
        with open(meta_path, "w", encoding="utf-8") as f:
            json.dump(self.metadata(), f, indent=2, sort_keys=True)
        logger.info(f"数据集已保存到: {csv_path} (T={self.T})")
        return meta_path

    @classmethod
    def load(cls, csv_path: str) -> "Dataset":
        """
        读取CSV数据集及其元数据（元数据文件缺失时只读取观测）

        参数:
            csv_path: CSV路径

        返回:
            Dataset
        """
        if not os.path.exists(csv_path):
            raise FileNotFoundError(f"数据集文件不存在: {csv_path}")
        frame = pd.read_csv(csv_path)
        if "y" not in frame.columns:
            raise ConfigError(f"数据集缺少 y 列: {csv_path}")
        if "t" in frame.columns:
            frame = frame.sort_values("t")
        meta = {}
        meta_path = metadata_path(csv_path)
        if os.path.exists(meta_path):
            with open(meta_path, "r", encoding="utf-8") as f:
                meta = json.load(f)
        else:
            logger.warning(f"未找到元数据文件 {meta_path}，模型名默认为 poisson")
        theta = HyperParams(**meta["theta"]) if meta.get("theta") else None
        extra = {k: v for k, v in meta.items() if k not in ("model", "T", "seed", "theta")}
        x_true = frame["x_true"].to_numpy() if "x_true" in frame.columns else None
        return cls(frame["y"].to_numpy(dtype=float), x_true, meta.get("seed"),
                   meta.get("model", "poisson"), theta, extra)


def metadata_path(csv_path: str) -> str:
    root, _ = os.path.splitext(csv_path)
    return root + ".meta.json"


def simulate(model: SsmModel, T: int, theta: HyperParams, seed: SeedLike) -> Dataset:
    """
    从模型模拟数据：x_1 ~ mu，x_t ~ f(.|x_{t-1})，y_t ~ g(.|x_t)

    参数:
        model: 状态空间模型
        T: 序列长度
        theta: 超参数
        seed: 随机种子（给定种子结果可复现）

    返回:
        带真实潜变量的 Dataset
    """
    if int(T) < 1:
        raise ConfigError(f"模拟长度 T 必须 >= 1，当前 T={T}")
    rng = make_rng(seed)
    x = np.empty(int(T))
    x[0] = model.sample_initial(theta, rng)
    for t in range(1, int(T)):
        x[t] = model.sample_transition(x[t - 1], theta, rng)
    y = model.sample_observation(x, theta, rng)

    extra = {}
    if hasattr(model, "obs_noise"):
        extra["obs_noise"] = model.obs_noise
    int_seed = int(seed) if isinstance(seed, (int, np.integer)) else None
    return Dataset(y=y, x_true=x, seed=int_seed, model_name=model.name, theta=theta, extra=extra)
