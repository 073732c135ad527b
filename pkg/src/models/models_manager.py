from typing import Dict, List
import logging

from src.models.base_model import SsmModel
from src.models.linear_gaussian_ssm import LinearGaussianSsm
from src.models.poisson_ssm import PoissonSsm

logger = logging.getLogger(__name__)

MODEL_NAMES: List[str] = ["poisson", "linear_gaussian"]


def create_model(model_type: str, **kwargs) -> SsmModel:
    """
    创建状态空间模型的工厂函数

    参数:
        model_type: 模型类型 ("poisson" 或 "linear_gaussian")
        **kwargs: 传递给模型构造函数的额外参数（如 obs_noise）

    返回:
        模型实例
    """
    model_type = model_type.lower()
    if model_type == "poisson":
        if kwargs.get("obs_noise") is not None:
            logger.debug("Poisson模型忽略 obs_noise 参数")
        return PoissonSsm()
    elif model_type in ("linear_gaussian", "gaussian"):
        obs_noise = kwargs.get("obs_noise")
        return LinearGaussianSsm(1.0 if obs_noise is None else float(obs_noise))
    else:
        raise ValueError(f"不支持的模型类型: {model_type}")


def model_from_dataset(dataset, model_config: Dict = None) -> SsmModel:
    """
    根据数据集元数据重建生成模型，元数据缺失的字段从配置中补齐
    """
    model_config = model_config or {}
    obs_noise = dataset.extra.get("obs_noise", model_config.get("obs_noise"))
    return create_model(dataset.model_name or model_config.get("name", "poisson"), obs_noise=obs_noise)
