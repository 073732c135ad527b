import copy
import logging
import os
from typing import Any, Dict, List, Optional, Tuple

import yaml

from src.utils.errors import ConfigError

logger = logging.getLogger(__name__)

CONFIG_DIR = os.path.dirname(os.path.abspath(__file__))
DEFAULT_CONFIG_PATH = os.path.join(CONFIG_DIR, "config.yaml")
PRESETS_DIR = os.path.join(CONFIG_DIR, "presets")

# 内置默认值；配置文件缺失的段和键都从这里补齐
DEFAULT_CONFIG: Dict[str, Dict[str, Any]] = {
    "model": {
        "name": "poisson",
        "obs_noise": 1.0,
    },
    "prior": {
        "m_rho": 0.0,
        "s_rho": 0.15,
        "m_alpha": 0.0,
        "s_alpha": 10.0,
        "a": 0.01,
        "b": 0.01,
    },
    "inla": {
        "newton_tol": 1e-8,
        "newton_max_iter": 100,
        "max_halvings": 30,
        "grid_step": 1.0,
        "grid_drop": 2.5,
        "grid_max_steps": 6,
        "hessian_step": 1e-3,
        "hessian_fallback": True,
        "simplex_step": 0.5,
        "xatol": 1e-7,
        "fatol": 1e-9,
        "max_evaluations": 4000,
        "laplace_points": 31,
        "laplace_width": 5.0,
        "laplace_max_T": 200,
        "latent_strategy": "gaussian",
    },
    "proposal": {
        "kind": "inla",
        "variance_inflation": 1.0,
    },
    "filter": {
        "resampler": "systematic",
        "ess_threshold": None,
        "n_particles": 100,
        "replicates": 1,
        "reference_n": 100000,
    },
    "pmmh": {
        "iterations": 10000,
        "burn_in": 1000,
        "thin": 10,
        "step_sd": 0.3,
        "n_particles": 100,
        "init": "inla",
        "init_theta": None,
        "proposal": "bootstrap",
        "store_trajectories": False,
        "fixed": {},
    },
    "processing": {
        "max_workers": 4,
        "show_progress": True,
    },
    "output": {
        "out_dir": "data/output",
        "excel_report": True,
        "plots": True,
    },
}

# 值为自由映射的键，不检查其子键
FREE_FORM_KEYS = {("pmmh", "init_theta"), ("pmmh", "fixed")}

CHOICES = {
    ("model", "name"): ("poisson", "linear_gaussian", "gaussian"),
    ("inla", "latent_strategy"): ("gaussian", "laplace"),
    ("proposal", "kind"): ("bootstrap", "inla"),
    ("filter", "resampler"): ("systematic", "stratified", "multinomial"),
    ("pmmh", "init"): ("inla", "prior", "explicit"),
    ("pmmh", "proposal"): ("bootstrap", "inla"),
}


def key_lines(text: str) -> Dict[Tuple[str, ...], int]:
    """
    用 yaml.compose 记录每个键所在的行号（从1开始）

    参数:
        text: YAML 文本

    返回:
        {键路径元组: 行号}
    """
    lines: Dict[Tuple[str, ...], int] = {}

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for key_node, value_node in node.value:
                key_path = path + (str(key_node.value),)
                lines[key_path] = key_node.start_mark.line + 1
                walk(value_node, key_path)

    try:
        walk(yaml.compose(text), ())
    except yaml.YAMLError as e:
        raise ConfigError(f"YAML 解析失败: {e}") from e
    return lines


def check_unknown_keys(config: Dict, schema: Dict, lines: Dict[Tuple[str, ...], int], source: str,
                       prefix: Tuple[str, ...] = (), free_form=FREE_FORM_KEYS):
    """
    检查配置中是否有 schema 里没有的键

    异常:
        ConfigError: 报告第一个未知键及其行号
    """
    if not isinstance(config, dict):
        raise ConfigError(f"{source}: {'.'.join(prefix) or '顶层'} 应为映射，实际为 {type(config).__name__}")
    for key, value in config.items():
        path = prefix + (str(key),)
        if key not in schema:
            line = lines.get(path)
            where = f"第 {line} 行" if line else "未知行"
            raise ConfigError(f"{source} {where}: 未知配置键 '{'.'.join(path)}'")
        if path in free_form:
            continue
        if isinstance(schema[key], dict) and schema[key] and value is not None:
            check_unknown_keys(value, schema[key], lines, source, path, free_form)


def merge_config(base: Dict, overrides: Optional[Dict]) -> Dict:
    """递归合并，overrides 中的值优先"""
    merged = copy.deepcopy(base)
    for key, value in (overrides or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict) and merged.get(key):
            merged[key] = merge_config(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def validate_config(config: Dict) -> Dict:
    """检查取值范围与枚举值"""
    for (section, key), choices in CHOICES.items():
        value = config[section][key]
        if str(value).lower() not in choices:
            raise ConfigError(f"{section}.{key} 的取值 '{value}' 无效，可选 {choices}")
    threshold = config["filter"]["ess_threshold"]
    if threshold is not None and not 0 <= float(threshold) <= 1:
        raise ConfigError(f"filter.ess_threshold 必须为空或在 [0, 1] 内，当前 {threshold}")
    for section, key in (("filter", "n_particles"), ("pmmh", "n_particles")):
        if int(config[section][key]) < 2:
            raise ConfigError(f"{section}.{key} 必须 >= 2")
    reference_n = int(config["filter"]["reference_n"])
    if reference_n != 0 and reference_n < 2:
        raise ConfigError("filter.reference_n 必须为 0（不计算参考滤波）或 >= 2")
    if int(config["filter"]["replicates"]) < 1:
        raise ConfigError("filter.replicates 必须 >= 1")
    if int(config["processing"]["max_workers"]) < 1:
        raise ConfigError("processing.max_workers 必须 >= 1")
    if float(config["proposal"]["variance_inflation"]) < 1:
        raise ConfigError("proposal.variance_inflation 必须 >= 1")
    if float(config["model"]["obs_noise"]) <= 0:
        raise ConfigError("model.obs_noise 必须 > 0")
    return config


def load_config(config_path: Optional[str] = None, overrides: Optional[Dict] = None) -> Dict:
    """
    加载 YAML 配置，补齐缺省值并检查未知键

    参数:
        config_path: 配置文件路径，为 None 时使用 src/config/config.yaml
        overrides: 覆盖配置（来自预设或命令行），优先级最高

    返回:
        完整的配置字典

    异常:
        ConfigError: 文件不存在、解析失败、未知键或非法取值
    """
    if config_path is None:
        config_path = DEFAULT_CONFIG_PATH
        if not os.path.exists(config_path):
            logger.warning(f"未找到默认配置文件 {config_path}，使用内置默认值")
            return validate_config(merge_config(DEFAULT_CONFIG, overrides))

    if not os.path.exists(config_path):
        raise ConfigError(f"未找到配置文件: {config_path}")

    with open(config_path, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        config = yaml.safe_load(text) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"加载配置文件失败 {config_path}: {e}") from e
    check_unknown_keys(config, DEFAULT_CONFIG, key_lines(text), config_path)

    for section in DEFAULT_CONFIG:
        if section not in config or config[section] is None:
            logger.info(f"配置文件中缺少 {section} 段，使用默认配置")
            config[section] = {}
    config = merge_config(DEFAULT_CONFIG, config)
    if overrides:
        check_unknown_keys(overrides, DEFAULT_CONFIG, {}, "覆盖配置")
        config = merge_config(config, overrides)
    return validate_config(config)


def load_presets(presets_dir: Optional[str] = None) -> Dict[str, Dict]:
    """
    加载预设目录中的所有 YAML 预设

    参数:
        presets_dir: 预设目录路径，默认 src/config/presets

    返回:
        预设字典，键为预设名称（name 字段）；每个预设额外带有 _lines（键路径行号）和 _path
    """
    presets_dir = presets_dir or PRESETS_DIR
    presets: Dict[str, Dict] = {}
    if not os.path.exists(presets_dir):
        logger.warning(f"预设目录不存在: {presets_dir}")
        return presets

    for filename in sorted(os.listdir(presets_dir)):
        if not filename.endswith((".yaml", ".yml")):
            continue
        file_path = os.path.join(presets_dir, filename)
        with open(file_path, "r", encoding="utf-8") as f:
            text = f.read()
        try:
            preset = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            logger.error(f"加载预设出错 {filename}: {e}")
            continue
        if "name" not in preset:
            logger.warning(f"预设缺少 name 字段: {filename}")
            continue
        preset["_lines"] = key_lines(text)
        preset["_path"] = file_path
        presets[str(preset["name"])] = preset
    return presets


def available_presets(presets_dir: Optional[str] = None) -> List[str]:
    return sorted(load_presets(presets_dir))


def get_preset(name: str, presets_dir: Optional[str] = None) -> Dict:
    """按名称取预设"""
    presets = load_presets(presets_dir)
    if name not in presets:
        raise ConfigError(f"预设 {name} 不存在，可选 {sorted(presets)}")
    return presets[name]
