import argparse
import logging
import os
import sys
from typing import Dict, List, Optional

from src.config.config_manager import load_config, merge_config
from src.experiments.commands import (
    cmd_full_study,
    cmd_inla_fit,
    cmd_pf_compare,
    cmd_pf_run,
    cmd_pmmh,
    cmd_simulate,
)
from src.experiments.experiment_config import experiment_from_preset, resolve_preset
from src.models.hyperparams import HyperParams
from src.utils.errors import ConfigError, InvalidHyperParams, NumericalError

# 配置日志
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_ACCEPTANCE = 3


def parse_theta(text: str) -> HyperParams:
    """解析 "rho,sigma,alpha" 形式的超参数"""
    try:
        rho, sigma, alpha = (float(v) for v in text.split(","))
        return HyperParams(rho, sigma, alpha)
    except (ValueError, InvalidHyperParams) as e:
        raise argparse.ArgumentTypeError(f"超参数格式应为 rho,sigma,alpha（|rho|<1, sigma>0）: {text}") from e


def _common_flags() -> argparse.ArgumentParser:
    """全局参数，既可以写在子命令前，也可以写在子命令后"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', default=argparse.SUPPRESS, help='配置文件路径，默认使用 src/config/config.yaml')
    common.add_argument('--seed', type=int, default=argparse.SUPPRESS, help='主随机种子')
    common.add_argument('--out-dir', default=argparse.SUPPRESS, help='输出目录')
    common.add_argument('--threads', type=int, default=argparse.SUPPRESS, help='线程数')
    common.add_argument('--quick', action='store_true', default=argparse.SUPPRESS, help='使用预设的 quick 设置')
    common.add_argument('--preset', default=argparse.SUPPRESS, help='实验预设名称 (fig1, fig4)')
    common.add_argument('--reference-n', type=int, default=argparse.SUPPRESS, help='参考滤波的粒子数')
    common.add_argument('--log-level', default=argparse.SUPPRESS,
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], help='日志级别')
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(description='INLA 提议粒子滤波与 PMMH 实验工具', parents=[common])
    subparsers = parser.add_subparsers(dest='command', required=True)

    p = subparsers.add_parser('simulate', parents=[common], help='按预设模拟数据集')
    p.add_argument('--model', choices=['poisson', 'linear_gaussian'], help='覆盖预设的模型')
    p.add_argument('--T', type=int, help='序列长度（覆盖预设）')
    p.add_argument('--theta', type=parse_theta, help='真实超参数 rho,sigma,alpha')
    p.add_argument('--obs-noise', type=float, help='线性高斯模型的观测噪声')
    p.add_argument('--output', help='数据集CSV路径，默认 <out-dir>/dataset.csv')

    p = subparsers.add_parser('inla-fit', parents=[common], help='INLA 拟合')
    p.add_argument('--data', required=True, help='数据集CSV')
    p.add_argument('--latent-strategy', choices=['gaussian', 'laplace'], help='潜变量边际方式')

    p = subparsers.add_parser('pf-run', parents=[common], help='重复运行一种粒子滤波')
    p.add_argument('--data', required=True, help='数据集CSV')
    p.add_argument('--theta', type=parse_theta, help='超参数 rho,sigma,alpha，默认取数据集的真实值')
    p.add_argument('--N', type=int, help='粒子数')
    p.add_argument('--T', type=int, help='只使用前 T 个观测')
    p.add_argument('--proposal', choices=['bootstrap', 'inla'], help='提议类型')
    p.add_argument('--resampler', choices=['systematic', 'stratified', 'multinomial'], help='重采样方案')
    p.add_argument('--replicates', type=int, help='重复次数')

    p = subparsers.add_parser('pf-compare', parents=[common], help='比较 bootstrap 与 INLA 提议粒子滤波')
    p.add_argument('--data', required=True, help='数据集CSV')

    p = subparsers.add_parser('pmmh', parents=[common], help='运行 PMMH')
    p.add_argument('--data', required=True, help='数据集CSV')
    p.add_argument('--init', choices=['inla', 'prior', 'explicit'], help='初始化方式')
    p.add_argument('--init-theta', type=parse_theta, help='显式初始值 rho,sigma,alpha')
    p.add_argument('--iterations', type=int, help='迭代次数 K')
    p.add_argument('--burn-in', type=int, help='预烧期')
    p.add_argument('--thin', type=int, help='稀疏间隔')
    p.add_argument('--step-sd', type=float, help='随机游走步长')
    p.add_argument('--n-particles', type=int, help='每次似然估计的粒子数')
    p.add_argument('--proposal', choices=['bootstrap', 'inla'], help='似然估计使用的提议')

    subparsers.add_parser('full-study', parents=[common], help='一次性运行全部实验并评估验收标准')
    return parser


def _flag(args: argparse.Namespace, name: str, default=None):
    return getattr(args, name, default)


def _overrides(args: argparse.Namespace) -> Dict:
    """命令行参数转为配置覆盖，只包含用户给出的值"""
    overrides: Dict = {}

    def put(section: str, key: str, value):
        if value is not None:
            overrides.setdefault(section, {})[key] = value

    put("processing", "max_workers", _flag(args, "threads"))
    put("output", "out_dir", _flag(args, "out_dir"))
    put("filter", "reference_n", _flag(args, "reference_n"))
    put("filter", "resampler", _flag(args, "resampler"))
    put("filter", "replicates", _flag(args, "replicates"))
    put("inla", "latent_strategy", _flag(args, "latent_strategy"))
    if args.command == "pf-run":
        put("filter", "n_particles", _flag(args, "N"))
        put("proposal", "kind", _flag(args, "proposal"))
    if args.command == "pmmh":
        put("pmmh", "proposal", _flag(args, "proposal"))
        put("pmmh", "iterations", _flag(args, "iterations"))
        put("pmmh", "burn_in", _flag(args, "burn_in"))
        put("pmmh", "thin", _flag(args, "thin"))
        put("pmmh", "step_sd", _flag(args, "step_sd"))
        put("pmmh", "n_particles", _flag(args, "n_particles"))
        init_theta = _flag(args, "init_theta")
        if init_theta is not None:
            put("pmmh", "init_theta", init_theta.as_dict())
            put("pmmh", "init", "explicit")
    return overrides


def run(args: argparse.Namespace) -> int:
    """执行子命令，返回退出码"""
    quick = bool(_flag(args, "quick", False))
    seed = _flag(args, "seed")
    preset = _flag(args, "preset") or ("fig1" if args.command in ("simulate", "pf-compare") else None)
    # 优先级：命令行 > 预设 > 配置文件 > 内置默认值
    preset_overrides = resolve_preset(preset, quick)[1] if preset and args.command != "full-study" else {}
    config = load_config(_flag(args, "config"), merge_config(preset_overrides, _overrides(args)))
    out_dir = config["output"]["out_dir"]

    if args.command == "simulate":
        theta = _flag(args, "theta")
        experiment = experiment_from_preset(preset, quick, out_dir, seed=seed, model=args.model,
                                            T=args.T, obs_noise=args.obs_noise,
                                            theta=None if theta is None else theta.as_dict())
        cmd_simulate(config, experiment, args.output or os.path.join(out_dir, "dataset.csv"))
    elif args.command == "inla-fit":
        cmd_inla_fit(config, args.data, out_dir, args.latent_strategy)
    elif args.command == "pf-run":
        cmd_pf_run(config, args.data, out_dir, seed if seed is not None else 1, theta=args.theta, T=args.T)
    elif args.command == "pf-compare":
        experiment = experiment_from_preset(preset, quick, out_dir, seed=seed,
                                            reference_n=_flag(args, "reference_n"))
        cmd_pf_compare(config, experiment, args.data, out_dir)
    elif args.command == "pmmh":
        cmd_pmmh(config, args.data, out_dir, seed if seed is not None else 4, init=args.init)
    elif args.command == "full-study":
        report = cmd_full_study(config, out_dir, seed=seed, quick=quick, reference_n=_flag(args, "reference_n"))
        if not report.passed:
            logger.error("存在未通过的验收标准或失败的阶段")
            return EXIT_ACCEPTANCE
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """命令行入口：0 成功，1 用法错误，2 数值失败，3 验收未通过"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    logging.getLogger().setLevel(_flag(args, "log_level", "INFO"))

    try:
        return run(args)
    except NumericalError as e:
        logger.error(f"数值计算失败: {e}")
        return EXIT_NUMERICAL
    except (ConfigError, ValueError, IndexError, OSError) as e:
        logger.error(f"参数或输入错误: {e}")
        return EXIT_USAGE


if __name__ == '__main__':
    sys.exit(main())
