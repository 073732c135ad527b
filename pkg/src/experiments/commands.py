"""
实验命令：simulate / inla-fit / pf-run / pf-compare / pmmh / full-study

每个命令读取数据集和配置，调用库函数，把结果写成带表头的 CSV，并在
配置允许时由这些表生成 SVG 图、.dat 文件和 Excel 汇总。
"""
import contextlib
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.config.config_manager import merge_config, validate_config
from src.experiments.acceptance import acceptance_frame, evaluate_study
from src.experiments.experiment_config import ExperimentConfig, experiment_from_preset
from src.inla.marginals import hyper_marginals, latent_marginal_laplace
from src.inla.theta_grid import InlaConfig, InlaFit, explore_theta, fit_inla
from src.mcmc.chain_summary import chain_summary
from src.mcmc.pmmh import PmmhChain, PmmhConfig, pmmh_run
from src.models.dataset import Dataset, simulate
from src.models.hyperparams import PARAM_NAMES, HyperParams, PriorSpec
from src.models.models_manager import create_model, model_from_dataset
from src.smc.proposals import create_proposal
from src.smc.replicates import FilterSpec, ReplicateSummary, replicate_filters
from src.utils.errors import NumericalError
from src.utils.excel_formatter import ExcelFormatter
from src.utils.svg_plots import boxplot_svg, histogram_svg, line_plot_svg, trace_plot_svg, write_dat

# 配置日志
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

METHODS = ("bootstrap", "inla")

# pf-compare 输出的表名与文件名
PF_COMPARE_TABLES = {
    "loglik": "loglik_replicates.csv",
    "variance": "loglik_variance.csv",
    "ess": "ess.csv",
    "filtering": "filtering_error.csv",
}


def _prior(config: Dict) -> PriorSpec:
    return PriorSpec.from_config(config["prior"])


def _inla_config(config: Dict) -> InlaConfig:
    return InlaConfig.from_config(config["inla"], int(config["processing"]["max_workers"]))


def _write_csv(frame: pd.DataFrame, path: str) -> str:
    output_dir = os.path.dirname(path)
    if output_dir and not os.path.exists(output_dir):
        os.makedirs(output_dir)
    frame.to_csv(path, index=False)
    logger.info(f"结果表已保存到: {path}")
    return path


@contextlib.contextmanager
def stage_context(stage: str, **context):
    """数值异常重新抛出时附带阶段信息，如 stage=pf-compare T=100 N=1000"""
    try:
        yield
    except NumericalError as e:
        details = " ".join([f"stage={stage}"] + [f"{k}={v}" for k, v in context.items()])
        raise type(e)(f"{details}: {e}") from e


def dataset_paths(out_path: str, T_values: Sequence[int]) -> Dict[int, str]:
    """
    每个 T 对应的数据集文件：第一个 T 使用 out_path，其余为 <name>_T<T>.csv
    """
    root, ext = os.path.splitext(out_path)
    return {T: out_path if k == 0 else f"{root}_T{T}{ext or '.csv'}" for k, T in enumerate(T_values)}


def dataset_for(dataset_path: str, T: int) -> Dataset:
    """取长度为 T 的数据集：优先使用同名的 _T<T> 文件，否则截取主数据集的前 T 个观测"""
    root, ext = os.path.splitext(dataset_path)
    sibling = f"{root}_T{T}{ext or '.csv'}"
    if os.path.exists(sibling):
        return Dataset.load(sibling)
    dataset = Dataset.load(dataset_path)
    return dataset if dataset.T == T else dataset.truncated(T)


def cmd_simulate(config: Dict, experiment: ExperimentConfig, out_path: str) -> Dataset:
    """
    按实验设置为每个 T 模拟一个数据集，写出 CSV 和元数据

    第 k 个 T 使用种子 seed + k，文件名见 dataset_paths。

    参数:
        config: 完整配置
        experiment: 实验设置
        out_path: 第一个 T 的数据集 CSV 路径

    返回:
        第一个 T 的 Dataset
    """
    obs_noise = experiment.obs_noise if experiment.obs_noise is not None else config["model"]["obs_noise"]
    model = create_model(experiment.model_name, obs_noise=obs_noise)
    datasets = []
    for k, (T, path) in enumerate(dataset_paths(out_path, experiment.T).items()):
        dataset = simulate(model, T, experiment.theta_true, experiment.seed + k)
        dataset.save(path)
        datasets.append(dataset)
        y = dataset.y
        print(f"模型: {model!r}  T={dataset.T}  seed={dataset.seed}  文件: {path}")
        print(f"  观测统计: 均值={np.mean(y):.4f} 方差={np.var(y):.4f} 最小={np.min(y):g} 最大={np.max(y):g}")
    print(f"真实超参数: {experiment.theta_true}")
    return datasets[0]


def _inla_report(fit: InlaFit, dataset: Dataset, strategy: str) -> str:
    grid = fit.grid
    lines = [
        f"数据集: T={dataset.T} 模型={dataset.model_name}",
        f"后验众数 theta*: {grid.mode}",
        f"内部尺度众数: {np.array2string(grid.mode_internal, precision=6)}",
        f"unnormalized log π̃(θ|y) at mode: {grid.mode_log_post:.6f}",
        f"积分点数 S: {len(grid)}",
        f"优化收敛: {grid.optimizer_converged}",
        f"Hessian 退回单位阵: {grid.hessian_fallback}",
        f"对数后验计算次数: {grid.n_evaluations}",
        f"潜变量边际方式: {strategy}",
    ]
    return "\n".join(lines) + "\n"


def cmd_inla_fit(config: Dict, dataset_path: str, out_dir: str, latent_strategy: Optional[str] = None) -> InlaFit:
    """
    对数据集做 INLA 拟合

    输出 theta_<name>_marginal.csv (value, density)、latent_summary.csv (t, mean, sd)、
    grid.csv 和 inla_report.txt。

    参数:
        config: 完整配置
        dataset_path: 数据集 CSV
        out_dir: 输出目录
        latent_strategy: "gaussian" 或 "laplace"，缺省取 inla.latent_strategy

    返回:
        InlaFit
    """
    dataset = Dataset.load(dataset_path)
    model = model_from_dataset(dataset, config["model"])
    inla_config = _inla_config(config)
    strategy = (latent_strategy or config["inla"]["latent_strategy"]).lower()

    logger.info(f"开始 INLA 拟合: {dataset_path} (T={dataset.T})")
    with stage_context("inla-fit", T=dataset.T):
        fit = fit_inla(model, dataset, _prior(config), inla_config)
        marginals = hyper_marginals(fit.grid)
        if strategy == "laplace":
            rows = []
            for i in range(dataset.T):
                marginal = latent_marginal_laplace(model, dataset, fit.grid, i, fit.chains, inla_config)
                rows.append({"t": i + 1, "mean": marginal.mean(), "sd": marginal.sd()})
            latent = pd.DataFrame(rows)
        else:
            latent = fit.latent_summary()

    for name, marginal in marginals.items():
        _write_csv(marginal.to_frame(), os.path.join(out_dir, f"theta_{name}_marginal.csv"))
    _write_csv(latent, os.path.join(out_dir, "latent_summary.csv"))
    _write_csv(fit.grid.to_frame(), os.path.join(out_dir, "grid.csv"))
    with open(os.path.join(out_dir, "inla_report.txt"), "w", encoding="utf-8") as f:
        f.write(_inla_report(fit, dataset, strategy))

    if config["output"]["plots"]:
        for name, marginal in marginals.items():
            frame = marginal.to_frame()
            line_plot_svg(frame["value"], {f"INLA {name}": frame["density"]},
                          os.path.join(out_dir, f"theta_{name}_marginal.svg"),
                          title=f"{name} 边际后验", xlabel=name, ylabel="density")
        series = {"posterior mean": latent["mean"]}
        if dataset.x_true is not None:
            series["x_true"] = dataset.x_true
        line_plot_svg(latent["t"], series, os.path.join(out_dir, "latent_summary.svg"),
                      title="潜变量后验均值", xlabel="t", ylabel="x")
    logger.info(f"INLA 拟合完成: theta*={fit.grid.mode}, S={len(fit.grid)}")
    return fit


def _reference_filter(model, dataset: Dataset, theta: HyperParams, config: Dict, reference_n: int,
                      seed) -> np.ndarray:
    """大粒子数 bootstrap 滤波的滤波均值，作为误差曲线的参考值"""
    logger.info(f"运行参考滤波: N={reference_n}, T={dataset.T}")
    spec = FilterSpec(model, dataset, theta, create_proposal("bootstrap"), int(reference_n),
                      config["filter"]["resampler"], config["filter"]["ess_threshold"], "reference")
    return spec.run(seed).filt_mean


def _filter_spec(model, dataset: Dataset, theta: HyperParams, method: str, N: int, config: Dict) -> FilterSpec:
    proposal = create_proposal(method, model, dataset, theta, float(config["proposal"]["variance_inflation"]),
                               _inla_config(config).newton)
    return FilterSpec(model, dataset, theta, proposal, int(N), config["filter"]["resampler"],
                      config["filter"]["ess_threshold"], method)


def cmd_pf_run(config: Dict, dataset_path: str, out_dir: str, seed: int, theta: Optional[HyperParams] = None,
               N: Optional[int] = None, T: Optional[int] = None, proposal: Optional[str] = None,
               replicates: Optional[int] = None, reference_n: Optional[int] = None) -> ReplicateSummary:
    """
    在固定超参数下重复运行一种粒子滤波

    输出 loglik.csv (replicate, loglik)、ess.csv (t, method, mean_ess)、
    filtering.csv (t, mean, reference, abs_error)。reference_n 为 0 时不计算参考值。

    参数:
        theta: 超参数，缺省取数据集元数据中的真实值
        N / T / proposal / replicates / reference_n: 缺省取配置 filter 和 proposal 段
    """
    dataset = Dataset.load(dataset_path)
    if T is not None:
        dataset = dataset.truncated(int(T))
    model = model_from_dataset(dataset, config["model"])
    theta = theta or dataset.theta
    if theta is None:
        raise ValueError("数据集没有记录真实超参数，请用 --theta 指定")
    method = (proposal or config["proposal"]["kind"]).lower()
    N = int(N or config["filter"]["n_particles"])
    R = int(replicates or config["filter"]["replicates"])
    reference_n = int(config["filter"]["reference_n"] if reference_n is None else reference_n)
    max_workers = int(config["processing"]["max_workers"])
    base = np.random.SeedSequence(int(seed))
    reference_seed, run_seed = base.spawn(2)

    with stage_context("pf-run", T=dataset.T, N=N, method=method):
        reference = (_reference_filter(model, dataset, theta, config, reference_n, reference_seed)
                     if reference_n > 0 else None)
        spec = _filter_spec(model, dataset, theta, method, N, config)
        summary = replicate_filters(spec, R, run_seed, max_workers, reference,
                                    show_progress=config["processing"]["show_progress"])

    _write_csv(summary.loglik_frame(), os.path.join(out_dir, "loglik.csv"))
    ess = summary.ess_frame()
    ess.insert(1, "method", method)
    _write_csv(ess, os.path.join(out_dir, "ess.csv"))
    filtering = pd.DataFrame({
        "t": np.arange(1, dataset.T + 1),
        "mean": np.mean([o.filt_mean for o in summary.outputs], axis=0),
        "reference": np.nan if reference is None else reference,
        "abs_error": np.nan if summary.abs_error is None else summary.abs_error,
    })
    _write_csv(filtering, os.path.join(out_dir, "filtering.csv"))
    print(f"{method} PF: N={N} T={dataset.T} R={R} 对数似然均值={summary.loglik_mean:.4f} 方差={summary.loglik_var:.6f}")
    return summary


def _compare_cell(summary: ReplicateSummary, method: str, N: int, T: int,
                  reference: np.ndarray) -> Dict[str, pd.DataFrame]:
    """一个 (method, N, T) 单元的长格式结果行"""
    keys = {"method": method, "N": N, "T": T}
    loglik = summary.loglik_frame().assign(**keys)
    ess = summary.ess_frame().assign(**keys)
    abs_error = summary.abs_error
    filtering = pd.DataFrame({
        "t": np.arange(1, T + 1),
        "mean": np.mean([o.filt_mean for o in summary.outputs], axis=0),
        "reference": reference,
        "abs_error": abs_error,
        "log_abs_error": np.log(np.maximum(abs_error, np.finfo(float).tiny)),
    }).assign(**keys)
    variance = pd.DataFrame([{**keys, "R": summary.R, "mean": summary.loglik_mean, "variance": summary.loglik_var}])
    return {"loglik": loglik, "variance": variance, "ess": ess, "filtering": filtering}


def _ordered(frame: pd.DataFrame, leading: Sequence[str]) -> pd.DataFrame:
    columns = list(leading) + [c for c in frame.columns if c not in leading]
    return frame[columns]


def cmd_pf_compare(config: Dict, experiment: ExperimentConfig, dataset_path: str, out_dir: str,
                   methods: Sequence[str] = METHODS) -> Dict[str, pd.DataFrame]:
    """
    在实验设置的每个 (T, N) 上比较 bootstrap 与 INLA 提议的粒子滤波

    两种滤波都在真实超参数处运行，INLA 提议由 pi_G(x | y, theta_true) 构造；
    参考滤波均值来自 reference_n 个粒子的 bootstrap 滤波。

    参数:
        config: 完整配置
        experiment: 实验设置（T 列表、N 列表、重复次数、种子）
        dataset_path: 数据集 CSV，每个 T 的数据见 dataset_for
        out_dir: 输出目录
        methods: 参与比较的提议类型

    返回:
        {表名: DataFrame}，表名见 PF_COMPARE_TABLES
    """
    model = model_from_dataset(Dataset.load(dataset_path), config["model"])
    max_workers = int(config["processing"]["max_workers"])
    show_progress = bool(config["processing"]["show_progress"])
    parts: Dict[str, List[pd.DataFrame]] = {name: [] for name in PF_COMPARE_TABLES}

    for T in experiment.T:
        dataset = dataset_for(dataset_path, T)
        theta = dataset.theta or experiment.theta_true
        with stage_context("pf-compare", T=T, N=experiment.reference_n, method="reference"):
            reference = _reference_filter(model, dataset, theta, config, experiment.reference_n,
                                          np.random.SeedSequence([experiment.seed, T, 0]))
        for m, method in enumerate(methods):
            for N in experiment.N:
                logger.info(f"pf-compare: method={method} N={N} T={T} R={experiment.replicates}")
                with stage_context("pf-compare", T=T, N=N, method=method):
                    spec = _filter_spec(model, dataset, theta, method, N, config)
                    summary = replicate_filters(spec, experiment.replicates,
                                                np.random.SeedSequence([experiment.seed, T, N, m + 1]),
                                                max_workers, reference, show_progress)
                for name, frame in _compare_cell(summary, method, N, T, reference).items():
                    parts[name].append(frame)

    tables = {
        "loglik": _ordered(pd.concat(parts["loglik"], ignore_index=True), ["method", "N", "T", "replicate"]),
        "variance": _ordered(pd.concat(parts["variance"], ignore_index=True), ["method", "N", "T"]),
        "ess": _ordered(pd.concat(parts["ess"], ignore_index=True), ["method", "N", "T", "t"]),
        "filtering": _ordered(pd.concat(parts["filtering"], ignore_index=True), ["method", "N", "T", "t"]),
    }
    for name, filename in PF_COMPARE_TABLES.items():
        _write_csv(tables[name], os.path.join(out_dir, filename))
    if config["output"]["plots"]:
        render_pf_compare(tables, out_dir)
    if config["output"]["excel_report"]:
        ExcelFormatter().format_excel(tables, os.path.join(out_dir, "study_results.xlsx"))
    print(tables["variance"].to_string(index=False))
    return tables


def load_pf_compare(out_dir: str) -> Dict[str, pd.DataFrame]:
    """读回 pf-compare 的结果表"""
    return {name: pd.read_csv(os.path.join(out_dir, filename)) for name, filename in PF_COMPARE_TABLES.items()}


def render_pf_compare(tables: Dict[str, pd.DataFrame], out_dir: str) -> List[str]:
    """
    仅由结果表绘制 pf-compare 的图并写出 .dat 文件

    返回:
        生成的文件路径
    """
    paths = []
    for name, filename in PF_COMPARE_TABLES.items():
        paths.append(write_dat(tables[name], os.path.join(out_dir, filename.replace(".csv", ".dat"))))

    loglik, ess, filtering = tables["loglik"], tables["ess"], tables["filtering"]
    for T, by_T in loglik.groupby("T"):
        groups = {f"{method} N={N}": cell["loglik"].to_numpy()
                  for (method, N), cell in by_T.groupby(["method", "N"], sort=False)}
        paths.append(boxplot_svg(groups, os.path.join(out_dir, f"loglik_box_T{T}.svg"),
                                 title=f"对数似然估计 (T={T})", ylabel="log-likelihood"))
    for (T, N), cell in ess.groupby(["T", "N"]):
        t = np.sort(cell["t"].unique())
        series = {method: part.sort_values("t")["mean_ess"].to_numpy()
                  for method, part in cell.groupby("method", sort=False)}
        paths.append(line_plot_svg(t, series, os.path.join(out_dir, f"ess_T{T}_N{N}.svg"),
                                   title=f"平均 ESS (T={T}, N={N})", xlabel="t", ylabel="mean ESS"))
    for T, by_T in filtering.groupby("T"):
        t = np.sort(by_T["t"].unique())
        series = {f"{method} N={N}": part.sort_values("t")["abs_error"].to_numpy()
                  for (method, N), part in by_T.groupby(["method", "N"], sort=False)}
        paths.append(line_plot_svg(t, series, os.path.join(out_dir, f"filtering_error_T{T}.svg"),
                                   title=f"滤波均值绝对误差 (T={T})", xlabel="t", ylabel="abs error", log_y=True))
    return paths


def cmd_pmmh(config: Dict, dataset_path: str, out_dir: str, seed: int, init: Optional[str] = None) -> PmmhChain:
    """
    运行 PMMH 并写出链、汇总、直方图和 INLA 超参数边际

    输出 chain.csv、summary.csv、hist_<name>.csv、inla_marginal_<name>.csv、pmmh_info.json，
    配置允许时绘制每个参数的直方图叠加 INLA 边际以及轨迹图。

    参数:
        config: 完整配置
        dataset_path: 数据集 CSV
        out_dir: 输出目录
        seed: 主种子
        init: 初始化方式，缺省取 pmmh.init

    返回:
        PmmhChain
    """
    dataset = Dataset.load(dataset_path)
    model = model_from_dataset(dataset, config["model"])
    prior = _prior(config)
    inla_config = _inla_config(config)
    pmmh_settings = dict(config["pmmh"])
    if init:
        pmmh_settings["init"] = init
    pmmh_config = PmmhConfig.from_config(pmmh_settings, config["filter"])

    with stage_context("pmmh", T=dataset.T, N=pmmh_config.n_particles, method=pmmh_config.proposal):
        grid = explore_theta(model, dataset, prior, inla_config)
        marginals = hyper_marginals(grid)
        chain = pmmh_run(model, dataset, prior, pmmh_config, seed, grid=grid, inla_config=inla_config,
                         inflation=float(config["proposal"]["variance_inflation"]),
                         show_progress=config["processing"]["show_progress"])
    summary, histograms = chain_summary(chain)

    _write_csv(chain.trace, os.path.join(out_dir, "chain.csv"))
    _write_csv(summary, os.path.join(out_dir, "summary.csv"))
    for name in PARAM_NAMES:
        _write_csv(histograms[name], os.path.join(out_dir, f"hist_{name}.csv"))
        _write_csv(marginals[name].to_frame(), os.path.join(out_dir, f"inla_marginal_{name}.csv"))
    if chain.trajectories is not None:
        trajectories = pd.DataFrame({"t": np.arange(1, dataset.T + 1),
                                     "mean": chain.trajectories.mean(axis=0),
                                     "sd": chain.trajectories.std(axis=0)})
        _write_csv(trajectories, os.path.join(out_dir, "trajectory_summary.csv"))
    info = {
        "init": pmmh_config.init,
        "init_used": chain.init_used.as_dict(),
        "accept_rate": chain.accept_rate,
        "iterations": pmmh_config.iterations,
        "n_samples": len(chain.samples),
        "n_evaluations": chain.n_evaluations,
        "n_invalid": chain.n_invalid,
        "inla_mode": grid.mode.as_dict(),
        "theta_true": None if dataset.theta is None else dataset.theta.as_dict(),
    }
    with open(os.path.join(out_dir, "pmmh_info.json"), "w", encoding="utf-8") as f:
        json.dump(info, f, indent=2, sort_keys=True)

    if config["output"]["plots"]:
        for name in PARAM_NAMES:
            true_value = None if dataset.theta is None else dataset.theta.as_dict()[name]
            histogram_svg(histograms[name], os.path.join(out_dir, f"hist_{name}.svg"), title=f"{name} 后验",
                          xlabel=name, overlay=marginals[name].to_frame(), true_value=true_value)
        trace_plot_svg(chain.trace, list(PARAM_NAMES) + ["loglik"], os.path.join(out_dir, "trace.svg"),
                       title="PMMH 轨迹")
    print(summary.to_string(index=False))
    print(f"接受率: {chain.accept_rate:.3f}  初始值: {chain.init_used}")
    return chain


@dataclass
class StageResult:
    name: str
    status: str
    detail: str = ""


@dataclass
class StudyReport:
    """full-study 的结果：各阶段状态与验收标准"""
    out_dir: str
    stages: List[StageResult] = field(default_factory=list)
    criteria: list = field(default_factory=list)

    @property
    def stages_ok(self) -> bool:
        return all(s.status != "failed" for s in self.stages)

    @property
    def passed(self) -> bool:
        return self.stages_ok and bool(self.criteria) and all(c.passed for c in self.criteria)

    def stage_frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(s) for s in self.stages], columns=["name", "status", "detail"])

    def to_text(self) -> str:
        lines = ["阶段:"]
        for s in self.stages:
            lines.append(f"  [{s.status}] {s.name} {s.detail}".rstrip())
        lines.append("验收标准:")
        for c in self.criteria:
            lines.append(f"  [{'PASS' if c.passed else 'FAIL'}] {c.number}. {c.name}: {c.detail}")
        lines.append(f"总体: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def _outputs_exist(paths: Sequence[str]) -> bool:
    return all(os.path.exists(p) for p in paths)


def _run_stage(report: StudyReport, name: str, outputs: Sequence[str], fn, *requires: str) -> bool:
    """
    运行一个阶段；输出齐全时跳过，依赖的阶段失败时不运行，数值失败记录后继续

    返回:
        该阶段的输出是否可用
    """
    failed = {s.name for s in report.stages if s.status in ("failed", "blocked")}
    blocked = [r for r in requires if r in failed]
    if blocked:
        report.stages.append(StageResult(name, "blocked", f"依赖阶段失败: {', '.join(blocked)}"))
        return False
    if _outputs_exist(outputs):
        logger.info(f"阶段 {name} 的输出已存在，跳过")
        report.stages.append(StageResult(name, "skipped", "输出已存在"))
        return True
    logger.info(f"开始阶段 {name}")
    try:
        fn()
    except NumericalError as e:
        logger.error(f"阶段 {name} 失败: {e}")
        report.stages.append(StageResult(name, "failed", str(e)))
        return False
    report.stages.append(StageResult(name, "done"))
    return True


def _preset_config(config: Dict, experiment: ExperimentConfig) -> Dict:
    return validate_config(merge_config(config, experiment.config_overrides))


def cmd_full_study(config: Dict, out_dir: str, seed: Optional[int] = None, quick: bool = False,
                   reference_n: Optional[int] = None) -> StudyReport:
    """
    一次性复现：fig1 预设上 simulate → inla-fit → pf-compare，fig4 预设上 simulate → pmmh，
    然后评估全部验收标准

    已有输出的阶段会被跳过，删除某个中间文件后重新运行会重新生成它。

    参数:
        config: 完整配置
        out_dir: 研究目录
        seed: 覆盖预设中的种子
        quick: 使用预设的 quick 设置
        reference_n: 覆盖参考滤波的粒子数

    返回:
        StudyReport
    """
    report = StudyReport(out_dir=out_dir)
    fig1 = experiment_from_preset("fig1", quick, out_dir, seed=seed, reference_n=reference_n)
    fig4 = experiment_from_preset("fig4", quick, out_dir, seed=seed)
    fig1_config = _preset_config(config, fig1)
    fig4_config = _preset_config(config, fig4)

    fig1_dir = os.path.join(out_dir, "fig1")
    fig1_data = os.path.join(fig1_dir, "dataset.csv")
    inla_dir = os.path.join(fig1_dir, "inla")
    compare_dir = os.path.join(fig1_dir, "pf_compare")
    fig4_dir = os.path.join(out_dir, "fig4")
    fig4_data = os.path.join(fig4_dir, "dataset.csv")
    pmmh_dir = os.path.join(fig4_dir, "pmmh")

    _run_stage(report, "fig1/simulate", list(dataset_paths(fig1_data, fig1.T).values()),
               lambda: cmd_simulate(fig1_config, fig1, fig1_data))
    _run_stage(report, "fig1/inla-fit", [os.path.join(inla_dir, "latent_summary.csv")],
               lambda: cmd_inla_fit(fig1_config, fig1_data, inla_dir), "fig1/simulate")
    _run_stage(report, "fig1/pf-compare", [os.path.join(compare_dir, f) for f in PF_COMPARE_TABLES.values()],
               lambda: cmd_pf_compare(fig1_config, fig1, fig1_data, compare_dir), "fig1/simulate")
    _run_stage(report, "fig4/simulate", [fig4_data], lambda: cmd_simulate(fig4_config, fig4, fig4_data))
    pmmh_outputs = [os.path.join(pmmh_dir, f) for f in ("chain.csv", "summary.csv", "pmmh_info.json")]
    _run_stage(report, "fig4/pmmh", pmmh_outputs,
               lambda: cmd_pmmh(fig4_config, fig4_data, pmmh_dir, fig4.seed), "fig4/simulate")

    report.criteria = evaluate_study(out_dir, quick=quick, seed=fig1.seed,
                                     max_workers=int(config["processing"]["max_workers"]))
    criteria = acceptance_frame(report.criteria)
    _write_csv(criteria, os.path.join(out_dir, "acceptance.csv"))
    with open(os.path.join(out_dir, "report.txt"), "w", encoding="utf-8") as f:
        f.write(report.to_text())
    if config["output"]["excel_report"]:
        tables = {"stages": report.stage_frame(), "acceptance": criteria}
        variance_path = os.path.join(compare_dir, PF_COMPARE_TABLES["variance"])
        if os.path.exists(variance_path):
            tables["fig1_variance"] = pd.read_csv(variance_path)
        summary_path = os.path.join(pmmh_dir, "summary.csv")
        if os.path.exists(summary_path):
            tables["fig4_summary"] = pd.read_csv(summary_path)
        ExcelFormatter().format_excel(tables, os.path.join(out_dir, "study_results.xlsx"))
    print(report.to_text())
    return report
