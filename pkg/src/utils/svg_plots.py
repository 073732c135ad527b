"""
由结果表绘制 SVG 图，并写出 gnuplot 可读的 .dat 数据文件

所有绘图函数只依赖传入的表，因此可以直接从 CSV 重新绘制。
"""
import logging
import os
from typing import Dict, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

logger = logging.getLogger(__name__)


def _ensure_dir(path: str):
    output_dir = os.path.dirname(path)
    if output_dir and not os.path.exists(output_dir):
        os.makedirs(output_dir)


def _save(fig, path: str) -> str:
    _ensure_dir(path)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    logger.info(f"图已保存到: {path}")
    return path


def write_dat(frame: pd.DataFrame, path: str) -> str:
    """写出空白分隔、以 # 开头表头的 gnuplot 数据文件"""
    _ensure_dir(path)
    with open(path, "w", encoding="utf-8") as f:
        f.write("# " + " ".join(str(c) for c in frame.columns) + "\n")
        frame.to_csv(f, sep=" ", index=False, header=False, na_rep="nan")
    return path


def boxplot_svg(groups: Dict[str, Sequence[float]], path: str, title: str = "", ylabel: str = "") -> str:
    """
    箱线图，每个分组一个箱

    参数:
        groups: {标签: 数值序列}，按插入顺序排列
        path: SVG 输出路径
    """
    fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(groups)), 4.0))
    ax.boxplot([np.asarray(v, dtype=float) for v in groups.values()])
    ax.set_xticks(range(1, len(groups) + 1))
    ax.set_xticklabels(list(groups.keys()), rotation=30, ha="right")
    ax.set_title(title)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


def line_plot_svg(x: Sequence[float], series: Dict[str, Sequence[float]], path: str, title: str = "",
                  xlabel: str = "", ylabel: str = "", log_y: bool = False) -> str:
    """多条折线，series 的键作为图例"""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, values in series.items():
        linestyle = ":" if "inla" in label.lower() else "-"
        ax.plot(x, values, linestyle=linestyle, label=label)
    if log_y:
        ax.set_yscale("log")
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


def histogram_svg(histogram: pd.DataFrame, path: str, title: str = "", xlabel: str = "",
                  overlay: Optional[pd.DataFrame] = None, true_value: Optional[float] = None) -> str:
    """
    直方图（bin_left, bin_right, density 列），可叠加一条密度曲线（value, density 列）和真实值竖线
    """
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    widths = histogram["bin_right"] - histogram["bin_left"]
    ax.bar(histogram["bin_left"], histogram["density"], width=widths, align="edge",
           color="#9ecae1", edgecolor="#3182bd", label="PMMH")
    if overlay is not None:
        ax.plot(overlay["value"], overlay["density"], color="#d62728", label="INLA")
    if true_value is not None:
        ax.axvline(true_value, color="black", linewidth=2, label="true")
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("density")
    ax.legend()
    return _save(fig, path)


def trace_plot_svg(trace: pd.DataFrame, columns: Sequence[str], path: str, title: str = "") -> str:
    """链的轨迹图，每个参数一个子图"""
    fig, axes = plt.subplots(len(columns), 1, figsize=(7.0, 1.8 * len(columns)), sharex=True, squeeze=False)
    for ax, column in zip(axes[:, 0], columns):
        ax.plot(trace["iteration"], trace[column], linewidth=0.6)
        ax.set_ylabel(column)
        ax.grid(True, alpha=0.3)
    axes[-1, 0].set_xlabel("iteration")
    axes[0, 0].set_title(title)
    return _save(fig, path)
