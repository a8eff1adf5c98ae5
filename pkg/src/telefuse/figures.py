"""Render the report tables as matplotlib figures (PNG, Agg backend).

The figures mirror the CSV tables one-to-one; the CSVs stay the primary
interface for downstream tooling.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .model import JobClass
from .report import BoxStats, ClassBreakdownRow
from .summarize import CorrelationMatrix

logger = logging.getLogger(__name__)

CLASS_COLORS = {
    JobClass.SMALL: "tab:blue",
    JobClass.MEDIUM: "tab:orange",
    JobClass.LARGE: "tab:green",
}

_SAVEFIG = dict(dpi=110, bbox_inches="tight", metadata={"Software": None})


def render_cdf(
    cdf: Mapping[JobClass, list[tuple[float, float]]], metric: str, path: Path
) -> None:
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    for job_class, points in cdf.items():
        values = [p[0] for p in points]
        fractions = [p[1] for p in points]
        ax.step(
            values,
            fractions,
            where="post",
            label=job_class.value,
            color=CLASS_COLORS.get(job_class),
        )
    ax.set_xlabel(metric)
    ax.set_ylabel("cumulative fraction of jobs")
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    if cdf:
        ax.legend(title="job class", fontsize=8)
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)


def render_class_breakdown(rows: Sequence[ClassBreakdownRow], path: Path) -> None:
    classes = [r for r in rows if r.job_class != "all"]
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    labels = ["jobs", "node_hours", "total_energy"]
    x = np.arange(len(labels))
    width = 0.8 / max(1, len(classes))
    for i, row in enumerate(classes):
        shares = [row.jobs_share or 0.0, row.node_hours_share or 0.0, row.energy_share or 0.0]
        ax.bar(x + i * width, shares, width, label=row.job_class)
    ax.set_xticks(x + width * (len(classes) - 1) / 2)
    ax.set_xticklabels(labels)
    ax.set_ylabel("share of classified total")
    ax.set_ylim(0, 1.0)
    ax.grid(axis="y", alpha=0.3)
    if classes:
        ax.legend(title="job class", fontsize=8)
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)


def render_power_box(rows: Sequence[BoxStats], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    if rows:
        stats = [
            {
                "label": f"{r.job_class}\n{r.gpu_count} GPU",
                "whislo": r.whisker_low,
                "q1": r.q1,
                "med": r.median,
                "q3": r.q3,
                "whishi": r.whisker_high,
                "fliers": list(r.outliers),
            }
            for r in rows
        ]
        ax.bxp(stats, showfliers=True)
    ax.set_ylabel("mean node GPU power (W)")
    ax.grid(axis="y", alpha=0.3)
    ax.tick_params(axis="x", labelsize=7)
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)


def render_correlation_heatmap(matrix: CorrelationMatrix, path: Path) -> None:
    values = np.ma.masked_invalid(matrix.values)
    k = len(matrix.metrics)
    fig, ax = plt.subplots(figsize=(0.5 * k + 2.2, 0.5 * k + 1.6))
    cmap = plt.get_cmap("coolwarm").copy()
    cmap.set_bad(color="0.85")
    im = ax.imshow(values, vmin=-1.0, vmax=1.0, cmap=cmap)
    ax.set_xticks(range(k))
    ax.set_yticks(range(k))
    ax.set_xticklabels(matrix.metrics, rotation=90, fontsize=7)
    ax.set_yticklabels(matrix.metrics, fontsize=7)
    for i in range(k):
        for j in range(k):
            if not values.mask[i, j]:
                ax.text(
                    j,
                    i,
                    f"{values[i, j]:.2f}",
                    ha="center",
                    va="center",
                    fontsize=5.5,
                    color="black",
                )
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04, label="Pearson r")
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)


def render_all(
    out_dir: Path,
    *,
    cdf_tables: Mapping[str, Mapping[JobClass, list[tuple[float, float]]]],
    breakdown: Sequence[ClassBreakdownRow],
    boxes: Sequence[BoxStats],
    matrix: CorrelationMatrix,
) -> list[Path]:
    written: list[Path] = []
    for metric, cdf in cdf_tables.items():
        path = out_dir / f"cdf_{metric}.png"
        render_cdf(cdf, metric, path)
        written.append(path)
    path = out_dir / "class_breakdown.png"
    render_class_breakdown(breakdown, path)
    written.append(path)
    path = out_dir / "power_box.png"
    render_power_box(boxes, path)
    written.append(path)
    path = out_dir / "correlation_heatmap.png"
    render_correlation_heatmap(matrix, path)
    written.append(path)
    logger.info("event=figures.done count=%d", len(written))
    return written
