"""Report tables derived from per-job summaries: empirical CDFs by job
class, class resource decomposition, power box-plot statistics, and the
correlation heatmap export.

Conventions: empirical CDF steps at rank/n; quartiles by linear
interpolation between order statistics; Tukey whiskers (most extreme points
within 1.5 * IQR of the quartiles, anything beyond is an outlier).
Unclassified jobs are excluded from class-partitioned tables but included
in the "all" totals row.

Every table is a plain CSV; ``run_manifest.json`` captures config, input
digests, and the toolkit version, and contains nothing time-dependent so
reruns are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from . import __version__
from .errors import InvalidInputError
from .model import JobClass, JobSummary
from .summarize import (
    CorrelationMatrix,
    DEFAULT_CORRELATION_METRICS,
    pearson_matrix,
    summary_metric_column,
)

logger = logging.getLogger(__name__)

#: metrics whose per-class CDF tables are emitted by default
DEFAULT_CDF_METRICS = (
    "total_load_mean",
    "total_mem_mean",
    "total_alloc_pct_mean",
    "max_alloc_pct",
    "ri_temporal_load",
    "ri_spatial_load",
    "ri_temporal_mem_util",
    "ri_spatial_mem_util",
    "ri_temporal_mem_alloc",
    "ri_spatial_mem_alloc",
)

CLASS_ORDER = (JobClass.SMALL, JobClass.MEDIUM, JobClass.LARGE)


def cdf_by_class(
    summaries: Sequence[JobSummary], metric: str
) -> dict[JobClass, list[tuple[float, float]]]:
    """Empirical CDF of one summary metric per job class.

    Sorted values paired with cumulative fraction rank/n; jobs with a
    missing value for the metric are skipped, empty classes are omitted.
    """
    out: dict[JobClass, list[tuple[float, float]]] = {}
    for job_class in CLASS_ORDER:
        rows = [s for s in summaries if s.job_class is job_class]
        if not rows:
            continue
        values = summary_metric_column(rows, metric)
        values = np.sort(values[~np.isnan(values)])
        if values.size == 0:
            logger.info("event=report.empty_class metric=%s class=%s", metric, job_class.value)
            continue
        n = values.size
        out[job_class] = [(float(v), (i + 1) / n) for i, v in enumerate(values)]
    return out


@dataclass(frozen=True)
class ClassBreakdownRow:
    job_class: str
    jobs: int
    node_hours: float
    total_energy: float
    jobs_share: float | None
    node_hours_share: float | None
    energy_share: float | None


def class_breakdown(summaries: Sequence[JobSummary]) -> list[ClassBreakdownRow]:
    """Per-class totals plus shares over classified jobs, then an "all" row
    that also includes unclassified jobs."""
    def bucket(rows: Sequence[JobSummary]) -> tuple[int, float, float]:
        return (
            len(rows),
            float(sum(s.node_hours for s in rows)),
            float(sum(s.total_energy or 0.0 for s in rows)),
        )

    classified = [s for s in summaries if s.job_class is not JobClass.UNCLASSIFIED]
    total_jobs, total_nh, total_energy = bucket(classified)
    out = []
    for job_class in CLASS_ORDER:
        rows = [s for s in classified if s.job_class is job_class]
        if not rows:
            continue
        jobs, nh, energy = bucket(rows)
        out.append(
            ClassBreakdownRow(
                job_class=job_class.value,
                jobs=jobs,
                node_hours=nh,
                total_energy=energy,
                jobs_share=jobs / total_jobs if total_jobs else None,
                node_hours_share=nh / total_nh if total_nh else None,
                energy_share=energy / total_energy if total_energy else None,
            )
        )
    all_jobs, all_nh, all_energy = bucket(list(summaries))
    out.append(
        ClassBreakdownRow(
            job_class="all",
            jobs=all_jobs,
            node_hours=all_nh,
            total_energy=all_energy,
            jobs_share=None,
            node_hours_share=None,
            energy_share=None,
        )
    )
    return out


@dataclass(frozen=True)
class BoxStats:
    """Tukey box-plot statistics for one (class, gpu_count) group."""

    job_class: str
    gpu_count: int
    n: int
    whisker_low: float
    q1: float
    median: float
    q3: float
    whisker_high: float
    outliers: tuple[float, ...]


def box_stats(values: Sequence[float]) -> tuple[float, float, float, float, float, tuple[float, ...]]:
    """(whisker_low, q1, median, q3, whisker_high, outliers) of one group."""
    arr = np.sort(np.asarray(values, dtype=np.float64))
    if arr.size == 0:
        raise InvalidInputError("box_stats requires a non-empty group")
    q1, median, q3 = (float(q) for q in np.percentile(arr, [25, 50, 75], method="linear"))
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    inside = arr[(arr >= lo_fence) & (arr <= hi_fence)]
    outliers = tuple(float(v) for v in arr[(arr < lo_fence) | (arr > hi_fence)])
    # whiskers reach the most extreme data within the fences, but never
    # retreat inside the box (quartiles are interpolated, not data points)
    whisker_low = min(q1, float(inside.min()))
    whisker_high = max(q3, float(inside.max()))
    return whisker_low, q1, median, q3, whisker_high, outliers


def power_boxplot_stats(summaries: Sequence[JobSummary]) -> list[BoxStats]:
    """Box stats of mean node power grouped by (job class, gpu_count)."""
    groups: dict[tuple[str, int], list[float]] = {}
    for s in summaries:
        if s.job_class is JobClass.UNCLASSIFIED or s.total_power_mean is None or s.gpu_count is None:
            continue
        groups.setdefault((s.job_class.value, s.gpu_count), []).append(s.total_power_mean)
    out = []
    class_rank = {c.value: i for i, c in enumerate(CLASS_ORDER)}
    for (job_class, gpus), values in sorted(
        groups.items(), key=lambda kv: (class_rank[kv[0][0]], kv[0][1])
    ):
        lo, q1, median, q3, hi, outliers = box_stats(values)
        out.append(
            BoxStats(
                job_class=job_class,
                gpu_count=gpus,
                n=len(values),
                whisker_low=lo,
                q1=q1,
                median=median,
                q3=q3,
                whisker_high=hi,
                outliers=outliers,
            )
        )
    return out


# ---------------------------------------------------------------------------
# writers


def write_cdf_csv(
    cdf: Mapping[JobClass, list[tuple[float, float]]], path: Path
) -> None:
    rows = []
    for job_class, points in cdf.items():
        for value, fraction in points:
            rows.append({"job_class": job_class.value, "value": value, "cum_fraction": fraction})
    pd.DataFrame(rows, columns=["job_class", "value", "cum_fraction"]).to_csv(path, index=False)


def write_class_breakdown_csv(rows: Sequence[ClassBreakdownRow], path: Path) -> None:
    records = []
    for r in rows:
        records.append(
            {
                "job_class": r.job_class,
                "jobs": r.jobs,
                "node_hours": r.node_hours,
                "total_energy": r.total_energy,
                "jobs_share": "" if r.jobs_share is None else r.jobs_share,
                "node_hours_share": "" if r.node_hours_share is None else r.node_hours_share,
                "energy_share": "" if r.energy_share is None else r.energy_share,
            }
        )
    pd.DataFrame(
        records,
        columns=[
            "job_class",
            "jobs",
            "node_hours",
            "total_energy",
            "jobs_share",
            "node_hours_share",
            "energy_share",
        ],
    ).to_csv(path, index=False)


def write_power_box_csv(rows: Sequence[BoxStats], path: Path) -> None:
    records = []
    for r in rows:
        records.append(
            {
                "job_class": r.job_class,
                "gpu_count": r.gpu_count,
                "n": r.n,
                "whisker_low": r.whisker_low,
                "q1": r.q1,
                "median": r.median,
                "q3": r.q3,
                "whisker_high": r.whisker_high,
                "outliers": ";".join(repr(v) for v in r.outliers),
            }
        )
    pd.DataFrame(
        records,
        columns=[
            "job_class",
            "gpu_count",
            "n",
            "whisker_low",
            "q1",
            "median",
            "q3",
            "whisker_high",
            "outliers",
        ],
    ).to_csv(path, index=False)


def heatmap_export(matrix: CorrelationMatrix, path: Path) -> None:
    """Correlation matrix as CSV; missing cells stay blank, row/column order
    follows the configured metric list."""
    df = matrix.to_dataframe()
    df.to_csv(path, index=True, index_label="metric", na_rep="")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass(frozen=True)
class ReportConfig:
    cdf_metrics: tuple[str, ...] = DEFAULT_CDF_METRICS
    correlation_metrics: tuple[str, ...] = DEFAULT_CORRELATION_METRICS
    figures: bool = True


def write_report(
    summaries: Sequence[JobSummary],
    out_dir: str | Path,
    *,
    config: ReportConfig = ReportConfig(),
    input_paths: Sequence[Path] = (),
) -> list[Path]:
    """Emit every report table (and, unless disabled, the rendered figures)
    plus the run manifest. Returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    cdf_tables = {}
    for metric in config.cdf_metrics:
        cdf = cdf_by_class(summaries, metric)
        path = out_dir / f"cdf_{metric}.csv"
        write_cdf_csv(cdf, path)
        written.append(path)
        cdf_tables[metric] = cdf

    breakdown = class_breakdown(summaries)
    path = out_dir / "class_breakdown.csv"
    write_class_breakdown_csv(breakdown, path)
    written.append(path)

    boxes = power_boxplot_stats(summaries)
    path = out_dir / "power_box.csv"
    write_power_box_csv(boxes, path)
    written.append(path)

    matrix = pearson_matrix(summaries, config.correlation_metrics)
    path = out_dir / "correlation.csv"
    heatmap_export(matrix, path)
    written.append(path)

    if config.figures:
        from . import figures

        written.extend(
            figures.render_all(
                out_dir,
                cdf_tables=cdf_tables,
                breakdown=breakdown,
                boxes=boxes,
                matrix=matrix,
            )
        )

    manifest = {
        "toolkit_version": __version__,
        "config": {
            "cdf_metrics": list(config.cdf_metrics),
            "correlation_metrics": list(config.correlation_metrics),
            "figures": config.figures,
        },
        "inputs": {p.name: _sha256(p) for p in input_paths},
        "outputs": {p.name: _sha256(p) for p in written},
    }
    manifest_path = out_dir / "run_manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(manifest_path)
    logger.info("event=report.done files=%d out=%s", len(written), out_dir)
    return written
