"""Post-processing stage: condense fused data into one summary row per job.

Resource imbalance, for a job on N nodes with per-node series U_{n,t}:

* temporal: per node, 1 - sum_t(U_{n,t}) / (T_n * max_t(U_{n,t})), i.e.
  1 - mean/max with each node using its own sample count T_n; the job value
  is the maximum over its nodes. 0 means constant usage, 1 high fluctuation.
* spatial: 1 - sum_n(max_t U_{n,t}) / (N * max_{n,t} U). 0 means identical
  per-node peaks, 1 entirely independent behavior.

All-zero series would make these 0/0; zero usage is constant usage, so such
nodes (and an all-zero global max) contribute 0. Both coefficients are
ratios, hence invariant under scaling every U by any c > 0; float dust is
clamped back into [0, 1].

Other conventions: population (divisor n) standard deviation; trapezoidal
energy integration (W*s -> kJ); Pearson entries with zero variance or fewer
than two paired points are missing, never NaN.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import InvalidInputError, LedgerError, SchemaError
from .fuse import FusedDataset, FusedFrame, open_fused_dataset
from .ingest import parse_job_log, parse_host_log
from .model import (
    COVERAGE_COMPLETE,
    COVERAGE_NONE,
    COVERAGE_PARTIAL,
    GPU_COUNT_UTIL_THRESHOLD,
    NODE_MEM_CAPACITY_BYTES,
    JobClass,
    JobRecord,
    JobSummary,
    NodeSeries,
    RICategory,
    RIResult,
    RI_METRICS,
    classify_job,
)

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# node series


def build_all_node_series(fused: FusedFrame) -> dict[str, list[NodeSeries]]:
    """Per-job, per-host NodeSeries for every tagged record in one frame.

    Records must already be time-sorted per host (fused chunks are written
    in canonical order, so chunk-ordered reads satisfy this). One stable
    two-key sort makes every (job, host) group contiguous with its original
    time order preserved.
    """
    rows = np.nonzero(fused.tagged_mask)[0]
    if rows.size == 0:
        return {}
    tele = fused.telemetry
    order = np.argsort(tele.hosts[rows], kind="stable")
    order = order[np.argsort(fused.job_ids[rows][order], kind="stable")]
    rows = rows[order]
    jobs = fused.job_ids[rows]
    hosts = tele.hosts[rows]
    changed = (jobs[1:] != jobs[:-1]) | (hosts[1:] != hosts[:-1])
    boundaries = np.nonzero(np.concatenate(([True], changed)))[0]
    out: dict[str, list[NodeSeries]] = {}
    for i, lo in enumerate(boundaries):
        hi = boundaries[i + 1] if i + 1 < boundaries.size else rows.size
        idx = rows[lo:hi]
        util = tele.util[idx]
        job_id = str(jobs[lo])
        out.setdefault(job_id, []).append(
            NodeSeries(
                job_id=job_id,
                host=str(hosts[lo]),
                timestamps=tele.timestamps[idx],
                node_util=util.mean(axis=1),
                node_mem_util=tele.mem_util[idx].mean(axis=1),
                node_alloc_pct=tele.alloc[idx].sum(axis=1) / NODE_MEM_CAPACITY_BYTES * 100.0,
                node_power=tele.power[idx].sum(axis=1),
                gpu_util=util,
            )
        )
    return out


def build_node_series(job_id: str, fused: FusedFrame) -> list[NodeSeries]:
    """Build one NodeSeries per host from the fused records of one job."""
    rows = np.nonzero(fused.job_ids == job_id)[0]
    if rows.size == 0:
        return []
    sub = FusedFrame(
        telemetry=fused.telemetry.select(rows),
        job_ids=fused.job_ids[rows],
        queues=fused.queues[rows],
        num_nodes=fused.num_nodes[rows],
    )
    return build_all_node_series(sub).get(job_id, [])


def _metric_arrays(series: Sequence[NodeSeries], metric: str) -> list[np.ndarray]:
    try:
        attr = RI_METRICS[metric]
    except KeyError:
        raise InvalidInputError(
            f"unknown RI metric {metric!r}; choose from {sorted(RI_METRICS)}"
        ) from None
    return [getattr(s, attr) for s in series]


def _clamp_unit(value: float) -> float:
    return min(1.0, max(0.0, value))


# ---------------------------------------------------------------------------
# resource imbalance


def ri_temporal(series: Sequence[NodeSeries], metric: str) -> RIResult:
    """Within-node variability over time, worst node wins."""
    arrays = _metric_arrays(series, metric)
    if not arrays or any(a.size == 0 for a in arrays):
        raise InvalidInputError("ri_temporal requires at least one non-empty node series")
    worst = 0.0
    for values in arrays:
        peak = float(values.max())
        # all-zero and exactly-constant nodes contribute 0 by definition;
        # short-circuiting keeps "constant -> 0" exact despite float summation
        if peak == 0.0 or peak == float(values.min()):
            continue
        term = _clamp_unit(1.0 - float(values.sum()) / (values.size * peak))
        worst = max(worst, term)
    return RIResult.from_value(worst)


def ri_spatial(series: Sequence[NodeSeries], metric: str) -> RIResult:
    """Cross-node disparity of per-node peaks within one job."""
    arrays = _metric_arrays(series, metric)
    if not arrays or any(a.size == 0 for a in arrays):
        raise InvalidInputError("ri_spatial requires at least one non-empty node series")
    peaks = np.array([float(values.max()) for values in arrays])
    global_peak = float(peaks.max())
    if global_peak == 0.0:
        return RIResult.from_value(0.0)
    value = _clamp_unit(1.0 - float(peaks.sum()) / (peaks.size * global_peak))
    return RIResult.from_value(value)


def gpu_count(series: Sequence[NodeSeries]) -> int:
    """Greatest per-node count of GPUs whose peak utilization exceeds 2%."""
    best = 0
    for s in series:
        if len(s) == 0:
            continue
        used = int((s.gpu_util.max(axis=0) > GPU_COUNT_UTIL_THRESHOLD).sum())
        best = max(best, used)
    return best


# ---------------------------------------------------------------------------
# energy


def trapezoid_kilojoules(timestamps: np.ndarray, watts: np.ndarray) -> float:
    """Trapezoidal integral of one node's power curve, in kilojoules."""
    ts = np.asarray(timestamps, dtype=np.float64)
    if ts.size != np.asarray(watts).size:
        raise InvalidInputError("timestamps and watts must have equal length")
    if ts.size > 1 and not np.all(np.diff(ts) > 0):
        raise InvalidInputError("power series timestamps must be strictly increasing")
    if ts.size < 2:
        return 0.0
    return float(np.trapezoid(np.asarray(watts, dtype=np.float64), ts)) / 1000.0


def integrate_energy(series: Sequence[NodeSeries]) -> float:
    """Sum of per-node trapezoidal power integrals, in kilojoules.

    Nodes with fewer than two samples cannot span an interval and contribute
    0 (logged as a warning).
    """
    total = 0.0
    for s in series:
        if len(s) < 2:
            logger.warning(
                "event=energy.short_series job=%s host=%s samples=%d", s.job_id, s.host, len(s)
            )
            continue
        total += trapezoid_kilojoules(s.timestamps, s.node_power)
    return total


# ---------------------------------------------------------------------------
# descriptive statistics


@dataclass(frozen=True)
class Stats:
    min: float
    max: float
    mean: float
    std: float


def descriptive_stats(values: Iterable[float]) -> Stats:
    """Min/max/mean and population (divisor n) standard deviation."""
    arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=np.float64)
    if arr.size == 0:
        raise InvalidInputError("descriptive_stats requires a non-empty sequence")
    return Stats(
        min=float(arr.min()),
        max=float(arr.max()),
        mean=float(arr.mean()),
        std=float(arr.std(ddof=0)),
    )


# ---------------------------------------------------------------------------
# per-job summary


def summarize_job(job: JobRecord, series: Sequence[NodeSeries], hosts_assigned: int) -> JobSummary:
    """Condense one job's node series into its summary row.

    A job with zero telemetry coverage still yields a row, flagged via
    ``coverage`` with every metric field missing.
    """
    runtime = job.runtime_seconds
    base = dict(
        job_id=job.job_id,
        job_class=classify_job(job.requested_nodes),
        num_nodes=job.requested_nodes,
        runtime_seconds=runtime,
        node_hours=job.requested_nodes * runtime / 3600.0,
        hosts_assigned=hosts_assigned,
        hosts_observed=len(series),
    )
    if not series:
        return JobSummary(coverage=COVERAGE_NONE, **base)
    if hosts_assigned > len(series):
        coverage = COVERAGE_PARTIAL
        logger.warning(
            "event=summary.partial_coverage job=%s observed=%d assigned=%d",
            job.job_id,
            len(series),
            hosts_assigned,
        )
    else:
        coverage = COVERAGE_COMPLETE

    series = sorted(series, key=lambda s: s.host)
    load = np.concatenate([s.node_util for s in series])
    mem = np.concatenate([s.node_mem_util for s in series])
    alloc = np.concatenate([s.node_alloc_pct for s in series])
    power = np.concatenate([s.node_power for s in series])
    load_stats = descriptive_stats(load)
    mem_stats = descriptive_stats(mem)
    alloc_stats = descriptive_stats(alloc)
    power_stats = descriptive_stats(power)

    return JobSummary(
        coverage=coverage,
        gpu_count=gpu_count(series),
        total_load_mean=float(np.mean([s.node_util.mean() for s in series])),
        total_mem_mean=float(np.mean([s.node_mem_util.mean() for s in series])),
        total_alloc_pct_mean=float(np.mean([s.node_alloc_pct.mean() for s in series])),
        max_alloc_pct=alloc_stats.max,
        total_power_mean=float(np.mean([s.node_power.mean() for s in series])),
        total_energy=integrate_energy(series),
        ri_temporal_load=ri_temporal(series, "load"),
        ri_spatial_load=ri_spatial(series, "load"),
        ri_temporal_mem_util=ri_temporal(series, "mem_util"),
        ri_spatial_mem_util=ri_spatial(series, "mem_util"),
        ri_temporal_mem_alloc=ri_temporal(series, "mem_alloc"),
        ri_spatial_mem_alloc=ri_spatial(series, "mem_alloc"),
        load_min=load_stats.min,
        load_max=load_stats.max,
        load_mean=load_stats.mean,
        load_std=load_stats.std,
        mem_util_min=mem_stats.min,
        mem_util_max=mem_stats.max,
        mem_util_mean=mem_stats.mean,
        mem_util_std=mem_stats.std,
        alloc_pct_min=alloc_stats.min,
        alloc_pct_max=alloc_stats.max,
        alloc_pct_mean=alloc_stats.mean,
        alloc_pct_std=alloc_stats.std,
        power_min=power_stats.min,
        power_max=power_stats.max,
        power_mean=power_stats.mean,
        power_std=power_stats.std,
        **base,
    )


# ---------------------------------------------------------------------------
# whole-run summarization


@dataclass(frozen=True)
class RunSummary:
    summaries: tuple[JobSummary, ...]
    fused_bytes: int
    tagged_samples: int
    idle_samples: int


def summarize_dataset(dataset: FusedDataset) -> RunSummary:
    """One summary row per job in the fused dataset, in job_id order."""
    for name in ("jobs.csv", "hosts.csv"):
        if not (dataset.out_dir / name).exists():
            raise LedgerError(f"fused directory {dataset.out_dir} is missing {name}")
    jobs_result = parse_job_log(dataset.out_dir / "jobs.csv")
    hosts_result = parse_host_log(dataset.out_dir / "hosts.csv")
    jobs: list[JobRecord] = jobs_result.records
    assigned: dict[str, int] = {}
    for a in hosts_result.records:
        assigned[a.job_id] = assigned.get(a.job_id, 0) + 1

    # accumulate per-(job, host) slices across chunks, then stitch
    collected: dict[str, dict[str, list[NodeSeries]]] = {}
    tagged = 0
    idle = 0
    for fused in dataset.iter_chunks():
        mask = fused.tagged_mask
        tagged += int(mask.sum())
        idle += int(len(fused) - mask.sum())
        for job_id, series_list in build_all_node_series(fused).items():
            parts = collected.setdefault(job_id, {})
            for s in series_list:
                parts.setdefault(s.host, []).append(s)

    summaries = []
    for job in sorted(jobs, key=lambda j: j.job_id):
        parts = collected.get(job.job_id, {})
        series = [_stitch(job.job_id, host, chunks) for host, chunks in sorted(parts.items())]
        summaries.append(summarize_job(job, series, assigned.get(job.job_id, 0)))
    return RunSummary(
        summaries=tuple(summaries),
        fused_bytes=dataset.fused_bytes,
        tagged_samples=tagged,
        idle_samples=idle,
    )


def _stitch(job_id: str, host: str, chunks: list[NodeSeries]) -> NodeSeries:
    if len(chunks) == 1:
        return chunks[0]
    return NodeSeries(
        job_id=job_id,
        host=host,
        timestamps=np.concatenate([c.timestamps for c in chunks]),
        node_util=np.concatenate([c.node_util for c in chunks]),
        node_mem_util=np.concatenate([c.node_mem_util for c in chunks]),
        node_alloc_pct=np.concatenate([c.node_alloc_pct for c in chunks]),
        node_power=np.concatenate([c.node_power for c in chunks]),
        gpu_util=np.concatenate([c.gpu_util for c in chunks]),
    )


def summarize_fused_dir(fused_dir: str | Path) -> RunSummary:
    return summarize_dataset(open_fused_dataset(fused_dir))


# ---------------------------------------------------------------------------
# Pearson correlation matrix

#: Summary columns correlated by default, in heatmap order.
DEFAULT_CORRELATION_METRICS = (
    "gpu_count",
    "num_nodes",
    "runtime_seconds",
    "node_hours",
    "total_load_mean",
    "total_mem_mean",
    "total_alloc_pct_mean",
    "max_alloc_pct",
    "total_power_mean",
    "total_energy",
    "ri_temporal_load",
    "ri_spatial_load",
    "ri_temporal_mem_util",
    "ri_spatial_mem_util",
    "ri_temporal_mem_alloc",
    "ri_spatial_mem_alloc",
)


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """Symmetric Pearson r matrix; NaN cells mean "missing", rendered blank."""

    metrics: tuple[str, ...]
    values: np.ndarray

    def entry(self, a: str, b: str) -> float | None:
        i, j = self.metrics.index(a), self.metrics.index(b)
        v = self.values[i, j]
        return None if math.isnan(v) else float(v)

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=list(self.metrics), columns=list(self.metrics))


def summary_metric_column(summaries: Sequence[JobSummary], metric: str) -> np.ndarray:
    """Extract one numeric column from summaries; missing values become NaN."""
    out = np.full(len(summaries), np.nan)
    for i, s in enumerate(summaries):
        value = getattr(s, metric)
        if isinstance(value, RIResult):
            value = value.value
        elif isinstance(value, JobClass):
            raise InvalidInputError(f"metric {metric!r} is categorical, not numeric")
        if value is not None:
            out[i] = float(value)
    return out


def pearson(x: np.ndarray, y: np.ndarray) -> float | None:
    """Pearson r over pairwise-complete observations; None when undefined
    (fewer than two pairs, or zero variance on either side)."""
    mask = ~(np.isnan(x) | np.isnan(y))
    if mask.sum() < 2:
        return None
    xv = x[mask]
    yv = y[mask]
    dx = xv - xv.mean()
    dy = yv - yv.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        return None
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def pearson_matrix(
    summaries: Sequence[JobSummary],
    metrics: Sequence[str] = DEFAULT_CORRELATION_METRICS,
) -> CorrelationMatrix:
    """Pairwise Pearson r over the selected summary columns."""
    if len(summaries) < 2:
        raise InvalidInputError("pearson_matrix requires at least 2 summaries")
    columns = {m: summary_metric_column(summaries, m) for m in metrics}
    k = len(metrics)
    values = np.full((k, k), np.nan)
    for i, a in enumerate(metrics):
        for j in range(i, k):
            r = pearson(columns[a], columns[metrics[j]])
            if r is not None:
                values[i, j] = r
                values[j, i] = r
    return CorrelationMatrix(metrics=tuple(metrics), values=values)


# ---------------------------------------------------------------------------
# summary CSV round-trip

_RI_FIELDS = (
    "ri_temporal_load",
    "ri_spatial_load",
    "ri_temporal_mem_util",
    "ri_spatial_mem_util",
    "ri_temporal_mem_alloc",
    "ri_spatial_mem_alloc",
)

#: Fixed column order of summary.csv. Derived-metric headers use the
#: canonical metric names verbatim; each RI value column is followed by its
#: category column.
SUMMARY_COLUMNS: tuple[str, ...] = (
    "job_id",
    "job_class",
    "gpu_count",
    "num_nodes",
    "runtime_seconds",
    "node_hours",
    "total_load_mean",
    "total_mem_mean",
    "total_alloc_pct_mean",
    "max_alloc_pct",
    "total_power_mean",
    "total_energy",
    *(name for f in _RI_FIELDS for name in (f, f + "_category")),
    "load_min",
    "load_max",
    "load_mean",
    "load_std",
    "mem_util_min",
    "mem_util_max",
    "mem_util_mean",
    "mem_util_std",
    "alloc_pct_min",
    "alloc_pct_max",
    "alloc_pct_mean",
    "alloc_pct_std",
    "power_min",
    "power_max",
    "power_mean",
    "power_std",
    "hosts_assigned",
    "hosts_observed",
    "coverage",
)


def summary_row(summary: JobSummary) -> dict[str, object]:
    row: dict[str, object] = {}
    for col in SUMMARY_COLUMNS:
        if col.endswith("_category"):
            ri = getattr(summary, col[: -len("_category")])
            row[col] = ri.category.value if ri is not None else ""
        elif col in _RI_FIELDS:
            ri = getattr(summary, col)
            row[col] = ri.value if ri is not None else ""
        elif col == "job_class":
            row[col] = summary.job_class.value
        else:
            value = getattr(summary, col)
            row[col] = "" if value is None else value
    return row


def write_summary_csv(summaries: Sequence[JobSummary], path: str | Path) -> None:
    df = pd.DataFrame([summary_row(s) for s in summaries], columns=list(SUMMARY_COLUMNS))
    df.to_csv(path, index=False)


def write_correlation_csv(matrix: CorrelationMatrix, path: str | Path) -> None:
    df = matrix.to_dataframe()
    df.to_csv(path, index=True, index_label="metric", na_rep="")


def read_summary_csv(path: str | Path) -> list[JobSummary]:
    """Parse a summary.csv back into JobSummary records."""
    try:
        df = pd.read_csv(path, keep_default_na=False, dtype=str)
    except pd.errors.EmptyDataError:
        raise SchemaError(f"summary file {path} is empty") from None
    missing = [c for c in SUMMARY_COLUMNS if c not in df.columns]
    if missing:
        raise SchemaError(f"summary file missing required column: {missing[0]}")

    int_columns = {"gpu_count", "num_nodes", "runtime_seconds", "hosts_assigned", "hosts_observed"}
    categories = {c.value: c for c in RICategory}
    classes = {c.value: c for c in JobClass}
    out: list[JobSummary] = []
    for _, row in df.iterrows():
        kwargs: dict[str, object] = {}
        for col in SUMMARY_COLUMNS:
            text = row[col]
            if col.endswith("_category"):
                continue
            if col in _RI_FIELDS:
                cat = row[col + "_category"]
                kwargs[col] = (
                    RIResult(value=float(text), category=categories[cat]) if text != "" else None
                )
            elif col == "job_class":
                kwargs[col] = classes[text]
            elif col in ("coverage", "job_id"):
                kwargs[col] = text
            elif text == "":
                kwargs[col] = None
            elif col in int_columns:
                kwargs[col] = int(float(text))
            else:
                kwargs[col] = float(text)
        out.append(JobSummary(**kwargs))
    return out
