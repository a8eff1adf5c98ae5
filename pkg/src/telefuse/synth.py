"""Synthetic trace generator with labeled ground truth, plus brute-force
oracles used to cross-check the fast pipeline implementations.

Pattern construction keeps the imbalance coefficients analytically exact:
every temporal shape has max 1.0 and mean exactly (1 - target), so
1 - mean/max hits the drawn target; per-node peaks are solved the same way
for the spatial coefficient. Targets are drawn at least 0.05 inside their
category interval, away from the 0.2/0.6 boundaries:

* constant   -> target 0 (series literally constant per node / equal peaks)
* phased     -> asymmetric square wave, target in [0.25, 0.55]
* stochastic -> sparse bursts at peak over low jitter, target in [0.65, ~0.93]

A plain uniform-noise series cannot exceed 1 - mean/max ~= 0.5, so the
stochastic generator uses bursts instead of uniform noise.

Power is generated as an idle floor plus a utilization-proportional draw up
to TDP, giving a plausible load-power correlation without claiming device
physics. All values are rounded before writing, and every ground-truth
number in the ledger is computed from the rounded arrays, never by running
the fusion/summarize pipeline.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import FusionError, InvalidInputError
from .ingest import (
    DatasetManifest,
    TelemetryFrame,
    save_manifest,
    write_host_log,
    write_job_log,
    write_telemetry,
)
from .model import (
    CLASS_NODE_RANGES,
    GPUS_PER_NODE,
    GPU_COUNT_UTIL_THRESHOLD,
    HostAssignment,
    JobClass,
    JobRecord,
    NODE_MEM_CAPACITY_BYTES,
    classify_ri,
)

logger = logging.getLogger(__name__)

PATTERNS = ("constant", "phased", "stochastic")
METRICS = ("load", "mem_util", "mem_alloc")

#: node-count range used when a scenario asks for unclassified jobs
UNCLASSIFIED_NODE_RANGE = (1, 9)

_ROUND_DECIMALS = 4


@dataclass(frozen=True)
class ScenarioSpec:
    """Parameters of one synthetic scenario; deterministic per seed."""

    seed: int = 1
    jobs: int = 200
    class_mix: Mapping[str, float] = field(
        default_factory=lambda: {"small": 0.92, "medium": 0.08}
    )
    pattern_mix: Mapping[str, float] = field(
        default_factory=lambda: {"constant": 0.34, "phased": 0.33, "stochastic": 0.33}
    )
    fixed_patterns: Mapping[str, tuple[str, str]] | None = None
    period_seconds: int = 5
    node_count_range: tuple[int, int] = (10, 26)
    runtime_range: tuple[int, int] = (3600, 4200)
    idle_watts: float = 50.0
    tdp_watts: float = 400.0
    hosts: int = 48
    base_epoch: int = 1704067200  # 2024-01-01T00:00:00Z
    arrival_gap_range: tuple[int, int] = (0, 900)
    idle_gap_samples: int = 2
    # compressed telemetry keeps desk-scale datasets ~10x smaller on disk;
    # the ingest parsers read either form
    compress_telemetry: bool = True

    def __post_init__(self) -> None:
        if self.jobs < 1:
            raise InvalidInputError(f"scenario needs at least 1 job, got {self.jobs}")
        if self.period_seconds < 1:
            raise InvalidInputError("sampling period must be >= 1 second")
        _check_mix("class_mix", self.class_mix, set(_CLASS_KEYS))
        _check_mix("pattern_mix", self.pattern_mix, set(PATTERNS))
        lo, hi = self.node_count_range
        if not 1 <= lo <= hi:
            raise InvalidInputError(f"bad node_count_range {self.node_count_range}")
        rlo, rhi = self.runtime_range
        if rlo > rhi:
            raise InvalidInputError(f"bad runtime_range {self.runtime_range}")
        if rlo < 10 * self.period_seconds:
            raise InvalidInputError(
                f"runtime_range minimum {rlo} must be >= 10 sampling periods "
                f"({10 * self.period_seconds} s)"
            )
        if not 0 <= self.idle_watts < self.tdp_watts:
            raise InvalidInputError("need 0 <= idle_watts < tdp_watts")
        glo, ghi = self.arrival_gap_range
        if not 0 <= glo <= ghi:
            raise InvalidInputError(f"bad arrival_gap_range {self.arrival_gap_range}")
        if self.idle_gap_samples < 0:
            raise InvalidInputError("idle_gap_samples must be >= 0")
        if self.fixed_patterns is not None:
            for metric, labels in self.fixed_patterns.items():
                if metric not in METRICS or len(labels) != 2 or any(
                    l not in PATTERNS for l in labels
                ):
                    raise InvalidInputError(
                        f"fixed_patterns entries must be metric -> (temporal, spatial), got {metric}={labels}"
                    )
        widest = 0
        for name, fraction in self.class_mix.items():
            if fraction <= 0:
                continue
            clo, chi = _class_draw_range(name, self.node_count_range)
            if clo > chi:
                raise InvalidInputError(
                    f"class {name!r} has no node counts inside node_count_range {self.node_count_range}"
                )
            widest = max(widest, chi)
        if widest > self.hosts:
            raise InvalidInputError(
                f"hosts={self.hosts} cannot fit the largest drawable job ({widest} nodes)"
            )


_CLASS_KEYS = ("small", "medium", "large", "unclassified")


def _check_mix(name: str, mix: Mapping[str, float], allowed: set[str]) -> None:
    if not mix:
        raise InvalidInputError(f"{name} must be non-empty")
    unknown = set(mix) - allowed
    if unknown:
        raise InvalidInputError(f"{name} has unknown keys: {sorted(unknown)}")
    if any(v < 0 for v in mix.values()):
        raise InvalidInputError(f"{name} fractions must be >= 0")
    total = sum(mix.values())
    if abs(total - 1.0) > 1e-9:
        raise InvalidInputError(f"{name} fractions must sum to 1, got {total}")


def _class_draw_range(name: str, bounds: tuple[int, int]) -> tuple[int, int]:
    if name == "unclassified":
        lo, hi = UNCLASSIFIED_NODE_RANGE
    else:
        lo, hi = CLASS_NODE_RANGES[JobClass(name)]
    return max(lo, bounds[0]), min(hi, bounds[1])


# ---------------------------------------------------------------------------
# temporal shapes: values in [0, 1], max exactly 1, mean exactly 1 - target


def _phased_shape(rng: np.random.Generator, n: int, target: float) -> np.ndarray:
    cycles = int(rng.integers(2, 7))
    cycle_len = max(2, n // cycles)
    hi_len = max(1, int(0.35 * cycle_len))
    hi_mask = np.zeros(n, dtype=bool)
    for start in range(0, n, cycle_len):
        hi_mask[start : start + hi_len] = True
    # keep enough low samples that the solved low level stays in [0, 1)
    n_hi_max = int(math.floor(n * (1.0 - target)))
    hi_positions = np.nonzero(hi_mask)[0]
    if hi_positions.size > n_hi_max:
        hi_mask[hi_positions[n_hi_max:]] = False
    n_hi = int(hi_mask.sum())
    if n_hi < 1 or n - n_hi < 1:
        raise InvalidInputError(f"series too short for a phased pattern: {n} samples")
    low = (n * (1.0 - target) - n_hi) / (n - n_hi)
    shape = np.full(n, low)
    shape[hi_mask] = 1.0
    return np.roll(shape, int(rng.integers(0, n)))


def _stochastic_shape(rng: np.random.Generator, n: int, target: float) -> np.ndarray:
    total = n * (1.0 - target)
    # burst count chosen so the off-burst mean stays small (<= 0.2)
    k = max(1, math.ceil((total - 0.2 * n) / 0.8))
    k = min(k, n - 1, int(math.floor(total)))
    if k < 1:
        raise InvalidInputError(f"series too short for a stochastic pattern: {n} samples")
    m = n - k
    residual = total - k
    shape = np.zeros(n)
    perm = rng.permutation(n)
    shape[perm[:k]] = 1.0
    if residual > 0:
        mean_low = residual / m
        raw = rng.uniform(0.2 * mean_low, 1.8 * mean_low, size=m)
        low = raw * (residual / raw.sum())
        if low.max() >= 0.9:
            raise InvalidInputError("stochastic jitter escaped its envelope")
        shape[perm[k:]] = low
    return shape


def _temporal_shape(rng: np.random.Generator, label: str, n: int, target: float) -> np.ndarray:
    if label == "constant":
        return np.ones(n)
    if label == "phased":
        return _phased_shape(rng, n, target)
    return _stochastic_shape(rng, n, target)


def _draw_temporal_target(rng: np.random.Generator, label: str, n: int) -> float:
    if label == "constant":
        return 0.0
    if label == "phased":
        return float(rng.uniform(0.25, 0.55))
    upper = min(0.93, 1.0 - 1.0 / n - 0.01)
    return float(rng.uniform(0.65, upper))


def _spatial_feasible(label: str, nodes: int) -> str:
    """Downgrade a spatial label that this node count cannot realize."""
    if nodes == 1 and label != "constant":
        return "constant"
    if label == "stochastic" and nodes < 4:
        return "phased"
    return label


def _draw_spatial_peaks(
    rng: np.random.Generator, label: str, nodes: int, peak: float
) -> tuple[np.ndarray, float]:
    """Per-node peaks realizing the drawn spatial target exactly."""
    if label == "constant" or nodes == 1:
        return np.full(nodes, peak), 0.0
    if label == "phased":
        upper = min(0.55, 1.0 - 1.0 / nodes - 0.02)
        target = float(rng.uniform(0.25, upper))
    else:
        upper = min(0.93, 1.0 - 1.0 / nodes - 0.02)
        target = float(rng.uniform(0.65, upper))
    low_factor = (nodes * (1.0 - target) - 1.0) / (nodes - 1)
    peaks = np.full(nodes, low_factor * peak)
    peaks[0] = peak
    return rng.permutation(peaks), target


# ---------------------------------------------------------------------------
# generation


@dataclass(frozen=True)
class ScenarioResult:
    out_dir: Path
    job_log: Path
    host_log: Path
    telemetry: Path
    manifest: Path
    ledger_path: Path
    ledger: dict


def _snap_down(value: int, step: int) -> int:
    return (value // step) * step


def _snap_up(value: int, step: int) -> int:
    return ((value + step - 1) // step) * step


@dataclass
class _JobDraw:
    job_id: str
    job_class: str
    nodes: int
    runtime: int
    submit: int
    gpu_active: int
    gpu_slots: np.ndarray
    labels: dict[str, tuple[str, str]]
    user: str
    project: str
    start: int = 0
    hosts: tuple[str, ...] = ()


def _ri_truth(series: np.ndarray) -> tuple[float, float]:
    """(temporal, spatial) from a (nodes, T) node-aggregated matrix.

    Constant rows and equal peaks short-circuit to exactly 0, mirroring the
    summarize-side convention (float summation of a constant row can leave
    1-ulp dust in the ratio).
    """
    peaks = series.max(axis=1)
    temporal = 0.0
    for row, peak in zip(series, peaks):
        if peak > 0 and peak != float(row.min()):
            temporal = max(temporal, 1.0 - float(row.sum()) / (row.size * float(peak)))
    global_peak = float(peaks.max())
    spatial = 0.0
    if global_peak > 0 and global_peak != float(peaks.min()):
        spatial = 1.0 - float(peaks.sum()) / (peaks.size * global_peak)
    return min(1.0, max(0.0, temporal)), min(1.0, max(0.0, spatial))


def generate(spec: ScenarioSpec, out_dir: str | Path) -> ScenarioResult:
    """Write one scenario's job log, host log, telemetry, dataset manifest,
    and ground-truth ledger. Byte-identical for a given spec."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    period = spec.period_seconds
    base = _snap_down(spec.base_epoch, period)

    class_names = sorted(name for name, f in spec.class_mix.items() if f > 0)
    class_p = np.array([spec.class_mix[name] for name in class_names])
    class_p = class_p / class_p.sum()
    pattern_names = sorted(spec.pattern_mix)
    pattern_p = np.array([spec.pattern_mix[name] for name in pattern_names])
    pattern_p = pattern_p / pattern_p.sum()

    # -- draw job attributes
    draws: list[_JobDraw] = []
    cursor = base
    for i in range(spec.jobs):
        cursor += int(rng.integers(spec.arrival_gap_range[0], spec.arrival_gap_range[1] + 1))
        name = str(rng.choice(class_names, p=class_p))
        lo, hi = _class_draw_range(name, spec.node_count_range)
        nodes = int(rng.integers(lo, hi + 1))
        runtime = _snap_down(
            int(rng.integers(spec.runtime_range[0], spec.runtime_range[1] + 1)), period
        )
        gpu_active = int(rng.integers(1, GPUS_PER_NODE + 1))
        gpu_slots = rng.permutation(GPUS_PER_NODE)[:gpu_active]
        labels: dict[str, tuple[str, str]] = {}
        for metric in METRICS:
            if spec.fixed_patterns and metric in spec.fixed_patterns:
                lt, ls = spec.fixed_patterns[metric]
            else:
                lt = str(rng.choice(pattern_names, p=pattern_p))
                ls = str(rng.choice(pattern_names, p=pattern_p))
            labels[metric] = (lt, _spatial_feasible(ls, nodes))
        draws.append(
            _JobDraw(
                job_id=f"J{i + 1:05d}",
                job_class=name,
                nodes=nodes,
                runtime=runtime,
                submit=cursor,
                gpu_active=gpu_active,
                gpu_slots=gpu_slots,
                labels=labels,
                user=f"u{int(rng.integers(0, 24)):03d}",
                project=f"p{int(rng.integers(0, 8)):02d}",
            )
        )

    # -- schedule on the host pool (first-free wins, bare-metal exclusive)
    host_names = np.array([f"n{i:04d}" for i in range(spec.hosts)])
    free = np.full(spec.hosts, base, dtype=np.int64)
    for draw in draws:
        order = np.argsort(free, kind="stable")[: draw.nodes]
        start = _snap_up(max(draw.submit, int(free[order].max())), period)
        draw.start = start
        draw.hosts = tuple(sorted(host_names[order]))
        free[order] = start + draw.runtime

    # -- materialize telemetry + ground truth
    ts_parts: list[np.ndarray] = []
    host_parts: list[np.ndarray] = []
    util_parts: list[np.ndarray] = []
    mem_parts: list[np.ndarray] = []
    alloc_parts: list[np.ndarray] = []
    power_parts: list[np.ndarray] = []

    jobs: list[JobRecord] = []
    assignments: list[HostAssignment] = []
    ledger_jobs: list[dict] = []
    watt_span = spec.tdp_watts - spec.idle_watts

    for draw in draws:
        n_nodes = draw.nodes
        t_count = draw.runtime // period
        ts_job = draw.start + period * np.arange(t_count, dtype=np.int64)

        node_metric: dict[str, np.ndarray] = {}
        gpu_util_block = np.zeros((n_nodes * t_count, GPUS_PER_NODE))
        gpu_mem_block = np.zeros_like(gpu_util_block)
        gpu_alloc_block = np.zeros_like(gpu_util_block)
        truths: dict[str, dict] = {}

        for metric in METRICS:
            lt, ls = draw.labels[metric]
            t_target = _draw_temporal_target(rng, lt, t_count)
            peak = float(rng.uniform(30.0, 95.0))
            peaks, _ = _draw_spatial_peaks(rng, ls, n_nodes, peak)
            per_node = np.empty((n_nodes, t_count))
            for n in range(n_nodes):
                shape = _temporal_shape(rng, lt, t_count, t_target)
                per_node[n] = np.round(peaks[n] * shape, _ROUND_DECIMALS)

            if metric == "load":
                flat = per_node.reshape(-1)
                for slot in draw.gpu_slots:
                    gpu_util_block[:, slot] = flat
                node_series = gpu_util_block.reshape(n_nodes, t_count, GPUS_PER_NODE).mean(axis=2)
            elif metric == "mem_util":
                flat = per_node.reshape(-1)
                for slot in range(GPUS_PER_NODE):
                    gpu_mem_block[:, slot] = flat
                node_series = per_node
            else:
                per_gpu_bytes = np.round(per_node / 100.0 * (NODE_MEM_CAPACITY_BYTES / GPUS_PER_NODE))
                flat = per_gpu_bytes.reshape(-1)
                for slot in range(GPUS_PER_NODE):
                    gpu_alloc_block[:, slot] = flat
                node_series = per_gpu_bytes * GPUS_PER_NODE / NODE_MEM_CAPACITY_BYTES * 100.0

            node_metric[metric] = node_series
            temporal, spatial = _ri_truth(node_series)
            t_cat = classify_ri(temporal)
            s_cat = classify_ri(spatial)
            if t_cat.value != lt or s_cat.value != ls:
                raise InvalidInputError(
                    f"{draw.job_id}/{metric}: generated pattern landed in "
                    f"({t_cat.value}, {s_cat.value}), wanted ({lt}, {ls})"
                )
            truths[metric] = {
                "temporal": {"value": temporal, "category": t_cat.value},
                "spatial": {"value": spatial, "category": s_cat.value},
            }

        gpu_power_block = np.round(
            spec.idle_watts + gpu_util_block / 100.0 * watt_span, _ROUND_DECIMALS
        )
        node_power = gpu_power_block.reshape(n_nodes, t_count, GPUS_PER_NODE).sum(axis=2)
        energy_kj = float(np.trapezoid(node_power, ts_job.astype(np.float64), axis=1).sum()) / 1000.0

        gpu_peaks = gpu_util_block.reshape(n_nodes, t_count, GPUS_PER_NODE).max(axis=1)
        truth_gpu_count = int((gpu_peaks > GPU_COUNT_UTIL_THRESHOLD).sum(axis=1).max())
        if truth_gpu_count != draw.gpu_active:
            raise InvalidInputError(
                f"{draw.job_id}: gpu_count ground truth {truth_gpu_count} != drawn {draw.gpu_active}"
            )

        end = draw.start + draw.runtime
        queue = draw.job_class if draw.job_class != "unclassified" else "debug"
        jobs.append(
            JobRecord(
                job_id=draw.job_id,
                user=draw.user,
                project=draw.project,
                queue=queue,
                submit_time=draw.submit,
                start_time=draw.start,
                end_time=end,
                requested_nodes=n_nodes,
            )
        )
        assignments.extend(HostAssignment(job_id=draw.job_id, host=h) for h in draw.hosts)

        host_arr = np.repeat(np.array(draw.hosts), t_count)
        ts_parts.append(np.tile(ts_job, n_nodes))
        host_parts.append(host_arr)
        util_parts.append(gpu_util_block)
        mem_parts.append(gpu_mem_block)
        alloc_parts.append(gpu_alloc_block)
        power_parts.append(gpu_power_block)

        node_hours = n_nodes * draw.runtime / 3600.0
        ledger_jobs.append(
            {
                "job_id": draw.job_id,
                "job_class": draw.job_class,
                "num_nodes": n_nodes,
                "runtime_seconds": draw.runtime,
                "node_hours": node_hours,
                "gpu_count": draw.gpu_active,
                "start_time": draw.start,
                "end_time": end,
                "hosts": list(draw.hosts),
                "ri": truths,
                "total_energy_kj": energy_kj,
            }
        )

    # -- idle padding between and after jobs on each host
    idle_rows = 0
    if spec.idle_gap_samples > 0:
        by_host: dict[str, list[tuple[int, int]]] = {}
        for draw in draws:
            for host in draw.hosts:
                by_host.setdefault(host, []).append((draw.start, draw.start + draw.runtime))
        idle_ts: list[int] = []
        idle_hosts: list[str] = []
        for host, intervals in sorted(by_host.items()):
            intervals.sort()
            for (_, prev_end), nxt in zip(intervals, intervals[1:] + [(None, None)]):
                limit = nxt[0] if nxt[0] is not None else prev_end + spec.idle_gap_samples * period
                t = prev_end
                added = 0
                while t < limit and added < spec.idle_gap_samples:
                    idle_ts.append(t)
                    idle_hosts.append(host)
                    t += period
                    added += 1
        idle_rows = len(idle_ts)
        if idle_rows:
            ts_parts.append(np.array(idle_ts, dtype=np.int64))
            host_parts.append(np.array(idle_hosts))
            zeros = np.zeros((idle_rows, GPUS_PER_NODE))
            util_parts.append(zeros)
            mem_parts.append(zeros.copy())
            alloc_parts.append(zeros.copy())
            power_parts.append(np.full((idle_rows, GPUS_PER_NODE), spec.idle_watts))

    # job-major row order (not globally time-sorted, like real per-node
    # streams); fusion canonicalizes chunk order itself
    frame = TelemetryFrame(
        timestamps=np.concatenate(ts_parts),
        hosts=np.concatenate(host_parts),
        util=np.concatenate(util_parts),
        mem_util=np.concatenate(mem_parts),
        alloc=np.concatenate(alloc_parts),
        power=np.concatenate(power_parts),
    )

    # -- write artifacts
    job_log = out_dir / "job_log.csv"
    host_log = out_dir / "host_log.csv"
    telemetry = out_dir / ("telemetry.csv.gz" if spec.compress_telemetry else "telemetry.csv")
    manifest_path = out_dir / "manifest.json"
    ledger_path = out_dir / "ledger.json"

    write_job_log(jobs, job_log)
    write_host_log(assignments, host_log)
    write_telemetry(frame, telemetry)
    t_min = int(frame.timestamps.min())
    t_max = int(frame.timestamps.max())
    save_manifest(
        DatasetManifest(
            job_logs=(job_log,),
            host_logs=(host_log,),
            telemetry=(telemetry,),
            time_range=(t_min, t_max + period),
        ),
        manifest_path,
    )

    class_totals: dict[str, dict[str, float]] = {}
    for entry in ledger_jobs:
        bucket = class_totals.setdefault(
            entry["job_class"], {"jobs": 0, "node_hours": 0.0, "total_energy_kj": 0.0}
        )
        bucket["jobs"] += 1
        bucket["node_hours"] += entry["node_hours"]
        bucket["total_energy_kj"] += entry["total_energy_kj"]

    ledger = {
        "spec": _spec_to_json(spec),
        "jobs": ledger_jobs,
        "class_totals": class_totals,
        "totals": {
            "jobs": len(ledger_jobs),
            "node_hours": sum(e["node_hours"] for e in ledger_jobs),
            "total_energy_kj": sum(e["total_energy_kj"] for e in ledger_jobs),
            "telemetry_rows": len(frame),
            "idle_rows": idle_rows,
        },
    }
    ledger_path.write_text(json.dumps(ledger, indent=2) + "\n", encoding="utf-8")
    logger.info(
        "event=synth.done jobs=%d rows=%d idle_rows=%d out=%s",
        len(jobs),
        len(frame),
        idle_rows,
        out_dir,
    )
    return ScenarioResult(
        out_dir=out_dir,
        job_log=job_log,
        host_log=host_log,
        telemetry=telemetry,
        manifest=manifest_path,
        ledger_path=ledger_path,
        ledger=ledger,
    )


def _spec_to_json(spec: ScenarioSpec) -> dict:
    data = asdict(spec)
    data["class_mix"] = dict(spec.class_mix)
    data["pattern_mix"] = dict(spec.pattern_mix)
    if spec.fixed_patterns is not None:
        data["fixed_patterns"] = {m: list(v) for m, v in spec.fixed_patterns.items()}
    return data


# ---------------------------------------------------------------------------
# scenario spec files (flat key=value, same style as the column map)


def _parse_mix(text: str) -> dict[str, float]:
    out: dict[str, float] = {}
    for part in text.split(","):
        name, _, value = part.strip().partition(":")
        out[name.strip()] = float(value)
    return out


def _parse_int_range(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition(":")
    return int(lo), int(hi)


def _parse_fixed_patterns(text: str) -> dict[str, tuple[str, str]]:
    out: dict[str, tuple[str, str]] = {}
    for part in text.split(","):
        metric, _, labels = part.strip().partition(":")
        temporal, _, spatial = labels.partition("/")
        out[metric.strip()] = (temporal.strip(), spatial.strip())
    return out


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


_SPEC_PARSERS = {
    "seed": int,
    "jobs": int,
    "class_mix": _parse_mix,
    "pattern_mix": _parse_mix,
    "fixed_patterns": _parse_fixed_patterns,
    "period_seconds": int,
    "node_count_range": _parse_int_range,
    "runtime_range": _parse_int_range,
    "idle_watts": float,
    "tdp_watts": float,
    "hosts": int,
    "base_epoch": int,
    "arrival_gap_range": _parse_int_range,
    "idle_gap_samples": int,
    "compress_telemetry": _parse_bool,
}


def scenario_from_items(
    items: Mapping[str, str], base: ScenarioSpec | None = None
) -> ScenarioSpec:
    """Build a spec from flat key=value items, overriding ``base`` (defaults)."""
    kwargs = {}
    for key, text in items.items():
        parser = _SPEC_PARSERS.get(key)
        if parser is None:
            raise InvalidInputError(
                f"unknown scenario key {key!r}; known keys: {sorted(_SPEC_PARSERS)}"
            )
        try:
            kwargs[key] = parser(text)
        except (ValueError, TypeError) as exc:
            raise InvalidInputError(f"bad value for scenario key {key}: {text!r} ({exc})") from None
    if base is None:
        return ScenarioSpec(**kwargs)
    return replace(base, **kwargs)


def load_scenario_spec(path: str | Path, base: ScenarioSpec | None = None) -> ScenarioSpec:
    items: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidInputError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        items[key.strip()] = value.strip()
    return scenario_from_items(items, base=base)


# ---------------------------------------------------------------------------
# oracles


def oracle_join(
    samples: TelemetryFrame | Iterable,
    jobs: Sequence[JobRecord],
    assignments: Sequence[HostAssignment],
) -> list[str | None]:
    """O(n*m) reference tagger: scan every sample against every
    (job, host, interval) with half-open [start, end) semantics."""
    by_id = {j.job_id: j for j in jobs}
    dangling = sorted({a.job_id for a in assignments if a.job_id not in by_id})
    if dangling:
        raise FusionError(
            "host assignments reference unknown job ids: " + ", ".join(dangling[:10])
        )
    intervals = [
        (a.host, by_id[a.job_id].start_time, by_id[a.job_id].end_time, a.job_id)
        for a in assignments
    ]
    for i, (host1, s1, e1, j1) in enumerate(intervals):
        for host2, s2, e2, j2 in intervals[i + 1 :]:
            if host1 == host2 and s2 < e1 and s1 < e2:
                raise FusionError(f"overlapping job intervals: host {host1}: jobs {j1} and {j2} overlap")

    if isinstance(samples, TelemetryFrame):
        pairs = list(zip(samples.timestamps.tolist(), samples.hosts.tolist()))
    else:
        pairs = [(s.timestamp, s.host) for s in samples]

    tags: list[str | None] = []
    for t, host in pairs:
        found = None
        for ihost, start, end, job_id in intervals:
            if ihost == host and start <= t < end:
                found = job_id
                break
        tags.append(found)
    return tags


def oracle_ri(series: Sequence[Sequence[float]], mode: str) -> float:
    """Straightforward nested-loop evaluation of the imbalance definitions."""
    if mode not in ("temporal", "spatial"):
        raise InvalidInputError(f"mode must be temporal or spatial, got {mode!r}")
    rows = [list(map(float, row)) for row in series]
    if not rows or any(len(row) == 0 for row in rows):
        raise InvalidInputError("oracle_ri requires at least one non-empty series")

    if mode == "temporal":
        worst = 0.0
        for row in rows:
            peak = row[0]
            for v in row:
                if v > peak:
                    peak = v
            total = 0.0
            denominator = 0.0
            for v in row:
                total += v
                denominator += peak
            if denominator > 0:
                term = 1.0 - total / denominator
                if term > worst:
                    worst = term
        return worst

    peaks = []
    for row in rows:
        peak = row[0]
        for v in row:
            if v > peak:
                peak = v
        peaks.append(peak)
    global_peak = peaks[0]
    for p in peaks:
        if p > global_peak:
            global_peak = p
    numerator = 0.0
    denominator = 0.0
    for p in peaks:
        numerator += p
        denominator += global_peak
    if denominator == 0:
        return 0.0
    return 1.0 - numerator / denominator


def oracle_descriptive_stats(values: Sequence[float]) -> dict[str, float]:
    """Two-pass pure-Python reference for min/max/mean/population stddev."""
    data = [float(v) for v in values]
    if not data:
        raise InvalidInputError("oracle_descriptive_stats requires a non-empty sequence")
    mean = math.fsum(data) / len(data)
    variance = math.fsum((v - mean) ** 2 for v in data) / len(data)
    return {
        "min": min(data),
        "max": max(data),
        "mean": mean,
        "std": math.sqrt(variance),
    }


def oracle_pearson(x: Sequence[float], y: Sequence[float]) -> float | None:
    """Two-pass pure-Python Pearson r; None when undefined."""
    xs = [float(v) for v in x]
    ys = [float(v) for v in y]
    if len(xs) != len(ys):
        raise InvalidInputError("sequences must have equal length")
    if len(xs) < 2:
        return None
    mx = math.fsum(xs) / len(xs)
    my = math.fsum(ys) / len(ys)
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(xs, ys))
    sxx = math.fsum((a - mx) ** 2 for a in xs)
    syy = math.fsum((b - my) ** 2 for b in ys)
    if sxx == 0.0 or syy == 0.0:
        return None
    return sxy / math.sqrt(sxx * syy)
