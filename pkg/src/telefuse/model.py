"""Domain types shared by the whole pipeline.

Node-level aggregation rules (used everywhere downstream):

* node utilization / node memory utilization = arithmetic mean of the four
  per-GPU percentages, keeping the [0, 100] range;
* node allocation percent = summed per-GPU allocated bytes over the 160 GiB
  node capacity, times 100;
* node power = sum of the four per-GPU draws, in watts.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import InvalidInputError

GPUS_PER_NODE = 4
GPU_MEM_CAPACITY_BYTES = 40 * 2**30
NODE_MEM_CAPACITY_BYTES = GPUS_PER_NODE * GPU_MEM_CAPACITY_BYTES

# A GPU counts toward gpu_count when its peak utilization over the job
# exceeds this percentage (strictly greater).
GPU_COUNT_UTIL_THRESHOLD = 2.0

# Imbalance category boundaries; each boundary belongs to the lower category.
RI_CONSTANT_MAX = 0.2
RI_PHASED_MAX = 0.6


class JobClass(enum.Enum):
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"
    UNCLASSIFIED = "unclassified"


#: Inclusive node-count ranges per class; disjoint and exhaustive over [10, 496].
CLASS_NODE_RANGES: dict[JobClass, tuple[int, int]] = {
    JobClass.SMALL: (10, 24),
    JobClass.MEDIUM: (25, 99),
    JobClass.LARGE: (100, 496),
}


def classify_job(num_nodes: int) -> JobClass:
    """Map an allocated node count to its job class.

    Counts outside every class range map to UNCLASSIFIED rather than the
    nearest class; silent reassignment would distort class statistics.
    """
    if num_nodes < 1:
        raise InvalidInputError(f"num_nodes must be >= 1, got {num_nodes}")
    for job_class, (lo, hi) in CLASS_NODE_RANGES.items():
        if lo <= num_nodes <= hi:
            return job_class
    return JobClass.UNCLASSIFIED


class RICategory(enum.Enum):
    CONSTANT = "constant"
    PHASED = "phased"
    STOCHASTIC = "stochastic"


def classify_ri(value: float) -> RICategory:
    """Classify an imbalance coefficient: constant [0, 0.2], phased (0.2, 0.6],
    stochastic (0.6, 1]. Boundaries belong to the lower category."""
    if math.isnan(value) or value < 0.0 or value > 1.0:
        raise InvalidInputError(f"RI value must lie in [0, 1], got {value!r}")
    if value <= RI_CONSTANT_MAX:
        return RICategory.CONSTANT
    if value <= RI_PHASED_MAX:
        return RICategory.PHASED
    return RICategory.STOCHASTIC


@dataclass(frozen=True)
class RIResult:
    """An imbalance coefficient in [0, 1] plus its category label."""

    value: float
    category: RICategory

    @classmethod
    def from_value(cls, value: float) -> "RIResult":
        return cls(value=value, category=classify_ri(value))


@dataclass(frozen=True)
class JobRecord:
    """Scheduler-side job metadata, one record per job.

    Timestamps are UTC epoch seconds; sub-second precision is truncated
    upstream (5 s sampling makes finer precision meaningless).
    """

    job_id: str
    user: str
    project: str
    queue: str
    submit_time: int
    start_time: int
    end_time: int
    requested_nodes: int

    def __post_init__(self) -> None:
        if self.end_time < self.start_time:
            raise InvalidInputError(
                f"job {self.job_id}: negative runtime (end {self.end_time} < start {self.start_time})"
            )
        if self.requested_nodes < 1:
            raise InvalidInputError(
                f"job {self.job_id}: requested_nodes must be >= 1, got {self.requested_nodes}"
            )

    @property
    def runtime_seconds(self) -> int:
        return self.end_time - self.start_time

    @property
    def job_class(self) -> JobClass:
        return classify_job(self.requested_nodes)


@dataclass(frozen=True)
class HostAssignment:
    """One (job, node) placement from the scheduler's host log."""

    job_id: str
    host: str


def _check_percent(name: str, values: tuple[float, ...]) -> None:
    for v in values:
        if math.isnan(v) or v < 0.0 or v > 100.0:
            raise InvalidInputError(f"{name} out of [0, 100]: {v!r}")


@dataclass(frozen=True)
class TelemetrySample:
    """One node x one timeslice of per-GPU metrics (4 GPUs per node)."""

    timestamp: int
    host: str
    gpu_util: tuple[float, float, float, float]
    gpu_mem_util: tuple[float, float, float, float]
    gpu_mem_alloc: tuple[float, float, float, float]
    gpu_power: tuple[float, float, float, float]

    def __post_init__(self) -> None:
        for name in ("gpu_util", "gpu_mem_util", "gpu_mem_alloc", "gpu_power"):
            if len(getattr(self, name)) != GPUS_PER_NODE:
                raise InvalidInputError(f"{name} must have {GPUS_PER_NODE} entries")
        _check_percent("gpu_util", self.gpu_util)
        _check_percent("gpu_mem_util", self.gpu_mem_util)
        for v in self.gpu_mem_alloc:
            if math.isnan(v) or v < 0.0 or v > GPU_MEM_CAPACITY_BYTES:
                raise InvalidInputError(f"gpu_mem_alloc out of [0, 40 GiB]: {v!r}")
        for v in self.gpu_power:
            if not math.isfinite(v) or v < 0.0:
                raise InvalidInputError(f"gpu_power must be finite and >= 0: {v!r}")

    @property
    def node_util(self) -> float:
        return sum(self.gpu_util) / GPUS_PER_NODE

    @property
    def node_mem_util(self) -> float:
        return sum(self.gpu_mem_util) / GPUS_PER_NODE

    @property
    def node_alloc_pct(self) -> float:
        return sum(self.gpu_mem_alloc) / NODE_MEM_CAPACITY_BYTES * 100.0

    @property
    def node_power(self) -> float:
        return sum(self.gpu_power)


@dataclass(frozen=True, eq=False)
class NodeSeries:
    """Per-node time series of node-aggregated metrics for one job.

    ``gpu_util`` keeps the per-GPU resolution (T x 4) needed by gpu_count;
    everything else is node-aggregated per the module rules.
    """

    job_id: str
    host: str
    timestamps: np.ndarray
    node_util: np.ndarray
    node_mem_util: np.ndarray
    node_alloc_pct: np.ndarray
    node_power: np.ndarray
    gpu_util: np.ndarray

    def __post_init__(self) -> None:
        ts = np.asarray(self.timestamps, dtype=np.int64)
        object.__setattr__(self, "timestamps", ts)
        n = ts.size
        for name in ("node_util", "node_mem_util", "node_alloc_pct", "node_power"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (n,):
                raise InvalidInputError(f"{name} length {arr.shape} != {n} timestamps")
            object.__setattr__(self, name, arr)
        gu = np.asarray(self.gpu_util, dtype=np.float64)
        if gu.shape != (n, GPUS_PER_NODE):
            raise InvalidInputError(f"gpu_util must be (T, {GPUS_PER_NODE}), got {gu.shape}")
        object.__setattr__(self, "gpu_util", gu)
        if n > 1 and not np.all(np.diff(ts) > 0):
            raise InvalidInputError(f"host {self.host}: timestamps must be strictly increasing")

    def __len__(self) -> int:
        return int(self.timestamps.size)


#: Coverage labels for a job's telemetry: every assigned host observed,
#: some observed, or none.
COVERAGE_COMPLETE = "complete"
COVERAGE_PARTIAL = "partial"
COVERAGE_NONE = "none"


@dataclass(frozen=True)
class JobSummary:
    """One condensed row per job: derived metrics, descriptive stats, and the
    six resource-imbalance coefficients.

    Metric fields are None for jobs with zero telemetry coverage (the row is
    still emitted, flagged via ``coverage``).
    """

    job_id: str
    job_class: JobClass
    num_nodes: int
    runtime_seconds: int
    node_hours: float
    hosts_assigned: int
    hosts_observed: int
    coverage: str

    gpu_count: int | None = None
    total_load_mean: float | None = None
    total_mem_mean: float | None = None
    total_alloc_pct_mean: float | None = None
    max_alloc_pct: float | None = None
    total_power_mean: float | None = None
    total_energy: float | None = None

    ri_temporal_load: RIResult | None = None
    ri_spatial_load: RIResult | None = None
    ri_temporal_mem_util: RIResult | None = None
    ri_spatial_mem_util: RIResult | None = None
    ri_temporal_mem_alloc: RIResult | None = None
    ri_spatial_mem_alloc: RIResult | None = None

    # Job-level descriptive stats, pooled over every sample of every node.
    load_min: float | None = None
    load_max: float | None = None
    load_mean: float | None = None
    load_std: float | None = None
    mem_util_min: float | None = None
    mem_util_max: float | None = None
    mem_util_mean: float | None = None
    mem_util_std: float | None = None
    alloc_pct_min: float | None = None
    alloc_pct_max: float | None = None
    alloc_pct_mean: float | None = None
    alloc_pct_std: float | None = None
    power_min: float | None = None
    power_max: float | None = None
    power_mean: float | None = None
    power_std: float | None = None


#: RI metric selectors -> NodeSeries attribute carrying the series.
RI_METRICS: dict[str, str] = {
    "load": "node_util",
    "mem_util": "node_mem_util",
    "mem_alloc": "node_alloc_pct",
}


def summary_field_names() -> tuple[str, ...]:
    return tuple(f.name for f in fields(JobSummary))
