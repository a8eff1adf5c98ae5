"""telefuse: fuse batch-scheduler job logs with per-node GPU telemetry and
condense them into per-job statistical summaries and report tables."""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    JobClass,
    JobRecord,
    JobSummary,
    HostAssignment,
    NodeSeries,
    RICategory,
    RIResult,
    TelemetrySample,
    classify_job,
    classify_ri,
)
