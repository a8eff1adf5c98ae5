"""Parse and validate the three raw log families into typed records.

Input format is UTF-8 CSV with a header row. Timestamps are accepted as
ISO-8601 or integer epoch seconds; sub-second precision is truncated. A
sidecar column-mapping config (flat ``canonical=site_name`` lines) adapts
site-specific exports to the canonical schemas below.

Malformed rows are never silently dropped: every parser returns a reject
channel with row numbers and reasons, and ``rows_accepted + rejects ==
rows_total`` always holds.

Job and host logs are small scheduler exports and get per-row tolerant
parsing (including ragged rows) via the csv module. Telemetry is bulk
machine-generated data read with polars (whose float parsing and formatting
are exactly round-tripping); value-level problems become row rejects, but a
structurally broken CSV (ragged lines) raises SchemaError for the file.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterator, Sequence

import numpy as np
import polars as pl

from .errors import InvalidInputError, SchemaError
from .model import (
    GPU_MEM_CAPACITY_BYTES,
    GPUS_PER_NODE,
    HostAssignment,
    JobRecord,
    TelemetrySample,
)

logger = logging.getLogger(__name__)

JOB_LOG_COLUMNS = (
    "job_id",
    "user",
    "project",
    "queue",
    "submit_time",
    "start_time",
    "end_time",
    "requested_nodes",
)
HOST_LOG_COLUMNS = ("job_id", "host")

TELEMETRY_METRIC_BASES = ("gpu_util", "gpu_mem_util", "gpu_mem_alloc", "gpu_power")


def telemetry_columns() -> tuple[str, ...]:
    cols = ["timestamp", "host"]
    for base in TELEMETRY_METRIC_BASES:
        cols.extend(f"{base}_{i}" for i in range(GPUS_PER_NODE))
    return tuple(cols)


TELEMETRY_COLUMNS = telemetry_columns()


@dataclass(frozen=True)
class RejectedRow:
    """One rejected input row: 1-based file line number plus the reason."""

    row: int
    reason: str


@dataclass
class ParseResult:
    """Outcome of parsing one input file.

    ``rows_accepted`` counts parseable rows, including duplicates that were
    collapsed into an earlier record, so conservation holds:
    ``rows_accepted + len(rejects) == rows_total``.
    """

    records: Any
    rejects: list[RejectedRow] = field(default_factory=list)
    rows_total: int = 0
    rows_accepted: int = 0
    duplicates: int = 0


def parse_timestamp(text: str) -> int:
    """Parse ISO-8601 or epoch-seconds text to UTC epoch seconds (truncated)."""
    text = text.strip()
    if not text:
        raise ValueError("empty timestamp")
    try:
        return int(float(text))
    except ValueError:
        pass
    iso = text.replace("Z", "+00:00") if text.endswith("Z") else text
    dt = datetime.fromisoformat(iso)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_timestamp(epoch: int) -> str:
    return datetime.fromtimestamp(epoch, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def load_column_map(path: str | Path) -> dict[str, str]:
    """Load a flat ``canonical=site_name`` column-mapping config."""
    mapping: dict[str, str] = {}
    known = set(JOB_LOG_COLUMNS) | set(HOST_LOG_COLUMNS) | set(TELEMETRY_COLUMNS)
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise SchemaError(f"{path}:{lineno}: expected canonical=site_name, got {line!r}")
        canonical, actual = (part.strip() for part in line.split("=", 1))
        if canonical not in known:
            raise SchemaError(f"{path}:{lineno}: unknown canonical column {canonical!r}")
        mapping[canonical] = actual
    return mapping


def _rename_header(header: Sequence[str], column_map: dict[str, str] | None) -> list[str]:
    if not column_map:
        return list(header)
    reverse = {actual: canonical for canonical, actual in column_map.items()}
    return [reverse.get(name, name) for name in header]


def _open_text(source: Any) -> io.TextIOBase:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline="")
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(source.decode("utf-8"))
    return source


# ---------------------------------------------------------------------------
# job log


def parse_job_log(source: Any, column_map: dict[str, str] | None = None) -> ParseResult:
    """Parse a scheduler job log into JobRecords plus a reject channel."""
    fh = _open_text(source)
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("job log is empty (no header row)") from None
    header = _rename_header(header, column_map)
    missing = [c for c in JOB_LOG_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"job log missing required column: {missing[0]}")
    idx = {name: header.index(name) for name in JOB_LOG_COLUMNS}

    records: list[JobRecord] = []
    rejects: list[RejectedRow] = []
    seen: set[str] = set()
    total = 0
    for lineno, row in enumerate(reader, 2):
        total += 1
        if len(row) != len(header):
            rejects.append(RejectedRow(lineno, "wrong field count"))
            continue
        raw = {name: row[idx[name]].strip() for name in JOB_LOG_COLUMNS}
        if any(not raw[name] for name in JOB_LOG_COLUMNS):
            rejects.append(RejectedRow(lineno, "missing value"))
            continue
        try:
            submit = parse_timestamp(raw["submit_time"])
            start = parse_timestamp(raw["start_time"])
            end = parse_timestamp(raw["end_time"])
        except ValueError:
            rejects.append(RejectedRow(lineno, "unparseable timestamp"))
            continue
        if end < start:
            rejects.append(RejectedRow(lineno, "negative runtime"))
            continue
        try:
            nodes = int(raw["requested_nodes"])
        except ValueError:
            rejects.append(RejectedRow(lineno, "non-integer node count"))
            continue
        if nodes < 1:
            rejects.append(RejectedRow(lineno, "node count < 1"))
            continue
        if raw["job_id"] in seen:
            rejects.append(RejectedRow(lineno, "duplicate job_id"))
            continue
        seen.add(raw["job_id"])
        records.append(
            JobRecord(
                job_id=raw["job_id"],
                user=raw["user"],
                project=raw["project"],
                queue=raw["queue"],
                submit_time=submit,
                start_time=start,
                end_time=end,
                requested_nodes=nodes,
            )
        )
    return ParseResult(
        records=records,
        rejects=rejects,
        rows_total=total,
        rows_accepted=total - len(rejects),
    )


def write_job_log(records: Sequence[JobRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(JOB_LOG_COLUMNS)
        for r in records:
            writer.writerow(
                [
                    r.job_id,
                    r.user,
                    r.project,
                    r.queue,
                    r.submit_time,
                    r.start_time,
                    r.end_time,
                    r.requested_nodes,
                ]
            )


# ---------------------------------------------------------------------------
# host log


def parse_host_log(source: Any, column_map: dict[str, str] | None = None) -> ParseResult:
    """Parse the job-to-node mapping; duplicate (job_id, host) pairs collapse
    to one assignment and bump the duplicates counter."""
    fh = _open_text(source)
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("host log is empty (no header row)") from None
    header = _rename_header(header, column_map)
    missing = [c for c in HOST_LOG_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"host log missing required column: {missing[0]}")
    idx = {name: header.index(name) for name in HOST_LOG_COLUMNS}

    records: list[HostAssignment] = []
    rejects: list[RejectedRow] = []
    seen: set[tuple[str, str]] = set()
    duplicates = 0
    total = 0
    for lineno, row in enumerate(reader, 2):
        total += 1
        if len(row) != len(header):
            rejects.append(RejectedRow(lineno, "wrong field count"))
            continue
        job_id = row[idx["job_id"]].strip()
        host = row[idx["host"]].strip()
        if not job_id or not host:
            rejects.append(RejectedRow(lineno, "missing value"))
            continue
        key = (job_id, host)
        if key in seen:
            duplicates += 1
            continue
        seen.add(key)
        records.append(HostAssignment(job_id=job_id, host=host))
    if duplicates:
        logger.warning("event=host_log.duplicates count=%d", duplicates)
    return ParseResult(
        records=records,
        rejects=rejects,
        rows_total=total,
        rows_accepted=total - len(rejects),
        duplicates=duplicates,
    )


def write_host_log(records: Sequence[HostAssignment], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HOST_LOG_COLUMNS)
        for r in records:
            writer.writerow([r.job_id, r.host])


# ---------------------------------------------------------------------------
# telemetry


@dataclass(frozen=True, eq=False)
class TelemetryFrame:
    """Columnar store for telemetry samples (numpy-backed).

    Behaves as a sequence of TelemetrySample for the object-level API while
    keeping bulk operations vectorized. Metric arrays are (N, 4).
    """

    timestamps: np.ndarray
    hosts: np.ndarray
    util: np.ndarray
    mem_util: np.ndarray
    alloc: np.ndarray
    power: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "timestamps", np.asarray(self.timestamps, dtype=np.int64))
        object.__setattr__(self, "hosts", np.asarray(self.hosts, dtype=np.str_))
        n = self.timestamps.size
        for name in ("util", "mem_util", "alloc", "power"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (n, GPUS_PER_NODE):
                raise InvalidInputError(f"{name} must be (N, {GPUS_PER_NODE}), got {arr.shape}")
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return int(self.timestamps.size)

    def sample(self, i: int) -> TelemetrySample:
        return TelemetrySample(
            timestamp=int(self.timestamps[i]),
            host=str(self.hosts[i]),
            gpu_util=tuple(self.util[i]),
            gpu_mem_util=tuple(self.mem_util[i]),
            gpu_mem_alloc=tuple(self.alloc[i]),
            gpu_power=tuple(self.power[i]),
        )

    def __iter__(self) -> Iterator[TelemetrySample]:
        return (self.sample(i) for i in range(len(self)))

    def select(self, index: np.ndarray) -> "TelemetryFrame":
        return TelemetryFrame(
            timestamps=self.timestamps[index],
            hosts=self.hosts[index],
            util=self.util[index],
            mem_util=self.mem_util[index],
            alloc=self.alloc[index],
            power=self.power[index],
        )

    def sort_canonical(self) -> "TelemetryFrame":
        """Sort by (timestamp, host) — the canonical on-disk order."""
        order = np.argsort(self.hosts, kind="stable")
        order = order[np.argsort(self.timestamps[order], kind="stable")]
        return self.select(order)

    def equals(self, other: "TelemetryFrame") -> bool:
        return (
            np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.hosts, other.hosts)
            and np.array_equal(self.util, other.util)
            and np.array_equal(self.mem_util, other.mem_util)
            and np.array_equal(self.alloc, other.alloc)
            and np.array_equal(self.power, other.power)
        )

    @classmethod
    def empty(cls) -> "TelemetryFrame":
        z = np.zeros((0, GPUS_PER_NODE))
        return cls(
            timestamps=np.zeros(0, dtype=np.int64),
            hosts=np.zeros(0, dtype=np.str_),
            util=z,
            mem_util=z.copy(),
            alloc=z.copy(),
            power=z.copy(),
        )

    @classmethod
    def concat(cls, frames: Sequence["TelemetryFrame"]) -> "TelemetryFrame":
        frames = [f for f in frames if len(f)]
        if not frames:
            return cls.empty()
        return cls(
            timestamps=np.concatenate([f.timestamps for f in frames]),
            hosts=np.concatenate([f.hosts for f in frames]),
            util=np.concatenate([f.util for f in frames]),
            mem_util=np.concatenate([f.mem_util for f in frames]),
            alloc=np.concatenate([f.alloc for f in frames]),
            power=np.concatenate([f.power for f in frames]),
        )

    @classmethod
    def from_samples(cls, samples: Sequence[TelemetrySample]) -> "TelemetryFrame":
        if not samples:
            return cls.empty()
        return cls(
            timestamps=np.array([s.timestamp for s in samples], dtype=np.int64),
            hosts=np.array([s.host for s in samples]),
            util=np.array([s.gpu_util for s in samples]),
            mem_util=np.array([s.gpu_mem_util for s in samples]),
            alloc=np.array([s.gpu_mem_alloc for s in samples]),
            power=np.array([s.gpu_power for s in samples]),
        )

    def to_polars(self) -> pl.DataFrame:
        data: dict[str, Any] = {
            "timestamp": self.timestamps,
            "host": self.hosts.astype(object),
        }
        for base, arr in zip(TELEMETRY_METRIC_BASES, (self.util, self.mem_util, self.alloc, self.power)):
            for i in range(GPUS_PER_NODE):
                data[f"{base}_{i}"] = arr[:, i]
        return pl.DataFrame(data, schema_overrides={"host": pl.Utf8})


def _coerce_timestamps(col: pl.Series) -> np.ndarray:
    """Timestamps to int64 epoch seconds; unparseable entries become INT64_MIN."""
    sentinel = np.iinfo(np.int64).min
    out = np.full(len(col), sentinel, dtype=np.int64)
    text = col.cast(pl.Utf8).str.strip_chars()
    numeric = text.cast(pl.Float64, strict=False).to_numpy()
    ok = np.isfinite(numeric)
    out[ok] = np.floor(numeric[ok]).astype(np.int64)
    rest = np.nonzero(~ok & (text.fill_null("") != "").to_numpy())[0]
    for i in rest.tolist():  # rare path: ISO-8601 timestamps
        try:
            out[i] = parse_timestamp(text[i])
        except ValueError:
            pass
    return out


def parse_telemetry(source: Any, column_map: dict[str, str] | None = None) -> ParseResult:
    """Parse telemetry CSV into a TelemetryFrame plus a reject channel.

    Out-of-range percents are rejected rows, never clamped.
    """
    cmap = column_map or {}
    overrides: dict[str, Any] = {
        cmap.get("timestamp", "timestamp"): pl.Utf8,
        cmap.get("host", "host"): pl.Utf8,
    }
    for name in TELEMETRY_COLUMNS[2:]:
        overrides[cmap.get(name, name)] = pl.Float64
    if isinstance(source, io.StringIO):
        source = io.BytesIO(source.getvalue().encode("utf-8"))
    try:
        df = pl.read_csv(
            source,
            schema_overrides=overrides,
            missing_utf8_is_empty_string=True,
            ignore_errors=True,
            infer_schema_length=10000,
        )
    except pl.exceptions.NoDataError:
        raise SchemaError("telemetry file is empty (no header row)") from None
    except pl.exceptions.ComputeError as exc:
        raise SchemaError(f"telemetry file is structurally malformed: {exc}") from None
    if column_map:
        reverse = {actual: canonical for canonical, actual in column_map.items()}
        df = df.rename({k: v for k, v in reverse.items() if k in df.columns})
    missing = [c for c in TELEMETRY_COLUMNS if c not in df.columns]
    if missing:
        raise SchemaError(f"telemetry missing required column: {missing[0]}")

    n = len(df)
    reasons = np.full(n, None, dtype=object)

    def flag(mask: np.ndarray, reason: str) -> None:
        fresh = mask & (reasons == None)  # noqa: E711  (elementwise on object array)
        reasons[fresh] = reason

    ts = _coerce_timestamps(df["timestamp"])
    flag(ts == np.iinfo(np.int64).min, "unparseable timestamp")

    hosts = df["host"].fill_null("").to_numpy()
    flag(hosts == "", "missing host")

    metrics: dict[str, np.ndarray] = {}
    for base in TELEMETRY_METRIC_BASES:
        cols = []
        for i in range(GPUS_PER_NODE):
            col = df[f"{base}_{i}"]
            if col.dtype != pl.Float64:
                col = col.cast(pl.Utf8).cast(pl.Float64, strict=False)
            cols.append(col.to_numpy())
        metrics[base] = np.column_stack(cols)

    for base in TELEMETRY_METRIC_BASES:
        flag((~np.isfinite(metrics[base])).any(axis=1), f"missing or non-numeric {base}")
    for base in ("gpu_util", "gpu_mem_util"):
        vals = metrics[base]
        flag(((vals < 0.0) | (vals > 100.0)).any(axis=1), "percent out of range")
    flag(
        ((metrics["gpu_mem_alloc"] < 0.0) | (metrics["gpu_mem_alloc"] > GPU_MEM_CAPACITY_BYTES)).any(axis=1),
        "allocation out of range",
    )
    flag((metrics["gpu_power"] < 0.0).any(axis=1), "negative power")

    bad = reasons != None  # noqa: E711
    rejects = [RejectedRow(int(i) + 2, str(reasons[i])) for i in np.nonzero(bad)[0]]
    keep = ~bad
    frame = TelemetryFrame(
        timestamps=ts[keep],
        hosts=hosts[keep].astype(np.str_),
        util=metrics["gpu_util"][keep],
        mem_util=metrics["gpu_mem_util"][keep],
        alloc=metrics["gpu_mem_alloc"][keep],
        power=metrics["gpu_power"][keep],
    )
    return ParseResult(
        records=frame,
        rejects=rejects,
        rows_total=n,
        rows_accepted=n - len(rejects),
    )


def write_telemetry(frame: TelemetryFrame, path: str | Path) -> None:
    """Write the canonical telemetry CSV; a ``.gz`` suffix compresses it
    (parse_telemetry reads either form transparently)."""
    if str(path).endswith(".gz"):
        import gzip

        data = frame.to_polars().write_csv().encode("utf-8")
        Path(path).write_bytes(gzip.compress(data, compresslevel=4, mtime=0))
    else:
        frame.to_polars().write_csv(str(path))


# ---------------------------------------------------------------------------
# rejects + manifest


def write_rejects(rejects: Sequence[RejectedRow], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "reason"])
        for r in rejects:
            writer.writerow([r.row, r.reason])


@dataclass(frozen=True)
class DatasetManifest:
    """Paths of one dataset's raw logs plus its declared UTC time range."""

    job_logs: tuple[Path, ...]
    host_logs: tuple[Path, ...]
    telemetry: tuple[Path, ...]
    time_range: tuple[int, int]

    def __post_init__(self) -> None:
        for name in ("job_logs", "host_logs", "telemetry"):
            paths = tuple(Path(p) for p in getattr(self, name))
            if not paths:
                raise InvalidInputError(f"manifest {name} must be non-empty")
            object.__setattr__(self, name, paths)
        start, end = self.time_range
        if not start < end:
            raise InvalidInputError(f"manifest time range must be well-ordered, got {self.time_range}")
        object.__setattr__(self, "time_range", (int(start), int(end)))


def load_manifest(path: str | Path) -> DatasetManifest:
    import json

    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"manifest {path} is not valid JSON: {exc}") from None
    for key in ("job_logs", "host_logs", "telemetry", "time_range"):
        if key not in data:
            raise SchemaError(f"manifest {path} missing key: {key}")
    base = path.parent

    def resolve(entries: list[str]) -> tuple[Path, ...]:
        return tuple((base / p) if not Path(p).is_absolute() else Path(p) for p in entries)

    start, end = data["time_range"]
    if isinstance(start, str):
        start = parse_timestamp(start)
    if isinstance(end, str):
        end = parse_timestamp(end)
    return DatasetManifest(
        job_logs=resolve(data["job_logs"]),
        host_logs=resolve(data["host_logs"]),
        telemetry=resolve(data["telemetry"]),
        time_range=(start, end),
    )


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    import json

    path = Path(path)
    base = path.parent

    def relativize(paths: tuple[Path, ...]) -> list[str]:
        out = []
        for p in paths:
            try:
                out.append(str(p.relative_to(base)))
            except ValueError:
                out.append(str(p))
        return out

    data = {
        "job_logs": relativize(manifest.job_logs),
        "host_logs": relativize(manifest.host_logs),
        "telemetry": relativize(manifest.telemetry),
        "time_range": list(manifest.time_range),
    }
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
