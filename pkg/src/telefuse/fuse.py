"""Preprocessing stage: tag every telemetry sample with its owning job.

Interval semantics are half-open [start, end): a sample at a job's end_time
belongs to the next job on that node or to idle, never both. Samples that
match no job are retained with an idle tag (empty job_id, empty queue,
num_nodes 0) — they are excluded from per-job summaries downstream.

Fused output is written in time-ordered chunks (default: one calendar
month), each compressed, with a checkpoint ledger of
``chunk_id<TAB>row_count<TAB>sha256`` lines and a terminal
``COMPLETE<TAB>chunks<TAB>rows`` line. Chunk content is canonically sorted
by (timestamp, host) before serialization, so output bytes are invariant to
worker count and chunk processing order.
"""

from __future__ import annotations

import bz2
import gzip
import hashlib
import io
import json
import logging
import lzma
import multiprocessing
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterator, Sequence

import numpy as np
import polars as pl

from .errors import FusionError, InvalidInputError, LedgerError, SchemaError
from .ingest import (
    TELEMETRY_COLUMNS,
    DatasetManifest,
    ParseResult,
    TelemetryFrame,
    load_column_map,
    parse_host_log,
    parse_job_log,
    parse_telemetry,
    write_host_log,
    write_job_log,
    write_rejects,
)
from .model import GPUS_PER_NODE, HostAssignment, JobRecord

logger = logging.getLogger(__name__)

IDLE_JOB_ID = ""

FUSED_COLUMNS = TELEMETRY_COLUMNS + ("job_id", "queue", "num_nodes")

LEDGER_NAME = "checkpoint.ledger"
JOBS_NAME = "jobs.csv"
HOSTS_NAME = "hosts.csv"
REPORT_NAME = "fusion_report.json"


# ---------------------------------------------------------------------------
# interval index


@dataclass(frozen=True)
class HostIntervals:
    """Sorted, disjoint [start, end) intervals on one host."""

    starts: np.ndarray
    ends: np.ndarray
    job_ids: np.ndarray


@dataclass(frozen=True)
class IntervalIndex:
    """Per-host sorted job intervals plus the job metadata projection
    (queue, requested nodes) carried into fused records."""

    by_host: dict[str, HostIntervals]
    job_meta: dict[str, tuple[str, int]]

    @property
    def interval_count(self) -> int:
        return sum(h.starts.size for h in self.by_host.values())


def build_interval_index(
    jobs: Sequence[JobRecord], assignments: Sequence[HostAssignment]
) -> IntervalIndex:
    """Join jobs with their assigned nodes into a per-host interval index.

    Raises FusionError when an assignment references an unknown job or when
    two jobs overlap on one host (bare-metal exclusivity violation).
    """
    by_id = {j.job_id: j for j in jobs}
    dangling = sorted({a.job_id for a in assignments if a.job_id not in by_id})
    if dangling:
        raise FusionError(
            "host assignments reference unknown job ids: " + ", ".join(dangling[:10])
        )

    per_host: dict[str, list[tuple[int, int, str]]] = {}
    for a in assignments:
        job = by_id[a.job_id]
        per_host.setdefault(a.host, []).append((job.start_time, job.end_time, job.job_id))

    conflicts: list[str] = []
    by_host: dict[str, HostIntervals] = {}
    for host, intervals in per_host.items():
        intervals.sort()
        for (s1, e1, j1), (s2, e2, j2) in zip(intervals, intervals[1:]):
            if s2 < e1 and s1 < e2:
                conflicts.append(f"host {host}: jobs {j1} and {j2} overlap")
        by_host[host] = HostIntervals(
            starts=np.array([iv[0] for iv in intervals], dtype=np.int64),
            ends=np.array([iv[1] for iv in intervals], dtype=np.int64),
            job_ids=np.array([iv[2] for iv in intervals]),
        )
    if conflicts:
        raise FusionError("overlapping job intervals: " + "; ".join(conflicts))

    job_meta = {j.job_id: (j.queue, j.requested_nodes) for j in jobs}
    return IntervalIndex(by_host=by_host, job_meta=job_meta)


# ---------------------------------------------------------------------------
# fused frame


@dataclass(frozen=True, eq=False)
class FusedFrame:
    """Telemetry columns plus the owning-job tag and its metadata projection.

    Idle rows carry job_id "" (the idle marker), queue "" and num_nodes 0.
    """

    telemetry: TelemetryFrame
    job_ids: np.ndarray
    queues: np.ndarray
    num_nodes: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.telemetry)
        object.__setattr__(self, "job_ids", np.asarray(self.job_ids, dtype=np.str_))
        object.__setattr__(self, "queues", np.asarray(self.queues, dtype=np.str_))
        object.__setattr__(self, "num_nodes", np.asarray(self.num_nodes, dtype=np.int64))
        for name in ("job_ids", "queues", "num_nodes"):
            if getattr(self, name).shape != (n,):
                raise InvalidInputError(f"{name} must have length {n}")

    def __len__(self) -> int:
        return len(self.telemetry)

    @property
    def tagged_mask(self) -> np.ndarray:
        return self.job_ids != IDLE_JOB_ID

    def to_polars(self) -> pl.DataFrame:
        df = self.telemetry.to_polars()
        return df.with_columns(
            pl.Series("job_id", self.job_ids.astype(object), dtype=pl.Utf8),
            pl.Series("queue", self.queues.astype(object), dtype=pl.Utf8),
            pl.Series("num_nodes", self.num_nodes),
        )


def tag_samples(frame: TelemetryFrame, index: IntervalIndex) -> FusedFrame:
    """Tag each sample with the unique owning job, or idle when none matches.

    Lookup is one binary search per sample within its host's sorted
    intervals (amortized O(log k)).
    """
    n = len(frame)
    job_ids = np.full(n, IDLE_JOB_ID, dtype=object)
    order = np.argsort(frame.hosts, kind="stable")
    sorted_hosts = frame.hosts[order]
    boundaries = np.nonzero(np.concatenate(([True], sorted_hosts[1:] != sorted_hosts[:-1])))[0]
    for i, lo in enumerate(boundaries):
        hi = boundaries[i + 1] if i + 1 < boundaries.size else n
        host = str(sorted_hosts[lo])
        intervals = index.by_host.get(host)
        if intervals is None:
            continue
        rows = order[lo:hi]
        ts = frame.timestamps[rows]
        pos = np.searchsorted(intervals.starts, ts, side="right") - 1
        valid = pos >= 0
        inside = np.zeros(ts.size, dtype=bool)
        inside[valid] = ts[valid] < intervals.ends[pos[valid]]
        job_ids[rows[inside]] = intervals.job_ids[pos[inside]]

    # project job metadata via a per-unique-id lookup (few ids per chunk)
    uniq, inverse = np.unique(job_ids.astype(np.str_), return_inverse=True)
    meta = index.job_meta
    q_lookup = np.array(
        ["" if u == IDLE_JOB_ID else meta[u][0] for u in uniq.tolist()], dtype=np.str_
    )
    n_lookup = np.array(
        [0 if u == IDLE_JOB_ID else meta[u][1] for u in uniq.tolist()], dtype=np.int64
    )
    return FusedFrame(
        telemetry=frame,
        job_ids=job_ids.astype(np.str_),
        queues=q_lookup[inverse],
        num_nodes=n_lookup[inverse],
    )


# ---------------------------------------------------------------------------
# chunking


@dataclass(frozen=True)
class ChunkSpec:
    """Chunk granularity: calendar months, or fixed windows of N seconds."""

    kind: str
    seconds: int = 0


_FIXED_UNITS = {"s": 1, "m": 60, "h": 3600, "d": 86400}


def parse_chunk_spec(text: str) -> ChunkSpec:
    text = text.strip().lower()
    if text == "month":
        return ChunkSpec(kind="month")
    m = re.fullmatch(r"(\d+)([smhd])", text)
    if not m:
        raise InvalidInputError(
            f"chunk spec must be 'month' or '<N><s|m|h|d>', got {text!r}"
        )
    seconds = int(m.group(1)) * _FIXED_UNITS[m.group(2)]
    if seconds < 1:
        raise InvalidInputError("chunk window must be at least 1 second")
    return ChunkSpec(kind="fixed", seconds=seconds)


def chunk_keys(timestamps: np.ndarray, spec: ChunkSpec) -> np.ndarray:
    """Integer chunk key per timestamp (months since epoch, or window index)."""
    if spec.kind == "month":
        return timestamps.astype("datetime64[s]").astype("datetime64[M]").astype(np.int64)
    return timestamps // spec.seconds


def chunk_id_from_key(key: int, spec: ChunkSpec) -> str:
    if spec.kind == "month":
        month = np.datetime64(int(key), "M")
        return str(month)  # YYYY-MM
    start = int(key) * spec.seconds
    return datetime.fromtimestamp(start, tz=timezone.utc).strftime("%Y%m%dT%H%M%SZ")


# ---------------------------------------------------------------------------
# compression codecs

CODECS: dict[str, dict[str, Any]] = {
    "gzip": {
        "suffix": ".gz",
        # mtime=0 keeps compressed bytes deterministic across runs.
        "compress": lambda data: gzip.compress(data, compresslevel=6, mtime=0),
        "decompress": gzip.decompress,
    },
    "bz2": {
        "suffix": ".bz2",
        "compress": lambda data: bz2.compress(data, 6),
        "decompress": bz2.decompress,
    },
    "xz": {
        "suffix": ".xz",
        "compress": lambda data: lzma.compress(data, preset=3),
        "decompress": lzma.decompress,
    },
    "none": {
        "suffix": "",
        "compress": lambda data: data,
        "decompress": lambda data: data,
    },
}


def chunk_file_name(chunk_id: str, codec: str) -> str:
    return f"fused-{chunk_id}.csv{CODECS[codec]['suffix']}"


# ---------------------------------------------------------------------------
# ledger


@dataclass(frozen=True)
class LedgerEntry:
    chunk_id: str
    rows: int
    digest: str


@dataclass(frozen=True)
class Ledger:
    entries: tuple[LedgerEntry, ...]
    complete: bool
    total_rows: int


def read_ledger(path: Path) -> Ledger:
    entries: list[LedgerEntry] = []
    complete = False
    total_rows = 0
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        parts = line.split("\t")
        if len(parts) != 3:
            raise LedgerError(f"{path}:{lineno}: malformed ledger line {line!r}")
        name, count_text, digest = parts
        try:
            count = int(count_text)
        except ValueError:
            raise LedgerError(f"{path}:{lineno}: malformed row count {count_text!r}") from None
        if name == "COMPLETE":
            if complete:
                raise LedgerError(f"{path}:{lineno}: duplicate COMPLETE line")
            complete = True
            total_rows = int(digest) if digest.isdigit() else -1
            if count != len(entries) or total_rows != sum(e.rows for e in entries):
                raise LedgerError(f"{path}:{lineno}: COMPLETE totals disagree with chunk lines")
        elif complete:
            raise LedgerError(f"{path}:{lineno}: chunk line after COMPLETE")
        else:
            if not re.fullmatch(r"[0-9a-f]{64}", digest):
                raise LedgerError(f"{path}:{lineno}: malformed digest {digest!r}")
            entries.append(LedgerEntry(chunk_id=name, rows=count, digest=digest))
    return Ledger(entries=tuple(entries), complete=complete, total_rows=total_rows)


def verify_chunks(out_dir: Path, ledger: Ledger, codec: str) -> list[Path]:
    """Check every ledger entry against the bytes on disk."""
    paths = []
    for entry in ledger.entries:
        path = out_dir / chunk_file_name(entry.chunk_id, codec)
        if not path.exists():
            raise LedgerError(f"ledger lists chunk {entry.chunk_id} but {path.name} is missing")
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        if digest != entry.digest:
            raise LedgerError(
                f"chunk {entry.chunk_id}: on-disk digest {digest[:12]}... does not match ledger"
            )
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# fusion driver


@dataclass(frozen=True)
class ChunkReport:
    chunk_id: str
    rows: int
    tagged: int
    idle: int
    digest: str


@dataclass(frozen=True)
class FusionReport:
    jobs: int
    hosts: int
    samples: int
    tagged: int
    idle: int
    chunks: tuple[ChunkReport, ...]
    chunks_completed: int
    chunks_total: int
    complete: bool
    resumed_chunks: int
    rejects: dict[str, int]
    duplicates: int

    def to_dict(self, run_info: bool = True) -> dict[str, Any]:
        """``run_info=False`` drops fields that describe this invocation
        rather than the dataset, keeping the persisted report byte-stable
        across resumed and parallel runs."""
        out: dict[str, Any] = {
            "jobs": self.jobs,
            "hosts": self.hosts,
            "samples": self.samples,
            "tagged": self.tagged,
            "idle": self.idle,
            "chunks_completed": self.chunks_completed,
            "chunks_total": self.chunks_total,
            "complete": self.complete,
            "duplicates": self.duplicates,
            "rejects": dict(self.rejects),
            "chunks": [
                {
                    "chunk_id": c.chunk_id,
                    "rows": c.rows,
                    "tagged": c.tagged,
                    "idle": c.idle,
                    "digest": c.digest,
                }
                for c in self.chunks
            ],
        }
        if run_info:
            out["resumed_chunks"] = self.resumed_chunks
        return out


def _serialize_chunk(frame: TelemetryFrame, index: IntervalIndex) -> tuple[bytes, int, int]:
    """Canonically sort, tag, and serialize one chunk to CSV bytes."""
    fused = tag_samples(frame.sort_canonical(), index)
    tagged = int(fused.tagged_mask.sum())
    csv_text = fused.to_polars().write_csv()
    return csv_text.encode("utf-8"), tagged, len(fused) - tagged


def _chunk_task(args: tuple[str, TelemetryFrame, IntervalIndex, str]) -> tuple[str, bytes, str, int, int, int]:
    chunk_id, frame, index, codec = args
    payload, tagged, idle = _serialize_chunk(frame, index)
    compressed = CODECS[codec]["compress"](payload)
    digest = hashlib.sha256(compressed).hexdigest()
    return chunk_id, compressed, digest, len(frame), tagged, idle


def _fresh_output_dir(out_dir: Path) -> None:
    """Remove this toolkit's own fusion artifacts before a fresh run."""
    patterns = ["fused-*.csv*", LEDGER_NAME, JOBS_NAME, HOSTS_NAME, REPORT_NAME, "*.rejects.csv"]
    for pattern in patterns:
        for stale in out_dir.glob(pattern):
            stale.unlink()


def _sidecar_map(path: Path) -> dict[str, str] | None:
    """Optional per-input column-mapping config: ``<input>.columns``."""
    sidecar = path.with_name(path.name + ".columns")
    return load_column_map(sidecar) if sidecar.exists() else None


def _parse_inputs(
    manifest: DatasetManifest, out_dir: Path
) -> tuple[list[JobRecord], list[HostAssignment], TelemetryFrame, dict[str, int], int]:
    jobs: list[JobRecord] = []
    seen_ids: set[str] = set()
    rejects: dict[str, int] = {}
    duplicates = 0

    def record_rejects(path: Path, result: ParseResult) -> None:
        rejects[str(path)] = len(result.rejects)
        if result.rejects:
            write_rejects(result.rejects, out_dir / f"{path.name}.rejects.csv")

    for path in manifest.job_logs:
        result = parse_job_log(path, column_map=_sidecar_map(path))
        record_rejects(path, result)
        for job in result.records:
            if job.job_id in seen_ids:
                raise SchemaError(f"duplicate job_id {job.job_id!r} across job logs")
            seen_ids.add(job.job_id)
            jobs.append(job)

    assignments: list[HostAssignment] = []
    seen_pairs: set[tuple[str, str]] = set()
    for path in manifest.host_logs:
        result = parse_host_log(path, column_map=_sidecar_map(path))
        record_rejects(path, result)
        duplicates += result.duplicates
        for a in result.records:
            key = (a.job_id, a.host)
            if key in seen_pairs:
                duplicates += 1
                continue
            seen_pairs.add(key)
            assignments.append(a)

    frames: list[TelemetryFrame] = []
    for path in manifest.telemetry:
        result = parse_telemetry(path, column_map=_sidecar_map(path))
        record_rejects(path, result)
        frames.append(result.records)
    telemetry = TelemetryFrame.concat(frames)
    return jobs, assignments, telemetry, rejects, duplicates


def run_fusion(
    manifest: DatasetManifest,
    out_dir: str | Path,
    *,
    chunk: str = "month",
    codec: str = "gzip",
    workers: int = 1,
    resume: bool = False,
    max_chunks: int | None = None,
) -> FusionReport:
    """Fuse a dataset into chunked, compressed, checkpointed output.

    With ``resume=True`` and an existing ledger, completed chunks are
    verified by digest and skipped; a corrupt ledger or mismatched chunk file
    refuses to resume rather than silently recomputing. ``max_chunks`` bounds
    how many new chunks this call commits (the hook the interrupt/resume
    tests use).
    """
    if codec not in CODECS:
        raise InvalidInputError(f"unknown codec {codec!r}; choose from {sorted(CODECS)}")
    if workers < 1:
        raise InvalidInputError(f"workers must be >= 1, got {workers}")
    spec = parse_chunk_spec(chunk)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ledger_path = out_dir / LEDGER_NAME

    resuming = resume and ledger_path.exists()
    if not resuming:
        _fresh_output_dir(out_dir)

    jobs, assignments, telemetry, rejects, duplicates = _parse_inputs(manifest, out_dir)
    index = build_interval_index(jobs, assignments)
    jobs_sorted = sorted(jobs, key=lambda j: j.job_id)
    assignments_sorted = sorted(assignments, key=lambda a: (a.job_id, a.host))

    keys = chunk_keys(telemetry.timestamps, spec)
    unique_keys = np.unique(keys)
    chunk_ids = [chunk_id_from_key(int(k), spec) for k in unique_keys]

    completed: list[LedgerEntry] = []
    if resuming:
        ledger = read_ledger(ledger_path)
        ledger_ids = [e.chunk_id for e in ledger.entries]
        if ledger_ids != chunk_ids[: len(ledger_ids)]:
            raise LedgerError(
                "resume refused: ledger chunks do not match this dataset/chunking "
                f"(ledger {ledger_ids[:3]}..., expected prefix of {chunk_ids[:3]}...)"
            )
        verify_chunks(out_dir, ledger, codec)
        if ledger.complete and len(ledger_ids) == len(chunk_ids):
            logger.info("event=fusion.already_complete chunks=%d", len(chunk_ids))
        completed = list(ledger.entries)

    write_job_log(jobs_sorted, out_dir / JOBS_NAME)
    write_host_log(assignments_sorted, out_dir / HOSTS_NAME)

    done = len(completed)
    pending_ids = chunk_ids[done:]
    if max_chunks is not None:
        pending_ids = pending_ids[:max_chunks]

    pending = set(pending_ids)
    reports: dict[str, ChunkReport] = {}
    tasks = []
    for key, chunk_id in zip(unique_keys, chunk_ids):
        if chunk_id in pending:
            frame = telemetry.select(np.nonzero(keys == key)[0])
            tasks.append((chunk_id, frame, index, codec))

    def commit(result: tuple[str, bytes, str, int, int, int]) -> None:
        chunk_id, compressed, digest, rows, tagged, idle = result
        path = out_dir / chunk_file_name(chunk_id, codec)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_bytes(compressed)
        tmp.rename(path)
        with open(ledger_path, "a", encoding="utf-8") as fh:
            fh.write(f"{chunk_id}\t{rows}\t{digest}\n")
        reports[chunk_id] = ChunkReport(
            chunk_id=chunk_id, rows=rows, tagged=tagged, idle=idle, digest=digest
        )
        logger.info("event=fusion.chunk_done chunk=%s rows=%d tagged=%d", chunk_id, rows, tagged)

    if not ledger_path.exists():
        ledger_path.touch()

    if workers == 1 or len(tasks) <= 1:
        for task in tasks:
            commit(_chunk_task(task))
    else:
        # spawn, not fork: the CSV engine's thread pool does not survive forks
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks)), mp_context=ctx) as pool:
            for result in pool.map(_chunk_task, tasks):
                commit(result)

    # chunks completed previously: recover tag counts for the report by
    # re-reading their (verified) payloads
    resumed = 0
    for entry in completed:
        path = out_dir / chunk_file_name(entry.chunk_id, codec)
        fused = read_fused_chunk(path, codec)
        tagged = int(fused.tagged_mask.sum())
        reports[entry.chunk_id] = ChunkReport(
            chunk_id=entry.chunk_id,
            rows=entry.rows,
            tagged=tagged,
            idle=entry.rows - tagged,
            digest=entry.digest,
        )
        resumed += 1

    all_done = len(reports) == len(chunk_ids)
    ledger_now = read_ledger(ledger_path)
    if all_done and not ledger_now.complete:
        total_rows = sum(r.rows for r in reports.values())
        with open(ledger_path, "a", encoding="utf-8") as fh:
            fh.write(f"COMPLETE\t{len(chunk_ids)}\t{total_rows}\n")

    ordered = tuple(reports[cid] for cid in chunk_ids if cid in reports)
    report = FusionReport(
        jobs=len(jobs_sorted),
        hosts=len({a.host for a in assignments_sorted}),
        samples=sum(r.rows for r in ordered),
        tagged=sum(r.tagged for r in ordered),
        idle=sum(r.idle for r in ordered),
        chunks=ordered,
        chunks_completed=len(ordered),
        chunks_total=len(chunk_ids),
        complete=all_done,
        resumed_chunks=resumed,
        rejects=rejects,
        duplicates=duplicates,
    )
    (out_dir / REPORT_NAME).write_text(
        json.dumps(report.to_dict(run_info=False), indent=2) + "\n", encoding="utf-8"
    )
    return report


# ---------------------------------------------------------------------------
# reading fused output


def read_fused_chunk(path: Path, codec: str) -> FusedFrame:
    raw = CODECS[codec]["decompress"](path.read_bytes())
    df = pl.read_csv(
        io.BytesIO(raw),
        schema_overrides={"host": pl.Utf8, "job_id": pl.Utf8, "queue": pl.Utf8},
        missing_utf8_is_empty_string=True,
    )
    missing = [c for c in FUSED_COLUMNS if c not in df.columns]
    if missing:
        raise SchemaError(f"fused chunk {path.name} missing column: {missing[0]}")
    frame = TelemetryFrame(
        timestamps=df["timestamp"].to_numpy().astype(np.int64),
        hosts=df["host"].to_numpy().astype(np.str_),
        util=_gpu_block(df, "gpu_util"),
        mem_util=_gpu_block(df, "gpu_mem_util"),
        alloc=_gpu_block(df, "gpu_mem_alloc"),
        power=_gpu_block(df, "gpu_power"),
    )
    return FusedFrame(
        telemetry=frame,
        job_ids=df["job_id"].to_numpy().astype(np.str_),
        queues=df["queue"].to_numpy().astype(np.str_),
        num_nodes=df["num_nodes"].to_numpy().astype(np.int64),
    )


def _gpu_block(df: pl.DataFrame, base: str) -> np.ndarray:
    return np.column_stack(
        [df[f"{base}_{i}"].to_numpy().astype(np.float64, copy=False) for i in range(GPUS_PER_NODE)]
    )


@dataclass(frozen=True)
class FusedDataset:
    """A complete fused output directory, verified against its ledger."""

    out_dir: Path
    codec: str
    ledger: Ledger
    chunk_paths: tuple[Path, ...]

    def iter_chunks(self) -> Iterator[FusedFrame]:
        for path in self.chunk_paths:
            yield read_fused_chunk(path, self.codec)

    @property
    def fused_bytes(self) -> int:
        return sum(p.stat().st_size for p in self.chunk_paths)


def detect_codec(out_dir: Path, ledger: Ledger) -> str:
    if not ledger.entries:
        return "gzip"
    first = ledger.entries[0].chunk_id
    for codec in CODECS:
        if (out_dir / chunk_file_name(first, codec)).exists():
            return codec
    raise LedgerError(f"no chunk file found for ledger entry {first!r} in {out_dir}")


def open_fused_dataset(out_dir: str | Path) -> FusedDataset:
    """Open a fused directory for reading; refuses incomplete or corrupt output."""
    out_dir = Path(out_dir)
    ledger_path = out_dir / LEDGER_NAME
    if not ledger_path.exists():
        raise LedgerError(f"no checkpoint ledger found in {out_dir}")
    ledger = read_ledger(ledger_path)
    if not ledger.complete:
        raise LedgerError(
            f"fused output in {out_dir} is incomplete "
            f"({len(ledger.entries)} chunks, no COMPLETE marker); rerun fusion"
        )
    codec = detect_codec(out_dir, ledger)
    chunk_paths = tuple(verify_chunks(out_dir, ledger, codec))
    return FusedDataset(out_dir=out_dir, codec=codec, ledger=ledger, chunk_paths=chunk_paths)
