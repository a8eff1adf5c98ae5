"""Acceptance suite: one test per criterion, each at its stated tolerance,
printing one pass line (run with ``pytest tests/test_acceptance.py -v -s``).

The full-scale production numbers are not reproducible at desk scale, so
acceptance is property-based plus synthetic-ground-truth checks on labeled
scenarios.
"""

import time

import numpy as np
import pytest

from telefuse.fuse import (
    IDLE_JOB_ID,
    build_interval_index,
    run_fusion,
    tag_samples,
)
from telefuse.ingest import (
    TelemetryFrame,
    load_manifest,
    parse_job_log,
    parse_telemetry,
    write_job_log,
    write_telemetry,
)
from telefuse.model import (
    HostAssignment,
    JobClass,
    JobRecord,
    NodeSeries,
    RICategory,
    classify_job,
    classify_ri,
)
from telefuse.summarize import (
    descriptive_stats,
    pearson,
    pearson_matrix,
    ri_spatial,
    ri_temporal,
    trapezoid_kilojoules,
)
from telefuse.synth import (
    ScenarioSpec,
    generate,
    oracle_descriptive_stats,
    oracle_join,
    oracle_pearson,
    oracle_ri,
)

from .test_summarize import make_summary


def _passed(n, message):
    print(f"ACCEPTANCE PASS criterion {n}: {message}")


def series_of(rows):
    out = []
    for i, row in enumerate(rows):
        arr = np.asarray(row, dtype=float)
        out.append(
            NodeSeries(
                job_id="J",
                host=f"n{i}",
                timestamps=np.arange(arr.size, dtype=np.int64),
                node_util=arr,
                node_mem_util=np.zeros(arr.size),
                node_alloc_pct=np.zeros(arr.size),
                node_power=np.zeros(arr.size),
                gpu_util=np.zeros((arr.size, 4)),
            )
        )
    return out


def test_criterion_01_ri_oracle_equivalence():
    """1,000 seeded random instances; both RI paths match the brute-force
    oracle within 1e-12; runtime < 10 s."""
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    for _ in range(1000):
        nodes = int(rng.integers(1, 9))
        rows = [rng.uniform(0.0, 100.0, size=int(rng.integers(1, 201))) for _ in range(nodes)]
        series = series_of(rows)
        temporal = ri_temporal(series, "load").value
        spatial = ri_spatial(series, "load").value
        assert abs(temporal - oracle_ri([r.tolist() for r in rows], "temporal")) <= 1e-12
        assert abs(spatial - oracle_ri([r.tolist() for r in rows], "spatial")) <= 1e-12
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0, f"took {elapsed:.1f}s"
    _passed(1, f"1000 instances within 1e-12 in {elapsed:.2f}s")


def test_criterion_02_ri_endpoint_and_scale_properties():
    """Constant -> temporal 0; equal peaks / single node -> spatial 0;
    scaling by c in {0.5, 3, 100} moves neither value more than 1e-12 nor
    flips a category."""
    constant = series_of([[37.5] * 20, [64.0] * 20])
    assert ri_temporal(constant, "load").value == 0.0

    equal_peaks = series_of([[10.0, 90.0, 5.0], [90.0, 1.0, 2.0]])
    assert ri_spatial(equal_peaks, "load").value == 0.0

    single = series_of([[13.0, 99.0, 42.0]])
    assert ri_spatial(single, "load").value == 0.0

    rng = np.random.default_rng(202)
    for _ in range(200):
        rows = [rng.uniform(0.0, 100.0, size=int(rng.integers(2, 60))) for _ in range(int(rng.integers(1, 6)))]
        base_t = ri_temporal(series_of(rows), "load")
        base_s = ri_spatial(series_of(rows), "load")
        for c in (0.5, 3.0, 100.0):
            scaled = series_of([row * c for row in rows])
            scaled_t = ri_temporal(scaled, "load")
            scaled_s = ri_spatial(scaled, "load")
            assert abs(scaled_t.value - base_t.value) <= 1e-12
            assert abs(scaled_s.value - base_s.value) <= 1e-12
            assert scaled_t.category is base_t.category
            assert scaled_s.category is base_s.category
    _passed(2, "endpoints exact; scale invariance within 1e-12 with stable categories")


def test_criterion_03_join_equivalence():
    """10,000 random samples vs 50 random non-overlapping jobs: tag_samples
    equals oracle_join exactly, end-boundary samples idle; runtime < 5 s."""
    rng = np.random.default_rng(303)
    hosts = [f"n{i:02d}" for i in range(10)]
    free = {h: 0 for h in hosts}
    jobs, assignments = [], []
    for i in range(50):
        chosen = rng.choice(hosts, size=int(rng.integers(1, 4)), replace=False)
        start = int(max(free[h] for h in chosen) + rng.integers(0, 500))
        end = start + int(rng.integers(60, 4000))
        jobs.append(JobRecord(f"J{i:02d}", "u", "p", "q", start, start, end, len(chosen)))
        for h in chosen:
            assignments.append(HostAssignment(f"J{i:02d}", str(h)))
            free[str(h)] = end

    horizon = max(j.end_time for j in jobs) + 1000
    n = 10_000
    ts = rng.integers(0, horizon, size=n)
    sample_hosts = rng.choice(hosts, size=n)
    # force end-boundary probes onto every job's own hosts
    for i, job_record in enumerate(jobs):
        ts[i] = job_record.end_time
        sample_hosts[i] = next(a.host for a in assignments if a.job_id == job_record.job_id)
    frame = TelemetryFrame(
        timestamps=ts.astype(np.int64),
        hosts=sample_hosts.astype(np.str_),
        util=np.zeros((n, 4)),
        mem_util=np.zeros((n, 4)),
        alloc=np.zeros((n, 4)),
        power=np.zeros((n, 4)),
    )

    start_clock = time.perf_counter()
    fused = tag_samples(frame, build_interval_index(jobs, assignments))
    expected = oracle_join(frame, jobs, assignments)
    elapsed = time.perf_counter() - start_clock

    got = [None if j == IDLE_JOB_ID else j for j in fused.job_ids.tolist()]
    assert got == expected
    for i, job_record in enumerate(jobs):
        assert got[i] != job_record.job_id  # t = end belongs to the next job or idle
    assert elapsed < 5.0, f"took {elapsed:.1f}s"
    _passed(3, f"10,000 samples vs 50 jobs identical incl. end boundaries in {elapsed:.2f}s")


def test_criterion_04_determinism_and_resume(tmp_path):
    """A 3-month dataset fused with 1 worker, 8 workers, and interrupt+resume
    produces three byte-identical outputs."""
    spec = ScenarioSpec(
        seed=404,
        jobs=30,
        class_mix={"small": 1.0},
        node_count_range=(10, 12),
        runtime_range=(43200, 86400),
        period_seconds=3600,
        hosts=24,
        arrival_gap_range=(200_000, 300_000),
        idle_gap_samples=1,
    )
    scenario = generate(spec, tmp_path / "scenario")
    manifest = load_manifest(scenario.manifest)

    r1 = run_fusion(manifest, tmp_path / "w1", chunk="month", workers=1)
    assert r1.chunks_total >= 3, "scenario must span at least three months"
    r8 = run_fusion(manifest, tmp_path / "w8", chunk="month", workers=8)
    partial = run_fusion(manifest, tmp_path / "resumed", chunk="month", workers=1, max_chunks=1)
    assert not partial.complete
    run_fusion(manifest, tmp_path / "resumed", chunk="month", workers=1, resume=True)

    names = sorted(p.name for p in (tmp_path / "w1").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "w8").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "resumed").iterdir())
    for name in names:
        a = (tmp_path / "w1" / name).read_bytes()
        assert a == (tmp_path / "w8" / name).read_bytes(), name
        assert a == (tmp_path / "resumed" / name).read_bytes(), name
    _passed(4, f"{r1.chunks_total} monthly chunks byte-identical across 1w/8w/resume")


def test_criterion_05_energy_correctness():
    """Constant 400 W x 100 s = 40 kJ exactly; ramp = 20 kJ within 1e-9
    relative; split-additivity within 1e-9 relative on 100 random series."""
    ts = np.arange(0, 101, 5, dtype=np.int64)
    assert trapezoid_kilojoules(ts, np.full(ts.size, 400.0)) == 40.0

    ramp_ts = np.arange(0, 101, dtype=np.int64)
    ramp_kj = trapezoid_kilojoules(ramp_ts, ramp_ts * 4.0)
    assert abs(ramp_kj - 20.0) <= 1e-9 * 20.0

    rng = np.random.default_rng(505)
    for _ in range(100):
        n = int(rng.integers(3, 200))
        t = np.cumsum(rng.integers(1, 30, size=n)).astype(np.int64)
        w = rng.uniform(0.0, 1600.0, size=n)
        whole = trapezoid_kilojoules(t, w)
        k = int(rng.integers(1, n - 1))
        split = trapezoid_kilojoules(t[: k + 1], w[: k + 1]) + trapezoid_kilojoules(t[k:], w[k:])
        assert abs(split - whole) <= 1e-9 * max(abs(whole), 1e-9)
    _passed(5, "constant exact, ramp and split-additivity within 1e-9 relative")


def test_criterion_06_statistics_oracles():
    """Stats and Pearson match two-pass references within 1e-12 on 1,000-row
    random tables; matrix symmetric, unit diagonal, zero-variance missing."""
    rng = np.random.default_rng(606)
    table = rng.uniform(-1000.0, 1000.0, size=(1000, 6))
    for col in range(table.shape[1]):
        stats = descriptive_stats(table[:, col])
        want = oracle_descriptive_stats(table[:, col].tolist())
        assert stats.min == want["min"] and stats.max == want["max"]
        assert abs(stats.mean - want["mean"]) <= 1e-12 * 1000.0
        assert abs(stats.std - want["std"]) <= 1e-12 * 1000.0
    for a in range(table.shape[1]):
        for b in range(a + 1, table.shape[1]):
            got = pearson(table[:, a], table[:, b])
            want = oracle_pearson(table[:, a].tolist(), table[:, b].tolist())
            assert got is not None and want is not None
            assert abs(got - want) <= 1e-12

    summaries = [
        make_summary(
            f"J{i}",
            total_load_mean=float(table[i, 0]),
            total_mem_mean=float(table[i, 1]),
            total_power_mean=float(table[i, 2]),
            total_energy=float(table[i, 3]),
            max_alloc_pct=7.0,  # zero-variance column
        )
        for i in range(1000)
    ]
    metrics = ["total_load_mean", "total_mem_mean", "total_power_mean", "total_energy", "max_alloc_pct"]
    matrix = pearson_matrix(summaries, metrics)
    assert np.allclose(matrix.values, matrix.values.T, equal_nan=True)
    for i, name in enumerate(metrics):
        if name == "max_alloc_pct":
            assert np.isnan(matrix.values[i, :]).all()  # missing, not 0 or NaN leakage
        else:
            assert matrix.values[i, i] == pytest.approx(1.0)
    _passed(6, "stats/Pearson within 1e-12 of two-pass references; matrix well-formed")


def test_criterion_07_category_recovery(default_run):
    """On the default 200-job scenario the pipeline recovers >=95% of labeled
    RI categories and 100% of gpu_count and job_class; end-to-end < 2 min."""
    ledger = {entry["job_id"]: entry for entry in default_run["ledger"]["jobs"]}
    summaries = default_run["run"].summaries
    assert len(summaries) == 200

    triples = 0
    matched = 0
    for s in summaries:
        truth = ledger[s.job_id]
        assert s.gpu_count == truth["gpu_count"], s.job_id
        assert s.job_class.value == truth["job_class"], s.job_id
        for metric in ("load", "mem_util", "mem_alloc"):
            for axis, attr in (
                ("temporal", f"ri_temporal_{metric}"),
                ("spatial", f"ri_spatial_{metric}"),
            ):
                triples += 1
                got = getattr(s, attr)
                matched += got.category.value == truth["ri"][metric][axis]["category"]
    rate = matched / triples
    assert rate >= 0.95, f"recovered {matched}/{triples}"
    total = default_run["timings"]["total"]
    assert total < 120.0, f"end-to-end took {total:.0f}s"
    _passed(
        7,
        f"category recovery {matched}/{triples} ({rate:.1%}), gpu_count+class 100%, "
        f"end-to-end {total:.0f}s",
    )


def test_criterion_08_condensation_contract(default_run):
    """Summary row count equals job count exactly; summary bytes are at most
    10% of fused bytes on the default scenario."""
    run = default_run["run"]
    assert len(run.summaries) == default_run["ledger"]["totals"]["jobs"] == 200
    summary_bytes = default_run["summary_path"].stat().st_size
    ratio = summary_bytes / run.fused_bytes
    assert ratio <= 0.10, f"ratio {ratio:.4f}"
    _passed(8, f"200 rows for 200 jobs; condensation ratio {ratio:.4%} <= 10%")


def test_criterion_09_threshold_boundaries():
    """Category boundaries land exactly as published."""
    assert classify_ri(0.2) is RICategory.CONSTANT
    assert classify_ri(0.6) is RICategory.PHASED
    assert classify_job(10) is JobClass.SMALL
    assert classify_job(24) is JobClass.SMALL
    assert classify_job(25) is JobClass.MEDIUM
    assert classify_job(99) is JobClass.MEDIUM
    assert classify_job(100) is JobClass.LARGE
    assert classify_job(496) is JobClass.LARGE
    _passed(9, "RI boundaries 0.2/0.6 and class bins 10-24/25-99/100-496 exact")


def test_criterion_10_ingest_conservation(tmp_path, tiny_run):
    """accepted + rejected = total on clean and hand-corrupted inputs;
    serialize/parse round-trip is lossless on accepted records."""
    scenario = tiny_run["scenario"]

    # clean synthetic inputs
    job_result = parse_job_log(scenario.job_log)
    tele_result = parse_telemetry(scenario.telemetry)
    for result in (job_result, tele_result):
        assert result.rows_accepted + len(result.rejects) == result.rows_total
    assert not job_result.rejects and not tele_result.rejects

    # hand-corrupted job log: bad timestamp, inverted interval, short row
    lines = scenario.job_log.read_text().splitlines()
    lines.insert(3, "X1,u,p,q,zzz,0,10,10")
    lines.insert(5, "X2,u,p,q,0,100,50,10")
    lines.append("X3,u,p,q,0,0,10")
    corrupted = tmp_path / "jobs_corrupt.csv"
    corrupted.write_text("\n".join(lines) + "\n")
    result = parse_job_log(corrupted)
    assert len(result.rejects) == 3
    assert result.rows_accepted + len(result.rejects) == result.rows_total

    # hand-corrupted telemetry: out-of-range percent, negative power, bad time
    tele_lines = scenario.telemetry.read_text().splitlines()
    parts = tele_lines[1].split(",")
    parts[2] = "150.0"
    tele_lines.insert(1, ",".join(parts))
    parts = tele_lines[4].split(",")
    parts[-1] = "-1.0"
    tele_lines.insert(4, ",".join(parts))
    parts = tele_lines[8].split(",")
    parts[0] = "not-a-time"
    tele_lines.insert(8, ",".join(parts))
    corrupted_tele = tmp_path / "tele_corrupt.csv"
    corrupted_tele.write_text("\n".join(tele_lines) + "\n")
    tele_corrupt = parse_telemetry(corrupted_tele)
    assert len(tele_corrupt.rejects) == 3
    assert {r.reason for r in tele_corrupt.rejects} == {
        "percent out of range",
        "negative power",
        "unparseable timestamp",
    }
    assert tele_corrupt.rows_accepted + len(tele_corrupt.rejects) == tele_corrupt.rows_total

    # round-trip losslessness on the accepted records
    jobs_path = tmp_path / "jobs_rt.csv"
    write_job_log(result.records, jobs_path)
    assert parse_job_log(jobs_path).records == result.records

    tele_path = tmp_path / "tele_rt.csv"
    write_telemetry(tele_corrupt.records, tele_path)
    back = parse_telemetry(tele_path)
    assert not back.rejects
    assert back.records.equals(tele_corrupt.records)
    _passed(10, "conservation holds on clean and corrupted inputs; round-trip lossless")
