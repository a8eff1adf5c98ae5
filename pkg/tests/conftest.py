import time

import pytest

from telefuse.fuse import run_fusion
from telefuse.ingest import load_manifest
from telefuse.summarize import summarize_dataset, write_summary_csv
from telefuse.fuse import open_fused_dataset
from telefuse.synth import ScenarioSpec, generate

#: small fast scenario reused by unit/integration tests (minutes-scale chunks)
TINY_SPEC = ScenarioSpec(
    seed=7,
    jobs=12,
    class_mix={"small": 1.0},
    node_count_range=(10, 12),
    runtime_range=(600, 900),
    period_seconds=60,
    hosts=24,
    arrival_gap_range=(0, 300),
    compress_telemetry=False,
)

#: two job classes plus more pattern variety, still desk-scale
MULTICLASS_SPEC = ScenarioSpec(
    seed=21,
    jobs=24,
    class_mix={"small": 0.7, "medium": 0.3},
    node_count_range=(10, 30),
    runtime_range=(600, 1200),
    period_seconds=60,
    hosts=40,
    arrival_gap_range=(0, 600),
    compress_telemetry=False,
)


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory):
    """Generated + fused + summarized TINY_SPEC scenario."""
    root = tmp_path_factory.mktemp("tiny")
    scenario = generate(TINY_SPEC, root / "scenario")
    fusion = run_fusion(load_manifest(scenario.manifest), root / "fused", chunk="1h", workers=1)
    dataset = open_fused_dataset(root / "fused")
    run = summarize_dataset(dataset)
    summary_path = root / "summary.csv"
    write_summary_csv(run.summaries, summary_path)
    return {
        "root": root,
        "scenario": scenario,
        "ledger": scenario.ledger,
        "fusion": fusion,
        "dataset": dataset,
        "run": run,
        "summary_path": summary_path,
    }


@pytest.fixture(scope="session")
def multiclass_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("multiclass")
    scenario = generate(MULTICLASS_SPEC, root / "scenario")
    run_fusion(load_manifest(scenario.manifest), root / "fused", chunk="1d", workers=1)
    dataset = open_fused_dataset(root / "fused")
    run = summarize_dataset(dataset)
    summary_path = root / "summary.csv"
    write_summary_csv(run.summaries, summary_path)
    return {
        "root": root,
        "scenario": scenario,
        "ledger": scenario.ledger,
        "dataset": dataset,
        "run": run,
        "summary_path": summary_path,
    }


@pytest.fixture(scope="session")
def default_run(tmp_path_factory):
    """The default 200-job scenario pushed through the whole pipeline, with
    wall-clock timings recorded for the acceptance runtime bounds."""
    root = tmp_path_factory.mktemp("default")
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    scenario = generate(ScenarioSpec(), root / "scenario")
    timings["synth"] = time.perf_counter() - t0

    t1 = time.perf_counter()
    fusion = run_fusion(
        load_manifest(scenario.manifest), root / "fused", chunk="1d", workers=4
    )
    timings["fuse"] = time.perf_counter() - t1

    t2 = time.perf_counter()
    dataset = open_fused_dataset(root / "fused")
    run = summarize_dataset(dataset)
    summary_path = root / "summary.csv"
    write_summary_csv(run.summaries, summary_path)
    timings["summarize"] = time.perf_counter() - t2
    timings["total"] = time.perf_counter() - t0

    return {
        "root": root,
        "scenario": scenario,
        "ledger": scenario.ledger,
        "fusion": fusion,
        "dataset": dataset,
        "run": run,
        "summary_path": summary_path,
        "timings": timings,
    }


def ledger_by_job(ledger: dict) -> dict:
    return {entry["job_id"]: entry for entry in ledger["jobs"]}


@pytest.fixture()
def ledger_index():
    return ledger_by_job
