"""Command-line orchestration: synth -> fuse -> summarize -> report.

Exit codes: 0 success, 1 usage error, 2 data/schema error, 3 internal
error. Structured key=value log lines go to stderr; data goes to files and
a JSON result to stdout. A flat key=value config file supplies flag
defaults (flags win), and TELEFUSE_OUT_ROOT anchors relative output paths.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from .errors import ToolkitError
from .fuse import CODECS, open_fused_dataset, run_fusion
from .ingest import load_manifest
from .report import DEFAULT_CDF_METRICS, ReportConfig, write_report
from .summarize import (
    pearson_matrix,
    read_summary_csv,
    summarize_dataset,
    write_correlation_csv,
    write_summary_csv,
)
from .synth import ScenarioSpec, generate, load_scenario_spec, scenario_from_items

logger = logging.getLogger("telefuse")

OUT_ROOT_ENV = "TELEFUSE_OUT_ROOT"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # map argparse's exit(2) onto usage error
        raise _UsageError(message)


def _setup_logging(level: str) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("level=%(levelname)s logger=%(name)s %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(getattr(logging, level.upper(), logging.INFO))


def _load_config(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    config: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise _UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        config[key.strip()] = value.strip()
    return config


def _resolve_out(path: str) -> Path:
    out = Path(path)
    root = os.environ.get(OUT_ROOT_ENV)
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


def _emit(payload: dict) -> None:
    json.dump(payload, sys.stdout, indent=2)
    sys.stdout.write("\n")


def build_parser(defaults: dict[str, object] | None = None) -> _Parser:
    """Construct the CLI parser; ``defaults`` (from a config file) override
    built-in option defaults on every subcommand that has the option, while
    explicitly passed flags still win."""
    subparsers: list[argparse.ArgumentParser] = []
    parser = _Parser(prog="telefuse", description=__doc__)
    parser.add_argument("--config", help="flat key=value config file supplying flag defaults")
    parser.add_argument("--log-level", default="INFO", help="stderr log level (default INFO)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scenario with ground truth")
    subparsers.append(p)
    p.add_argument("--spec", help="scenario spec file (flat key=value); defaults otherwise")
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one scenario key (repeatable)",
    )
    p.add_argument("--out", required=True, help="scenario output directory")

    p = sub.add_parser("fuse", help="tag telemetry with owning jobs, chunked + checkpointed")
    subparsers.append(p)
    p.add_argument("manifest", help="dataset manifest JSON")
    p.add_argument("--out", required=True, help="fused output directory")
    p.add_argument("--chunk", default="month", help="chunk granularity: month or <N><s|m|h|d>")
    p.add_argument("--codec", default="gzip", choices=sorted(CODECS), help="chunk compression")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="parallel chunk workers")
    p.add_argument("--resume", action="store_true", help="resume after the last complete chunk")
    p.add_argument("--max-chunks", type=int, default=None, help="commit at most N new chunks")

    p = sub.add_parser("summarize", help="condense fused chunks into per-job summary rows")
    subparsers.append(p)
    p.add_argument("fused_dir", help="directory produced by fuse")
    p.add_argument("--out", required=True, help="summary output directory")

    p = sub.add_parser("report", help="emit report tables and figures from a summary file")
    subparsers.append(p)
    p.add_argument("summary", help="summary.csv produced by summarize")
    p.add_argument("--out", required=True, help="report output directory")
    p.add_argument(
        "--cdf-metrics",
        default=",".join(DEFAULT_CDF_METRICS),
        help="comma-separated summary metrics to emit CDF tables for",
    )
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    if defaults:
        # subparsers parse into a fresh namespace, so defaults must land on
        # each subparser, not the root
        parser.set_defaults(**{k: v for k, v in defaults.items() if k == "log_level"})
        for p in subparsers:
            dests = {action.dest for action in p._actions}
            p.set_defaults(**{k: v for k, v in defaults.items() if k in dests})
    return parser


def cmd_synth(args: argparse.Namespace) -> dict:
    base = ScenarioSpec()
    spec = load_scenario_spec(args.spec, base=base) if args.spec else base
    overrides: dict[str, str] = {}
    for item in args.overrides:
        if "=" not in item:
            raise _UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    if overrides:
        spec = scenario_from_items(overrides, base=spec)
    out = _resolve_out(args.out)
    result = generate(spec, out)
    return {
        "out_dir": str(result.out_dir),
        "manifest": str(result.manifest),
        "ledger": str(result.ledger_path),
        "jobs": result.ledger["totals"]["jobs"],
        "telemetry_rows": result.ledger["totals"]["telemetry_rows"],
    }


def cmd_fuse(args: argparse.Namespace) -> dict:
    manifest = load_manifest(args.manifest)
    report = run_fusion(
        manifest,
        _resolve_out(args.out),
        chunk=args.chunk,
        codec=args.codec,
        workers=args.workers,
        resume=args.resume,
        max_chunks=args.max_chunks,
    )
    return report.to_dict()


def cmd_summarize(args: argparse.Namespace) -> dict:
    dataset = open_fused_dataset(_resolve_out(args.fused_dir))
    run = summarize_dataset(dataset)
    out = _resolve_out(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary_path = out / "summary.csv"
    write_summary_csv(run.summaries, summary_path)
    correlation_path: Path | None = out / "correlation.csv"
    if len(run.summaries) >= 2:
        write_correlation_csv(pearson_matrix(run.summaries), correlation_path)
    else:
        correlation_path = None
        logger.warning("event=summarize.no_correlation jobs=%d", len(run.summaries))
    summary_bytes = summary_path.stat().st_size
    ratio = summary_bytes / run.fused_bytes if run.fused_bytes else None
    logger.info(
        "event=summarize.done jobs=%d summary_bytes=%d fused_bytes=%d",
        len(run.summaries),
        summary_bytes,
        run.fused_bytes,
    )
    return {
        "summary": str(summary_path),
        "correlation": str(correlation_path) if correlation_path else None,
        "jobs": len(run.summaries),
        "tagged_samples": run.tagged_samples,
        "idle_samples": run.idle_samples,
        "summary_bytes": summary_bytes,
        "fused_bytes": run.fused_bytes,
        "condensation_ratio": ratio,
    }


def cmd_report(args: argparse.Namespace) -> dict:
    summary_path = Path(args.summary)
    summaries = read_summary_csv(summary_path)
    config = ReportConfig(
        cdf_metrics=tuple(m.strip() for m in args.cdf_metrics.split(",") if m.strip()),
        figures=not args.no_figures,
    )
    written = write_report(
        summaries,
        _resolve_out(args.out),
        config=config,
        input_paths=[summary_path],
    )
    return {"out_dir": str(_resolve_out(args.out)), "files": [p.name for p in written]}


_COMMANDS = {
    "synth": cmd_synth,
    "fuse": cmd_fuse,
    "summarize": cmd_summarize,
    "report": cmd_report,
}

#: config keys applied as flag defaults (explicit flags win)
_CONFIG_FLAGS = {"chunk", "codec", "workers", "cdf_metrics", "log_level"}


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        pre = _Parser(add_help=False)
        pre.add_argument("--config")
        known, _ = pre.parse_known_args(argv)
        defaults: dict[str, object] = {}
        if known.config:
            config = _load_config(known.config)
            unknown = set(config) - _CONFIG_FLAGS
            if unknown:
                raise _UsageError(f"unknown config keys: {sorted(unknown)}")
            defaults = dict(config)
            if "workers" in defaults:
                defaults["workers"] = int(str(defaults["workers"]))
        parser = build_parser(defaults)
        args = parser.parse_args(argv)
        _setup_logging(args.log_level)
        result = _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ToolkitError as exc:
        print(f"error={type(exc).__name__} detail={exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        import traceback

        traceback.print_exc()
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    _emit(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
