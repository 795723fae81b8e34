"""Command-line entry point: ``turnsim run | vad-check | table``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import PIPELINES, ConfigError, ScenarioConfig, load_config
from .harness import Report, TraceError, load_trace, render_table, run_scenario, vad_check

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="turnsim", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="replay a trace and write a report")
    run.add_argument("--trace", required=True, type=Path)
    run.add_argument("--config", type=Path)
    run.add_argument("--pipeline", choices=sorted(PIPELINES))
    run.add_argument("--mode", choices=["half", "full"])
    run.add_argument("--streaming", choices=["on", "off"])
    run.add_argument("--seed", type=int)
    run.add_argument("--report", type=Path, help="where to write the full JSON report")
    run.add_argument("--format", choices=["json", "csv", "table"], default="table")

    vad = sub.add_parser("vad-check", help="print floor signals for frame traces")
    vad.add_argument("--trace", required=True, type=Path)
    vad.add_argument("--config", type=Path)

    table = sub.add_parser("table", help="re-render a saved report")
    table.add_argument("report", type=Path)
    table.add_argument("--format", choices=["json", "csv", "table"], default="table")
    return p


def _config(path: Path | None) -> ScenarioConfig:
    return load_config(path) if path else ScenarioConfig()


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "table":
            report = Report.from_dict(json.loads(args.report.read_text(encoding="utf-8")))
            sys.stdout.write(render_table(report, args.format))
            return EXIT_OK
        trace = load_trace(args.trace)
        cfg = _config(args.config)
    except (TraceError, ConfigError, OSError, json.JSONDecodeError, TypeError) as exc:
        print(f"turnsim: {exc}", file=sys.stderr)
        return EXIT_INPUT

    try:
        if args.command == "vad-check":
            if any(e.kind == "utterance" for e in trace):
                print("turnsim: vad-check needs a frame-level trace", file=sys.stderr)
                return EXIT_INPUT
            json.dump(vad_check(trace, cfg), sys.stdout, indent=2)
            sys.stdout.write("\n")
            return EXIT_OK
        streaming = None if args.streaming is None else args.streaming == "on"
        cfg = cfg.with_overrides(pipeline=args.pipeline, mode=args.mode, streaming=streaming, seed=args.seed)
        report = run_scenario(trace, cfg)
    except (ConfigError, ValueError) as exc:
        print(f"turnsim: {exc}", file=sys.stderr)
        return EXIT_INPUT if isinstance(exc, ConfigError) else EXIT_RUNTIME
    except RuntimeError as exc:
        print(f"turnsim: scenario failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    if args.report:
        args.report.write_text(report.to_json(), encoding="utf-8")
    sys.stdout.write(render_table(report, args.format))
    failed = report.errors or any(t.error for t in report.turns)
    return EXIT_RUNTIME if failed else EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
