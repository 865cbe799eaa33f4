"""``pec-sim`` command line: run, validate and fold."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import SchemaError, load_config, read_config, validate
from .engine import RuntimeInvariantViolation, dumps_record
from .metrics import MalformedTrace, metrics_fold, read_trace
from .sim import Simulation

EXIT_OK = 0
EXIT_SCHEMA = 1
EXIT_RUNTIME = 2

log = logging.getLogger("pecsim")


def _setup_logging() -> None:
    level = os.environ.get("PEC_SIM_LOG", "").lower()
    if level not in ("debug", "info"):
        level = "warning"
    logging.basicConfig(stream=sys.stderr, level=level.upper(), format="%(levelname)s %(name)s: %(message)s")


def _write(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def cmd_run(args: argparse.Namespace) -> int:
    try:
        _, raw = read_config(args.scenario)
        config = load_config(raw)
    except SchemaError as exc:
        for err in exc.errors:
            print(f"error: {err}", file=sys.stderr)
        return EXIT_SCHEMA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    until = None if args.until is None else int(round(args.until * 1000))
    sim = None
    try:
        sim = Simulation(config, args.seed)
        log.info("running %s: %d nodes, %d requests", args.scenario, len(config.nodes), len(config.requests))
        sim.run(until)
    except RuntimeInvariantViolation as exc:
        print(f"runtime invariant violation: {exc}", file=sys.stderr)
        if exc.record is not None:
            print(dumps_record(exc.record), file=sys.stderr)
        if sim is not None and args.trace:
            _write(args.trace, "\n".join(sim.trace_lines()) + "\n")
        return EXIT_RUNTIME
    except Exception as exc:  # topology errors surface here
        print(f"error: {exc.__class__.__name__}: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    if args.trace:
        _write(args.trace, "\n".join(sim.trace_lines()) + "\n")
    metrics_csv = sim.metrics.to_csv()
    _write(args.metrics, metrics_csv)
    log.info("done at t=%d us, %d trace records", sim.now, len(sim.records))
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        _, raw = read_config(args.scenario)
    except SchemaError as exc:
        sys.stdout.write("".join(f"error: {e}\n" for e in exc.errors))
        return EXIT_SCHEMA
    except OSError as exc:
        print(f"error: {exc}")
        return EXIT_SCHEMA
    report = validate(raw)
    sys.stdout.write(report.render())
    return EXIT_OK if report.ok else EXIT_SCHEMA


def cmd_fold(args: argparse.Namespace) -> int:
    try:
        _, records = read_trace(args.trace)
    except (MalformedTrace, OSError) as exc:
        print(f"error: malformed trace: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    _write(args.metrics, metrics_fold(records).to_csv())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pec-sim", description="Named-data pervasive edge computing simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario")
    run.add_argument("scenario")
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.add_argument("--trace", help="write the JSON-lines trace here")
    run.add_argument("--metrics", help="write the metrics CSV here (default: stdout)")
    run.add_argument("--until", type=float, default=None, metavar="MS", help="stop at this simulated time")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="check a scenario file")
    val.add_argument("scenario")
    val.set_defaults(func=cmd_validate)

    fold = sub.add_parser("fold", help="recompute metrics from a trace")
    fold.add_argument("trace")
    fold.add_argument("--metrics", help="write the CSV here (default: stdout)")
    fold.set_defaults(func=cmd_fold)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
