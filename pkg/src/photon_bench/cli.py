"""``photon-bench`` command line.

    photon-bench run <config> [--seed N] [--out DIR] [--workers N]
    photon-bench analyze --timetags FILE --windows PAIR,BSM,THREEFOLD [--out FILE]
    photon-bench validate <config>

Exit codes: 0 success, 1 validation error, 2 runtime error. A config name
that is not an existing path is looked up among the shipped configs.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import configs, runner
from .config import ConfigError, parse_config, parse_quantity
from .runner import Estimate
from .tagio import TagFileError, atomic_write_bytes, read_any
from .timesim import WindowConfig

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _read_config_text(name: str) -> str:
    path = Path(name)
    if path.exists():
        return path.read_text()
    return configs.read_text(name)


def _load(name: str):
    try:
        text = _read_config_text(name)
    except FileNotFoundError:
        print(f"error: config {name!r} not found", file=sys.stderr)
        return None, EXIT_INVALID
    try:
        return parse_config(text), EXIT_OK
    except ConfigError as exc:
        for issue in exc.issues:
            print(f"{name}: {issue}", file=sys.stderr)
        return None, EXIT_INVALID


def cmd_run(args) -> int:
    cfg, status = _load(args.config)
    if cfg is None:
        return status
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    try:
        paths = runner.run(cfg, args.out, workers=args.workers)
    except (OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg, status = _load(args.config)
    if cfg is None:
        return status
    print(f"{args.config}: ok ({cfg.protocol}, {cfg.mode})")
    return EXIT_OK


def _windows(text: str) -> WindowConfig:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ValueError("--windows needs three comma-separated values: pair,bsm,threefold")
    return WindowConfig(*(parse_quantity(p) for p in parts))


def cmd_analyze(args) -> int:
    try:
        windows = _windows(args.windows)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        stream = read_any(args.timetags)
        estimates = runner.coincidence_summary(stream, windows)
    except (OSError, TagFileError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    doc = analysis_document(estimates, windows)
    if args.out:
        atomic_write_bytes(args.out, doc.encode())
    else:
        sys.stdout.write(doc)
    return EXIT_OK


def analysis_document(estimates: list[Estimate], windows: WindowConfig) -> str:
    doc = {
        "format": runner.RESULTS_FORMAT,
        "version": 1,
        "protocol": "analyze",
        "windows": {"pair": windows.pair, "bsm": windows.bsm, "threefold": windows.threefold},
        "estimators": [e.as_dict() for e in estimates],
    }
    return json.dumps(doc, indent=2) + "\n"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="photon-bench", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--seed", type=int, default=None, help="override the config seed")
    r.add_argument("--out", default=".", help="output directory (default: current)")
    r.add_argument("--workers", type=int, default=None,
                   help=f"worker threads (default: ${runner.WORKERS_ENV} or CPU count)")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("analyze", help="coincidence statistics of a time-tag file")
    a.add_argument("--timetags", required=True)
    a.add_argument("--windows", required=True, help="pair,bsm,threefold, e.g. '16ns,3ns,16ns'")
    a.add_argument("--out", default=None, help="write the results document here instead of stdout")
    a.set_defaults(func=cmd_analyze)

    v = sub.add_parser("validate", help="check a config and list every problem")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
