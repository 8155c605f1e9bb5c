"""Command line: ``python -m kacres <experiment> [--config PATH] [--seed N] [--threads N] [--out DIR]``."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import EXPERIMENTS, ConfigError, load
from .propagator import SeriesConvergenceError
from .search import CertificationError
from .states import NotInL2Error

EXIT_PASS, EXIT_VIOLATION, EXIT_ERROR = 0, 1, 2

log = logging.getLogger("kacres")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kacres", description="Run a named experiment and write report.json/table.csv.")
    ap.add_argument("experiment", nargs="?",
                    help=f"one of: {', '.join(EXPERIMENTS)} (may instead be set in the config file)")
    ap.add_argument("--config", help="flat 'section.key = value' config file")
    ap.add_argument("--seed", type=int, help="master seed (overrides the config)")
    ap.add_argument("--threads", type=int, help="worker cap (overrides the config)")
    ap.add_argument("--out", default="out", help="output directory (default: ./out)")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a single config key; may be repeated")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {"experiment": args.experiment} if args.experiment else {}
    for item in args.set:
        if "=" not in item:
            print(f"error: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return EXIT_ERROR
        k, v = item.split("=", 1)
        overrides[k.strip()] = v
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2**64:
            print("error: seed: must be an unsigned 64-bit integer", file=sys.stderr)
            return EXIT_ERROR
        overrides["seed"] = str(args.seed)
    if args.threads is not None:
        overrides["threads"] = str(args.threads)
    try:
        cfg = load(args.config, overrides)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_ERROR

    from .experiments import run_experiment

    try:
        report = run_experiment(cfg, args.out)
    except (ConfigError, NotInL2Error, CertificationError, SeriesConvergenceError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except ValueError as exc:  # e.g. basis larger than the configured limit
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    jpath, cpath = report.write(args.out)
    fails = report.failures()
    for q, s in sorted(report.summary().items()):
        if s["failed"]:
            print(f"FAIL {q}: {s['failed']}/{s['n']} records, min margin {s['min_margin']:.3e}")
    print(f"{cfg.experiment}: {'PASS' if not fails else 'FAIL'} "
          f"({len(report.records) - len(fails)}/{len(report.records)} records) -> {jpath}, {cpath}")
    return EXIT_PASS if not fails else EXIT_VIOLATION
