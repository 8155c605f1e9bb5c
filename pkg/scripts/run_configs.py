#!/usr/bin/env python3
"""Run every config in configs/ and print one status line each.

Usage: python scripts/run_configs.py [--out DIR] [--only PATTERN]
"""
import argparse
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="out/configs")
    ap.add_argument("--only", default="*", help="glob on config file names")
    args = ap.parse_args()
    worst = 0
    for cfg in sorted((ROOT / "configs").glob(f"{args.only}.cfg")):
        out = Path(args.out) / cfg.stem
        proc = subprocess.run([sys.executable, "-m", "kacres", "--config", str(cfg), "--out", str(out)],
                              capture_output=True, text=True)
        tail = (proc.stdout.strip().splitlines() or proc.stderr.strip().splitlines() or [""])[-1]
        print(f"{cfg.name:24s} exit {proc.returncode}  {tail}")
        worst = max(worst, proc.returncode)
    return worst


if __name__ == "__main__":
    sys.exit(main())
