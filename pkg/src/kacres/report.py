"""Experiment reports: per-time records, named checks, JSON and CSV output."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
CSV_COLUMNS = ("quantity", "t", "measured", "bound", "margin", "stderr")


@dataclass
class Record:
    """One compared quantity.

    ``kind`` is "upper" when measured should not exceed bound and "lower"
    when it should not fall below it; ``margin`` is signed so that a
    nonnegative value always means the check holds.  ``errbar`` is
    "statistical" (scaled by z in the pass rule) or "deterministic".
    """

    quantity: str
    t: float
    measured: float
    bound: float
    stderr: float = 0.0
    kind: str = "upper"
    errbar: str = "statistical"

    @property
    def margin(self) -> float:
        return self.bound - self.measured if self.kind == "upper" else self.measured - self.bound

    def passes(self, tol: float, z: float) -> bool:
        width = z * self.stderr if self.errbar == "statistical" else self.stderr
        m = self.margin
        return bool(np.isfinite(m) and m >= -(tol + width))


@dataclass
class ExperimentReport:
    experiment: str
    config: dict
    config_hash: str
    tol: float = 1e-8
    z: float = 3.0
    records: list[Record] = field(default_factory=list)
    info: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def add(self, quantity: str, t: float, measured: float, bound: float, **kw) -> Record:
        r = Record(quantity, float(t), float(measured), float(bound), **kw)
        self.records.append(r)
        return r

    def failures(self) -> list[Record]:
        return [r for r in self.records if not r.passes(self.tol, self.z)]

    @property
    def passed(self) -> bool:
        return not self.failures()

    def summary(self) -> dict:
        out: dict[str, dict] = {}
        for r in self.records:
            s = out.setdefault(r.quantity, {"n": 0, "failed": 0, "min_margin": math.inf})
            s["n"] += 1
            s["failed"] += int(not r.passes(self.tol, self.z))
            s["min_margin"] = min(s["min_margin"], r.margin)
        return out

    def as_dict(self) -> dict:
        return _clean({
            "schema_version": SCHEMA_VERSION,
            "experiment": self.experiment,
            "config": self.config,
            "config_hash": self.config_hash,
            "versions": versions(),
            "pass_rule": {"tol": self.tol, "z": self.z},
            "passed": self.passed,
            "records": [
                {"quantity": r.quantity, "t": r.t, "measured": r.measured, "bound": r.bound, "margin": r.margin,
                 "stderr": r.stderr, "kind": r.kind, "errbar": r.errbar, "pass": r.passes(self.tol, self.z)}
                for r in self.records
            ],
            "summary": self.summary(),
            "info": self.info,
            "notes": self.notes,
        })

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            w.writerow([r.quantity, repr(r.t), repr(r.measured), repr(r.bound), repr(r.margin), repr(r.stderr)])
        return buf.getvalue()

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        j, c = out / "report.json", out / "table.csv"
        j.write_text(self.to_json())
        c.write_text(self.to_csv())
        return j, c


def versions() -> dict:
    out = {}
    for pkg in ("artifact", "numpy", "scipy"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = "unknown"
    return out


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_clean(v) for v in x.tolist()]
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else ("nan" if math.isnan(x) else ("inf" if x > 0 else "-inf"))
    return x
