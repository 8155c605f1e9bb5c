"""Flat ``section.key = value`` configuration files mapped onto dataclasses."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, get_type_hints

EXPERIMENTS = ("verify-thm1", "verify-thm2", "steady-state", "dsmc", "inequality", "saturate")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""

    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


@dataclass
class ParamsSection:
    M: int = 1
    N: int = 2
    lam_S: float = 1.0
    lam_R: float = 1.0
    mu: float = 1.0


@dataclass
class StateSection:
    # hermite: 1 + amplitude * H_degree(v_coord); mixture: two-temperature; temperature: single Gaussian;
    # auto: mixture for verify-thm2, hermite otherwise
    kind: str = "auto"
    amplitude: float = 0.1
    degree: int = 2
    coord: int = 0
    spread: float = 0.3
    weight: float = 0.5
    beta_s: float = 2.0 * math.pi
    P: int = 2


@dataclass
class SearchSection:
    grid_points: int = 33
    half_width: float = 2.0
    refine_rounds: int = 5
    shells: int = 40
    qmc_samples: int = 4096
    max_expansions: int = 6


@dataclass
class CheckSection:
    tol: float = 1e-8  # absolute slack allowed on every margin
    z: float = 3.0  # multiplier on statistical error bars


@dataclass
class Thm2Section:
    cutoff: int = 16
    contraction: bool = True


@dataclass
class SteadySection:
    n_states: int = 20
    long_time_tol: float = 1e-6
    max_degree: int = 4


@dataclass
class DsmcSection:
    K: int = 10_000
    system: str = "FR"
    compare_spectral: bool = True
    raw: bool = False  # dump final replica states to raw.bin


@dataclass
class InequalitySection:
    n_functions: int = 100
    a: list = field(default_factory=lambda: [0.0, 0.5, 1.0, 2.0])
    N: list = field(default_factory=lambda: [1, 2, 4, 8])
    r: list = field(default_factory=lambda: [1.0, 10.0, 100.0, 1000.0])


@dataclass
class SaturateSection:
    P: list = field(default_factory=lambda: [2, 3])
    c: float = 1.0
    points: int = 21


@dataclass
class ExperimentConfig:
    experiment: str = "verify-thm1"
    seed: int = 0
    threads: int = 1
    cutoff: int = 8
    tol: float = 1e-12
    t_grid: list | None = None  # None -> geometric 2^-6 .. 2^4 over mu
    params: ParamsSection = field(default_factory=ParamsSection)
    state: StateSection = field(default_factory=StateSection)
    search: SearchSection = field(default_factory=SearchSection)
    check: CheckSection = field(default_factory=CheckSection)
    thm2: Thm2Section = field(default_factory=Thm2Section)
    steady: SteadySection = field(default_factory=SteadySection)
    dsmc: DsmcSection = field(default_factory=DsmcSection)
    inequality: InequalitySection = field(default_factory=InequalitySection)
    saturate: SaturateSection = field(default_factory=SaturateSection)

    # keys that do not influence results and so stay out of the hash
    _UNHASHED = ("threads",)

    def times(self) -> list[float]:
        if self.t_grid is not None:
            return [float(t) for t in self.t_grid]
        if self.experiment == "dsmc":
            return [0.5, 1.0, 2.0]
        return [2.0**k / self.params.mu for k in range(-6, 5)]

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def resolved(self) -> dict:
        """Everything that can influence results (the report echo and hash input)."""
        d = self.as_dict()
        for k in self._UNHASHED:
            d.pop(k, None)
        return d

    def digest(self) -> str:
        d = self.resolved()
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def _convert(key: str, raw: str, typ: Any) -> Any:
    raw = raw.strip()
    name = getattr(typ, "__name__", str(typ))
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is str:
            return raw.strip("\"'")
        if "list" in str(typ):
            items = [s for s in raw.strip("[]").replace(",", " ").split()]
            if not items:
                raise ConfigError(key, "must be a non-empty list")
            return [float(s) if any(c in s for c in ".eE") else int(s) for s in items]
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(key, f"cannot parse {raw!r} as {name}") from None
    raise ConfigError(key, f"unsupported type {name}")


def _section_types(obj) -> dict:
    return get_type_hints(type(obj))


def set_key(cfg: ExperimentConfig, key: str, raw: str) -> None:
    parts = key.split(".")
    target = cfg
    for p in parts[:-1]:
        if p not in {f.name for f in fields(target)} or not dataclasses.is_dataclass(getattr(target, p)):
            raise ConfigError(key, "unknown configuration key")
        target = getattr(target, p)
    leaf = parts[-1]
    names = {f.name for f in fields(target)}
    if leaf not in names or dataclasses.is_dataclass(getattr(target, leaf)):
        raise ConfigError(key, "unknown configuration key")
    typ = _section_types(target)[leaf]
    if leaf == "t_grid" and target is cfg:
        typ = list
    setattr(target, leaf, _convert(key, raw, typ))


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {cfg.experiment!r}; choose one of {', '.join(EXPERIMENTS)}")
    if cfg.t_grid is not None:
        if len(cfg.t_grid) == 0:
            raise ConfigError("t_grid", "time grid is empty")
        if any(t < 0 for t in cfg.t_grid):
            raise ConfigError("t_grid", "times must be nonnegative")
    p = cfg.params
    if p.M < 1 or p.N < 1:
        raise ConfigError("params.M" if p.M < 1 else "params.N", "must be >= 1")
    for k in ("lam_S", "lam_R", "mu"):
        if getattr(p, k) < 0:
            raise ConfigError(f"params.{k}", "must be >= 0")
    if cfg.cutoff < 0:
        raise ConfigError("cutoff", "must be >= 0")
    if cfg.state.kind == "auto":
        cfg.state.kind = "mixture" if cfg.experiment == "verify-thm2" else "hermite"
    if cfg.state.kind not in ("hermite", "mixture", "temperature", "constant"):
        raise ConfigError("state.kind", f"unknown state kind {cfg.state.kind!r}")
    if cfg.dsmc.system not in ("FR", "T"):
        raise ConfigError("dsmc.system", "must be FR or T")
    if cfg.dsmc.K < 2:
        raise ConfigError("dsmc.K", "need at least two replicas")
    if cfg.threads < 1:
        raise ConfigError("threads", "must be >= 1")
    return cfg


def parse(text: str, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    cfg = ExperimentConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key == "t_grid" and not val.strip("[] "):
            raise ConfigError("t_grid", "time grid is empty")
        set_key(cfg, key, val)
    for key, val in (overrides or {}).items():
        set_key(cfg, key, val)
    return validate(cfg)


def load(path: str | Path | None, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    text = Path(path).read_text() if path is not None else ""
    return parse(text, overrides)
