"""Certified supremum search for ratios with a known tail envelope.

The objective is a vectorized ratio ``f(points) -> values`` on R^d.  A
caller-supplied ``tail(R)`` bounds the objective outside the ball of radius R;
the search reports ``certified`` when its best value beats that bound at
the search radius, so the value is the global sup up to the local
refinement accuracy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc


class CertificationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SearchConfig:
    grid_points: int = 33
    half_width: float = 2.0
    refine_rounds: int = 5
    top_k: int = 8
    shells: int = 40
    shell_min: float = 1e-4
    qmc_samples: int = 4096
    max_dense_dim: int = 3
    polish: bool = True
    expand_factor: float = 1.5
    max_expansions: int = 6
    parity: bool = False  # objective invariant under x -> -x coordinatewise
    sorted_groups: tuple[tuple[int, ...], ...] = ()  # permutation-invariant coordinate groups
    seed: int = 0
    chunk: int = 8192


@dataclass
class Certificate:
    value: float
    argmax: np.ndarray
    radius: float
    tail_bound: float
    certified: bool
    history: list[float] = field(default_factory=list)
    evaluations: int = 0

    def as_dict(self) -> dict:
        return {"value": self.value, "argmax": [float(x) for x in self.argmax], "radius": self.radius,
                "tail_bound": self.tail_bound, "certified": self.certified,
                "history": list(self.history), "evaluations": self.evaluations}


def canonicalize(points: np.ndarray, cfg: SearchConfig) -> np.ndarray:
    p = np.abs(points) if cfg.parity else points.copy()
    for g in cfg.sorted_groups:
        g = list(g)
        p[:, g] = np.sort(p[:, g], axis=1)
    return p


class _Counter:
    # Points closer to the origin than r_min are excluded: ratios with a
    # |x|^2 denominator lose all accuracy to cancellation there, and the
    # small-|x| limit is already sampled by the radial shells.
    def __init__(self, f, chunk, r_min):
        self.f, self.chunk, self.r_min, self.n = f, chunk, r_min, 0

    def __call__(self, pts):
        pts = np.atleast_2d(pts)
        self.n += len(pts)
        out = np.full(len(pts), -np.inf)
        ok = np.linalg.norm(pts, axis=1) >= self.r_min
        sel = np.nonzero(ok)[0]
        for s in range(0, len(sel), self.chunk):
            part = sel[s:s + self.chunk]
            out[part] = self.f(pts[part])
        return np.nan_to_num(out, nan=-np.inf)


def _initial_points(dim: int, L: float, cfg: SearchConfig) -> np.ndarray:
    if dim <= cfg.max_dense_dim:
        ax = np.linspace(-L, L, cfg.grid_points)
        pts = np.stack(np.meshgrid(*([ax] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    else:
        sob = qmc.Sobol(dim, scramble=True, seed=cfg.seed)
        pts = (2.0 * sob.random(cfg.qmc_samples) - 1.0) * L
    pts = canonicalize(pts, cfg)
    pts = np.unique(pts, axis=0)
    r = np.linalg.norm(pts, axis=1)
    return pts[(r > 0) & (r <= L)]


def _neighbours(x: np.ndarray, h: float) -> np.ndarray:
    d = x.size
    if d <= 3:
        steps = np.stack(np.meshgrid(*([[-1, 0, 1]] * d), indexing="ij"), axis=-1).reshape(-1, d)
        steps = steps[np.any(steps != 0, axis=1)]
    else:
        eye = np.eye(d)
        steps = np.vstack([eye, -eye])
    return x + h * steps


def _into_ball(pts: np.ndarray, L: float) -> np.ndarray:
    r = np.linalg.norm(pts, axis=1, keepdims=True)
    return np.where(r > L, pts * (L / np.maximum(r, 1e-300)), pts)


def maximize(f: Callable[[np.ndarray], np.ndarray], dim: int, cfg: SearchConfig = SearchConfig(),
             tail: Callable[[float], float] | None = None, *, require_certificate: bool = False,
             extra_starts: Sequence[np.ndarray] = ()) -> Certificate:
    """Global-then-local search for sup f with a tail certificate."""
    F = _Counter(f, cfg.chunk, 0.999 * cfg.shell_min)
    L = cfg.half_width
    history: list[float] = []
    best_val, best_x = -np.inf, np.zeros(dim)
    for _ in range(cfg.max_expansions + 1):
        pts = _initial_points(dim, L, cfg)
        if len(extra_starts):
            pts = np.vstack([pts, _into_ball(np.atleast_2d(np.asarray(extra_starts, dtype=float)), L)])
        vals = F(pts)
        order = np.argsort(vals)[::-1][: cfg.top_k]
        starts = pts[order]
        # radial shells through the leading directions reach the small-|x| limit
        dirs = starts / np.linalg.norm(starts, axis=1, keepdims=True)
        radii = np.geomspace(cfg.shell_min, L, cfg.shells)
        shell_pts = (dirs[:, None, :] * radii[None, :, None]).reshape(-1, dim)
        sv = F(shell_pts)
        cand = np.vstack([starts, shell_pts])
        cval = np.concatenate([vals[order], sv])
        top = np.argsort(cval)[::-1][: cfg.top_k]
        cand, cval = cand[top].copy(), cval[top].copy()
        if cval[0] > best_val:
            best_val, best_x = float(cval[0]), cand[0].copy()
        history.append(best_val)

        h = 2.0 * L / max(cfg.grid_points - 1, 1)
        for _r in range(cfg.refine_rounds):
            h *= 0.5
            for i in range(len(cand)):
                for _move in range(20):
                    nb = _into_ball(_neighbours(cand[i], h), L)
                    nv = F(nb)
                    j = int(np.argmax(nv))
                    if nv[j] <= cval[i]:
                        break
                    cand[i], cval[i] = nb[j], nv[j]
            i = int(np.argmax(cval))
            if cval[i] > best_val:
                best_val, best_x = float(cval[i]), cand[i].copy()
            history.append(best_val)

        if cfg.polish:
            box = L

            def neg(x):
                return np.inf if np.linalg.norm(x) > box else -F(x[None, :])[0]

            res = minimize(neg, best_x, method="Nelder-Mead",
                           options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 400 * dim})
            if np.isfinite(res.fun) and -res.fun > best_val:
                best_val, best_x = float(-res.fun), np.asarray(res.x)
            history.append(best_val)

        R = L  # every evaluated point lies in the closed ball of radius L
        tb = tail(R) if tail is not None else math.inf
        certified = best_val > tb
        if certified or tail is None:
            break
        L *= cfg.expand_factor
    cert = Certificate(best_val, best_x, R, tb, bool(certified), history, F.n)
    if require_certificate and not cert.certified:
        raise CertificationError(
            f"search not certified: best {best_val:.3e} <= tail bound {tb:.3e} at radius {R:.3g}")
    return cert


def with_overrides(cfg: SearchConfig, **kw) -> SearchConfig:
    return replace(cfg, **kw)
