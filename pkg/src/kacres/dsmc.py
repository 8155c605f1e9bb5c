"""Event-driven (Gillespie) simulation of the reservoir and thermostat jump processes.

Replicas are split into fixed-size chunks; each chunk owns a Philox
stream spawned from the master seed, so results do not depend on the
number of worker threads.  Chunks are reduced in index order.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .hermite import TensorIndex
from .operators import SystemParams
from .states import SIGMA2, GaussianMixture, evaluate

CHUNK = 2048


@dataclass
class ParticleState:
    v: np.ndarray
    w: np.ndarray
    clock: float = 0.0

    @property
    def energy(self) -> float:
        return float(self.v @ self.v + self.w @ self.w)


def _mechanism_probs(p: SystemParams) -> np.ndarray:
    r = np.array([p.rate_ss, p.rate_rr, p.rate_sr])
    return r / r.sum()


def _rotate(a, b, theta):
    c, s = np.cos(theta), np.sin(theta)
    return a * c + b * s, -a * s + b * c


def _pick_pair(rng, n: int, size=None):
    i = rng.integers(n, size=size)
    j = rng.integers(n - 1, size=size)
    j = j + (j >= i)
    return i, j


def _step(state: ParticleState, params: SystemParams, rng: np.random.Generator, thermostat: bool) -> ParticleState:
    if params.Lambda <= 0:
        raise ValueError("all rates vanish; nothing to simulate")
    v, w = state.v.copy(), state.w.copy()
    clock = state.clock + rng.exponential(1.0 / params.Lambda)
    mech = rng.choice(3, p=_mechanism_probs(params))
    theta = rng.uniform(0.0, 2.0 * math.pi)
    if mech == 0:
        i, j = _pick_pair(rng, params.M)
        v[i], v[j] = _rotate(v[i], v[j], theta)
    elif mech == 1:
        i, j = _pick_pair(rng, params.N)
        w[i], w[j] = _rotate(w[i], w[j], theta)
    else:
        i = rng.integers(params.M)
        if thermostat:
            fresh = rng.normal(0.0, math.sqrt(SIGMA2))
            v[i], _ = _rotate(v[i], fresh, theta)
        else:
            j = rng.integers(params.N)
            v[i], w[j] = _rotate(v[i], w[j], theta)
    return ParticleState(v, w, clock)


def step_fr(state: ParticleState, params: SystemParams, rng: np.random.Generator) -> ParticleState:
    """One jump of the system + finite reservoir process."""
    return _step(state, params, rng, thermostat=False)


def step_t(state: ParticleState, params: SystemParams, rng: np.random.Generator) -> ParticleState:
    """One jump of the thermostatted process (reservoir velocities evolve but never meet the system)."""
    return _step(state, params, rng, thermostat=True)


# ----------------------------------------------------------------- samplers
@dataclass
class InitialSampler:
    """Draws (v, w) from l_0(v) Gamma_N(w).

    kind: "mixture" (Gaussian mixture, includes single temperatures) or
    "hermite" (density h0 * Gamma_M for a v-only coefficient vector,
    sampled by rejection from a Gaussian of doubled variance).
    """

    kind: str
    M: int
    N: int
    mixture: GaussianMixture | None = None
    coeffs: np.ndarray | None = None
    basis: TensorIndex | None = None
    _bound: float | None = field(default=None, repr=False)

    @classmethod
    def from_mixture(cls, mix: GaussianMixture, M: int, N: int) -> "InitialSampler":
        return cls("mixture", M, N, mixture=mix)

    @classmethod
    def from_coefficients(cls, coeffs: np.ndarray, basis: TensorIndex, M: int, N: int) -> "InitialSampler":
        if basis.n_coords != M:
            raise ValueError("hermite sampler needs a basis on the M system coordinates")
        return cls("hermite", M, N, coeffs=np.asarray(coeffs, float), basis=basis)

    def _acceptance_bound(self) -> float:
        # sup_v h0(v) e^{-pi v^2 / 2} on a grid, padded by 25%
        if self._bound is None:
            g = np.linspace(-6, 6, 121 if self.M <= 2 else 41)
            mesh = np.stack(np.meshgrid(*([g] * self.M), indexing="ij"), -1).reshape(-1, self.M)
            vals = evaluate(self.coeffs, self.basis, mesh) * np.exp(-0.5 * math.pi * np.sum(mesh**2, 1))
            if vals.min() < -1e-9:
                raise ValueError("h0 takes negative values; it is not a probability density")
            self._bound = 1.25 * float(vals.max())
        return self._bound

    def sample_v(self, rng: np.random.Generator, K: int) -> np.ndarray:
        if self.kind == "mixture":
            return self.mixture.sample(rng, K, self.M)
        if self.kind == "hermite":
            bound = self._acceptance_bound()
            out = np.empty((0, self.M))
            sd = math.sqrt(2.0 * SIGMA2)
            while len(out) < K:
                n = 2 * (K - len(out)) + 64
                prop = rng.normal(0.0, sd, size=(n, self.M))
                ratio = evaluate(self.coeffs, self.basis, prop) * np.exp(-0.5 * math.pi * np.sum(prop**2, 1)) / bound
                if ratio.max() > 1.0:
                    raise RuntimeError("rejection bound violated; refine the acceptance grid")
                out = np.vstack([out, prop[rng.uniform(size=n) < ratio]])
            return out[:K]
        raise ValueError(f"unknown sampler kind {self.kind!r}")

    def sample(self, rng: np.random.Generator, K: int) -> tuple[np.ndarray, np.ndarray]:
        v = self.sample_v(rng, K)
        w = rng.normal(0.0, math.sqrt(SIGMA2), size=(K, self.N))
        return v, w


# ----------------------------------------------------------------- ensembles
Observable = Callable[[np.ndarray, np.ndarray], np.ndarray]  # (V, W) -> (K,) or (K, m)


def default_observables(M: int, N: int, char_points: Sequence[Sequence[float]] = ()) -> dict[str, Observable]:
    obs: dict[str, Observable] = {}
    for p in (1, 2, 3, 4):
        obs[f"v^{p}"] = (lambda V, W, p=p: V**p)
        obs[f"w^{p}"] = (lambda V, W, p=p: W**p)
    obs["energy"] = lambda V, W: np.sum(V * V, 1) + np.sum(W * W, 1)
    obs["momentum"] = lambda V, W: np.sum(V, 1) + np.sum(W, 1)
    for k, z in enumerate(char_points):
        z = np.asarray(z, float)

        def cf(V, W, z=z):
            ph = 2.0 * math.pi * (np.hstack([V, W]) @ z)
            return np.stack([np.cos(ph), -np.sin(ph)], axis=1)

        obs[f"char[{k}]"] = cf
    return obs


@dataclass
class EnsembleResult:
    t_grid: np.ndarray
    K: int
    mean: dict[str, np.ndarray]  # name -> (T, ...) replica means
    stderr: dict[str, np.ndarray]
    flagged: int
    events: int
    energy_drift: float  # max relative per-replica energy change (FR only)
    final: tuple[np.ndarray, np.ndarray] | None = None

    def dump_raw(self, path) -> None:
        """Final replica states: ASCII header line, then little-endian float64 rows (v..., w...)."""
        if self.final is None:
            raise ValueError("final states were not kept")
        V, W = self.final
        X = np.ascontiguousarray(np.hstack([V, W]), dtype="<f8")
        with open(path, "wb") as fh:
            fh.write(f"KACRES-RAW v1 rows={X.shape[0]} cols={X.shape[1]} M={V.shape[1]} N={W.shape[1]} "
                     f"t={float(self.t_grid[-1])!r} dtype=<f8 order=row-major\n".encode())
            fh.write(X.tobytes())


def load_raw(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        header = fh.readline().decode().split()
        meta = dict(kv.split("=", 1) for kv in header[2:])
        data = np.frombuffer(fh.read(), dtype="<f8")
    return meta, data.reshape(int(meta["rows"]), int(meta["cols"]))


def _advance(V, W, params: SystemParams, rng, t_from: float, t_to: float, thermostat: bool) -> int:
    """Advance all replicas from t_from to t_to in place; returns the number of events."""
    K, M = V.shape
    N = W.shape[1]
    X = np.hstack([V, W])
    clock = np.full(K, t_from)
    active = np.arange(K)
    probs = _mechanism_probs(params)
    events = 0
    while active.size:
        clock[active] += rng.exponential(1.0 / params.Lambda, size=active.size)
        done = clock[active] > t_to
        active = active[~done]
        n = active.size
        if n == 0:
            break
        events += n
        mech = rng.choice(3, size=n, p=probs)
        theta = rng.uniform(0.0, 2.0 * math.pi, size=n)
        i = np.empty(n, dtype=np.int64)
        j = np.empty(n, dtype=np.int64)
        m0, m1, m2 = mech == 0, mech == 1, mech == 2
        if m0.any():
            i[m0], j[m0] = _pick_pair(rng, M, m0.sum())
        if m1.any():
            a, b = _pick_pair(rng, N, m1.sum())
            i[m1], j[m1] = M + a, M + b
        if m2.any():
            i[m2] = rng.integers(M, size=m2.sum())
            j[m2] = M + rng.integers(N, size=m2.sum())
        if thermostat and m2.any():
            rows = active[m2]
            fresh = rng.normal(0.0, math.sqrt(SIGMA2), size=rows.size)
            X[rows, i[m2]], _ = _rotate(X[rows, i[m2]], fresh, theta[m2])
            keep = ~m2
            rows, ii, jj, th = active[keep], i[keep], j[keep], theta[keep]
        else:
            rows, ii, jj, th = active, i, j, theta
        X[rows, ii], X[rows, jj] = _rotate(X[rows, ii], X[rows, jj], th)
    V[:] = X[:, :M]
    W[:] = X[:, M:]
    return events


def _run_chunk(params, sampler, t_grid, observables, K, ss, thermostat):
    rng = np.random.Generator(np.random.Philox(ss))
    V, W = sampler.sample(rng, K)
    e0 = np.sum(V * V, 1) + np.sum(W * W, 1)
    sums, sqs = {}, {}
    t_prev, events = 0.0, 0
    flagged = np.zeros(K, dtype=bool)
    for ti, t in enumerate(t_grid):
        if t > t_prev:
            events += _advance(V, W, params, rng, t_prev, t, thermostat)
            t_prev = t
        for name, fn in observables.items():
            x = np.asarray(fn(V, W), dtype=float)
            bad = ~np.isfinite(x).reshape(K, -1).all(axis=1)
            flagged |= bad
            x = np.where(bad.reshape((K,) + (1,) * (x.ndim - 1)), 0.0, x)
            sums.setdefault(name, []).append(x.sum(axis=0))
            sqs.setdefault(name, []).append((x * x).sum(axis=0))
    e1 = np.sum(V * V, 1) + np.sum(W * W, 1)
    drift = float(np.max(np.abs(e1 - e0) / e0)) if not thermostat else float("nan")
    return sums, sqs, int(flagged.sum()), events, drift, V, W


def run_ensemble(params: SystemParams, sampler: InitialSampler, t_grid, observables: dict[str, Observable] | None = None,
                 K: int = 10_000, seed: int = 0, *, system: str = "FR", threads: int = 1,
                 keep_final: bool = False) -> EnsembleResult:
    if K < 2:
        raise ValueError("need K >= 2 replicas for error bars")
    if system not in ("FR", "T"):
        raise ValueError("system must be 'FR' or 'T'")
    t_grid = np.asarray(sorted(float(t) for t in t_grid))
    if t_grid.size == 0 or t_grid[0] < 0:
        raise ValueError("t_grid must be a non-empty list of nonnegative times")
    observables = observables or default_observables(params.M, params.N)
    sizes = [min(CHUNK, K - s) for s in range(0, K, CHUNK)]
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    thermostat = system == "T"

    def work(c):
        return _run_chunk(params, sampler, t_grid, observables, sizes[c], seqs[c], thermostat)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, range(len(sizes))))
    else:
        parts = [work(c) for c in range(len(sizes))]

    mean, stderr = {}, {}
    for name in observables:
        s = sum(np.stack(p[0][name]) for p in parts)
        q = sum(np.stack(p[1][name]) for p in parts)
        m = s / K
        var = np.maximum(q / K - m * m, 0.0) * K / (K - 1)
        mean[name] = m
        stderr[name] = np.sqrt(var / K)
    final = (np.vstack([p[5] for p in parts]), np.vstack([p[6] for p in parts])) if keep_final else None
    drift = max((p[4] for p in parts), default=0.0)
    return EnsembleResult(t_grid, K, mean, stderr, sum(p[2] for p in parts), sum(p[3] for p in parts),
                          drift, final)
