"""Semigroups e^{(Q - Lambda) t} by uniformization, their difference, and steady states.

With Qhat = Q / Lambda (spectrum in [-1, 1]) the semigroup is the
Poisson mixture sum_n pois(n; Lambda t) Qhat^n.  The powers Qhat^n h do
not depend on t, so a whole time grid costs one Krylov sweep.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh
from scipy.stats import poisson

from .operators import Assembler, GeneratorMatrix
from .states import HermiteState

DEFAULT_TOL = 1e-12
MAX_TERMS = 20_000


class SeriesConvergenceError(RuntimeError):
    def __init__(self, msg: str, residual: float):
        super().__init__(f"{msg} (achieved residual bound {residual:.3e})")
        self.residual = residual


def terms_needed(rate_time: float, scale: float, tol: float, max_terms: int = MAX_TERMS) -> int:
    """Smallest n with P(Pois(rate_time) > n) * scale <= tol."""
    if scale == 0.0 or rate_time == 0.0:
        return 0
    n = int(rate_time + 6.0 * math.sqrt(rate_time) + 10)
    while n < max_terms and poisson.sf(n, rate_time) * scale > tol:
        n = int(1.25 * n) + 5
    n = min(n, max_terms)
    resid = poisson.sf(n, rate_time) * scale
    if resid > tol:
        raise SeriesConvergenceError(f"uniformization needs more than {max_terms} terms at Lambda*t={rate_time:g}", resid)
    # tighten from above by bisection on the monotone tail
    lo, hi = 0, n
    while lo < hi:
        mid = (lo + hi) // 2
        if poisson.sf(mid, rate_time) * scale <= tol:
            hi = mid
        else:
            lo = mid + 1
    return hi


def _weights(n_terms: int, rate_time: float) -> np.ndarray:
    return poisson.pmf(np.arange(n_terms + 1), rate_time)


def evolve_many(h: np.ndarray, Q: GeneratorMatrix | sp.spmatrix, Lambda: float, times, *,
                tol: float = DEFAULT_TOL, max_terms: int = MAX_TERMS) -> np.ndarray:
    """Rows are e^{(Q - Lambda) t} h for each t in ``times``; requires ||Q|| <= Lambda."""
    times = np.asarray(times, dtype=float)
    if (times < 0).any():
        raise ValueError("times must be nonnegative")
    mat = Q.matrix if isinstance(Q, GeneratorMatrix) else Q
    h = np.asarray(h, dtype=float)
    scale = float(np.linalg.norm(h))
    counts = [terms_needed(Lambda * t, scale, tol, max_terms) for t in times]
    n_max = max(counts, default=0)
    out = np.zeros((len(times), h.size))
    x = h.copy()
    W = np.array([_weights(n_max, Lambda * t) for t in times]) if len(times) else np.zeros((0, 1))
    # each row stops at its own term count, so a result does not depend on which times share the batch
    for i, c in enumerate(counts):
        W[i, c + 1:] = 0.0
    for n in range(n_max + 1):
        out += W[:, n:n + 1] * x
        if n < n_max:
            x = (mat @ x) / Lambda
    return out


def evolve(state: HermiteState, Q: GeneratorMatrix, Lambda: float, t: float, tol: float = DEFAULT_TOL) -> HermiteState:
    coeffs = evolve_many(state.coeffs, Q, Lambda, [t], tol=tol)[0]
    return state.with_coeffs(coeffs, t=float(t), generator=getattr(Q, "tag", "?"))


@dataclass
class DifferenceTerms:
    """Norms of A^{n-1-k} (Q_I - Q_T) B^k u0 and the matching a-priori bounds."""

    measured: np.ndarray  # [n, k], zero above the diagonal k >= n
    bound: np.ndarray


class Propagator:
    """Evolutions for one assembled (params, cutoff)."""

    def __init__(self, asm: Assembler, *, tol: float = DEFAULT_TOL, threads: int = 1):
        self.asm = asm
        self.params = asm.params
        self.Lambda = asm.params.Lambda
        self.tol = tol
        self.threads = max(1, threads)

    # -- plain semigroups ---------------------------------------------------
    def evolve(self, state: HermiteState, which: str, t: float) -> HermiteState:
        return evolve(state, self.asm.get(which), self.Lambda, t, self.tol)

    def evolve_many(self, state: HermiteState, which: str, times) -> np.ndarray:
        Q = self.asm.get(which)
        times = list(times)
        if self.threads == 1 or len(times) < 2:
            return evolve_many(state.coeffs, Q, self.Lambda, times, tol=self.tol)
        chunks = np.array_split(np.arange(len(times)), min(self.threads, len(times)))
        with ThreadPoolExecutor(self.threads) as pool:
            parts = list(pool.map(lambda c: evolve_many(state.coeffs, Q, self.Lambda, [times[i] for i in c],
                                                        tol=self.tol), chunks))
        return np.vstack(parts)

    def difference(self, state: HermiteState, times) -> np.ndarray:
        """Rows e^{Lt} h0 - e^{Lbar t} h0 by evolving separately."""
        return self.evolve_many(state, "FULL_FR", times) - self.evolve_many(state, "FULL_T", times)

    # -- telescoped expansion ----------------------------------------------
    def _pieces(self):
        A = self.asm.get("FULL_FR").matrix / self.Lambda
        B = self.asm.get("FULL_T").matrix / self.Lambda
        C = (self.asm.get("Q_I").matrix - self.asm.get("Q_T").matrix) / self.Lambda
        return A, B, C

    def difference_series(self, state: HermiteState, times) -> np.ndarray:
        """Same quantity through d_n = A d_{n-1} + (Q_I - Q_T) B^{n-1} u0 (all scaled by Lambda)."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        u0 = state.deviation()
        A, B, C = self._pieces()
        scale = 2.0 * float(np.linalg.norm(u0))
        n_max = max((terms_needed(self.Lambda * t, scale, self.tol) for t in times), default=0)
        W = np.array([_weights(n_max, self.Lambda * t) for t in times])
        out = np.zeros((len(times), u0.size))
        d = np.zeros_like(u0)
        b = u0.copy()
        for n in range(1, n_max + 1):
            d = A @ d + C @ b
            b = B @ b
            out += W[:, n:n + 1] * d
        return out

    def term_norms(self, state: HermiteState, n_max: int) -> DifferenceTerms:
        u0 = state.deviation()
        A, B, C = self._pieces()
        L = self.Lambda
        p = self.params
        meas = np.zeros((n_max + 1, n_max))
        bound = np.zeros_like(meas)
        b = u0.copy()
        base = 0.5 * p.mu * p.M / math.sqrt(p.N) * np.linalg.norm(u0)
        for k in range(n_max):
            x = C @ b * L  # undo the 1/Lambda in C
            for n in range(k + 1, n_max + 1):
                meas[n, k] = np.linalg.norm(x)
                bound[n, k] = base * L ** (n - k - 1) * (L - 0.5 * p.mu) ** k
                x = A @ x * L
            b = B @ b * L
        return DifferenceTerms(meas, bound)

    # -- steady state ------------------------------------------------------
    def radial_vectors(self) -> dict[int, np.ndarray]:
        """Unit rotation-invariant vector of each even total-degree block."""
        if not hasattr(self, "_radial"):
            self._radial = radial_vectors(self.asm)
        return self._radial

    def steady_state(self, state: HermiteState) -> HermiteState:
        out = np.zeros_like(state.coeffs)
        for d, r in self.radial_vectors().items():
            s = self.asm.basis.block(d)
            out[s] = r * (r @ state.coeffs[s])
        return state.with_coeffs(out, steady=True)


def radial_vectors(asm: Assembler) -> dict[int, np.ndarray]:
    basis = asm.basis
    K = basis.n_coords
    if K == 1:
        return {0: np.ones(1)}
    pairs = list(combinations(range(K), 2))
    P = sum(asm.pair(i, j).matrix for i, j in pairs) / len(pairs)
    out = {}
    for d in range(0, basis.cutoff + 1, 2):
        s = basis.block(d)
        blk = P[s, s]
        n = blk.shape[0]
        if n <= 600:
            w, V = np.linalg.eigh(blk.toarray())
            top, second, vec = w[-1], (w[-2] if n > 1 else -np.inf), V[:, -1]
        else:
            w, V = eigsh(blk, k=2, which="LA", v0=np.ones(n), tol=1e-14)
            order = np.argsort(w)
            top, second, vec = w[order[-1]], w[order[0]], V[:, order[-1]]
        if abs(top - 1.0) > 1e-9 or second > 1.0 - 1e-9:
            raise RuntimeError(f"radial subspace of degree {d} is not one-dimensional (eigs {top}, {second})")
        # one more pass of every projector polishes eigensolver error
        for i, j in pairs:
            Rij = asm.pair(i, j).matrix[s, s]
            vec = Rij @ vec
        vec = vec / np.linalg.norm(vec)
        if vec[0] < 0:
            vec = -vec
        out[d] = vec
    return out


# -- steady-state L^2 constant ---------------------------------------------
def radial_eigenvalue(M: int, N: int, k: int) -> float:
    """||P u||^2 / ||u||^2 for v-only u in the degree-2k block: (M/2)_k / ((M+N)/2)_k."""
    from scipy.special import poch

    return float(poch(M / 2, k) / poch((M + N) / 2, k))


def steady_l2_constant_quadrature(M: int, N: int) -> float:
    """Sum of the radial eigenvalues over all degrees k >= 1, by quadrature.

    Each eigenvalue is a Beta ratio B(M/2 + k, N/2) / B(M/2, N/2), so the
    geometric series under the integral sums in closed form.  Diverges for
    N <= 2.
    """
    if N < 3:
        return math.inf
    from scipy.integrate import quad
    from scipy.special import beta

    val, _ = quad(lambda t: t ** (M / 2) * (1.0 - t) ** (N / 2 - 2), 0.0, 1.0, limit=200)
    return val / beta(M / 2, N / 2)


def steady_l2_constant_truncated(asm: Assembler, radial: dict[int, np.ndarray] | None = None) -> tuple[float, float]:
    """(largest, summed) ||P u||^2 / ||u||^2 over the v-only part of each positive-degree block."""
    radial = radial if radial is not None else radial_vectors(asm)
    mask = asm.v_only_mask
    vals = [float(np.sum(r[mask[asm.basis.block(d)]] ** 2)) for d, r in radial.items() if d > 0]
    return (max(vals, default=0.0), float(sum(vals)))


def relaxation_rate(asm: Assembler, which: str = "FULL_FR", *, dense_limit: int = 3200) -> float:
    """Lambda minus the largest eigenvalue of Q below Lambda: the L^2 decay rate toward the steady state.

    Q is block diagonal in total degree, so each block is handled on its own.
    """
    Q = asm.get(which).matrix
    L = asm.params.Lambda
    best = -math.inf
    for d in range(1, asm.basis.cutoff + 1):
        s = asm.basis.block(d)
        blk = Q[s, s]
        if blk.shape[0] <= dense_limit:
            w = np.linalg.eigvalsh(blk.toarray())
        else:
            w = eigsh(blk, k=6, which="LA", return_eigenvectors=False, tol=1e-12)
        w = w[w < L - 1e-9 * max(L, 1.0)]
        if w.size:
            best = max(best, float(w.max()))
    return L - best
