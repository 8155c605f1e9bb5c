"""Symmetric Hermite states u_{M,P} that push the interaction estimate to its M-scaling."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hermite import TensorIndex
from .operators import Assembler, SystemParams
from .propagator import Propagator
from .states import HermiteState, evaluate, saturating_polynomial, saturating_support

C_SAT = 3.0 / 128.0


@dataclass
class SaturatingState:
    M: int
    P: int
    coeffs: np.ndarray  # on a v-only basis of M coordinates, cutoff 2P
    basis: TensorIndex
    a: float  # positivity scale for h0 = 1 + a u

    @property
    def support(self) -> list[tuple[int, ...]]:
        return saturating_support(self.M, self.P)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def h0(self, basis: TensorIndex) -> HermiteState:
        c = np.zeros(len(basis))
        pad = (0,) * (basis.n_coords - self.M)
        for m in self.support:
            c[basis.flat(m + pad)] = self.a
        c[0] += 1.0
        return HermiteState(c, basis, meta={"family": "saturating", "M": self.M, "P": self.P, "a": self.a})


def positivity_scale(coeffs: np.ndarray, basis: TensorIndex, M: int, *, half_width: float = 5.0,
                     points: int | None = None, factor: float = 0.9) -> tuple[float, float]:
    """(a, grid minimum of u): a = factor/|min| when min < 0, else 1."""
    points = points or {1: 2001, 2: 401, 3: 81}.get(M, 25)
    g = np.linspace(-half_width, half_width, points)
    lo = math.inf
    # chunk along the first axis to bound memory
    rest = np.stack(np.meshgrid(*([g] * (M - 1)), indexing="ij"), -1).reshape(-1, M - 1) if M > 1 else None
    for x in g:
        pts = np.hstack([np.full((len(rest), 1), x), rest]) if rest is not None else np.array([[x]])
        lo = min(lo, float(evaluate(coeffs, basis, pts).min()))
    return (factor / abs(lo) if lo < 0 else 1.0), lo


def build(M: int, P: int, *, cutoff: int | None = None) -> SaturatingState:
    if M < 2 or P < 2:
        raise ValueError("need M >= 2 and P >= 2")
    basis = TensorIndex(M, cutoff if cutoff is not None else 2 * P)
    u = saturating_polynomial(basis, M, P)
    a, _ = positivity_scale(u, basis, M)
    return SaturatingState(M, P, u, basis, a)


def cross_term_coeffs(u: np.ndarray, basis: TensorIndex, M: int) -> float:
    """<R_{1,1} u, R_{2,1} u> - <T_1 u, T_2 u> with one reservoir coordinate appended."""
    asm = Assembler(SystemParams(M, 1), basis.cutoff)
    if asm.basis.n_coords != basis.n_coords + 1:
        raise ValueError("u must live on the M system coordinates")
    full = np.zeros(len(asm.basis))
    idx = np.hstack([basis.indices, np.zeros((len(basis), 1), dtype=np.int64)])
    full[asm.basis.flat(idx)] = u
    r1 = asm.pair(0, M) @ full
    r2 = asm.pair(1, M) @ full
    t1 = asm.thermostat(0) @ full
    t2 = asm.thermostat(1) @ full
    return float(r1 @ r2 - t1 @ t2)


def cross_term(M: int, P: int | None = None) -> float:
    """Cross term for u_{M,P} (P defaults to M)."""
    s = build(M, P or M)
    return cross_term_coeffs(s.coeffs, s.basis, M)


def u_bar() -> tuple[np.ndarray, TensorIndex]:
    basis = TensorIndex(2, 4)
    return saturating_polynomial(basis, 2, 2), basis


def composition_count(M: int, P: int) -> int:
    return math.comb(M + P - 1, M - 1)


def displayed_ratio_bound(M: int, P: int, base: float = 11.0 / 8.0) -> float:
    """The combinatorial lower bound for cross_term / ||u_{M,P}|| as displayed for general (M, P)."""
    return base * (P - 1) * (P - 2) * (M + 1) * M / ((M + P) * (M + P - 1) * (M + P - 2) * (M + P - 3))


def symmetric_pair_sides(u: np.ndarray, asm: Assembler) -> tuple[float, float]:
    """|| sum_i ((1/N) sum_j R_ij u - T_i u) ||^2 against the pair decomposition.

    u must be symmetric in the system coordinates and v-only.
    """
    p = asm.params
    M, N = p.M, p.N
    tot = np.zeros_like(u)
    for i in range(M):
        tot += sum(asm.pair(i, M + j) @ u for j in range(N)) / N - asm.thermostat(i) @ u
    lhs = float(tot @ tot)
    T1u = asm.thermostat(0) @ u
    single = T1u @ u - T1u @ T1u
    rhs = M / N * single
    if M > 1:
        r1 = asm.pair(0, M) @ u
        r2 = asm.pair(1, M) @ u
        rhs += M * (M - 1) / N * (r1 @ r2 - T1u @ (asm.thermostat(1) @ u))
    return lhs, float(rhs)


@dataclass
class SaturationRecord:
    t: float
    measured: float
    lower_bound: float

    @property
    def margin(self) -> float:
        return self.measured - self.lower_bound


def saturation_experiment(M: int, N: int, *, times=None, c: float = 1.0, C: float = C_SAT, cutoff: int | None = None,
                          tol: float = 1e-12) -> dict:
    """Difference of the two semigroups for h0 = 1 + a u_{M,M} against the short-time lower bound."""
    params = SystemParams(M, N)
    cutoff = cutoff if cutoff is not None else 2 * M
    asm = Assembler(params, cutoff)
    prop = Propagator(asm, tol=tol)
    sat = build(M, M)
    h0 = sat.h0(asm.basis)
    u0 = h0.deviation()
    nu = float(np.linalg.norm(u0))
    L = params.Lambda
    times = np.asarray(times if times is not None else np.linspace(0.0, c / L, 21))
    diff = prop.difference(h0, times)
    meas = np.linalg.norm(diff, axis=1)
    pref = M / math.sqrt(N) * nu
    lower = pref * times * ((C + 1.0) * np.exp(-L * times) - 1.0)
    # initial slope: ||(Q_I - Q_T) u0|| is the exact derivative at t = 0
    slope = float(np.linalg.norm(asm.get("Q_I") @ u0 - asm.get("Q_T") @ u0))
    h = 1e-4 / L
    fd_slope = float(np.linalg.norm(prop.difference(h0, [h])[0]) / h)
    recs = [SaturationRecord(float(t), float(m), float(lb)) for t, m, lb in zip(times, meas, lower)]
    return {
        "M": M, "N": N, "a": sat.a, "norm_u0": nu, "Lambda": L,
        "records": recs,
        "initial_slope": slope, "initial_slope_fd": fd_slope,
        "slope_bound": C * pref,
        "nonvacuous_until": math.log(1.0 + C) / L,
    }
