"""Numerical laboratory for the D_N / D_1 functionals.

    D_N(H, a) = sup_{eta != 0} |sum_j H(eta_j) Gamma_{N-1}(eta^j)| / (a^2 + |eta|^2)

Test functions are even, vanish at the origin and come with a decay
envelope so that every supremum carries a tail certificate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.optimize import minimize, minimize_scalar

from .search import CertificationError


class HypothesisError(ValueError):
    """Test function violates H(0) = 0, evenness or boundedness."""


@dataclass
class TestFunction:
    """Scalar H(eta) with derivatives, symmetry flags and a tail envelope.

    ``envelope(R)`` must bound max_{p<=4} |H^(p)(eta)| for |eta| >= R.  When
    ``domain`` is finite the function is only considered on [-domain, domain]
    and no envelope is needed.
    """

    __test__ = False  # not a pytest class

    name: str
    derivs: Callable[[np.ndarray, int], np.ndarray]
    length_scale: float = 1.0
    envelope: Callable[[float], float] | None = None
    domain: float | None = None
    even: bool = True
    vanishes_at_zero: bool = True
    bounded: bool = True
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.derivs(np.asarray(x, dtype=float), 0)

    def check_flags(self, n: int = 64, seed: int = 0) -> None:
        if self.envelope is None and self.domain is None:
            raise HypothesisError(f"{self.name}: no decay envelope and no bounded domain")
        if self.vanishes_at_zero and abs(float(self(np.array(0.0)))) > 1e-14:
            raise HypothesisError(f"{self.name}: H(0) != 0")
        if self.even:
            x = np.random.default_rng(seed).uniform(-4, 4, n) * self.length_scale
            if self.domain is not None:
                x = np.clip(x, -self.domain, self.domain)
            if np.abs(self(x) - self(-x)).max() > 1e-12 * (1 + np.abs(self(x)).max()):
                raise HypothesisError(f"{self.name}: H is not even")

    def require_hypotheses(self) -> None:
        self.check_flags()
        if not (self.even and self.vanishes_at_zero and self.bounded):
            raise HypothesisError(f"{self.name}: needs an even, bounded H with H(0)=0")


def poly_gaussian(coeffs, b: float, name: str | None = None) -> TestFunction:
    """H(eta) = sum_m c_m eta^(2m) e^{-b eta^2}, m >= 1 (c_0 is forced to 0 unless given)."""
    c = np.zeros(2 * len(coeffs) - 1)
    c[::2] = coeffs
    polys = [c]
    for _ in range(4):
        p = polys[-1]
        polys.append(P.polysub(P.polyder(p) if len(p) > 1 else np.zeros(1), P.polymulx(2.0 * b * p)))

    def derivs(x, p=0):
        return P.polyval(x, polys[p]) * np.exp(-b * x * x)

    def envelope(R):
        worst = 0.0
        for poly in polys:
            tot = 0.0
            for j, cj in enumerate(poly):
                if cj == 0:
                    continue
                x = max(R, math.sqrt(j / (2.0 * b)))  # |x|^j e^{-b x^2} decreases past this point
                tot += abs(cj) * x**j * math.exp(-b * x * x)
            worst = max(worst, tot)
        return worst

    return TestFunction(name or f"polygauss{[round(float(q), 3) for q in coeffs]},b={b:.4g}", derivs, 1.0 / math.sqrt(b),
                        envelope, vanishes_at_zero=abs(coeffs[0]) == 0, params={"coeffs": list(map(float, coeffs)), "b": b})


def h_r(r: float) -> TestFunction:
    """eta^4 e^{-r eta^2}."""
    tf = poly_gaussian([0.0, 0.0, 1.0], r, name=f"H_r(r={r:g})")
    tf.params["r"] = r
    return tf


def quadratic_on_interval(L: float = 1.0) -> TestFunction:
    polys = [np.array([0.0, 0.0, 1.0]), np.array([0.0, 2.0]), np.array([2.0]), np.zeros(1), np.zeros(1)]
    return TestFunction("eta^2 on interval", lambda x, p=0: P.polyval(x, polys[p]) + 0 * x,
                        length_scale=L, domain=L, bounded=False)


# ---------------------------------------------------------------- 1D sups
@dataclass
class Sup1D:
    value: float
    argmax: float
    radius: float
    tail_bound: float
    certified: bool


def sup_1d(g: Callable[[np.ndarray], np.ndarray], scale: float, *, tail: Callable[[float], float] | None,
           domain: float | None = None, points: int = 4001, min_x: float = 1e-7) -> Sup1D:
    """sup_{x>0} g(x) for an even objective, certified by ``tail`` outside the grid."""
    L = domain if domain is not None else 8.0 * scale
    for _ in range(12):
        x = np.unique(np.concatenate([np.geomspace(min_x * scale, L, points), np.linspace(0, L, points)[1:]]))
        v = g(x)
        top = np.argsort(v)[::-1][:4]
        best_v, best_x = float(v[top[0]]), float(x[top[0]])
        for i in top:
            j = int(np.searchsorted(x, x[i]))
            lo, hi = x[max(j - 1, 0)], x[min(j + 1, len(x) - 1)]
            if hi > lo:
                res = minimize_scalar(lambda t: -float(g(np.array([t]))[0]), bounds=(lo, hi), method="bounded",
                                      options={"xatol": 1e-14 * max(1.0, hi)})
                if -res.fun > best_v:
                    best_v, best_x = float(-res.fun), float(res.x)
        if domain is not None:
            return Sup1D(best_v, best_x, L, 0.0, True)
        tb = tail(L) if tail is not None else math.inf
        if best_v > tb:
            return Sup1D(best_v, best_x, L, tb, True)
        L *= 1.5
    return Sup1D(best_v, best_x, L, tb, False)


def d1(H: TestFunction, a: float) -> float:
    return d1_full(H, a).value


def d1_full(H: TestFunction, a: float, *, require_certificate: bool = True) -> Sup1D:
    if a < 0:
        raise ValueError("a must be >= 0")
    H.check_flags()

    def g(x):
        return np.abs(H(x)) / (a * a + x * x)

    tail = (lambda R: H.envelope(R) / (a * a + R * R)) if H.envelope is not None else None
    s = sup_1d(g, H.length_scale, tail=tail, domain=H.domain)
    if require_certificate and not s.certified:
        raise CertificationError(f"{H.name}: envelope too weak to certify D_1 tail")
    return s


# ---------------------------------------------------------------- C4
@dataclass
class C4Estimate:
    value: float
    per_order: list[float]
    richardson_gap: float
    widths: list[float]


_STENCILS = {
    1: ([-1, 1], [-0.5, 0.5]),
    2: ([-1, 0, 1], [1.0, -2.0, 1.0]),
    3: ([-2, -1, 1, 2], [-0.5, 1.0, -1.0, 0.5]),
    4: ([-2, -1, 0, 1, 2], [1.0, -4.0, 6.0, -4.0, 1.0]),
}


def fd_derivative(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, p: int, h: float) -> np.ndarray:
    if p == 0:
        return f(x)
    offs, w = _STENCILS[p]
    return sum(wk * f(x + o * h) for o, wk in zip(offs, w)) / h**p


def c4_norm(H: TestFunction, *, n_widths: int = 5, rel_tol: float = 1e-4, points: int = 4001) -> C4Estimate:
    """max_{p<=4} sup |H^(p)| by central differences with Richardson extrapolation."""
    L = H.domain if H.domain is not None else 8.0 * H.length_scale
    h0 = 0.05 * H.length_scale
    widths = [h0 / 2**k for k in range(n_widths)]
    for attempt in range(4):
        if H.domain is None:
            while H.envelope(L) > 1e-3 * float(np.abs(H(np.linspace(0, L, 257))).max()):
                L *= 1.5
        x = np.linspace(-L, L, points * 2**attempt)
        per, gaps = [], []
        for p in range(5):
            if p == 0:
                per.append(float(np.abs(H(x)).max()))
                gaps.append(0.0)
                continue
            D = [fd_derivative(H, x, p, h) for h in widths]
            R = [(4.0 * D[k + 1] - D[k]) / 3.0 for k in range(len(D) - 1)]  # O(h^4) estimates
            sups = [float(np.abs(r).max()) for r in R]
            # take the pair of extrapolants with the smallest disagreement
            diffs = [abs(sups[k + 1] - sups[k]) / max(sups[k + 1], 1e-300) for k in range(len(sups) - 1)]
            k = int(np.argmin(diffs))
            per.append(sups[k + 1])
            gaps.append(diffs[k])
        gap = max(gaps)
        if gap <= rel_tol:
            value = max(per)
            if H.domain is None:
                value = max(value, H.envelope(L))
            return C4Estimate(value, per, gap, widths)
    raise CertificationError(f"{H.name}: finite-difference C4 estimates disagree by {gap:.2e}")


def c4_exact(H: TestFunction, points: int = 20001) -> float:
    """Same quantity from analytic derivatives (used as an oracle)."""
    L = H.domain if H.domain is not None else 12.0 * H.length_scale
    x = np.linspace(-L, L, points)
    return max(float(np.abs(H.derivs(x, p)).max()) for p in range(5))


# ---------------------------------------------------------------- D_N
def _dn_values(H: TestFunction, etas: np.ndarray, a: float) -> np.ndarray:
    etas = np.atleast_2d(etas)
    r2 = np.sum(etas * etas, axis=1)
    T = H(etas) * np.exp(-math.pi * (r2[:, None] - etas * etas))
    return np.abs(T.sum(axis=1)) / (a * a + r2)


def _dn_value_grad(H: TestFunction, eta: np.ndarray, a: float):
    r2 = float(eta @ eta)
    E = np.exp(-math.pi * (r2 - eta * eta))
    Hv = H(eta)
    T = Hv * E
    S = T.sum()
    dS = H.derivs(eta, 1) * E - 2.0 * math.pi * eta * (S - T)
    den = a * a + r2
    f = abs(S) / den
    g = np.sign(S) * dS / den - abs(S) * 2.0 * eta / den**2
    return f, g


def eta0(H: TestFunction, a: float, d1_0: float | None = None, d1_a: float | None = None) -> float | None:
    """Crossover point of the majorant; None when D_1(H,0) = D_1(H,a)."""
    D0 = d1(H, 0.0) if d1_0 is None else d1_0
    Da = d1(H, a) if d1_a is None else d1_a
    if D0 - Da <= 1e-14 * D0:
        return None
    return math.sqrt(Da * a * a / (D0 - Da))


def majorant(H: TestFunction, a: float, d1_0: float | None = None, d1_a: float | None = None) -> TestFunction:
    """H~(eta) = min{D_1(H,0) eta^2, D_1(H,a) (a^2 + eta^2)}."""
    D0 = d1(H, 0.0) if d1_0 is None else d1_0
    Da = d1(H, a) if d1_a is None else d1_a
    e0 = eta0(H, a, D0, Da)

    def derivs(x, p=0):
        x = np.asarray(x, dtype=float)
        inner = x * x <= (e0 if e0 is not None else math.inf) ** 2
        if p == 0:
            return np.where(inner, D0 * x * x, Da * (a * a + x * x))
        if p == 1:
            return np.where(inner, 2 * D0 * x, 2 * Da * x)
        if p == 2:
            return np.where(inner, 2 * D0, 2 * Da) + 0 * x
        return 0 * x

    tf = TestFunction(f"majorant[{H.name},a={a:g}]", derivs, H.length_scale, envelope=None,
                      domain=None, bounded=False, params={"D1_0": D0, "D1_a": Da, "eta0": e0})
    return tf


def majorant_jump(H: TestFunction, a: float) -> float | None:
    """Relative mismatch of the two majorant pieces at eta0 (None when eta0 is undefined)."""
    D0, Da = d1(H, 0.0), d1(H, a)
    e0 = eta0(H, a, D0, Da)
    if e0 is None:
        return None
    inner, outer = D0 * e0 * e0, Da * (a * a + e0 * e0)
    return abs(inner - outer) / max(abs(inner), abs(outer), 1e-300)


def structured_formula(D0: float, e0: float, a: float, N: int, eta_pts: int = 2001) -> tuple[float, int, float]:
    """Closed form over configurations (eta0 x k, eta, 0, ...) for the majorant."""
    best = (-math.inf, 0, 0.0)
    eta = np.linspace(0.0, e0, eta_pts)
    for k in range(0, N + 1):
        e = eta if k < N else np.zeros(1)
        num = k * e0**2 * np.exp(-math.pi * ((k - 1) * e0**2 + e * e)) + e * e * np.exp(-math.pi * k * e0**2)
        den = a * a + k * e0**2 + e * e
        with np.errstate(invalid="ignore", divide="ignore"):
            val = np.where(den > 0, num / den, -np.inf)
        i = int(np.argmax(val))
        if val[i] > best[0]:
            best = (float(val[i]), k, float(e[i]))
    return D0 * best[0], best[1], best[2]


@dataclass
class DNResult:
    value: float
    structured: float | None
    random: float | None
    argmax: np.ndarray
    note: str = ""


def _structured_candidates(H: TestFunction, a: float, N: int, e0: float | None, scale: float) -> np.ndarray:
    cands = []
    grid = np.concatenate([np.geomspace(1e-4 * scale, 6 * scale, 200)])
    if e0 is not None and e0 > 0:
        for k in range(N):
            for e in np.linspace(0, e0, 65):
                v = np.zeros(N)
                v[:k] = e0
                v[k] = e
                if np.any(v):
                    cands.append(v)
        cands.append(np.full(N, e0))
    # two-level family: x repeated k times followed by y
    for k in range(1, N + 1):
        for x in grid[::4]:
            for y in (0.0, *grid[::20]):
                v = np.zeros(N)
                v[:k] = x
                if k < N:
                    v[k] = y
                cands.append(v)
    return np.array(cands)


def dn(H: TestFunction, a: float, N: int, mode: str = "both", *, starts: int = 8, seed: int = 0) -> DNResult:
    """Lower bound on D_N(H, a) from structured configurations and/or local search."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if mode not in ("structured", "random", "both"):
        raise ValueError(f"unknown mode {mode!r}")
    s1 = d1_full(H, a)
    if N == 1:
        return DNResult(s1.value, s1.value, s1.value, np.array([s1.argmax]))
    note = ""
    D0 = d1(H, 0.0)
    e0 = eta0(H, a, D0, s1.value) if a > 0 else None
    if e0 is None:
        note = "eta0 undefined (D_1(H,0) = D_1(H,a)); majorant configurations skipped"
    best_v, best_x = -math.inf, np.zeros(N)
    # one-hot configuration equals the D_1 value; always a valid candidate
    onehot = np.zeros(N)
    onehot[0] = s1.argmax
    structured = None
    if mode in ("structured", "both"):
        C = np.vstack([_structured_candidates(H, a, N, e0, H.length_scale), onehot])
        v = _dn_values(H, C, a)
        i = int(np.argmax(v))
        structured = float(v[i])
        best_v, best_x = structured, C[i]
    rnd = None
    if mode in ("random", "both"):
        rng = np.random.default_rng(seed)
        x0s = [onehot, best_x] if mode == "both" else [onehot]
        x0s += [rng.normal(scale=H.length_scale, size=N) for _ in range(starts)]
        rnd = -math.inf
        for x0 in x0s:
            if not np.any(x0):
                continue
            res = minimize(lambda e: tuple(-q for q in _dn_value_grad(H, e, a)), x0, jac=True, method="L-BFGS-B")
            val = float(_dn_values(H, res.x[None, :], a)[0]) if np.any(res.x) else -math.inf
            if val > rnd:
                rnd, rx = val, res.x
        if rnd > best_v:
            best_v, best_x = rnd, rx
    return DNResult(float(best_v), structured, rnd, np.asarray(best_x), note)


# ---------------------------------------------------------------- checks
@dataclass
class EstimReport:
    name: str
    a: float
    N: int
    D1_0: float
    D1_a: float
    DN: float
    C4: float
    layers: dict  # layer -> (lhs, rhs, slack) with slack >= 0 meaning pass

    @property
    def passed(self) -> bool:
        return all(s >= 0 for _, _, s in self.layers.values())

    def as_dict(self) -> dict:
        return {"name": self.name, "a": self.a, "N": self.N, "D1_0": self.D1_0, "D1_a": self.D1_a,
                "DN": self.DN, "C4": self.C4,
                "layers": {k: {"lhs": l, "rhs": r, "slack": s} for k, (l, r, s) in self.layers.items()}}


def check_dn_chain(H: TestFunction, a: float, N: int, *, c4: float | None = None,
                     dn_result: DNResult | None = None) -> EstimReport:
    H.require_hypotheses()
    D0 = d1(H, 0.0)
    Da = d1(H, a)
    C4 = c4_norm(H).value if c4 is None else c4
    DN = (dn_result or dn(H, a, N)).value
    layers = {}

    def upper(name, lhs, rhs):  # lhs <= rhs
        layers[name] = (lhs, rhs, rhs - lhs)

    upper("dn_geometric", DN, math.sqrt((8.0 * C4 + Da) * Da))
    upper("dn_max", DN, max(Da, 2.0 * D0 / (1.0 + 0.5 * math.pi * a * a)))
    upper("d0_vs_da_a", D0**2 / (1.5 * C4 * a * a + 4.0 * D0), Da)
    upper("d0_vs_da_b", 2.0 * D0**2 / C4 / (3.0 * a * a + 4.0), Da)
    upper("C4_dominates_D1", 2.0 * D0, C4)
    upper("N_times_D1", DN, N * Da)
    upper("crude", DN, D0)
    return EstimReport(H.name, a, N, D0, Da, DN, C4, layers)


def counterexample_ratio(r: float, N: int, a: float) -> float:
    if r <= 0:
        raise ValueError("r must be > 0")
    H = h_r(r)
    return dn(H, a, N).value / d1(H, a)


def corpus(n: int = 100, seed: int = 20240607) -> list[TestFunction]:
    """Reproducible mix of bumps, signed quartics and H_r members."""
    rng = np.random.default_rng(seed)
    out: list[TestFunction] = []
    for r in (0.5, 1.0, 3.0, 10.0, 30.0, 100.0):
        out.append(h_r(r))
    out.append(poly_gaussian([0.0, 1.0], 1.0, name="bump eta^2 e^{-eta^2}"))
    while len(out) < n:
        kind = rng.integers(3)
        b = float(np.exp(rng.uniform(np.log(0.2), np.log(20.0))))
        if kind == 0:  # bump
            c = [0.0, float(rng.choice([-1, 1]) * rng.uniform(0.2, 3.0))]
        elif kind == 1:  # quartic with a sign change
            c2 = float(rng.uniform(0.2, 2.0))
            c = [0.0, c2, float(-c2 * rng.uniform(0.2, 3.0) * b)]
        else:  # random even polynomial up to eta^6
            c = [0.0, *rng.normal(size=3).tolist()]
        out.append(poly_gaussian(c, b))
    return out[:n]
