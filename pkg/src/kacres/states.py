"""Coefficient states and the initial-distribution menu.

A :class:`HermiteState` stores ground-state coefficients h (density
f = h * Gamma) on a :class:`TensorIndex`.  The builders here produce the
three initial families used throughout: Gaussian mixtures (one component
gives a plain temperature state), Hermite-perturbed states 1 + a u_{M,P},
and random v-only perturbations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

import numpy as np

from .hermite import QuadratureRule, TensorIndex, hermite_table

SIGMA2 = 1.0 / (2.0 * math.pi)  # variance of Gamma_1


class NotInL2Error(ValueError):
    """Initial state has infinite L^2(Gamma) norm."""


@dataclass
class HermiteState:
    coeffs: np.ndarray
    basis: TensorIndex
    representation: str = "ground-state"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (len(self.basis),):
            raise ValueError("coefficient vector does not match the basis")

    @property
    def normalization(self) -> float:
        """<h, 1>; the constant sits at flat index 0."""
        return float(self.coeffs[0])

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def deviation(self) -> np.ndarray:
        """Coefficients of h - 1."""
        u = self.coeffs.copy()
        u[0] -= 1.0
        return u

    def with_coeffs(self, coeffs, **meta) -> "HermiteState":
        return HermiteState(coeffs, self.basis, self.representation, {**self.meta, **meta})

    def v_only(self, M: int) -> bool:
        nz = np.abs(self.coeffs) > 0
        return bool((self.basis.indices[nz, M:] == 0).all())


def constant_state(basis: TensorIndex) -> HermiteState:
    c = np.zeros(len(basis))
    c[0] = 1.0
    return HermiteState(c, basis)


def embed(state: HermiteState, basis: TensorIndex) -> HermiteState:
    """Re-index onto a larger basis (extra trailing coordinates at degree 0)."""
    idx = state.basis.indices
    pad = basis.n_coords - idx.shape[1]
    if pad < 0:
        raise ValueError("target basis has fewer coordinates")
    full = np.hstack([idx, np.zeros((idx.shape[0], pad), dtype=np.int64)])
    pos = basis.flat(full)
    keep = np.abs(state.coeffs) > 0
    if (pos[keep] < 0).any():
        raise ValueError("state does not fit in the target basis")
    out = np.zeros(len(basis))
    out[pos[keep]] = state.coeffs[keep]
    return HermiteState(out, basis, state.representation, dict(state.meta))


@lru_cache(maxsize=None)
def _gaussian_1d(variance: float, cutoff: int) -> np.ndarray:
    # c_n = E[H_n(v)], v ~ N(0, variance); Gauss rule exact for the polynomial
    rule = QuadratureRule.gauss(cutoff // 2 + 2)
    nodes = rule.nodes * math.sqrt(variance / SIGMA2)
    return rule.weights @ hermite_table(nodes, cutoff)


def gaussian_coefficients_1d(variance: float, cutoff: int) -> np.ndarray:
    """Orthonormal Hermite coefficients of N(0, variance) / Gamma_1."""
    return _gaussian_1d(float(variance), int(cutoff)).copy()


def pair_overlap_1d(s1: float, s2: float) -> float:
    """<h_1, h_2>_Gamma for two centred Gaussians with variances s1, s2."""
    A = 1.0 / s1 + 1.0 / s2 - 1.0 / SIGMA2
    if A <= 0:
        return math.inf
    return math.sqrt(SIGMA2 / (s1 * s2 * A))


@dataclass(frozen=True)
class GaussianMixture:
    """l_0(v) = sum_m w_m prod_i N(0, s_m)(v_i) on M coordinates."""

    weights: tuple[float, ...]
    variances: tuple[float, ...]

    def __post_init__(self):
        if len(self.weights) != len(self.variances) or not self.weights:
            raise ValueError("weights and variances must be non-empty and of equal length")
        if abs(sum(self.weights) - 1.0) > 1e-12 or min(self.weights) < 0:
            raise ValueError("weights must be a probability vector")
        if min(self.variances) <= 0:
            raise ValueError("variances must be positive")

    @classmethod
    def temperature(cls, beta_s: float) -> "GaussianMixture":
        return cls((1.0,), (1.0 / beta_s,))

    @classmethod
    def two_temperature(cls, spread: float, weight: float = 0.5) -> "GaussianMixture":
        """Variances sigma^2 (1 +- spread); equal weights keep E_2 = sigma^2."""
        return cls((weight, 1.0 - weight), (SIGMA2 * (1 + spread), SIGMA2 * (1 - spread)))

    @property
    def E2(self) -> float:
        return float(np.dot(self.weights, self.variances))

    @property
    def E3(self) -> float:
        return float(np.dot(self.weights, np.square(self.variances)))

    @property
    def E4(self) -> float:
        return 3.0 * self.E3

    def in_l2(self) -> bool:
        return all(s < 2 * SIGMA2 for s, w in zip(self.variances, self.weights) if w > 0)

    def l2_norm_sq(self, M: int) -> float:
        total = 0.0
        for w1, s1 in zip(self.weights, self.variances):
            for w2, s2 in zip(self.weights, self.variances):
                total += w1 * w2 * pair_overlap_1d(s1, s2) ** M
        return total

    def char(self, xi) -> np.ndarray:
        """Fourier transform at points of shape (..., M) (kernel e^{-2 pi i xi.v})."""
        r2 = np.sum(np.square(xi), axis=-1)
        return sum(w * np.exp(-2.0 * math.pi**2 * s * r2) for w, s in zip(self.weights, self.variances))

    def sample(self, rng: np.random.Generator, K: int, M: int) -> np.ndarray:
        comp = rng.choice(len(self.weights), size=K, p=self.weights)
        sd = np.sqrt(np.asarray(self.variances))[comp]
        return rng.standard_normal((K, M)) * sd[:, None]


def mixture_state(basis: TensorIndex, M: int, mix: GaussianMixture, *, require_l2: bool = True) -> HermiteState:
    if require_l2 and not mix.in_l2():
        raise NotInL2Error(
            "h0 is not in L^2(Gamma): a mixture component has variance >= 2 sigma^2 (2 beta_S <= beta)"
        )
    D = basis.cutoff
    idx = basis.indices
    v_only = (idx[:, M:] == 0).all(axis=1)
    coeffs = np.zeros(len(basis))
    for w, s in zip(mix.weights, mix.variances):
        c1 = gaussian_coefficients_1d(s, D)
        coeffs[v_only] += w * np.prod(c1[idx[v_only, :M]], axis=1)
    exact = mix.l2_norm_sq(M)
    tail = max(exact - float(coeffs @ coeffs), 0.0) if math.isfinite(exact) else math.inf
    return HermiteState(coeffs, basis, meta={"family": "gaussian-mixture", "truncation_l2": math.sqrt(tail),
                                             "E2": mix.E2, "E3": mix.E3, "E4": mix.E4})


def saturating_support(M: int, P: int) -> list[tuple[int, ...]]:
    """Multi-indices (2 p_1, ..., 2 p_M) with p_1 + ... + p_M = P."""
    from .hermite import _compositions

    return [tuple(2 * p for p in comp) for comp in _compositions(P, M)]


def saturating_polynomial(basis: TensorIndex, M: int, P: int) -> np.ndarray:
    """u_{M,P}: unit coefficients on the saturating support."""
    if 2 * P > basis.cutoff:
        raise ValueError(f"u_{{M,P}} has degree {2 * P} > basis cutoff {basis.cutoff}")
    u = np.zeros(len(basis))
    pad = (0,) * (basis.n_coords - M)
    for m in saturating_support(M, P):
        u[basis.flat(m + pad)] = 1.0
    return u


def random_v_only(basis: TensorIndex, M: int, rng: np.random.Generator, *, amplitude: float = 0.1,
                  max_degree: int | None = None, even_only: bool = True, symmetric: bool = False) -> HermiteState:
    """h0 = 1 + u with ||u|| = amplitude, u v-only and orthogonal to degrees 0 and 1."""
    idx = basis.indices
    deg = basis.degrees
    mask = (idx[:, M:] == 0).all(axis=1) & (deg >= 2)
    if max_degree is not None:
        mask &= deg <= max_degree
    if even_only:
        mask &= (idx % 2 == 0).all(axis=1)
    u = np.zeros(len(basis))
    u[mask] = rng.standard_normal(int(mask.sum()))
    if symmetric:
        u = symmetrize(basis, u, range(M))
    u *= amplitude / np.linalg.norm(u)
    u[0] = 1.0
    return HermiteState(u, basis, meta={"family": "random-v-only"})


def symmetrize(basis: TensorIndex, coeffs: np.ndarray, coords) -> np.ndarray:
    """Average coefficients over all permutations of ``coords``."""
    from itertools import permutations

    coords = list(coords)
    idx = basis.indices
    out = np.zeros_like(coeffs)
    perms = list(permutations(coords))
    for perm in perms:
        moved = idx.copy()
        moved[:, coords] = idx[:, list(perm)]
        out[basis.flat(moved)] += coeffs
    return out / len(perms)


@lru_cache(maxsize=None)
def _monomial_table(max_power: int, cutoff: int) -> np.ndarray:
    # T[p, n] = <v^p, H_n>_Gamma
    rule = QuadratureRule.gauss((max_power + cutoff) // 2 + 2)
    pw = rule.nodes[:, None] ** np.arange(max_power + 1)
    return (pw * rule.weights[:, None]).T @ hermite_table(rule.nodes, cutoff)


def moment(state: HermiteState, powers) -> float:
    """E[prod_k x_k^{p_k}] under f = h Gamma; ``powers`` maps coordinate -> power."""
    tab = _monomial_table(max(powers.values()), state.basis.cutoff)
    idx = state.basis.indices
    others = [k for k in range(idx.shape[1]) if k not in powers]
    weight = np.ones(len(state.basis))
    for k, p in powers.items():
        weight = weight * tab[p, idx[:, k]]
    if others:
        weight = weight * (idx[:, others] == 0).all(axis=1)
    return float(weight @ state.coeffs)


def symmetric_moments(state: HermiteState, M: int) -> dict:
    """E_2, E_3 (mixed v_i^2 v_j^2), E_4 averaged over system coordinates."""
    e2 = np.mean([moment(state, {i: 2}) for i in range(M)])
    e4 = np.mean([moment(state, {i: 4}) for i in range(M)])
    e3 = (np.mean([moment(state, {i: 2, j: 2}) for i, j in combinations(range(M), 2)])
          if M > 1 else SIGMA2 * e2)
    return {"E2": float(e2), "E3": float(e3), "E4": float(e4)}


def min_on_grid(poly_coeffs: np.ndarray, basis: TensorIndex, M: int, *, half_width: float = 5.0,
                points: int = 101) -> float:
    """Minimum of the v-only function sum_n c_n H_n(v) over a dense grid in [-L, L]^M."""
    grid = np.linspace(-half_width, half_width, points)
    mesh = np.stack(np.meshgrid(*([grid] * M), indexing="ij"), axis=-1).reshape(-1, M)
    return float(evaluate(poly_coeffs, basis, mesh).min())


def evaluate(coeffs: np.ndarray, basis: TensorIndex, points: np.ndarray) -> np.ndarray:
    """h(x) at points of shape (n, k) with k <= n_coords (missing coordinates at 0)."""
    points = np.atleast_2d(points)
    k = points.shape[1]
    nz = np.nonzero(coeffs)[0]
    idx = basis.indices[nz]
    if k < basis.n_coords and (idx[:, k:] > 0).any():
        raise ValueError("state depends on coordinates that were not supplied")
    tab = hermite_table(points, basis.cutoff)  # (n, k, D+1)
    prod = np.ones((points.shape[0], len(nz)))
    for j in range(k):
        prod *= tab[:, j, idx[:, j]]
    return prod @ coeffs[nz]
