"""Weighted L^2 norm, characteristic functions and the d_2 distance.

Fourier kernel is e^{-2 pi i zeta.x}, under which e^{-pi x^2} is self-dual.
Hermite polynomials orthogonal for e^{-pi x^2} are not Fourier eigenfunctions
against that same Gaussian; instead H_n(x) e^{-pi x^2} maps to the monomial
(-i)^n (sqrt(2 pi) zeta)^n / sqrt(n!) times e^{-pi zeta^2}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .hermite import SQRT2PI, TensorIndex
from .search import Certificate, SearchConfig, maximize
from .states import HermiteState


class MomentConditionError(ValueError):
    pass


def l2_gamma_norm(state: HermiteState | np.ndarray) -> float:
    c = state.coeffs if isinstance(state, HermiteState) else np.asarray(state)
    return float(np.linalg.norm(c))


@dataclass
class CharFunction:
    evaluator: Callable[[np.ndarray], np.ndarray]
    dim: int
    provenance: str  # "analytic-from-coefficients" | "empirical-from-ensemble" | "closed-form"
    coeffs: np.ndarray | None = None
    basis: TensorIndex | None = None
    stderr: Callable[[np.ndarray], np.ndarray] | None = None

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise ValueError(f"expected points with {self.dim} coordinates, got {pts.shape[1]}")
        return self.evaluator(pts)


def fourier_table(zeta, cutoff: int) -> np.ndarray:
    """(sqrt(2 pi) zeta)^n / sqrt(n!) for n = 0..cutoff (phase and Gaussian omitted)."""
    x = SQRT2PI * np.asarray(zeta, dtype=float)
    out = np.empty(x.shape + (cutoff + 1,))
    out[..., 0] = 1.0
    for n in range(1, cutoff + 1):
        out[..., n] = out[..., n - 1] * x / math.sqrt(n)
    return out


def _hermite_fourier(coeffs: np.ndarray, basis: TensorIndex):
    nz = np.nonzero(coeffs)[0]
    idx = basis.indices[nz]
    phase = (-1j) ** (idx.sum(axis=1) % 4)
    cc = coeffs[nz] * phase

    def ev(pts):
        tab = fourier_table(pts, basis.cutoff)
        prod = np.ones((len(pts), len(nz)))
        for k in range(pts.shape[1]):
            prod *= tab[:, k, idx[:, k]]
        return (prod @ cc) * np.exp(-math.pi * np.sum(pts * pts, axis=1))

    return ev


def char_from_coefficients(state: HermiteState) -> CharFunction:
    return CharFunction(_hermite_fourier(state.coeffs, state.basis), state.basis.n_coords,
                        "analytic-from-coefficients", state.coeffs, state.basis)


def gaussian_char(dim: int) -> CharFunction:
    return CharFunction(lambda p: np.exp(-math.pi * np.sum(p * p, axis=1)).astype(complex), dim, "closed-form")


def empirical_char(samples: np.ndarray) -> CharFunction:
    """Sample-mean characteristic function with its Monte Carlo standard error."""
    X = np.asarray(samples, dtype=float)
    K = X.shape[0]

    def phases(pts):
        return 2.0 * math.pi * (X @ pts.T)  # (K, n)

    def ev(pts):
        ph = phases(pts)
        return np.cos(ph).mean(axis=0) - 1j * np.sin(ph).mean(axis=0)

    def se(pts):
        ph = phases(pts)
        var = np.cos(ph).var(axis=0, ddof=1) + np.sin(ph).var(axis=0, ddof=1)
        return np.sqrt(var / K)

    return CharFunction(ev, X.shape[1], "empirical-from-ensemble", stderr=se)


def _monomial_peak(n: int) -> float:
    # sup_x x^n e^{-x^2/4} / sqrt(n!) = (2n/e)^{n/2} / sqrt(n!)
    if n == 0:
        return 1.0
    return math.exp(0.5 * n * math.log(2.0 * n / math.e) - 0.5 * math.lgamma(n + 1))


def hermite_envelope(coeffs: np.ndarray, basis: TensorIndex) -> Callable[[float], float]:
    """E(R) >= |transform of sum c_n H_n Gamma| at every |zeta| >= R.

    Splits e^{-pi zeta^2} into two halves; one half tames the monomial,
    the other gives the decay e^{-pi R^2 / 2}.
    """
    nz = np.nonzero(coeffs)[0]
    peaks = np.array([_monomial_peak(n) for n in range(basis.cutoff + 1)])
    amp = np.prod(peaks[basis.indices[nz]], axis=1)
    s = float(np.sum(np.abs(coeffs[nz]) * amp))
    return lambda R: s * math.exp(-0.5 * math.pi * R * R)


def check_moment_conditions(fhat: CharFunction, tol: float = 1e-8) -> None:
    """Unit mass and zero first moment, read off the coefficients or the transform."""
    if fhat.coeffs is not None:
        c = fhat.coeffs
        if abs(c[0] - 1.0) > tol:
            raise MomentConditionError(f"state is not normalized: <h,1> = {c[0]:.3e}")
        first = c[fhat.basis.block(1)] if fhat.basis.cutoff >= 1 else np.zeros(0)
        if first.size and np.abs(first).max() > tol:
            raise MomentConditionError("state has a nonzero first moment")
        return
    z = np.zeros((1, fhat.dim))
    v0 = fhat(z)[0]
    if abs(v0 - 1.0) > tol:
        raise MomentConditionError(f"transform at the origin is {v0}, not 1")
    if fhat.provenance == "empirical-from-ensemble":
        return  # first moments of samples vanish only up to MC error
    eps = 1e-4
    E = eps * np.eye(fhat.dim)
    odd = (fhat(E) - fhat(-E)) / (2 * eps)
    if np.abs(odd).max() > 1e-6:
        raise MomentConditionError("transform has a nonzero first moment")


@dataclass
class D2Result:
    value: float
    certificate: Certificate
    stderr: float = 0.0

    def as_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, **{f"cert_{k}": v for k, v in self.certificate.as_dict().items()}}


def d2(fhat: CharFunction, ghat: CharFunction, search: SearchConfig = SearchConfig(), *,
       subspace: np.ndarray | None = None, tail: Callable[[float], float] | None = None,
       require_certificate: bool = False, check_moments: bool = True) -> D2Result:
    """Certified lower bound on sup |fhat - ghat| / |zeta|^2.

    ``subspace`` (dim x d, orthonormal columns) restricts the search to
    zeta = subspace @ x; the result is then still a valid lower bound and
    the tail bound still applies because the map is an isometry.
    """
    if fhat.dim != ghat.dim:
        raise ValueError("transforms live in different dimensions")
    if check_moments:
        check_moment_conditions(fhat)
        check_moment_conditions(ghat)
    U = np.eye(fhat.dim) if subspace is None else np.asarray(subspace, dtype=float)
    if not np.allclose(U.T @ U, np.eye(U.shape[1]), atol=1e-12):
        raise ValueError("subspace columns must be orthonormal")

    same_basis = (fhat.coeffs is not None and ghat.coeffs is not None and fhat.basis is ghat.basis)
    if same_basis:
        diff = fhat.coeffs - ghat.coeffs
        ev = _hermite_fourier(diff, fhat.basis)
        env = hermite_envelope(diff, fhat.basis)
    else:
        ev = None
        env = None

    def ratio(x):
        z = x @ U.T
        r2 = np.sum(z * z, axis=1)
        dv = ev(z) if ev is not None else fhat(z) - ghat(z)
        return np.abs(dv) / r2

    if tail is None:
        tail = (lambda R: min(2.0, env(R)) / (R * R)) if env is not None else (lambda R: 2.0 / (R * R))
    cert = maximize(ratio, U.shape[1], search, tail, require_certificate=require_certificate)
    se = 0.0
    z = (U @ cert.argmax)[None, :]
    r2 = float(np.sum(z * z))
    for h in (fhat, ghat):
        if h.stderr is not None and r2 > 0:
            se += float(h.stderr(z)[0]) / r2
    return D2Result(max(cert.value, 0.0), cert, se)


def symmetric_search(dim: int, base: SearchConfig = SearchConfig(), groups=None) -> SearchConfig:
    """Search config exploiting coordinate parity and permutation symmetry."""
    from dataclasses import replace

    groups = groups if groups is not None else (tuple(range(dim)),)
    return replace(base, parity=True, sorted_groups=tuple(tuple(g) for g in groups if len(g) > 1))
