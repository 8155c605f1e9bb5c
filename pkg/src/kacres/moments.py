"""Fourth-moment recursion on even symmetric polynomials of degree <= 4.

The space V is spanned by the monic-Hermite combinations

    K4 = (1/M) sum_i He4(v_i)         K3 = mean_{i<j} He2(v_i) He2(v_j)
    K2 = (1/M) sum_i He2(v_i)         K0 = 1

(monic for the weight e^{-pi v^2}).  For M = 1 the K3 direction is absent.
The matrix L of Lambda^{-1} (Q_S + Q_T + rate_rr I) on this basis is read
off the assembled operators rather than derived by hand.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.sparse as sp

from .hermite import TensorIndex, monic_scale
from .metrics import _hermite_fourier
from .operators import Assembler, SystemParams
from .states import SIGMA2, HermiteState, _monomial_table


@dataclass
class MomentVector:
    components: np.ndarray  # (a4, a3, a2, a0), or (a4, a2, a0) when M = 1
    M: int

    @property
    def labels(self) -> tuple[str, ...]:
        return ("H4", "H3", "H2", "H0") if self.M > 1 else ("H4", "H2", "H0")

    def norm(self) -> float:
        return float(np.linalg.norm(self.components))


def _h_basis(basis: TensorIndex, M: int) -> np.ndarray:
    """Columns: K4, K3 (if M > 1), K2, K0 as orthonormal-coefficient vectors."""
    n = len(basis)
    pad = (0,) * (basis.n_coords - M)
    cols = []
    k4 = np.zeros(n)
    for i in range(M):
        m = [0] * M
        m[i] = 4
        k4[basis.flat(tuple(m) + pad)] += monic_scale(4) / M
    cols.append(k4)
    if M > 1:
        k3 = np.zeros(n)
        pairs = list(combinations(range(M), 2))
        for i, j in pairs:
            m = [0] * M
            m[i] = m[j] = 2
            k3[basis.flat(tuple(m) + pad)] += monic_scale(2) ** 2 / len(pairs)
        cols.append(k3)
    k2 = np.zeros(n)
    for i in range(M):
        m = [0] * M
        m[i] = 2
        k2[basis.flat(tuple(m) + pad)] += monic_scale(2) / M
    cols.append(k2)
    k0 = np.zeros(n)
    k0[0] = 1.0
    cols.append(k0)
    return np.array(cols).T


def fourth_power_coefficients(basis: TensorIndex, M: int) -> np.ndarray:
    """Orthonormal coefficients of (1/M) sum_i v_i^4."""
    tab = _monomial_table(4, basis.cutoff)[4]
    out = np.zeros(len(basis))
    pad = (0,) * (basis.n_coords - M)
    for i in range(M):
        for n in range(0, min(4, basis.cutoff) + 1):
            m = [0] * M
            m[i] = n
            out[basis.flat(tuple(m) + pad)] += tab[n] / M
    return out


class FourthMomentRecursion:
    def __init__(self, params: SystemParams):
        self.params = params
        self.asm = Assembler(params, 4, with_reservoir=False)
        basis = self.asm.basis
        op = self.asm.get("Q_S").matrix + self.asm.get("Q_T").matrix
        self.op = (op + params.rate_rr * sp.identity(len(basis), format="csr")) / params.Lambda
        self.V = _h_basis(basis, params.M)
        OV = np.asarray(self.op @ self.V)
        self.L, *_ = np.linalg.lstsq(self.V, OV, rcond=None)
        self.invariance_residual = float(np.abs(self.V @ self.L - OV).max())
        self.quartic = fourth_power_coefficients(basis, params.M)
        a, *_ = np.linalg.lstsq(self.V, self.quartic, rcond=None)
        self.a0 = MomentVector(a, params.M)

    def spectral_norm(self) -> float:
        return float(np.linalg.norm(self.L, 2))

    def vector(self, k: int) -> MomentVector:
        return MomentVector(np.linalg.matrix_power(self.L, k) @ self.a0.components, self.params.M)

    def pairing(self, E4: float, E3: float, E2: float) -> np.ndarray:
        """Integrals of K4, (K3), K2, K0 against a symmetric l_0 with these moments."""
        s = SIGMA2
        p4 = E4 - 6 * s * E2 + 3 * s * s
        p3 = E3 - 2 * s * E2 + s * s
        p2 = E2 - s
        return np.array([p4, p3, p2, 1.0]) if self.params.M > 1 else np.array([p4, p2, 1.0])

    def E4k(self, k: int, E4: float, E3: float, E2: float) -> float:
        return float(self.vector(k).components @ self.pairing(E4, E3, E2))

    def E4k_direct(self, k: int, state: HermiteState) -> float:
        """Dual route: iterate the operator on (1/M) sum v_i^4 and pair with the coefficients of l_0."""
        x = self.quartic.copy()
        for _ in range(k):
            x = self.op @ x
        c = np.zeros(len(self.asm.basis))
        pos = self.asm.basis.flat(np.asarray(state.basis.indices)[:, : self.params.M])
        keep = (pos >= 0) & (state.basis.indices[:, self.params.M:] == 0).all(axis=1)
        np.add.at(c, pos[keep], state.coeffs[keep])
        return float(x @ c)

    def l_k(self, state: HermiteState, k: int) -> HermiteState:
        """Coefficients of l_k = (Lambda^{-1}(Q_S + Q_T + rate_rr))^k l_0 on the state's own basis."""
        asm = Assembler(self.params, state.basis.cutoff, with_reservoir=False)
        if asm.basis.n_coords != state.basis.n_coords:
            raise ValueError("state must live on the M system coordinates")
        op = (asm.get("Q_S").matrix + asm.get("Q_T").matrix) / self.params.Lambda
        x = state.coeffs.copy()
        for _ in range(k):
            x = op @ x + (self.params.rate_rr / self.params.Lambda) * x
        return HermiteState(x, asm.basis, meta={"k": k})


def moment_recursion(a0: MomentVector, params: SystemParams, k: int, moments: dict | None = None):
    rec = FourthMomentRecursion(params)
    vec = MomentVector(np.linalg.matrix_power(rec.L, k) @ a0.components, params.M)
    if moments is None:
        return vec, None
    return vec, float(vec.components @ rec.pairing(moments["E4"], moments["E3"], moments["E2"]))


# ---------------------------------------------------------------- C4 chain
def g_hat(state: HermiteState, xi: np.ndarray, eta: np.ndarray, n_theta: int = 256) -> np.ndarray:
    """G_k(xi, eta) = (1/M) sum_i [F_i(xi, eta) - F_i(xi, 0) Gamma_1(eta)] for the v-only state l_k."""
    M = state.basis.n_coords
    ev = _hermite_fourier(state.coeffs, state.basis)
    xi = np.asarray(xi, dtype=float)
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    th = 2.0 * math.pi * np.arange(n_theta) / n_theta
    c, s = np.cos(th), np.sin(th)

    def F(i, e):
        pts = np.repeat(xi[None, :], e.size * n_theta, axis=0)
        ee = np.repeat(e, n_theta)
        cc, ss = np.tile(c, e.size), np.tile(s, e.size)
        pts[:, i] = xi[i] * cc + ee * ss
        g = np.exp(-math.pi * (-xi[i] * ss + ee * cc) ** 2)
        return (ev(pts) * g).reshape(e.size, n_theta).mean(axis=1)

    out = np.zeros(eta.size, dtype=complex)
    for i in range(M):
        out += F(i, eta) - F(i, np.zeros(1)) * np.exp(-math.pi * eta**2)
    return out / M


def g_hat_c4(state: HermiteState, xi: np.ndarray, *, L: float = 4.0, step: float = 0.0025,
             shifts=(16, 8, 4, 2)) -> float:
    """max_{p<=4} sup_eta |d^p/d eta^p G_k(xi, eta)|.

    G_k is sampled once on a uniform grid; central differences with widths
    ``shift * step`` are read off by index shifts and combined pairwise by
    Richardson extrapolation.
    """
    from .inequality import _STENCILS

    n = int(round(L / step))
    eta = step * np.arange(-n, n + 1)
    g = g_hat(state, xi, eta)
    best = float(np.abs(g).max())
    pad = 2 * max(shifts)
    for p in range(1, 5):
        offs, w = _STENCILS[p]
        D = []
        for k in shifts:
            h = k * step
            acc = sum(wk * g[pad + o * k: len(g) - pad + o * k] for o, wk in zip(offs, w))
            D.append(acc / h**p)
        R = [(4.0 * D[j + 1] - D[j]) / 3.0 for j in range(len(D) - 1)]
        best = max(best, float(np.abs(R[-1]).max()))
    return best
