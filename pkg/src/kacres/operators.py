"""Sparse generator pieces on the truncated tensor Hermite basis.

Coordinates 0..M-1 are the system velocities v, coordinates M..M+N-1 the
reservoir velocities w.  All matrices act on ground-state coefficients
(f = h * Gamma_{M+N}) and are block diagonal in total degree.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

import numpy as np
import scipy.sparse as sp

from .hermite import TensorIndex, rotation_block, thermostat_diagonal

TAGS = ("Q_S", "Q_R", "Q_I", "Q_T", "FULL_FR", "FULL_T")
DEFAULT_MAX_BASIS = 20_000


@dataclass(frozen=True)
class SystemParams:
    M: int
    N: int
    lam_S: float = 1.0
    lam_R: float = 1.0
    mu: float = 1.0

    def __post_init__(self):
        if self.M < 1 or self.N < 1:
            raise ValueError(f"need M >= 1 and N >= 1, got M={self.M}, N={self.N}")
        for name in ("lam_S", "lam_R", "mu"):
            if getattr(self, name) < 0:
                raise ValueError(f"rate {name} must be >= 0")

    # Empty pair sums contribute nothing, including to Lambda.
    @property
    def rate_ss(self) -> float:
        return self.lam_S * self.M / 2.0 if self.M >= 2 else 0.0

    @property
    def rate_rr(self) -> float:
        return self.lam_R * self.N / 2.0 if self.N >= 2 else 0.0

    @property
    def rate_sr(self) -> float:
        return self.mu * self.M

    @property
    def Lambda(self) -> float:
        return self.rate_ss + self.rate_rr + self.rate_sr

    @property
    def n_coords(self) -> int:
        return self.M + self.N


def lambda_total(params: SystemParams) -> float:
    """Lambda = lam_S M/2 + lam_R N/2 + mu M (empty pair sums dropped)."""
    return params.Lambda


@dataclass
class GeneratorMatrix:
    matrix: sp.csr_matrix
    tag: str
    basis: TensorIndex
    representation: str = "ground-state"
    _blocks: dict = field(default_factory=dict, repr=False)

    def __matmul__(self, x):
        return self.matrix @ x

    def __add__(self, other: "GeneratorMatrix") -> "GeneratorMatrix":
        if other.basis is not self.basis:
            raise ValueError("operators live on different bases")
        return GeneratorMatrix((self.matrix + other.matrix).tocsr(), f"{self.tag}+{other.tag}", self.basis)

    def __sub__(self, other: "GeneratorMatrix") -> "GeneratorMatrix":
        if other.basis is not self.basis:
            raise ValueError("operators live on different bases")
        return GeneratorMatrix((self.matrix - other.matrix).tocsr(), f"{self.tag}-{other.tag}", self.basis)

    @property
    def shape(self):
        return self.matrix.shape

    def asymmetry(self) -> float:
        diff = (self.matrix - self.matrix.T).tocoo()
        return float(np.abs(diff.data).max()) if diff.nnz else 0.0

    def block(self, d: int) -> np.ndarray:
        if d not in self._blocks:
            s = self.basis.block(d)
            self._blocks[d] = self.matrix[s, s].toarray()
        return self._blocks[d]

    def off_block_mass(self) -> float:
        """Largest |entry| coupling different total degrees (0 by construction)."""
        coo = self.matrix.tocoo()
        deg = self.basis.degrees
        mask = deg[coo.row] != deg[coo.col]
        return float(np.abs(coo.data[mask]).max()) if mask.any() else 0.0

    def eigenvalues(self) -> np.ndarray:
        return np.concatenate([np.linalg.eigvalsh(self.block(d)) for d in range(self.basis.cutoff + 1)])

    def norm(self) -> float:
        """Operator norm of the (symmetric) matrix, blockwise."""
        return float(np.abs(self.eigenvalues()).max())

    def dump(self, path) -> None:
        """Write the matrix as ``row col value`` lines (0-based flat indices)."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w") as fh:
            fh.write(f"# tag={self.tag} representation={self.representation} "
                     f"n_coords={self.basis.n_coords} cutoff={self.basis.cutoff} size={len(self.basis)}\n")
            for k in order:
                fh.write(f"{coo.row[k]} {coo.col[k]} {coo.data[k]:.17g}\n")


def load_triplets(path, size: int) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            r, c, v = line.split()
            rows.append(int(r))
            cols.append(int(c))
            vals.append(float(v))
    return sp.csr_matrix((vals, (rows, cols)), shape=(size, size))


def pair_matrix(basis: TensorIndex, i: int, j: int) -> sp.csr_matrix:
    """Matrix of the theta-averaged rotation of coordinates (i, j)."""
    if i == j:
        raise ValueError("pair needs two distinct coordinates")
    idx = basis.indices
    a, b = idx[:, i], idx[:, j]
    dsum = a + b
    rows, cols, vals = [], [], []
    for d in np.unique(dsum):
        d = int(d)
        B = rotation_block(d)
        src = np.nonzero(dsum == d)[0]
        for c in range(d + 1):
            v = B[c, a[src]]
            keep = np.abs(v) > 1e-14
            if not keep.any():
                continue
            tgt = idx[src[keep]].copy()
            tgt[:, i] = c
            tgt[:, j] = d - c
            r = basis.flat(tgt)
            if (r < 0).any():
                raise AssertionError("rotation left the truncated basis")
            rows.append(r)
            cols.append(src[keep])
            vals.append(v[keep])
    n = len(basis)
    if not rows:
        return sp.csr_matrix((n, n))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


def thermostat_matrix(basis: TensorIndex, i: int) -> sp.csr_matrix:
    """T_i: diagonal, eigenvalue avg(cos^n) on degree n in coordinate i."""
    diag = np.array([thermostat_diagonal(n) for n in range(basis.cutoff + 1)])
    return sp.diags(diag[basis.indices[:, i]]).tocsr()


class Assembler:
    """Builds and caches the generator pieces for one (params, cutoff)."""

    def __init__(self, params: SystemParams, cutoff: int, *, with_reservoir: bool = True,
                 max_basis: int = DEFAULT_MAX_BASIS):
        self.params = params
        self.cutoff = cutoff
        self.with_reservoir = with_reservoir
        n = params.n_coords if with_reservoir else params.M
        self.basis = TensorIndex(n, cutoff, max_size=max_basis)
        self._cache: dict[str, GeneratorMatrix] = {}

    @property
    def system_coords(self) -> range:
        return range(self.params.M)

    @property
    def reservoir_coords(self) -> range:
        if not self.with_reservoir:
            raise ValueError("this assembler has no reservoir coordinates")
        return range(self.params.M, self.params.M + self.params.N)

    def _wrap(self, m, tag) -> GeneratorMatrix:
        return GeneratorMatrix(sp.csr_matrix(m), tag, self.basis)

    def _zero(self):
        n = len(self.basis)
        return sp.csr_matrix((n, n))

    def _q_s(self):
        p = self.params
        if p.M < 2:
            return self._zero()
        m = sum(pair_matrix(self.basis, i, j) for i, j in combinations(self.system_coords, 2))
        return (p.lam_S / (p.M - 1)) * m

    def _q_r(self):
        p = self.params
        if p.N < 2:
            return self._zero()
        m = sum(pair_matrix(self.basis, i, j) for i, j in combinations(self.reservoir_coords, 2))
        return (p.lam_R / (p.N - 1)) * m

    def _q_i(self):
        p = self.params
        m = sum(pair_matrix(self.basis, i, j) for i in self.system_coords for j in self.reservoir_coords)
        return (p.mu / p.N) * m

    def _q_t(self):
        p = self.params
        return p.mu * sum(thermostat_matrix(self.basis, i) for i in self.system_coords)

    def get(self, tag: str) -> GeneratorMatrix:
        if tag not in TAGS:
            raise ValueError(f"unknown generator tag {tag!r}; expected one of {TAGS}")
        if tag not in self._cache:
            if tag == "FULL_FR":
                m = self.get("Q_S").matrix + self.get("Q_R").matrix + self.get("Q_I").matrix
            elif tag == "FULL_T":
                m = self.get("Q_S").matrix + self.get("Q_R").matrix + self.get("Q_T").matrix
            else:
                m = {"Q_S": self._q_s, "Q_R": self._q_r, "Q_I": self._q_i, "Q_T": self._q_t}[tag]()
            self._cache[tag] = self._wrap(m, tag)
        return self._cache[tag]

    def pair(self, i: int, j: int) -> GeneratorMatrix:
        key = f"R[{i},{j}]"
        if key not in self._cache:
            self._cache[key] = self._wrap(pair_matrix(self.basis, i, j), key)
        return self._cache[key]

    def thermostat(self, i: int) -> GeneratorMatrix:
        key = f"T[{i}]"
        if key not in self._cache:
            self._cache[key] = self._wrap(thermostat_matrix(self.basis, i), key)
        return self._cache[key]

    def constant(self) -> np.ndarray:
        e = np.zeros(len(self.basis))
        e[0] = 1.0
        return e

    @cached_property
    def v_only_mask(self) -> np.ndarray:
        M = self.params.M
        return (self.basis.indices[:, M:] == 0).all(axis=1)


def assemble(params: SystemParams, which: str, cutoff: int, *, basis: TensorIndex | None = None,
             max_basis: int = DEFAULT_MAX_BASIS) -> GeneratorMatrix:
    """One-shot assembly of a named generator piece."""
    asm = Assembler(params, cutoff, max_basis=max_basis)
    if basis is not None and (basis.n_coords != asm.basis.n_coords or basis.cutoff != cutoff):
        raise ValueError("supplied basis is inconsistent with params/cutoff")
    return asm.get(which)


def expected_constant_eigenvalue(params: SystemParams, tag: str) -> float:
    return {
        "Q_S": params.rate_ss,
        "Q_R": params.rate_rr,
        "Q_I": params.rate_sr,
        "Q_T": params.rate_sr,
        "FULL_FR": params.Lambda,
        "FULL_T": params.Lambda,
    }[tag]


def basis_size(n_coords: int, cutoff: int) -> int:
    return math.comb(n_coords + cutoff, cutoff)


def pair_average_sides(asm: Assembler, u: np.ndarray, i: int = 0) -> tuple[float, float]:
    """Both sides of ||(1/N) sum_j R_ij u - T_i u||^2 = (1/N)(<T_i u, u> - <T_i u, T_i u>).

    Valid for u depending on the system coordinates only.
    """
    p = asm.params
    avg = sum(asm.pair(i, j).matrix @ u for j in asm.reservoir_coords) / p.N
    Tu = asm.thermostat(i).matrix @ u
    lhs = float(np.sum((avg - Tu) ** 2))
    rhs = float((Tu @ u - Tu @ Tu) / p.N)
    return lhs, rhs
