"""Hermite machinery for the Gaussian weight e^{-pi v^2}.

With x = sqrt(2 pi) v the weight becomes the standard normal, so the
orthonormal family is H_n(v) = He_n(x) / sqrt(n!).  Everything in the
package is written in these orthonormal coordinates; monic polynomials
are recovered with :func:`monic_scale`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement

import numpy as np
from scipy.special import roots_hermitenorm

SQRT2PI = math.sqrt(2.0 * math.pi)


def hermite_table(v, cutoff: int) -> np.ndarray:
    """Values of H_0..H_cutoff at ``v``; shape ``v.shape + (cutoff + 1,)``."""
    x = SQRT2PI * np.asarray(v, dtype=float)
    out = np.empty(x.shape + (cutoff + 1,))
    out[..., 0] = 1.0
    if cutoff >= 1:
        out[..., 1] = x
    for n in range(1, cutoff):
        out[..., n + 1] = (x * out[..., n] - math.sqrt(n) * out[..., n - 1]) / math.sqrt(n + 1)
    return out


def hermite_eval(n: int, v, cutoff: int | None = None):
    """Orthonormal H_n at ``v`` via the three-term recurrence."""
    if n < 0:
        raise ValueError(f"degree must be nonnegative, got {n}")
    if cutoff is not None and n > cutoff:
        raise ValueError(f"degree {n} exceeds basis cutoff {cutoff}")
    out = hermite_table(v, n)[..., n]
    return float(out) if np.ndim(out) == 0 else out


def monic_scale(n: int) -> float:
    """Factor c with monic H_n = c * orthonormal H_n (weight e^{-pi v^2})."""
    return math.sqrt(math.factorial(n)) / (2.0 * math.pi) ** (n / 2.0)


@dataclass(frozen=True)
class HermiteBasis1D:
    cutoff: int

    def __post_init__(self):
        if self.cutoff < 0:
            raise ValueError("cutoff must be >= 0")

    def __call__(self, v) -> np.ndarray:
        return hermite_table(v, self.cutoff)

    def gram(self, nodes: int | None = None) -> np.ndarray:
        rule = QuadratureRule.gauss(nodes or self.cutoff + 1)
        tab = self(rule.nodes)
        return tab.T @ (rule.weights[:, None] * tab)


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes/weights integrating against a probability measure.

    ``gauss`` is exact for polynomials of degree <= 2n-1 against
    e^{-pi v^2}; ``angular`` is the uniform rule for the normalized
    average over [0, 2 pi), exact for trigonometric degree < n.
    """

    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def gauss(cls, n: int) -> "QuadratureRule":
        x, w = roots_hermitenorm(n)
        return cls(x / SQRT2PI, w / w.sum())

    @classmethod
    def angular(cls, n: int) -> "QuadratureRule":
        theta = 2.0 * math.pi * np.arange(n) / n
        return cls(theta, np.full(n, 1.0 / n))

    def integrate(self, f) -> float:
        return float(np.sum(self.weights * f(self.nodes)))


def angular_nodes(total_degree: int) -> int:
    """Uniform theta-rule size used for rotation averages (4 D + 1)."""
    return 4 * total_degree + 1


@lru_cache(maxsize=None)
def _rotation_block(d: int, n_theta: int) -> np.ndarray:
    # 2D Gauss rule exact for the degree-2d integrands <H_c H_{d-c}, H_a H_{d-a} o R>
    gq = QuadratureRule.gauss(d + 1)
    x, y = np.meshgrid(gq.nodes, gq.nodes, indexing="ij")
    w = np.outer(gq.weights, gq.weights).ravel()
    x, y = x.ravel(), y.ravel()
    hx, hy = hermite_table(x, d), hermite_table(y, d)
    rows = np.stack([hx[:, c] * hy[:, d - c] for c in range(d + 1)])
    rule = QuadratureRule.angular(n_theta)
    block = np.zeros((d + 1, d + 1))
    for theta, wt in zip(rule.nodes, rule.weights):
        c, s = math.cos(theta), math.sin(theta)
        xs, ys = c * x + s * y, -s * x + c * y
        hxs, hys = hermite_table(xs, d), hermite_table(ys, d)
        cols = np.stack([hxs[:, a] * hys[:, d - a] for a in range(d + 1)])
        block += wt * (rows * w) @ cols.T
    block = 0.5 * (block + block.T)
    block.setflags(write=False)
    return block


def rotation_block(total_degree: int, cutoff: int | None = None) -> np.ndarray:
    """Theta-averaged pair rotation on span{H_a(x) H_b(y) : a + b = d}.

    Entry ``[c, a]`` is <H_c H_{d-c}, R (H_a H_{d-a})>, index = degree in
    the first coordinate.  The result is a symmetric projector.
    """
    d = int(total_degree)
    if d < 0:
        raise ValueError("total degree must be >= 0")
    if cutoff is not None and d > 2 * cutoff:
        raise ValueError(f"total degree {d} exceeds 2*cutoff = {2 * cutoff}")
    return _rotation_block(d, angular_nodes(max(d, 1)))


@lru_cache(maxsize=None)
def _cos_power_average(n: int) -> float:
    rule = QuadratureRule.angular(angular_nodes(max(n, 1)))
    return rule.integrate(lambda t: np.cos(t) ** n)


def thermostat_diagonal(degree: int) -> float:
    """Eigenvalue of T_i on H_degree(v_i): the average of cos^degree."""
    if degree < 0:
        raise ValueError("degree must be >= 0")
    if degree % 2:
        return 0.0
    return _cos_power_average(degree)


def thermostat_eigenvalue(n: int) -> float:
    """a(n) with T_i H_{2n} = a(n) H_{2n}."""
    return thermostat_diagonal(2 * n)


class TensorIndex:
    """Graded enumeration of multi-indices with total degree <= cutoff.

    Flat order is by total degree first, then lexicographic (last
    coordinate fastest), so each total-degree block is a contiguous slice.
    """

    def __init__(self, n_coords: int, cutoff: int, max_size: int | None = None):
        if n_coords < 1:
            raise ValueError("need at least one coordinate")
        if cutoff < 0:
            raise ValueError("cutoff must be >= 0")
        size = math.comb(n_coords + cutoff, cutoff)
        if max_size is not None and size > max_size:
            raise ValueError(
                f"basis size {size} for {n_coords} coordinates at cutoff {cutoff} "
                f"exceeds the configured limit {max_size}; lower the cutoff or use the DSMC simulator"
            )
        self.n_coords = n_coords
        self.cutoff = cutoff
        rows = []
        self.block_starts = [0]
        for d in range(cutoff + 1):
            block = _compositions(d, n_coords)
            rows.extend(block)
            self.block_starts.append(len(rows))
        self.indices = np.array(rows, dtype=np.int64).reshape(-1, n_coords)
        self.indices.setflags(write=False)
        self.degrees = self.indices.sum(axis=1)
        self._radix = cutoff + 1
        self._weights = self._radix ** np.arange(n_coords - 1, -1, -1, dtype=np.int64)
        keys = self.indices @ self._weights
        self._order = np.argsort(keys)
        self._sorted_keys = keys[self._order]

    def __len__(self) -> int:
        return self.indices.shape[0]

    def block(self, d: int) -> slice:
        return slice(self.block_starts[d], self.block_starts[d + 1])

    def flat(self, multi) -> np.ndarray | int:
        """Flat positions of multi-indices (-1 where outside the basis)."""
        m = np.asarray(multi, dtype=np.int64)
        scalar = m.ndim == 1
        m = np.atleast_2d(m)
        ok = (m >= 0).all(axis=1) & (m.sum(axis=1) <= self.cutoff)
        keys = np.where(ok, np.clip(m, 0, self.cutoff) @ self._weights, -1)
        pos = np.searchsorted(self._sorted_keys, keys)
        pos = np.clip(pos, 0, len(self) - 1)
        found = ok & (self._sorted_keys[pos] == keys)
        out = np.where(found, self._order[pos], -1)
        return int(out[0]) if scalar else out

    def multi(self, flat: int) -> tuple[int, ...]:
        return tuple(int(n) for n in self.indices[flat])


def _compositions(d: int, k: int) -> list[tuple[int, ...]]:
    """All k-tuples of nonnegative ints summing to d, lexicographically descending."""
    out = []
    for bars in combinations_with_replacement(range(d + 1), k - 1):
        parts, prev = [], 0
        for b in bars:
            parts.append(b - prev)
            prev = b
        parts.append(d - prev)
        out.append(tuple(parts))
    out.sort(reverse=True)
    return out
