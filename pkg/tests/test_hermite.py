import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from kacres.hermite import (
    HermiteBasis1D,
    QuadratureRule,
    TensorIndex,
    hermite_eval,
    hermite_table,
    monic_scale,
    rotation_block,
    thermostat_diagonal,
    thermostat_eigenvalue,
)


def test_gram_is_identity():
    G = HermiteBasis1D(12).gram()
    assert np.abs(G - np.eye(13)).max() < 1e-12


def test_orthonormality_by_adaptive_quadrature():
    # independent of the Gauss rule: scipy.quad over the real line
    for m in range(9):
        for n in range(m, 9):
            val, _ = quad(lambda v: hermite_eval(m, v) * hermite_eval(n, v) * math.exp(-math.pi * v * v),
                          -np.inf, np.inf, epsabs=1e-13)
            assert abs(val - (m == n)) < 1e-10


def test_low_degrees():
    v = np.linspace(-2, 2, 7)
    assert np.all(hermite_eval(0, v) == 1.0)
    assert np.allclose(hermite_eval(1, v), math.sqrt(2 * math.pi) * v)
    x = math.sqrt(2 * math.pi) * v
    assert np.allclose(hermite_eval(2, v), (x * x - 1) / math.sqrt(2))


def test_positive_leading_coefficient_and_monic_scale():
    for n in range(1, 9):
        # leading coefficient of the orthonormal H_n is 1/monic_scale(n)
        v = 1e3
        ratio = hermite_eval(n, v) / v**n
        assert ratio > 0
        assert abs(ratio * monic_scale(n) - 1) < 1e-3


def test_degree_above_cutoff_rejected():
    with pytest.raises(ValueError):
        hermite_eval(5, 0.3, cutoff=4)
    with pytest.raises(ValueError):
        hermite_eval(-1, 0.3)


def test_gauss_rule_exactness():
    rule = QuadratureRule.gauss(6)  # exact through degree 11
    for k in range(0, 12, 2):
        exact = math.prod(range(k - 1, 0, -2)) / (2 * math.pi) ** (k // 2) if k else 1.0
        assert abs(rule.integrate(lambda v: v**k) - exact) < 1e-12 * max(1, exact)


def test_angular_rule_exactness():
    rule = QuadratureRule.angular(9)
    for k in range(1, 9):
        assert abs(rule.integrate(lambda t: np.cos(k * t))) < 1e-13
    assert abs(rule.integrate(lambda t: np.cos(t) ** 2) - 0.5) < 1e-13


@pytest.mark.parametrize("d", range(0, 13))
def test_rotation_block_is_symmetric_projector(d):
    B = rotation_block(d)
    assert B.shape == (d + 1, d + 1)
    assert np.abs(B - B.T).max() < 1e-12
    assert np.abs(B @ B - B).max() < 1e-12


def test_rotation_block_d0_and_d2_against_dense_quadrature():
    assert np.allclose(rotation_block(0), [[1.0]])
    # dense oracle: 2D tensor Gauss rule and a fine theta grid
    g = QuadratureRule.gauss(10)
    x, y = np.meshgrid(g.nodes, g.nodes, indexing="ij")
    w = np.outer(g.weights, g.weights)
    th = np.linspace(0, 2 * np.pi, 400, endpoint=False)
    B = np.zeros((3, 3))
    for c in range(3):
        for a in range(3):
            acc = 0.0
            for t in th:
                xs, ys = np.cos(t) * x + np.sin(t) * y, -np.sin(t) * x + np.cos(t) * y
                acc += np.sum(w * hermite_table(x, 2)[..., c] * hermite_table(y, 2)[..., 2 - c]
                              * hermite_table(xs, 2)[..., a] * hermite_table(ys, 2)[..., 2 - a])
            B[c, a] = acc / len(th)
    assert np.abs(B - rotation_block(2)).max() < 1e-12


def test_thermostat_eigenvalues():
    assert thermostat_eigenvalue(0) == pytest.approx(1.0, abs=1e-14)
    assert thermostat_eigenvalue(1) == pytest.approx(0.5, abs=1e-14)
    for n in range(1, 10):
        assert thermostat_eigenvalue(n) <= 0.5 + 1e-14
        assert thermostat_eigenvalue(n) == pytest.approx(math.comb(2 * n, n) / 4**n, abs=1e-14)
        assert thermostat_diagonal(2 * n - 1) == 0.0


@settings(max_examples=60, deadline=None)
@given(k=st.integers(1, 5), D=st.integers(0, 7), data=st.data())
def test_tensor_index_round_trip(k, D, data):
    T = TensorIndex(k, D)
    assert len(T) == math.comb(k + D, D)
    i = data.draw(st.integers(0, len(T) - 1))
    assert T.flat(T.multi(i)) == i
    assert T.degrees[i] == sum(T.multi(i))
    # graded order: degree blocks are contiguous
    for d in range(D + 1):
        assert np.all(T.degrees[T.block(d)] == d)


def test_tensor_index_outside_and_limit():
    T = TensorIndex(3, 4)
    assert T.flat((5, 0, 0)) == -1
    with pytest.raises(ValueError, match="exceeds"):
        TensorIndex(10, 10, max_size=1000)
