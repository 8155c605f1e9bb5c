import math

import numpy as np
import pytest

from kacres.hermite import TensorIndex
from kacres.operators import Assembler, SystemParams
from kacres.saturation import (
    C_SAT,
    build,
    composition_count,
    cross_term,
    cross_term_coeffs,
    displayed_ratio_bound,
    symmetric_pair_sides,
    positivity_scale,
    saturation_experiment,
    u_bar,
)
from kacres.states import evaluate


def test_support_of_smallest_state():
    s = build(2, 2)
    assert sorted(s.support) == [(0, 4), (2, 2), (4, 0)]


@pytest.mark.parametrize("M,P", [(2, 2), (2, 3), (3, 2), (3, 3)])
def test_norm_counts_compositions(M, P):
    s = build(M, P)
    assert len(s.support) == composition_count(M, P)
    assert s.norm() ** 2 == pytest.approx(composition_count(M, P), rel=1e-14)


def test_single_coordinate_state_has_no_cross_term():
    basis = TensorIndex(2, 4)
    u = np.zeros(len(basis))
    u[basis.flat((2, 0))] = 1.0
    assert abs(cross_term_coeffs(u, basis, 2)) < 1e-14


def test_cross_term_of_u_bar_is_deterministic():
    u, basis = u_bar()
    val = cross_term_coeffs(u, basis, 2)
    assert val == pytest.approx(cross_term(2), abs=1e-14)
    assert val > 0


@pytest.mark.parametrize("M", [2, 3])
def test_ratio_exceeds_constant_and_displayed_bound(M):
    s = build(M, M)
    ratio = cross_term(M) / s.norm()
    assert ratio >= C_SAT
    assert ratio >= displayed_ratio_bound(M, M)
    assert displayed_ratio_bound(2, 2) == 0.0


@pytest.mark.parametrize("M", [2, 3])
def test_positivity_and_halving(M):
    s = build(M, M)
    h = s.h0(s.basis)
    g = np.linspace(-5, 5, {2: 201, 3: 41}[M])
    pts = np.stack(np.meshgrid(*([g] * M), indexing="ij"), -1).reshape(-1, M)
    assert evaluate(h.coeffs, s.basis, pts).min() > 0
    half = 0.5 * s.a * s.coeffs
    half[0] += 1.0
    assert evaluate(half, s.basis, pts).min() > 0
    a, lo = positivity_scale(s.coeffs, s.basis, M)
    assert lo < 0 and a == pytest.approx(0.9 / abs(lo))


def test_pair_decomposition_identity():
    s = build(2, 2)
    asm = Assembler(SystemParams(2, 3), 4)
    u = s.h0(asm.basis).deviation()
    lhs, rhs = symmetric_pair_sides(u, asm)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-14)


def test_initial_slope_and_records():
    out = saturation_experiment(2, 4)
    assert out["initial_slope"] == pytest.approx(out["initial_slope_fd"], rel=1e-3)
    assert out["initial_slope"] >= out["slope_bound"]
    for r in out["records"]:
        if r.lower_bound > 0:
            assert r.margin >= -1e-12
    assert out["nonvacuous_until"] == pytest.approx(math.log(1 + C_SAT) / out["Lambda"])


def test_build_rejects_small():
    with pytest.raises(ValueError):
        build(1, 2)
