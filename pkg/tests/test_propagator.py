import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kacres.operators import Assembler, SystemParams
from kacres.propagator import (
    Propagator,
    SeriesConvergenceError,
    evolve,
    radial_eigenvalue,
    relaxation_rate,
    steady_l2_constant_quadrature,
    steady_l2_constant_truncated,
    terms_needed,
)
from kacres.states import HermiteState, constant_state, random_v_only

_CACHE = {}


def prop_for(M, N, cutoff=6, **kw):
    key = (M, N, cutoff, tuple(sorted(kw.items())))
    if key not in _CACHE:
        _CACHE[key] = Propagator(Assembler(SystemParams(M, N, **kw), cutoff))
    return _CACHE[key]


def h2_state(basis, eps=0.1):
    c = np.zeros(len(basis))
    c[0] = 1.0
    c[basis.flat((2,) + (0,) * (basis.n_coords - 1))] = eps
    return HermiteState(c, basis)


def test_zero_time_is_identity():
    p = prop_for(1, 2)
    h = random_v_only(p.asm.basis, 1, np.random.default_rng(0))
    for which in ("FULL_FR", "FULL_T"):
        assert np.array_equal(p.evolve(h, which, 0.0).coeffs, h.coeffs)


def test_constant_is_stationary():
    p = prop_for(2, 2)
    one = constant_state(p.asm.basis)
    for which in ("FULL_FR", "FULL_T"):
        assert np.allclose(p.evolve(one, which, 3.0).coeffs, one.coeffs, atol=1e-12)


def test_scalar_thermostat_decay():
    p = prop_for(1, 1, cutoff=4, lam_S=0.0, lam_R=0.0, mu=1.0)
    eps = 0.2
    h = h2_state(p.asm.basis, eps)
    i = p.asm.basis.flat((2, 0))
    for t in (0.1, 1.0, 3.0):
        assert p.evolve(h, "FULL_T", t).coeffs[i] == pytest.approx(eps * math.exp(-0.5 * t), abs=1e-12)


def test_normalization_and_monotone_relaxation():
    p = prop_for(2, 2)
    h = random_v_only(p.asm.basis, 2, np.random.default_rng(3), amplitude=0.3, even_only=False)
    times = np.linspace(0, 5, 11)
    hinf = p.steady_state(h).coeffs
    for which, target in (("FULL_FR", hinf), ("FULL_T", constant_state(p.asm.basis).coeffs)):
        rows = p.evolve_many(h, which, times)
        assert np.abs(rows[:, 0] - 1).max() < 1e-10
        d = np.linalg.norm(rows - target, axis=1)
        assert np.all(np.diff(d) <= 1e-12)


def test_difference_series_matches_evolution():
    p = prop_for(1, 2, cutoff=8)
    h = h2_state(p.asm.basis)
    t = [0.3, 1.0, 4.0]
    assert np.abs(p.difference_series(h, t) - p.difference(h, t)).max() < 1e-8
    zero = constant_state(p.asm.basis)
    assert np.abs(p.difference_series(zero, t)).max() == 0.0


def test_term_norms_bounded():
    p = prop_for(2, 3)
    h = random_v_only(p.asm.basis, 2, np.random.default_rng(5), amplitude=0.5)
    terms = p.term_norms(h, 10)
    assert np.all(terms.measured <= terms.bound * (1 + 1e-12) + 1e-14)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), case=st.sampled_from([(1, 2), (2, 2), (2, 4), (3, 2)]))
def test_thm1_bound_on_random_states(seed, case):
    M, N = case
    p = prop_for(M, N)
    h = random_v_only(p.asm.basis, M, np.random.default_rng(seed), amplitude=0.2, even_only=False)
    times = [2.0**k for k in range(-6, 5)]
    diff = np.linalg.norm(p.difference(h, times), axis=1)
    u0 = np.linalg.norm(h.deviation())
    bound = M / math.sqrt(N) * (1 - np.exp(-0.5 * np.asarray(times))) * u0
    assert np.all(diff <= bound + 1e-10)


def test_series_cap_reports_residual():
    with pytest.raises(SeriesConvergenceError) as exc:
        terms_needed(1e6, 1.0, 1e-12, max_terms=100)
    assert exc.value.residual > 1e-12


def test_evolve_function_matches_method():
    p = prop_for(1, 2)
    h = h2_state(p.asm.basis)
    a = evolve(h, p.asm.get("FULL_FR"), p.Lambda, 0.7)
    assert np.allclose(a.coeffs, p.evolve(h, "FULL_FR", 0.7).coeffs, atol=1e-14)


# ---- steady state
@pytest.mark.parametrize("M,N", [(1, 4), (2, 5), (2, 2)])
def test_steady_state_is_fixed_and_bounded(M, N):
    p = prop_for(M, N)
    rng = np.random.default_rng(11)
    Q = p.asm.get("FULL_FR").matrix
    for _ in range(5):
        h = random_v_only(p.asm.basis, M, rng, amplitude=0.3)
        hinf = p.steady_state(h)
        assert np.allclose(Q @ hinf.coeffs, p.Lambda * hinf.coeffs, atol=1e-10)
        if N >= 3:
            assert np.sum(hinf.deviation() ** 2) <= M / (N - 2) * np.sum(h.deviation() ** 2) + 1e-14


def test_steady_state_is_long_time_limit():
    p = prop_for(1, 4)
    h = random_v_only(p.asm.basis, 1, np.random.default_rng(2), amplitude=0.3)
    rate = relaxation_rate(p.asm)
    t = math.log(0.3 / 1e-9) / rate + 2.0 / rate
    assert np.linalg.norm(p.evolve(h, "FULL_FR", t).coeffs - p.steady_state(h).coeffs) < 1e-8


@pytest.mark.parametrize("M,N", [(1, 3), (1, 4), (2, 5), (3, 6), (4, 9)])
def test_steady_constant_quadrature(M, N):
    assert steady_l2_constant_quadrature(M, N) == pytest.approx(M / (N - 2), rel=1e-9)


def test_steady_constant_per_degree_and_truncation():
    asm = Assembler(SystemParams(1, 4), 8)
    sharp, summed = steady_l2_constant_truncated(asm)
    assert sharp == pytest.approx(radial_eigenvalue(1, 4, 1), abs=1e-12)
    assert sharp == pytest.approx(1 / 5, abs=1e-12)
    assert summed == pytest.approx(sum(radial_eigenvalue(1, 4, k) for k in range(1, 5)), abs=1e-12)
    assert summed < 1 / 2
    assert math.isinf(steady_l2_constant_quadrature(1, 2))


def test_threaded_time_grid_is_bitwise_identical():
    asm = prop_for(1, 2).asm
    h = h2_state(asm.basis)
    times = [0.01, 0.3, 1.0, 4.0, 16.0]
    a = Propagator(asm).evolve_many(h, "FULL_FR", times)
    b = Propagator(asm, threads=3).evolve_many(h, "FULL_FR", times)
    assert np.array_equal(a, b)
