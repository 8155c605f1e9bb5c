import math

import numpy as np
import pytest

from kacres.hermite import TensorIndex
from kacres.moments import FourthMomentRecursion, g_hat, g_hat_c4, moment_recursion
from kacres.operators import SystemParams
from kacres.states import GaussianMixture, mixture_state, symmetric_moments

MENU = [(1, 1), (1, 2), (2, 2), (2, 5), (3, 4), (4, 40)]
MIX = GaussianMixture.two_temperature(0.4, 0.7)


@pytest.mark.parametrize("M,N", MENU)
def test_initial_vector_and_norm(M, N):
    rec = FourthMomentRecursion(SystemParams(M, N))
    a = rec.a0.components
    expect = [1.0, 0.0, 3 / math.pi, 3 / (4 * math.pi**2)] if M > 1 else [1.0, 3 / math.pi, 3 / (4 * math.pi**2)]
    assert np.allclose(a, expect, atol=1e-13)
    assert rec.invariance_residual < 1e-12
    assert rec.spectral_norm() <= 1 + 1e-10


@pytest.mark.parametrize("M,N", MENU)
def test_fourth_moment_stays_bounded(M, N):
    st = mixture_state(TensorIndex(M, 4), M, MIX)
    m = symmetric_moments(st, M)
    rec = FourthMomentRecursion(SystemParams(M, N))
    for k in range(51):
        assert rec.E4k(k, m["E4"], m["E3"], m["E2"]) <= 2 * (m["E4"] + 1)


@pytest.mark.parametrize("M,N", [(1, 2), (2, 3), (3, 4)])
def test_dual_route_agrees(M, N):
    st = mixture_state(TensorIndex(M, 6), M, MIX)
    m = symmetric_moments(st, M)
    rec = FourthMomentRecursion(SystemParams(M, N))
    for k in (0, 1, 5, 50):
        assert rec.E4k(k, m["E4"], m["E3"], m["E2"]) == pytest.approx(rec.E4k_direct(k, st), rel=1e-12)
    vec, val = moment_recursion(rec.a0, SystemParams(M, N), 5, m)
    assert val == pytest.approx(rec.E4k(5, m["E4"], m["E3"], m["E2"]), rel=1e-14)


def test_g_hat_vanishes_on_axis_and_c4_stable():
    st = mixture_state(TensorIndex(2, 6), 2, MIX)
    rec = FourthMomentRecursion(SystemParams(2, 3))
    xi = np.array([0.3, 0.2])
    for k in (0, 3):
        lk = rec.l_k(st, k)
        assert abs(g_hat(lk, xi, np.array([0.0]))[0]) < 1e-14
        coarse = g_hat_c4(lk, xi, step=0.01)
        fine = g_hat_c4(lk, xi, step=0.005)
        assert math.isfinite(coarse) and fine == pytest.approx(coarse, rel=1e-3)
