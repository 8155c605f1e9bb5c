"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line."""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from kacres.config import load
from kacres.experiments import run_experiment
from kacres.hermite import TensorIndex, thermostat_eigenvalue
from kacres.inequality import counterexample_ratio
from kacres.moments import FourthMomentRecursion
from kacres.operators import Assembler, SystemParams, pair_average_sides
from kacres.propagator import Propagator, relaxation_rate
from kacres.saturation import C_SAT, build, cross_term, cross_term_coeffs, saturation_experiment, u_bar
from kacres.states import (
    SIGMA2,
    GaussianMixture,
    HermiteState,
    constant_state,
    mixture_state,
    random_v_only,
    symmetric_moments,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
pytestmark = pytest.mark.acceptance


def _run(name: str, **overrides):
    cfg = load(CONFIGS / name, {k: str(v) for k, v in overrides.items()})
    t0 = time.perf_counter()
    rep = run_experiment(cfg)
    return cfg, rep, time.perf_counter() - t0


def _records(rep, prefix: str):
    return [r for r in rep.records if r.quantity.startswith(prefix)]


def _all_pass(rep, recs) -> bool:
    return all(r.passes(rep.tol, rep.z) for r in recs)


def test_c01_l2_difference_bound(verdict):
    parts, ok = [], True
    for name in ("thm1_M1N2.cfg", "thm1_M2N2.cfg", "thm1_M2N4.cfg"):
        cfg, rep, dt = _run(name)
        recs = _records(rep, "thm1")
        good = _all_pass(rep, recs) and dt < 60 and len(recs) == len(cfg.times())
        ok &= good
        parts.append(f"({cfg.params.M},{cfg.params.N}) min slack {min(r.margin for r in recs):.2e} in {dt:.1f}s")
    assert verdict("criterion 1 (L2 difference bound)", ok, "; ".join(parts))


def test_c02_d2_difference_bound(verdict):
    cfg, rep, dt = _run("thm2_M1N2.cfg")
    recs = _records(rep, "thm2")
    ok = _all_pass(rep, recs) and dt < 300
    worst = max(r.measured / r.bound for r in recs if r.bound > 0)
    assert verdict("criterion 2 (d2 difference bound)", ok,
                   f"{len(recs)} times, max measured/bound {worst:.3g}, {dt:.1f}s")


def test_c03_pair_identity(verdict):
    worst = 0.0
    for M, N in ((1, 2), (2, 3)):
        asm = Assembler(SystemParams(M, N), 6)
        rng = np.random.default_rng(2024 + M)
        for _ in range(20):
            u = random_v_only(asm.basis, M, rng, even_only=False).deviation()
            for i in range(M):
                lhs, rhs = pair_average_sides(asm, u, i)
                worst = max(worst, abs(lhs - rhs))
    assert verdict("criterion 3 (pair identity)", worst < 1e-10, f"max |lhs - rhs| = {worst:.2e}")


def test_c04_spectral_structure(verdict):
    ok, parts = True, []
    a = [thermostat_eigenvalue(n) for n in range(5)]
    ok &= abs(a[0] - 1) < 1e-14 and max(a[1:]) <= 0.5 + 1e-14
    parts.append(f"a(1..4) max {max(a[1:]):.4f}")
    worst_top, worst_ratio = 0.0, 0.0
    for M, N in ((1, 2), (2, 2), (2, 3), (3, 2)):
        asm = Assembler(SystemParams(M, N), 6)
        L = asm.params.Lambda
        worst_top = max(worst_top, abs(asm.get("FULL_T").eigenvalues().max() - L))
        QT = asm.get("Q_T").matrix
        rng = np.random.default_rng(M * 10 + N)
        for _ in range(25):
            u = random_v_only(asm.basis, M, rng, even_only=False, amplitude=1.0).deviation()
            worst_ratio = max(worst_ratio, np.linalg.norm(QT @ u) / (asm.params.mu * (M - 0.5) * np.linalg.norm(u)))
    ok &= worst_top < 1e-10 and worst_ratio <= 1 + 1e-12
    parts.append(f"|top - Lambda| {worst_top:.1e}; max ||Q_T u||/(mu(M-1/2)||u||) {worst_ratio:.4f} over 100 states")
    assert verdict("criterion 4 (spectral structure)", ok, "; ".join(parts))


def test_c05_steady_states(verdict):
    ok, parts = True, []
    for name in ("steady_M1N4.cfg", "steady_M2N5.cfg"):
        cfg, rep, _ = _run(name)
        bounds = _records(rep, "steady_l2") + _records(rep, "steady_d2")
        long = _records(rep, "steady_long_time")[0]
        rate = _records(rep, "steady_rate_time")[0]
        b_ok, l_ok = _all_pass(rep, bounds), long.passes(rep.tol, rep.z)
        ok &= b_ok and l_ok
        parts.append(f"({cfg.params.M},{cfg.params.N}) bounds {'ok' if b_ok else 'VIOLATED'}, "
                     f"|h(50/Lambda) - h_inf| = {long.measured:.1e} vs 1e-6, "
                     f"at rate time {rate.t:.0f}: {rate.measured:.1e}")
    assert verdict("criterion 5 (steady states)", ok, "; ".join(parts))


def test_c06_inequality_corpus(verdict):
    cfg, rep, dt = _run("inequality.cfg")
    layers = [r for r in rep.records if r.quantity.split("[")[0] in ("dn_geometric", "dn_max", "crude", "d0_vs_da_a", "d0_vs_da_b")]
    cont = _records(rep, "eta0_continuity")
    ok = bool(layers) and _all_pass(rep, layers) and _all_pass(rep, cont)
    assert verdict("criterion 6 (inequality layers)", ok,
                   f"{len(layers)} layer checks, {len(cont)} continuity checks, min slack "
                   f"{min(r.margin for r in layers):.1e}, {dt:.0f}s")


def test_c07_counterexample_family(verdict):
    rs = (1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0)
    worst = max(counterexample_ratio(r, N, 1.0) / N for r in rs for N in (1, 2, 4, 8))
    top = counterexample_ratio(1e3, 4, 1.0)
    ok = worst <= 1 + 1e-9 and top >= 0.9 * 4
    assert verdict("criterion 7 (counterexample family)", ok,
                   f"max ratio/N {worst:.4f}; ratio at r=1e3, N=4: {top:.4f}")


def test_c08_saturation(verdict):
    u, basis = u_bar()
    ct = cross_term_coeffs(u, basis, 2)
    ratios = {M: cross_term(M) / build(M, M).norm() for M in (2, 3)}
    out = saturation_experiment(2, 4)
    ok_ct = abs(ct - 11 / 8) < 1e-9
    ok = ok_ct and min(ratios.values()) >= C_SAT and out["initial_slope"] >= out["slope_bound"]
    assert verdict("criterion 8 (saturation)", ok,
                   f"cross_term(u_bar) = {ct:.10f} vs 11/8; ratios {ratios[2]:.3f}, {ratios[3]:.3f} >= 3/128; "
                   f"slope {out['initial_slope']:.4f} >= {out['slope_bound']:.4f}")


def _menu(M: int):
    b = TensorIndex(M, 4)
    yield "constant", constant_state(b)
    yield "mixture", mixture_state(b, M, GaussianMixture.two_temperature(0.9, 0.5))
    yield "mixture-unequal", mixture_state(b, M, GaussianMixture.two_temperature(0.4, 0.7))
    yield "temperature", mixture_state(b, M, GaussianMixture.temperature(1.5 * math.pi))
    c = np.zeros(len(b))
    c[0] = 1.0
    c[b.flat((2,) + (0,) * (M - 1))] = 0.1
    yield "hermite", HermiteState(c, b)


def test_c09_fourth_moments(verdict):
    ok, parts = True, []
    worst_a, worst_norm, worst_e = 0.0, 0.0, -math.inf
    for M, N in ((1, 2), (2, 2), (2, 5), (4, 40)):
        rec = FourthMomentRecursion(SystemParams(M, N))
        expect = np.array([1.0, 0.0, 3 / math.pi, 3 / (4 * math.pi**2)])
        if M == 1:
            expect = expect[[0, 2, 3]]
        worst_a = max(worst_a, np.abs(rec.a0.components - expect).max())
        worst_norm = max(worst_norm, rec.spectral_norm())
        for _, st in _menu(M):
            m = symmetric_moments(st, M)
            top = max(rec.E4k(k, m["E4"], m["E3"], m["E2"]) for k in range(51))
            worst_e = max(worst_e, top / (2 * (m["E4"] + 1)))
    ok &= worst_a < 1e-13 and worst_norm <= 1 + 1e-10 and worst_e <= 1
    parts.append(f"|a - a_expected| {worst_a:.1e}, ||L|| {worst_norm:.12f}, max E4k/(2(E4+1)) {worst_e:.3f}")
    cfg, rep, dt = _run("dsmc_T_M4N40.cfg")
    recs = _records(rep, "v^4")
    z = max((r.measured - r.bound) / r.stderr for r in recs)
    ok &= _all_pass(rep, recs) and rep.z == 4
    parts.append(f"DSMC (4,40) K={cfg.dsmc.K}: max (v^4 - bound)/sigma {z:.1f}, {dt:.0f}s")
    assert verdict("criterion 9 (fourth moments)", ok, "; ".join(parts))


def test_c10_dsmc_cross_validation(verdict):
    cfg, rep, dt = _run("dsmc_M1N2.cfg")
    mix = GaussianMixture.two_temperature(cfg.state.spread, cfg.state.weight)
    moms = _records(rep, "v^2") + _records(rep, "v^4")
    zmax = max(r.measured / r.stderr for r in moms)
    energy = _records(rep, "energy_drift")[0]
    _, again, _ = _run("dsmc_M1N2.cfg", threads=2)
    same = rep.to_json() == again.to_json() and rep.to_csv() == again.to_csv()
    ok = (abs(mix.E2 - SIGMA2) > 1e-3 and len(moms) == 6 and zmax < 3
          and energy.measured <= 1e-10 and same)
    assert verdict("criterion 10 (DSMC vs spectral)", ok,
                   f"K={cfg.dsmc.K}, max |mc - exact|/sigma {zmax:.2f}, energy drift {energy.measured:.1e}, "
                   f"rerun identical: {same}, {dt:.0f}s")
