import math

import numpy as np
import pytest

from kacres.dsmc import (
    InitialSampler,
    ParticleState,
    default_observables,
    load_raw,
    run_ensemble,
    step_fr,
    step_t,
)
from kacres.hermite import TensorIndex, hermite_eval
from kacres.operators import Assembler, SystemParams
from kacres.propagator import Propagator
from kacres.states import SIGMA2, GaussianMixture, HermiteState, mixture_state, moment


def _classify(before: ParticleState, after: ParticleState, M: int) -> int:
    changed = np.flatnonzero(np.concatenate([after.v != before.v, after.w != before.w]))
    sys_hits = int(np.sum(changed < M))
    if sys_hits == len(changed) and len(changed) == 2:
        return 0
    if sys_hits == 0:
        return 1
    return 2


def test_mechanism_frequencies_and_waiting_times():
    p = SystemParams(2, 3, 1.0, 1.0, 1.0)
    rng = np.random.default_rng(0)
    s = ParticleState(rng.normal(size=2), rng.normal(size=3))
    counts = np.zeros(3)
    n = 20000
    e0 = s.energy
    for _ in range(n):
        nxt = step_fr(s, p, rng)
        counts[_classify(s, nxt, 2)] += 1
        s = nxt
    expect = np.array([p.rate_ss, p.rate_rr, p.rate_sr]) / p.Lambda
    z = (counts / n - expect) / np.sqrt(expect * (1 - expect) / n)
    assert np.all(np.abs(z) < 4)
    assert abs(s.energy - e0) / e0 < 1e-10
    mean_wait = s.clock / n
    assert abs(mean_wait - 1 / p.Lambda) < 4 / (p.Lambda * math.sqrt(n))


def test_thermostat_step_leaves_reservoir_to_itself():
    p = SystemParams(1, 2, 0.0, 0.0, 1.0)  # only thermostat events
    rng = np.random.default_rng(1)
    s = ParticleState(np.array([0.3]), np.array([0.1, -0.2]))
    for _ in range(100):
        s2 = step_t(s, p, rng)
        assert np.array_equal(s2.w, s.w)
        s = s2


def _mix_sampler(M, N):
    return InitialSampler.from_mixture(GaussianMixture.two_temperature(0.4, 0.7), M, N)


def test_seed_determinism_and_thread_independence():
    p = SystemParams(2, 3)
    kw = dict(K=5000, seed=42)
    a = run_ensemble(p, _mix_sampler(2, 3), [0.5, 1.0], **kw)
    b = run_ensemble(p, _mix_sampler(2, 3), [0.5, 1.0], threads=3, **kw)
    c = run_ensemble(p, _mix_sampler(2, 3), [0.5, 1.0], K=5000, seed=43)
    for k in a.mean:
        assert np.array_equal(a.mean[k], b.mean[k])
        assert np.array_equal(a.stderr[k], b.stderr[k])
    assert not np.array_equal(a.mean["v^2"], c.mean["v^2"])


def test_energy_and_momentum():
    p = SystemParams(2, 4)
    res = run_ensemble(p, _mix_sampler(2, 4), [1.0, 5.0], K=4000, seed=3)
    assert res.energy_drift < 1e-10
    z = np.abs(res.mean["momentum"]) / res.stderr["momentum"]
    assert np.all(z < 4)


def test_moments_match_spectral_propagator():
    p = SystemParams(1, 2)
    mix = GaussianMixture.two_temperature(0.4, 0.7)
    asm = Assembler(p, 4)
    h0 = mixture_state(asm.basis, 1, mix)
    times = [0.5, 1.0, 2.0]
    rows = Propagator(asm).evolve_many(h0, "FULL_FR", times)
    res = run_ensemble(p, InitialSampler.from_mixture(mix, 1, 2), times, K=20000, seed=9)
    for i in range(len(times)):
        st = h0.with_coeffs(rows[i])
        for q in (2, 4):
            z = (res.mean[f"v^{q}"][i, 0] - moment(st, {0: q})) / res.stderr[f"v^{q}"][i, 0]
            assert abs(z) < 4


def test_exchangeability_of_system_labels():
    M, N = 2, 2
    basis = TensorIndex(M, 2)
    samplers = []
    for coord in (0, 1):
        c = np.zeros(len(basis))
        c[0] = 1.0
        c[basis.flat((2, 0) if coord == 0 else (0, 2))] = 0.5
        samplers.append(InitialSampler.from_coefficients(c, basis, M, N))
    obs = {"sum v^2": lambda V, W: np.sum(V * V, 1), "sum v^4": lambda V, W: np.sum(V**4, 1)}
    p = SystemParams(M, N)
    a = run_ensemble(p, samplers[0], [0.0, 0.5, 1.0], obs, K=8000, seed=1)
    b = run_ensemble(p, samplers[1], [0.0, 0.5, 1.0], obs, K=8000, seed=2)
    for k in obs:
        z = (a.mean[k] - b.mean[k]) / np.hypot(a.stderr[k], b.stderr[k])
        assert np.all(np.abs(z) < 4)


def test_thermostat_equilibrium():
    p = SystemParams(2, 3)
    obs = {f"H{2 * n}": (lambda V, W, n=n: hermite_eval(2 * n, V)) for n in (1, 2, 3)}
    res = run_ensemble(p, _mix_sampler(2, 3), [0.0, 30.0], obs, K=6000, seed=5, system="T")
    for k in obs:
        z = res.mean[k][-1] / res.stderr[k][-1]
        assert np.all(np.abs(z) < 4)
    # unequal mixture weights put the initial state visibly off equilibrium
    assert np.abs(res.mean["H2"][0] / res.stderr["H2"][0]).max() > 4


def test_hermite_sampler_matches_coefficients():
    basis = TensorIndex(1, 4)
    c = np.zeros(len(basis))
    c[0], c[2], c[4] = 1.0, 0.3, 0.1
    h = HermiteState(c, basis)
    rng = np.random.default_rng(0)
    v = InitialSampler.from_coefficients(c, basis, 1, 1).sample_v(rng, 40000)[:, 0]
    for q in (2, 4):
        se = np.std(v**q) / math.sqrt(len(v))
        assert abs(np.mean(v**q) - moment(h, {0: q})) < 4 * se


def test_negative_density_rejected():
    basis = TensorIndex(1, 2)
    c = np.zeros(len(basis))
    c[0], c[2] = 1.0, 2.0
    with pytest.raises(ValueError, match="negative"):
        InitialSampler.from_coefficients(c, basis, 1, 1).sample_v(np.random.default_rng(0), 10)


def test_raw_dump_round_trip(tmp_path):
    p = SystemParams(1, 2)
    res = run_ensemble(p, _mix_sampler(1, 2), [0.5], K=100, seed=0, keep_final=True)
    path = tmp_path / "raw.bin"
    res.dump_raw(path)
    meta, X = load_raw(path)
    assert X.shape == (100, 3)
    assert meta["M"] == "1" and meta["dtype"] == "<f8"
    assert np.array_equal(X[:, :1], res.final[0])


def test_input_validation():
    p = SystemParams(1, 2)
    with pytest.raises(ValueError):
        run_ensemble(p, _mix_sampler(1, 2), [0.5], K=1)
    with pytest.raises(ValueError):
        run_ensemble(p, _mix_sampler(1, 2), [], K=10)
    with pytest.raises(ValueError):
        run_ensemble(p, _mix_sampler(1, 2), [0.5], K=10, system="X")
    assert set(default_observables(1, 2, [[0.1, 0.0, 0.0]])) >= {"v^2", "energy", "char[0]"}
    assert SIGMA2 == pytest.approx(1 / (2 * math.pi))
