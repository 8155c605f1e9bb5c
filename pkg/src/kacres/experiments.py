"""Named experiments: each takes an ExperimentConfig and returns an ExperimentReport."""
from __future__ import annotations

import math
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dsmc, inequality, saturation
from .config import ConfigError, ExperimentConfig
from .hermite import TensorIndex
from .metrics import CharFunction, char_from_coefficients, d2, gaussian_char, symmetric_search
from .operators import Assembler, SystemParams
from .propagator import (Propagator, relaxation_rate, steady_l2_constant_quadrature,
                         steady_l2_constant_truncated)
from .report import ExperimentReport
from .search import SearchConfig
from .states import (GaussianMixture, HermiteState, constant_state, mixture_state, moment, random_v_only)

K_THM2 = 16.0 * math.sqrt(2.0)


def system_params(cfg: ExperimentConfig) -> SystemParams:
    p = cfg.params
    return SystemParams(p.M, p.N, p.lam_S, p.lam_R, p.mu)


def search_config(cfg: ExperimentConfig) -> SearchConfig:
    s = cfg.search
    return SearchConfig(grid_points=s.grid_points, half_width=s.half_width, refine_rounds=s.refine_rounds,
                        shells=s.shells, qmc_samples=s.qmc_samples, max_expansions=s.max_expansions, seed=cfg.seed)


def _mixture(cfg: ExperimentConfig) -> GaussianMixture | None:
    st = cfg.state
    if st.kind == "mixture":
        return GaussianMixture.two_temperature(st.spread, st.weight)
    if st.kind == "temperature":
        return GaussianMixture.temperature(st.beta_s)
    return None


def initial_state(cfg: ExperimentConfig, basis: TensorIndex) -> HermiteState:
    """h0 on ``basis`` (system coordinates first) from the [state] section."""
    st, M = cfg.state, cfg.params.M
    if st.kind == "constant":
        return constant_state(basis)
    mix = _mixture(cfg)
    if mix is not None:
        return mixture_state(basis, M, mix)
    if st.coord >= M:
        raise ConfigError("state.coord", f"must be < M = {M}")
    if st.degree > basis.cutoff:
        raise ConfigError("state.degree", f"exceeds the cutoff {basis.cutoff}")
    c = np.zeros(len(basis))
    c[0] = 1.0
    m = [0] * basis.n_coords
    m[st.coord] = st.degree
    c[basis.flat(tuple(m))] += st.amplitude
    return HermiteState(c, basis, meta={"family": "hermite-perturbation"})


def _new_report(cfg: ExperimentConfig) -> ExperimentReport:
    return ExperimentReport(cfg.experiment, cfg.resolved(), cfg.digest(), tol=cfg.check.tol, z=cfg.check.z)


def _d2_pair(fhat: CharFunction, ghat: CharFunction, search: SearchConfig, *, subspace=None):
    """d2 value and certificate; an identically zero difference is exact and needs no search."""
    if fhat.coeffs is not None and ghat.coeffs is not None and fhat.basis is ghat.basis:
        if not np.any(fhat.coeffs - ghat.coeffs):
            return 0.0, None
    res = d2(fhat, ghat, search, subspace=subspace, require_certificate=True)
    return res.value, res.certificate


def _group_search(cfg: ExperimentConfig, M: int, N: int) -> SearchConfig:
    return symmetric_search(M + N, search_config(cfg), groups=(tuple(range(M)), tuple(range(M, M + N))))


# ------------------------------------------------------------------ theorem 1
def verify_thm1(cfg: ExperimentConfig) -> ExperimentReport:
    params = system_params(cfg)
    asm = Assembler(params, cfg.cutoff)
    prop = Propagator(asm, tol=cfg.tol, threads=cfg.threads)
    h0 = initial_state(cfg, asm.basis)
    rep = _new_report(cfg)
    u0 = float(np.linalg.norm(h0.deviation()))
    times = cfg.times()
    fr = prop.evolve_many(h0, "FULL_FR", times)
    tt = prop.evolve_many(h0, "FULL_T", times)
    diff = np.linalg.norm(fr - tt, axis=1)
    series = prop.difference_series(h0, times)
    pref = params.M / math.sqrt(params.N) * u0
    for i, t in enumerate(times):
        bound = pref * (1.0 - math.exp(-0.5 * params.mu * t))
        rep.add("thm1", t, diff[i], bound, stderr=cfg.tol, errbar="deterministic")
        rep.add("series_vs_evolve", t, float(np.linalg.norm(series[i] - (fr[i] - tt[i]))), 1e-8,
                errbar="deterministic")
        for name, rows in (("mass_FR", fr), ("mass_T", tt)):
            rep.add(name, t, abs(rows[i][0] - 1.0), 1e-10, errbar="deterministic")
    rep.info.update({"basis_size": len(asm.basis), "Lambda": params.Lambda, "norm_u0": u0,
                     "v_only_initial": h0.v_only(params.M), "ratio_to_bound": [
                         float(d / (pref * (1 - math.exp(-0.5 * params.mu * t)))) if pref > 0 and t > 0 else 0.0
                         for d, t in zip(diff, times)]})
    return rep


# ------------------------------------------------------------------ theorem 2
def _l0_d2(cfg: ExperimentConfig, search: SearchConfig) -> tuple[float, float, object]:
    """(d2(l0, Gamma_M), E4) for the configured initial state, from closed forms when available."""
    M = cfg.params.M
    mix = _mixture(cfg)
    if mix is None:
        raise ConfigError("state.kind", "theorem 2 needs a symmetric density with closed-form transform "
                                        "(mixture or temperature)")
    lhat = CharFunction(lambda p: mix.char(p).astype(complex), M, "closed-form")
    cfg_m = symmetric_search(M, search)
    val, cert = _d2_pair(lhat, gaussian_char(M), cfg_m)
    return val, mix.E4, cert


def verify_thm2(cfg: ExperimentConfig) -> ExperimentReport:
    params = system_params(cfg)
    M, N = params.M, params.N
    asm = Assembler(params, cfg.thm2.cutoff)
    prop = Propagator(asm, tol=cfg.tol, threads=cfg.threads)
    h0 = initial_state(cfg, asm.basis)
    trunc = float(h0.meta.get("truncation_l2", 0.0))
    search = search_config(cfg)
    d2_l0, E4, cert0 = _l0_d2(cfg, search)
    F4 = 48.0 * math.pi**4 * (E4 + 1.0)
    rep = _new_report(cfg)
    times = cfg.times()
    fr = prop.evolve_many(h0, "FULL_FR", times)
    tt = prop.evolve_many(h0, "FULL_T", times)
    gs = _group_search(cfg, M, N)
    scale = K_THM2 * M / N * math.sqrt(d2_l0 * (F4 + d2_l0))
    for i, t in enumerate(times):
        fa = char_from_coefficients(h0.with_coeffs(fr[i]))
        fb = char_from_coefficients(h0.with_coeffs(tt[i]))
        val, cert = _d2_pair(fa, fb, gs)
        err = 0.0
        if cert is not None and trunc > 0:
            r2 = float(np.sum(np.square(cert.argmax)))
            err = 2.0 * trunc / r2 if r2 > 0 else math.inf
        bound = scale * (1.0 - math.exp(-0.25 * params.mu * t))
        rep.add("thm2", t, val, bound, stderr=err, errbar="deterministic")
    if cfg.thm2.contraction:
        # one averaged collision step against the initial distance, both on the truncated l0
        Qt = asm.get("FULL_T").matrix / params.Lambda
        stepped = h0.with_coeffs(Qt @ h0.coeffs)
        one = constant_state(asm.basis)
        d_step, _ = _d2_pair(char_from_coefficients(stepped), char_from_coefficients(one), gs)
        d_init, _ = _d2_pair(char_from_coefficients(h0), char_from_coefficients(one), gs)
        rep.add("contraction_step", 0.0, d_step, (1.0 - params.mu / (2.0 * params.Lambda)) * d_init,
                stderr=cfg.tol, errbar="deterministic")
    rep.info.update({"basis_size": len(asm.basis), "d2_l0": d2_l0, "E4": E4, "F4": F4, "K": K_THM2,
                     "truncation_l2": trunc,
                     "d2_l0_certificate": cert0.as_dict() if cert0 is not None else None})
    return rep


# ------------------------------------------------------------------ steady states
def verify_steady(cfg: ExperimentConfig) -> ExperimentReport:
    params = system_params(cfg)
    M, N = params.M, params.N
    asm = Assembler(params, cfg.cutoff)
    prop = Propagator(asm, tol=cfg.tol, threads=cfg.threads)
    rep = _new_report(cfg)
    rng = np.random.default_rng(cfg.seed)
    sub_basis = TensorIndex(M, cfg.cutoff)
    search = search_config(cfg)
    radial_dir = np.full((M + N, 1), 1.0 / math.sqrt(M + N))
    C_l2 = M / (N - 2) if N >= 3 else math.inf
    if N < 3:
        rep.notes.append("N < 3: the L^2 steady-state bound has no finite constant; L^2 check skipped")
    maxd = min(cfg.steady.max_degree, cfg.cutoff)
    rate = relaxation_rate(asm)
    states = [constant_state(asm.basis)] + [
        random_v_only(asm.basis, M, rng, amplitude=0.1 * (1 + k % 3), max_degree=maxd)
        for k in range(cfg.steady.n_states)]
    for k, h0 in enumerate(states):
        hinf = prop.steady_state(h0)
        u2 = float(np.sum(h0.deviation() ** 2))
        if N >= 3:
            rep.add("steady_l2", k, float(np.sum(hinf.deviation() ** 2)), C_l2 * u2, stderr=1e-12,
                    errbar="deterministic")
        # the steady state is radial, so its transform is searched along one direction
        d_inf, _ = _d2_pair(char_from_coefficients(hinf), char_from_coefficients(constant_state(asm.basis)),
                            replace(search, parity=True), subspace=radial_dir)
        pos = sub_basis.flat(h0.basis.indices[:, :M])
        l0 = np.zeros(len(sub_basis))
        keep = asm.v_only_mask
        l0[pos[keep]] = h0.coeffs[keep]
        lstate = HermiteState(l0, sub_basis)
        d_l0, _ = _d2_pair(char_from_coefficients(lstate), char_from_coefficients(constant_state(sub_basis)),
                           replace(search, parity=True))
        rep.add("steady_d2", k, d_inf, M / (M + N) * d_l0, stderr=1e-12, errbar="deterministic")
    # long-time evolution against the projection, at the configured proxy time and a rate-derived time
    h0 = states[-1]
    hinf = prop.steady_state(h0).coeffs
    u0 = float(np.linalg.norm(h0.deviation()))
    tol = cfg.steady.long_time_tol
    t_proxy = 50.0 / params.Lambda
    t_rate = math.log(max(u0, tol) / tol) / rate + 1.0 / rate
    for name, t in (("steady_long_time", t_proxy), ("steady_rate_time", t_rate)):
        ht = prop.evolve(h0, "FULL_FR", t).coeffs
        rep.add(name, t, float(np.linalg.norm(ht - hinf)), tol, errbar="deterministic")
    Cq = steady_l2_constant_quadrature(M, N)
    if N >= 3:
        rep.add("l2_constant_quadrature", 0.0, abs(Cq - C_l2), 1e-8, errbar="deterministic")
    sharp, summed = steady_l2_constant_truncated(asm, prop.radial_vectors())
    rep.info.update({"basis_size": len(asm.basis), "Lambda": params.Lambda, "relaxation_rate": rate,
                     "t_proxy": t_proxy, "t_rate": t_rate, "l2_constant": C_l2, "l2_constant_quadrature": Cq,
                     "l2_constant_sharp_truncated": sharp, "l2_constant_summed_truncated": summed,
                     "d2_constant": M / (M + N)})
    return rep


# ------------------------------------------------------------------ DSMC
def _sampler(cfg: ExperimentConfig) -> tuple[dsmc.InitialSampler, HermiteState]:
    M, N = cfg.params.M, cfg.params.N
    mix = _mixture(cfg)
    sub = TensorIndex(M, max(cfg.cutoff, 4))
    h_sys = initial_state(cfg, sub)
    if mix is not None:
        return dsmc.InitialSampler.from_mixture(mix, M, N), h_sys
    return dsmc.InitialSampler.from_coefficients(h_sys.coeffs, sub, M, N), h_sys


def run_dsmc(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> ExperimentReport:
    params = system_params(cfg)
    M, N = params.M, params.N
    sampler, h_sys = _sampler(cfg)
    times = cfg.times()
    res = dsmc.run_ensemble(params, sampler, times, K=cfg.dsmc.K, seed=cfg.seed, system=cfg.dsmc.system,
                            threads=cfg.threads, keep_final=cfg.dsmc.raw and out_dir is not None)
    rep = _new_report(cfg)
    tg = res.t_grid
    if cfg.dsmc.system == "FR":
        rep.add("energy_drift", tg[-1], res.energy_drift, 1e-10, errbar="deterministic")
    for i, t in enumerate(tg):
        m, s = float(res.mean["momentum"][i]), float(res.stderr["momentum"][i])
        rep.add("momentum", t, abs(m), 0.0, stderr=s)
    E4 = float(np.mean([moment(h_sys, {j: 4}) for j in range(M)]))
    if cfg.dsmc.system == "T":
        for i, t in enumerate(tg):
            for j in range(M):
                rep.add(f"v^4[{j}]<=2(E4+1)", t, float(res.mean["v^4"][i, j]), 2.0 * (E4 + 1.0),
                        stderr=float(res.stderr["v^4"][i, j]))
    if cfg.dsmc.compare_spectral:
        try:
            asm = Assembler(params, 4)
        except ValueError as exc:
            rep.notes.append(f"spectral comparison skipped: {exc}")
        else:
            # degree <= 4 blocks are invariant, so cutoff 4 gives exact moments up to order 4
            h0 = initial_state(cfg, asm.basis)
            prop = Propagator(asm, tol=cfg.tol)
            which = "FULL_FR" if cfg.dsmc.system == "FR" else "FULL_T"
            rows = prop.evolve_many(h0, which, tg)
            for i, t in enumerate(tg):
                st = h0.with_coeffs(rows[i])
                for p in (2, 4):
                    for j in range(M):
                        exact = moment(st, {j: p})
                        rep.add(f"v^{p}[{j}] vs spectral", t, abs(float(res.mean[f"v^{p}"][i, j]) - exact), 0.0,
                                stderr=float(res.stderr[f"v^{p}"][i, j]))
    if cfg.dsmc.raw and out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        res.dump_raw(Path(out_dir) / "raw.bin")
    rep.info.update({"K": res.K, "events": res.events, "flagged_replicas": res.flagged, "E4_initial": E4,
                     "system": cfg.dsmc.system,
                     "means": {k: np.asarray(v).tolist() for k, v in res.mean.items()},
                     "stderr": {k: np.asarray(v).tolist() for k, v in res.stderr.items()}})
    if res.flagged:
        rep.notes.append(f"{res.flagged} replicas produced non-finite observables and were excluded")
    return rep


# ------------------------------------------------------------------ inequality lab
def run_inequality(cfg: ExperimentConfig) -> ExperimentReport:
    ic = cfg.inequality
    rep = _new_report(cfg)
    funcs = inequality.corpus(ic.n_functions, seed=20240607 + cfg.seed)
    worst = {}
    for H in funcs:
        c4 = inequality.c4_norm(H).value
        for a in ic.a:
            for N in ic.N:
                r = inequality.check_dn_chain(H, float(a), int(N), c4=c4)
                for layer, (lhs, rhs, _slack) in r.layers.items():
                    rep.add(f"{layer}[{H.name};a={a:g};N={N}]", 0.0, lhs, rhs, errbar="deterministic")
                    worst[layer] = min(worst.get(layer, math.inf), rhs - lhs)
            if a > 0:
                jump = inequality.majorant_jump(H, float(a))
                if jump is not None:
                    rep.add(f"eta0_continuity[{H.name};a={a:g}]", 0.0, jump, 1e-10, errbar="deterministic")
    for r in ic.r:
        for N in ic.N:
            ratio = inequality.counterexample_ratio(float(r), int(N), 1.0)
            rep.add(f"DN/D1<=N[r={r:g};N={N}]", 0.0, ratio, float(N), errbar="deterministic")
    ratio = inequality.counterexample_ratio(1e3, 4, 1.0)
    rep.add("DN/D1>=0.9N[r=1000;N=4;a=1]", 0.0, ratio, 0.9 * 4, kind="lower", errbar="deterministic")
    rep.info.update({"n_functions": len(funcs), "min_slack_by_layer": worst})
    return rep


# ------------------------------------------------------------------ saturation
def run_saturate(cfg: ExperimentConfig) -> ExperimentReport:
    params = system_params(cfg)
    M, N = params.M, params.N
    if M < 2:
        raise ConfigError("params.M", "saturating states need M >= 2")
    rep = _new_report(cfg)
    u, b = saturation.u_bar()
    rep.add("cross_term_ubar==11/8", 0.0, abs(saturation.cross_term_coeffs(u, b, 2) - 11.0 / 8.0), 1e-9,
            errbar="deterministic")
    per_p = {}
    for P in cfg.saturate.P:
        P = int(P)
        s = saturation.build(P, P)
        val = saturation.cross_term_coeffs(s.coeffs, s.basis, P)
        ratio = val / s.norm()
        rep.add(f"ratio>=3/128[M=P={P}]", 0.0, ratio, saturation.C_SAT, kind="lower", errbar="deterministic")
        rep.add(f"ratio>=displayed[M=P={P}]", 0.0, ratio, saturation.displayed_ratio_bound(P, P), kind="lower",
                errbar="deterministic")
        _, lo_half = saturation.positivity_scale(s.coeffs, s.basis, P)
        rep.add(f"positivity[M=P={P}]", 0.0, 1.0 + s.a * lo_half, 0.0, kind="lower", errbar="deterministic")
        rep.add(f"positivity_half_a[M=P={P}]", 0.0, 1.0 + 0.5 * s.a * lo_half, 0.0, kind="lower",
                errbar="deterministic")
        count = len(s.support)
        per_p[P] = {"cross_term": val, "norm": s.norm(), "norm_sq": s.norm() ** 2, "ratio": ratio,
                    "ratio_squared_norm": val / s.norm() ** 2, "a": s.a, "support_count": count,
                    "compositions": saturation.composition_count(P, P),
                    "binom(M+P,P-1)": math.comb(2 * P, P - 1),
                    "displayed_bound": saturation.displayed_ratio_bound(P, P)}
    c = cfg.saturate.c
    times = np.linspace(0.0, c / params.Lambda, cfg.saturate.points)
    out = saturation.saturation_experiment(M, N, times=times, tol=cfg.tol)
    for r in out["records"]:
        if r.lower_bound > 0 or r.t == 0.0:
            rep.add("saturation_lower", r.t, r.measured, max(r.lower_bound, 0.0), kind="lower",
                    stderr=cfg.tol, errbar="deterministic")
    rep.add("initial_slope", 0.0, out["initial_slope"], out["slope_bound"], kind="lower", errbar="deterministic")
    rep.info.update({"per_P": {str(k): v for k, v in per_p.items()}, "a": out["a"], "norm_u0": out["norm_u0"],
                     "Lambda": out["Lambda"], "initial_slope_fd": out["initial_slope_fd"],
                     "nonvacuous_until": out["nonvacuous_until"]})
    return rep


RUNNERS = {
    "verify-thm1": verify_thm1,
    "verify-thm2": verify_thm2,
    "steady-state": verify_steady,
    "dsmc": run_dsmc,
    "inequality": run_inequality,
    "saturate": run_saturate,
}


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> ExperimentReport:
    fn = RUNNERS[cfg.experiment]
    return fn(cfg, out_dir) if fn is run_dsmc else fn(cfg)
