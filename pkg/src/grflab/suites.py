"""Verification suites: each bundles one family of identities into checks
run at two time resolutions, reporting measured convergence orders.

Suite names: scalar, energy, shrinker, nash, lambda, iso, soliton,
heat-duality.  Parameters (grid sizes, step pairs, perturbation spectra)
are pinned so every residual sits well inside its asymptotic regime; the
probes behind these choices live in the test suite.
"""

from __future__ import annotations

import os
import time
from math import log2

import numpy as np

from .backends import (
    BackendDescriptor,
    CONFORMAL_TORUS2,
    COHOM1_TORUS3,
    HOMOGENEOUS3,
    make_backend,
)
from .entropy import (
    MonitorSeries,
    energy_density_residual,
    entropy_cross_check,
    generalized_scalar,
    harnack_check,
    heat_kernel_inequality,
    lambda_dense_oracle,
    lambda_eig,
    lambda_series,
    monitor_scalar_extrema,
    monitor_weighted_scalar_sup,
    monotone_check,
    nash_entropy,
    nash_relations_residual,
    oneform_scalar_residual,
    perelman_entropy,
    plain_shrinker_residual,
    scalar_monotonicity_residual,
    shrinker_residual,
)
from .errors import RangeError
from .fields import FormField, MetricState
from .flow import FlowState, StepperConfig, Trajectory, integrate
from .geometry import Geometry
from .heat import (
    conjugate_dilaton_solve,
    conjugate_solve,
    duality_residual,
    forward_heat_solve,
    periodic_bump,
    SolutionPath,
)
from .isoperimetric import (
    ChartDomain,
    ball_ratio_radial,
    euclidean_isoperimetric_constant,
    iso_ratio,
    level_set_iso_bound,
    log_sobolev_deficit,
    region_measures,
)
from .reporting import CheckRow, RunReport, check_flag, check_leq
from .soliton import (
    bismut_flat_fixture,
    drift_spectral_gap,
    flat_torus_fixture,
    normalized_dilaton_flow,
    rigidity_experiment,
    soliton_algebra_residual,
)

SUITES = ("scalar", "energy", "shrinker", "nash", "lambda", "iso", "soliton",
          "heat-duality")

MONO_SLACK = 1e-6


# -- shared builders ---------------------------------------------------------


def perturbed_torus3(resolution: int, amp: float, torsion: bool = True,
                     h0: float = 0.9, phi_amp: float | None = None) -> FlowState:
    bk = make_backend(BackendDescriptor(COHOM1_TORUS3, resolution=resolution))
    th = bk.theta
    prof = np.stack([1 + amp * np.cos(2 * th),
                     1 + amp * np.sin(3 * th),
                     1 - amp * np.cos(th)])
    phi_amp = amp if phi_amp is None else phi_amp
    phi = phi_amp * np.cos(th)
    if torsion:
        b = FormField(2, np.stack([0 * th, 0 * th, amp * np.sin(2 * th)]))
        H0 = FormField(3, (h0 + 0 * th)[None].copy())
        return FlowState(0.0, bk, "grf", MetricState(COHOM1_TORUS3, prof),
                         phi=phi, b=b, H0=H0)
    return FlowState(0.0, bk, "ricci", MetricState(COHOM1_TORUS3, prof), phi=phi)


def flat_torus3_state(resolution: int = 16) -> FlowState:
    bk = make_backend(BackendDescriptor(COHOM1_TORUS3, resolution=resolution))
    return FlowState(0.0, bk, "ricci",
                     MetricState(COHOM1_TORUS3, np.ones((3, resolution))),
                     phi=np.zeros(resolution))


def flat_torus2_state(resolution: int = 16) -> FlowState:
    bk = make_backend(BackendDescriptor(CONFORMAL_TORUS2, resolution=resolution))
    return FlowState(0.0, bk, "ricci",
                     MetricState(CONFORMAL_TORUS2, np.zeros((resolution,) * 2)),
                     phi=np.zeros((resolution,) * 2))


def conformal_oneform_state(resolution: int, amp: float = 0.02) -> FlowState:
    bk = make_backend(BackendDescriptor(CONFORMAL_TORUS2, resolution=resolution))
    xx, yy = bk.xx, bk.yy
    u0 = amp * (np.sin(3 * xx) * np.cos(2 * yy) + 0.7 * np.cos(4 * xx + yy))
    alpha = FormField(1, np.stack([amp * np.cos(3 * xx + 2 * yy) + 0.31,
                                   amp * np.sin(2 * xx) * np.sin(3 * yy) - 0.12]))
    return FlowState(0.0, bk, "oneform", MetricState(CONFORMAL_TORUS2, u0),
                     phi=amp * np.cos(2 * xx + yy), alpha=alpha)


def conformal_ggrf_state(resolution: int, amp: float = 0.02,
                         h2: float = 0.9) -> FlowState:
    bk = make_backend(BackendDescriptor(CONFORMAL_TORUS2, resolution=resolution))
    xx, yy = bk.xx, bk.yy
    u0 = amp * (np.sin(3 * xx) * np.cos(2 * yy) + 0.7 * np.cos(4 * xx + yy))
    H2 = FormField(2, (h2 + amp * np.sin(2 * xx) * np.cos(yy))[None].copy())
    return FlowState(0.0, bk, "ggrf", MetricState(CONFORMAL_TORUS2, u0),
                     phi=amp * np.cos(2 * xx + yy), forms={2: H2})


def refinement_order(coarse: float, fine: float) -> float:
    return log2(max(coarse, 1e-300) / max(fine, 1e-300))


def _normalized_bump(traj: Trajectory, sigma: float, weighted: bool = True):
    bk = traj.system.backend
    u = periodic_bump(bk, sigma)
    state = traj.state_at(traj.t1)
    geo = Geometry(bk, state.metric)
    w = state.phi if weighted else 0.0
    return u / geo.weighted_integral(u, w)


# -- suite: scalar ------------------------------------------------------------


def suite_scalar(resolution: int | None = None) -> RunReport:
    """Weighted scalar curvature evolution identities, all three variants."""
    t_start = time.time()
    rep = RunReport("suite-scalar")

    # Bismut-flat fixture stationarity with linear dilaton growth
    fx = bismut_flat_fixture()
    s0 = fx.flow_state(phi=0.0)
    traj = integrate(s0, StepperConfig(t_end=1.0, scheme="rkck45"))
    end = traj.state_node(len(traj.times) - 1)
    drift = float(np.max(np.abs(end.metric.data - 1.0)))
    rep.add(check_leq("fixture_metric_drift", drift, 1e-10))
    rep.add(check_leq("fixture_dilaton_slope_error",
                      abs(float(end.phi) - 4.0), 1e-10))
    traj_u = integrate(fx.flow_state(phi=0.0),
                       StepperConfig(t_end=1.0, scheme="rk4", dt=0.05))
    rep.add(check_leq("fixture_scalar_residual",
                      scalar_monotonicity_residual(traj_u, 0.5), 1e-9))

    # perturbed torsion run on the 3-torus, two step sizes
    N = resolution or 128
    T, tc = 4.8e-3, 2.4e-3
    res = {}
    series = None
    for dt in (4e-4, 2e-4):
        bk = make_backend(BackendDescriptor(COHOM1_TORUS3, resolution=N))
        th = bk.theta
        amp = 0.03
        prof = np.stack([1 + amp * np.cos(6 * th), 1 + amp * np.sin(7 * th),
                         1 - amp * np.cos(5 * th + 0.3)])
        s = FlowState(0.0, bk, "grf", MetricState(COHOM1_TORUS3, prof),
                      phi=amp * np.cos(3 * th),
                      b=FormField(2, np.stack([0 * th, 0 * th, amp * np.sin(4 * th)])),
                      H0=FormField(3, (0.8 + 0 * th)[None].copy()))
        traj = integrate(s, StepperConfig(t_end=T, scheme="rk4", dt=dt))
        res[dt] = scalar_monotonicity_residual(traj, tc)
        if series is None:
            series = monitor_scalar_extrema(traj)
    order = refinement_order(res[4e-4], res[2e-4])
    rep.add(check_leq("scalar_identity_order_deficit", 3.5 - order, 0.0,
                      order=order,
                      note=f"residuals {res[4e-4]:.3e} -> {res[2e-4]:.3e}"))
    ok, worst = monotone_check(series.channels["min_weighted_scalar"],
                               "nondecreasing", MONO_SLACK)
    rep.add(check_leq("scalar_min_monotone_slack", worst, MONO_SLACK))

    # one-form and general-degree variants on the conformal torus
    NC = 64 if resolution is None else max(32, resolution // 2)
    TC, tcc = 7.2e-3, 3.6e-3
    for label, builder, residual in (
            ("oneform", conformal_oneform_state, oneform_scalar_residual),
            ("ggrf", conformal_ggrf_state, scalar_monotonicity_residual)):
        r = {}
        for dt in (6e-4, 3e-4):
            traj = integrate(builder(NC), StepperConfig(t_end=TC, scheme="rk4", dt=dt))
            r[dt] = residual(traj, tcc)
        order = refinement_order(r[6e-4], r[3e-4])
        rep.add(check_leq(f"{label}_identity_order_deficit", 3.5 - order, 0.0,
                          order=order,
                          note=f"residuals {r[6e-4]:.3e} -> {r[3e-4]:.3e}"))

    rep.wall_time_s = time.time() - t_start
    return rep


# -- suite: energy -------------------------------------------------------------


def _energy_shrinker_run(resolution: int):
    s = perturbed_torus3(resolution, amp=0.02)
    traj = integrate(s, StepperConfig(t_end=0.2, scheme="rk4", dt=3e-4))
    uT = 1 + 0.3 * np.cos(5 * traj.system.backend.theta)
    return traj, uT


def suite_energy(resolution: int | None = None) -> RunReport:
    """Energy density identity and the sup-monotonicity it implies."""
    t_start = time.time()
    rep = RunReport("suite-energy")

    fx = bismut_flat_fixture()
    traj = integrate(fx.flow_state(phi=0.0), StepperConfig(t_end=1.0, scheme="rkck45"))
    us = conjugate_solve(traj, np.ones(()), mode="weighted", T=1.0, t0=0.0,
                         dt=1.0 / 512, normalization="steady")
    rep.add(check_leq("fixture_energy_residual",
                      energy_density_residual(traj, us, 0.5), 1e-9))

    flat = integrate(flat_torus3_state(16), StepperConfig(t_end=0.2, scheme="rk4", dt=1e-3))
    usf = conjugate_solve(flat, np.full(16, 1.0), mode="weighted", T=0.2, t0=0.0,
                          normalization="steady")
    rep.add(check_leq("flat_energy_residual",
                      energy_density_residual(flat, usf, 0.1), 1e-10))

    N = resolution or 128
    traj, uT = _energy_shrinker_run(N)
    r = {}
    for dt in (6e-4, 3e-4):
        us = conjugate_solve(traj, uT, mode="weighted", T=0.2, t0=0.0, dt=dt,
                             normalization="shrinker", mass_tol=1e-5)
        r[dt] = energy_density_residual(traj, us, 0.15)
    order = refinement_order(r[6e-4], r[3e-4])
    rep.add(check_leq("energy_identity_order_deficit", 3.5 - order, 0.0,
                      order=order, note=f"residuals {r[6e-4]:.3e} -> {r[3e-4]:.3e}"))

    # sup R^{H,f+phi} nondecreasing along a torsion run (steady weighted solve)
    s2 = perturbed_torus3(48, amp=0.1)
    traj2 = integrate(s2, StepperConfig(t_end=0.2, scheme="rk4", dt=5e-4))
    th2 = traj2.system.backend.theta
    us2 = conjugate_solve(traj2, 1 + 0.3 * np.cos(th2), mode="weighted", T=0.2,
                          t0=0.0, dt=1e-3, normalization="steady")
    sup = monitor_weighted_scalar_sup(traj2, us2)
    ok, worst = monotone_check(sup.channels["sup_weighted_scalar"],
                               "nondecreasing", MONO_SLACK)
    rep.add(check_leq("sup_weighted_scalar_monotone_slack", worst, MONO_SLACK))

    rep.wall_time_s = time.time() - t_start
    return rep


# -- suite: shrinker ------------------------------------------------------------


def suite_shrinker(resolution: int | None = None) -> RunReport:
    """Shrinker entropy identity, Harnack density, heat-kernel inequality."""
    t_start = time.time()
    rep = RunReport("suite-shrinker")

    # flat closed forms in dimensions three and two
    for label, state, vol in (("t3", flat_torus3_state(16), (2 * np.pi) ** 3),
                              ("t2", flat_torus2_state(16), (2 * np.pi) ** 2)):
        traj = integrate(state, StepperConfig(t_end=0.7, scheme="rk4", dt=1e-3))
        u0 = np.full(traj.system.backend.grid_shape, 1.0 / vol)
        us = conjugate_solve(traj, u0, mode="weighted", T=0.7, t0=0.0,
                             normalization="shrinker")
        psi = conjugate_dilaton_solve(traj, us, psi_T=0.0)
        worst = max(shrinker_residual(traj, us, psi, t) for t in (0.2, 0.35))
        rep.add(check_leq(f"flat_{label}_shrinker_residual", worst, 1e-10))

    # generic torsion run: weighted shrinker and plain engine refinements
    N = resolution or 128
    traj, uT = _energy_shrinker_run(N)
    rs, rp = {}, {}
    integ_series = None
    for dt in (6e-4, 3e-4):
        us = conjugate_solve(traj, uT, mode="weighted", T=0.2, t0=0.0, dt=dt,
                             normalization="shrinker", mass_tol=1e-5)
        psi = conjugate_dilaton_solve(traj, us, psi_T=0.0)
        rs[dt] = shrinker_residual(traj, us, psi, 0.15)
        usp = conjugate_solve(traj, uT, mode="plain", T=0.2, t0=0.0, dt=dt,
                              normalization="shrinker", mass_tol=1e-5)
        rp[dt] = plain_shrinker_residual(traj, usp, 0.15)
        if integ_series is None:
            integ_series = harnack_check(traj, us, psi)
    order_s = refinement_order(rs[6e-4], rs[3e-4])
    order_p = refinement_order(rp[6e-4], rp[3e-4])
    rep.add(check_leq("shrinker_identity_order_deficit", 3.5 - order_s, 0.0,
                      order=order_s, note=f"{rs[6e-4]:.3e} -> {rs[3e-4]:.3e}"))
    rep.add(check_leq("plain_shrinker_order_deficit", 3.5 - order_p, 0.0,
                      order=order_p, note=f"{rp[6e-4]:.3e} -> {rp[3e-4]:.3e}"))
    rep.add(check_leq("integrated_entropy_monotone_slack",
                      integ_series.meta["integrated_monotone_slack"], MONO_SLACK))
    rep.add(check_flag("constant_data_flagged_not_delta",
                       bool(integ_series.meta["not_delta_like"])))

    # flat conformal-torus Harnack with bump data against the exact kernel
    NC = 48
    TC = 4.0
    sC = flat_torus2_state(NC)
    bk = sC.backend
    trajC = integrate(sC, StepperConfig(t_end=TC, scheme="rk4", dt=2e-3))
    sigma = 4 * bk.h
    uTC = _normalized_bump(trajC, sigma)
    usC = conjugate_solve(trajC, uTC, mode="weighted", T=TC, t0=0.0, dt=2e-3,
                          normalization="shrinker", mass_tol=1e-6)
    psiC = conjugate_dilaton_solve(trajC, usC, psi_T=0.0)
    hc = harnack_check(trajC, usC, psiC, tol_harnack=1e-3)
    # compare with the exact wrapped-Gaussian density at a few times
    def exact_max(tau):
        v = sigma ** 2 / 2 + tau
        kmax = NC // 2 - 1
        g1 = np.ones_like(bk.xx) / (2 * np.pi)
        g2 = np.ones_like(bk.yy) / (2 * np.pi)
        for k in range(1, kmax + 1):
            g1 = g1 + np.exp(-k * k * v) * np.cos(k * (bk.xx - np.pi)) / np.pi
            g2 = g2 + np.exp(-k * k * v) * np.cos(k * (bk.yy - np.pi)) / np.pi
        ue = g1 * g2
        fe = -np.log(ue) - np.log(4 * np.pi * tau)
        st = trajC.state_at(TC - tau)
        We = tau * generalized_scalar(st, fe) + fe - 2
        return float(np.max(We * ue))
    oracle_err = 0.0
    for tau in (1.0, 2.0, 3.0):
        i = usC.upath.node_index(TC - tau)
        oracle_err = max(oracle_err,
                         abs(hc.channels["max_entropy_density"][i] - exact_max(tau)))
    rep.add(check_leq("harnack_flat_oracle_error", oracle_err, 1e-6))
    window = hc.times <= TC - 10 * sigma ** 2
    worst_max = float(np.max(hc.channels["max_entropy_density"][window]))
    rep.add(check_leq("harnack_flat_max_density", worst_max, 1e-3,
                      note="tau beyond ten bump variances"))
    rep.add(check_leq("harnack_flat_integrated_slack",
                      hc.meta["integrated_monotone_slack"], MONO_SLACK))

    # heat-kernel entropy comparison across time on the torsion run
    th = traj.system.backend.theta
    hpath = forward_heat_solve(traj, 1 + 0.8 * np.cos(th - 1.0), 0.0, 0.2, dt=6e-4)
    usp = conjugate_solve(traj, uT, mode="plain", T=0.2, t0=0.0, dt=6e-4,
                          normalization="shrinker", mass_tol=1e-5)
    worst_slack = np.inf
    for (t1, t2) in ((0.03, 0.12), (0.06, 0.15), (0.1, 0.18)):
        out = heat_kernel_inequality(traj, hpath, usp, t1, t2)
        worst_slack = min(worst_slack, out["slack"])
    rep.add(check_leq("heat_kernel_inequality_violation",
                      max(0.0, -worst_slack), MONO_SLACK,
                      note=f"worst slack {worst_slack:.3e}"))

    rep.wall_time_s = time.time() - t_start
    return rep


# -- suite: nash ----------------------------------------------------------------


def suite_nash(resolution: int | None = None) -> RunReport:
    """Weighted Nash entropy relations in Ricci-flow mode."""
    t_start = time.time()
    rep = RunReport("suite-nash")

    # flat closed form: exact relations
    flat = integrate(flat_torus3_state(16),
                     StepperConfig(t_end=0.7, scheme="rk4", dt=5e-4))
    V = (2 * np.pi) ** 3
    us = conjugate_solve(flat, np.full(16, 1.0 / V), mode="weighted", T=0.7,
                         t0=0.0, normalization="shrinker")
    tau_probe = 0.35
    expect = np.log(V) - 1.5 * np.log(4 * np.pi * tau_probe) - 1.5
    rep.add(check_leq("flat_nash_value_error",
                      abs(nash_entropy(flat, us, 0.7 - tau_probe) - expect), 1e-10))
    rel = nash_relations_residual(flat, us, tau_min=0.35, tau_max=0.65, samples=7)
    rep.add(check_leq("flat_dtauN_minus_W", rel["dtauN_minus_W"], 1e-10))
    rep.add(check_leq("flat_dW_identity", rel["dW_identity"], 1e-10))
    rep.add(check_leq("flat_entropy_cross_check",
                      entropy_cross_check(flat, us, 0.35), 1e-10))

    # perturbed run with bump terminal data, two step sizes
    N = resolution or 96
    s = perturbed_torus3(N, amp=0.05, torsion=False)
    traj = integrate(s, StepperConfig(t_end=0.7, scheme="rk4", dt=2.5e-4))
    sigma = 4 * traj.system.backend.h
    uT = _normalized_bump(traj, sigma)
    rels = {}
    for dt in (1e-3, 5e-4):
        usb = conjugate_solve(traj, uT, mode="weighted", T=0.7, t0=0.0, dt=dt,
                              normalization="shrinker", mass_tol=1e-6)
        rels[dt] = nash_relations_residual(traj, usb, tau_min=max(0.3, 5 * sigma ** 2),
                                           tau_max=0.6, samples=7)
    o1 = refinement_order(rels[1e-3]["dtauN_minus_W"], rels[5e-4]["dtauN_minus_W"])
    o2 = refinement_order(rels[1e-3]["dW_identity"], rels[5e-4]["dW_identity"])
    rep.add(check_leq("nash_first_relation_order_deficit", 3.5 - o1, 0.0, order=o1,
                      note=f"{rels[1e-3]['dtauN_minus_W']:.3e} -> {rels[5e-4]['dtauN_minus_W']:.3e}"))
    rep.add(check_leq("nash_second_relation_order_deficit", 3.5 - o2, 0.0, order=o2,
                      note=f"{rels[1e-3]['dW_identity']:.3e} -> {rels[5e-4]['dW_identity']:.3e}"))
    rep.add(check_leq("dW_dtau_max", rels[5e-4]["dW_dtau_max"], MONO_SLACK))

    rep.wall_time_s = time.time() - t_start
    return rep


# -- suite: lambda ----------------------------------------------------------------


def _random_flow_states(backend_kind: str, count: int, rng) -> list:
    out = []
    for _ in range(count):
        if backend_kind == HOMOGENEOUS3:
            bk = make_backend(BackendDescriptor(HOMOGENEOUS3,
                                                structure_constants=(2.0, 2.0, 2.0)))
            x = 1.0 + 0.3 * rng.uniform(-1, 1, size=3)
            kappa = rng.uniform(0.0, 1.5)
            geo = Geometry(bk, MetricState(HOMOGENEOUS3, x))
            H0 = FormField(3, np.array([kappa * float(geo.sqrtg)]))
            out.append(FlowState(0.0, bk, "grf", MetricState(HOMOGENEOUS3, x),
                                 phi=np.array(rng.uniform(-0.5, 0.5)),
                                 b=FormField.zero(bk, 2), H0=H0))
        elif backend_kind == COHOM1_TORUS3:
            N = 48
            bk = make_backend(BackendDescriptor(COHOM1_TORUS3, resolution=N))
            th = bk.theta
            def rand_profile(base=1.0, amp=0.08):
                p = np.full(N, base)
                for k in range(1, 4):
                    p = p + amp / k * (rng.uniform(-1, 1) * np.cos(k * th)
                                       + rng.uniform(-1, 1) * np.sin(k * th))
                return p
            prof = np.stack([rand_profile(), rand_profile(), rand_profile()])
            b = FormField(2, np.stack([0 * th, 0 * th, 0.08 * rng.uniform(-1, 1) * np.sin(2 * th)]))
            H0 = FormField(3, (0.8 + 0 * th)[None].copy())
            out.append(FlowState(0.0, bk, "grf", MetricState(COHOM1_TORUS3, prof),
                                 phi=rand_profile(0.0, 0.15), b=b, H0=H0))
        else:
            N = 32
            bk = make_backend(BackendDescriptor(CONFORMAL_TORUS2, resolution=N))
            xx, yy = bk.xx, bk.yy
            u = np.zeros((N, N))
            phi = np.zeros((N, N))
            for kx in range(0, 3):
                for ky in range(0, 3):
                    if kx == ky == 0:
                        continue
                    u += 0.05 / (kx + ky) * rng.uniform(-1, 1) * np.cos(kx * xx + ky * yy + rng.uniform(0, 6.28))
                    phi += 0.1 / (kx + ky) * rng.uniform(-1, 1) * np.cos(kx * xx + ky * yy + rng.uniform(0, 6.28))
            out.append(FlowState(0.0, bk, "ricci", MetricState(CONFORMAL_TORUS2, u), phi=phi))
    return out


def suite_lambda(resolution: int | None = None, trajectories: int = 10) -> RunReport:
    """Lowest-eigenvalue gradient-flow monotonicity and solver accuracy."""
    t_start = time.time()
    rep = RunReport("suite-lambda")
    rng = np.random.default_rng(20240817)

    fx = bismut_flat_fixture()
    lam = lambda_eig(fx.flow_state(phi=0.0)).lam
    rep.add(check_leq("fixture_lambda_error", abs(lam - 4.0), 1e-8))

    # iterative eigensolver against the dense pencil on both grid backends
    sB = perturbed_torus3(32, amp=0.1)
    repB = lambda_eig(sB)
    rep.add(check_leq("dense_oracle_match_torus3",
                      abs(repB.lam - lambda_dense_oracle(sB)), 1e-8))
    sC = _random_flow_states(CONFORMAL_TORUS2, 1, rng)[0]
    repC = lambda_eig(sC)
    rep.add(check_leq("dense_oracle_match_torus2",
                      abs(repC.lam - lambda_dense_oracle(sC)), 1e-8))
    geoB = sB.geometry()
    norm = geoB.weighted_integral(repB.w ** 2, sB.phi)
    rep.add(check_leq("eigenfunction_normalization", abs(norm - 1.0), 1e-9))

    cfgs = {
        HOMOGENEOUS3: StepperConfig(t_end=0.05, scheme="rkck45"),
        COHOM1_TORUS3: StepperConfig(t_end=0.03, scheme="rk4", dt=1.5e-3),
        CONFORMAL_TORUS2: StepperConfig(t_end=0.02, scheme="rk4", dt=1e-3),
    }
    for kind in (HOMOGENEOUS3, COHOM1_TORUS3, CONFORMAL_TORUS2):
        worst = 0.0
        for s in _random_flow_states(kind, trajectories, rng):
            traj = integrate(s, cfgs[kind])
            series = lambda_series(traj, samples=6)
            ok, w = monotone_check(series.channels["lambda"], "nondecreasing",
                                   MONO_SLACK)
            worst = max(worst, w)
        rep.add(check_leq(f"lambda_monotone_slack_{kind}", worst, MONO_SLACK,
                          note=f"{trajectories} randomized runs"))

    rep.wall_time_s = time.time() - t_start
    return rep


# -- suite: iso -------------------------------------------------------------------


def random_iso_pair(rng, N: int = 256, L: float = 8.0, conformal: bool = False):
    """One randomized (psi, phi) pair on a chart, compactly supported."""
    axis = -L + (np.arange(N) + 0.5) * (2 * L / N)
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    psi = np.zeros((N, N))
    for _ in range(rng.integers(2, 6)):
        cx, cy = rng.uniform(-0.45 * L, 0.45 * L, size=2)
        w = rng.uniform(0.08 * L, 0.22 * L)
        a = rng.uniform(0.3, 1.0)
        psi += a * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * w * w))
    rr = np.sqrt(xx ** 2 + yy ** 2)
    t = np.clip((0.88 * L - rr) / (0.08 * L), 0.0, 1.0)
    psi *= t * t * (3 - 2 * t)
    phi = np.zeros((N, N))
    for _ in range(3):
        kx, ky = rng.integers(1, 4, size=2)
        phi += rng.uniform(-0.25, 0.25) * np.cos(np.pi / L * (kx * xx + ky * yy)
                                                 + rng.uniform(0, 2 * np.pi))
    u = None
    if conformal:
        u = np.zeros((N, N))
        for _ in range(2):
            kx, ky = rng.integers(1, 3, size=2)
            u += rng.uniform(-0.15, 0.15) * np.cos(np.pi / L * (kx * xx + ky * yy)
                                                   + rng.uniform(0, 2 * np.pi))
    return ChartDomain(L, N, phi, u), psi


def iso_corpus(pairs: int = 100, N: int = 256, seed: int = 314159,
               threads: int | None = None) -> list:
    """Deficits with the level-set isoperimetric constant over a random corpus."""
    rng = np.random.default_rng(seed)
    jobs = []
    for j in range(pairs):
        dom, psi = random_iso_pair(rng, N=N, conformal=(j % 4 == 3))
        jobs.append((j, dom, psi))
    c2 = euclidean_isoperimetric_constant(2)

    def evaluate(job):
        j, dom, psi = job
        ihat = level_set_iso_bound(dom, psi)
        lam = float(np.log(ihat / c2))
        deficit = log_sobolev_deficit(dom, psi, lam)
        S = dom.integrate(psi ** 2)
        grad = float(np.sum(2.0 * dom.grad_sq_flat(psi) * np.exp(-dom.phi))
                     * dom.h ** 2)
        tol = 0.02 * (S + grad)
        return {"pair": j, "iso_bound": ihat, "Lambda": lam,
                "deficit": deficit, "tol": tol,
                "passed": bool(deficit >= -tol)}

    if threads is None:
        threads = int(os.environ.get("GRFLAB_THREADS", "1"))
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(evaluate, jobs))
    else:
        results = [evaluate(job) for job in jobs]
    return sorted(results, key=lambda r: r["pair"])


def suite_iso(resolution: int | None = None, pairs: int = 100) -> RunReport:
    """Isoperimetric-to-log-Sobolev certification."""
    t_start = time.time()
    rep = RunReport("suite-iso")
    N = resolution or 256
    c2 = euclidean_isoperimetric_constant(2)

    # perimeter/area calibration on disks
    dom = ChartDomain.flat(1.5, N)
    rr = np.sqrt(dom.xx ** 2 + dom.yy ** 2)
    bias = 0.0
    for r0 in (0.5, 0.8, 1.1):
        ratio = iso_ratio(dom, 1.0 - rr, 1.0 - r0)
        bias = max(bias, abs(ratio / c2 - 1.0))
    rep.add(check_leq("disk_ratio_bias", bias, 0.02, note="calibrates grid tol"))

    # constant-shift covariance of the weighted ratio
    v0, p0 = region_measures(dom, 1.0 - rr, 0.3)
    doml = ChartDomain(1.5, N, np.full((N, N), 0.7))
    v1, p1 = region_measures(doml, 1.0 - rr, 0.3)
    shift_err = abs((p1 ** 2 / v1) - np.exp(-0.7) * (p0 ** 2 / v0)) / (p0 ** 2 / v0)
    rep.add(check_leq("weight_shift_exactness", shift_err, 1e-12))

    # Euclidean equality case
    domg = ChartDomain.flat(8.0, N)
    rg2 = domg.xx ** 2 + domg.yy ** 2
    psig = (2 * np.pi) ** (-0.5) * np.exp(-rg2 / 4)
    psig[:2] = psig[-2:] = 0.0
    psig[:, :2] = psig[:, -2:] = 0.0
    rep.add(check_leq("gaussian_equality_deficit",
                      abs(log_sobolev_deficit(domg, psig, 0.0)), 1e-3))

    rep.add(check_leq("c3_radial_consistency",
                      abs(ball_ratio_radial(3, 1.3)
                          - euclidean_isoperimetric_constant(3)) / (36 * np.pi),
                      1e-6))

    results = iso_corpus(pairs=pairs, N=N)
    worst = min(r["deficit"] + r["tol"] for r in results)
    failures = [r["pair"] for r in results if not r["passed"]]
    rep.add(check_leq("corpus_negative_deficits", float(len(failures)), 0.0,
                      note=f"{len(results)} pairs, worst margin {worst:.3e}"))
    rep.meta["corpus"] = results
    rep.wall_time_s = time.time() - t_start
    return rep


# -- suite: soliton ------------------------------------------------------------------


def suite_soliton(resolution: int | None = None) -> RunReport:
    """Soliton fixtures and the normalized dilaton flow convergence."""
    t_start = time.time()
    rep = RunReport("suite-soliton")

    fx = bismut_flat_fixture()
    rep.add(check_leq("fixture_lambda_value", abs(fx.lam - 4.0), 1e-12))
    geo = fx.geometry()
    source = fx.torsion_norm2() / 6.0 - fx.lam
    rep.add(check_leq("fixture_source_identically_zero",
                      float(np.max(np.abs(source))), 1e-12))
    series = normalized_dilaton_flow(fx, phi0=0.7, t_end=1.0, dt=1e-2)
    rep.add(check_leq("fixture_flow_stationary",
                      float(series.channels["offset_sup"].max()), 1e-12))
    rep.add(check_leq("fixture_algebra_residual",
                      soliton_algebra_residual(fx, np.array(0.7)), 1e-10))

    # flow stationarity of the fixture under the full coupled system
    traj = integrate(fx.flow_state(phi=0.0), StepperConfig(t_end=1.0, scheme="rkck45"))
    drift = float(np.max(np.abs(traj.state_node(len(traj.times) - 1).metric.data - 1.0)))
    rep.add(check_leq("fixture_stationarity_drift", drift, 1e-10))

    N = resolution or 32
    flat = flat_torus_fixture(N)
    mu1 = drift_spectral_gap(flat)
    rep.add(check_leq("flat_gap_error", abs(mu1 - 1.0), 1e-8))
    th = flat.backend.theta
    series = normalized_dilaton_flow(flat, phi0=np.cos(th), t_end=16.0, dt=5e-3)
    rate = series.meta.get("decay_rate", 0.0)
    rep.add(check_leq("flat_decay_rate_error", abs(rate - mu1) / mu1, 0.05,
                      note=f"measured rate {rate:.5f}, gap {mu1:.5f}"))
    rep.add(check_leq("flat_terminal_offset", series.meta["terminal_offset"], 1e-6))
    rep.add(check_flag("flat_monotone_decay", series.meta["monotone_decay"]))
    rep.add(check_leq("flat_algebra_residual",
                      soliton_algebra_residual(flat, np.cos(th)), 1e-10))
    # exact soliton potential plus a constant is stationary
    series = normalized_dilaton_flow(flat, phi0=flat.f + 7.0, t_end=0.5, dt=5e-3)
    rep.add(check_leq("flat_shifted_potential_stationary",
                      float(series.channels["offset_sup"].max()), 1e-12))
    rep.add(check_leq("flat_shifted_offset_constant",
                      float(np.max(np.abs(series.channels["offset_mean"] - 7.0))),
                      1e-12))

    # rigidity monitors: fixture and flat sit on the soliton branch,
    # a zero-minimum torsion perturbation develops strict positivity
    trajf = integrate(fx.flow_state(phi=0.0), StepperConfig(t_end=0.5, scheme="rkck45"))
    rig = rigidity_experiment(trajf)
    rep.add(check_flag("rigidity_fixture_soliton_branch",
                       rig.meta["branch"] == "soliton"))
    flat_traj = integrate(flat_torus_fixture(16).flow_state(phi=0.0),
                          StepperConfig(t_end=0.3, scheme="rk4", dt=2e-3))
    rig = rigidity_experiment(flat_traj)
    rep.add(check_flag("rigidity_flat_soliton_branch",
                       rig.meta["branch"] == "soliton"))
    bk = fx.backend
    x = np.array([1.25, 1.0, 1.0])
    geo0 = Geometry(bk, MetricState(HOMOGENEOUS3, x))
    _, R0 = geo0.ricci()
    kappa = np.sqrt(2.0 * float(R0))  # tunes min R^{H,phi}(0) to zero
    s0 = FlowState(0.0, bk, "grf", MetricState(HOMOGENEOUS3, x),
                   phi=np.array(0.0), b=FormField.zero(bk, 2),
                   H0=FormField(3, np.array([kappa * float(geo0.sqrtg)])))
    trajp = integrate(s0, StepperConfig(t_end=0.5, scheme="rkck45"))
    rig = rigidity_experiment(trajp)
    rep.add(check_flag("rigidity_positivity_branch",
                       rig.meta["branch"] == "positivity",
                       note=f"initial min {rig.meta['initial_min']:.2e}"))

    rep.wall_time_s = time.time() - t_start
    return rep


# -- suite: heat-duality -----------------------------------------------------------


def suite_heat_duality(resolution: int | None = None) -> RunReport:
    """Conjugate-heat contracts: mass, conjugation, duality pairing."""
    t_start = time.time()
    rep = RunReport("suite-heat-duality")
    N = resolution or 48

    s = perturbed_torus3(N, amp=0.1)
    traj = integrate(s, StepperConfig(t_end=0.2, scheme="rk4", dt=5e-4))
    th = traj.system.backend.theta
    uT = 1 + 0.4 * np.cos(th)
    us = conjugate_solve(traj, uT, mode="weighted", T=0.2, t0=0.0, dt=1e-3,
                         normalization="steady")
    rep.add(check_leq("weighted_mass_drift", us.mass_drift, 1e-8))
    usp = conjugate_solve(traj, uT, mode="plain", T=0.2, t0=0.0, dt=1e-3,
                          normalization="steady")
    rep.add(check_leq("plain_mass_drift", usp.mass_drift, 1e-8))

    # weighted/plain conjugation as two independent solves
    phiT = traj.state_at(0.2).phi
    errs = {}
    for dt in (3e-3, 1.5e-3):
        uw = conjugate_solve(traj, uT, mode="weighted", T=0.2, t0=0.0, dt=dt,
                             normalization="steady", mass_tol=1e-4)
        vp = conjugate_solve(traj, uT * np.exp(-phiT), mode="plain", T=0.2,
                             t0=0.0, dt=dt, normalization="steady", mass_tol=1e-4)
        worst = 0.0
        for i, t in enumerate(uw.times):
            phi_t = traj.state_at(float(t)).phi
            worst = max(worst, float(np.max(np.abs(
                vp.upath.values[i] - uw.upath.values[i] * np.exp(-phi_t)))))
        errs[dt] = worst
    order = refinement_order(errs[3e-3], errs[1.5e-3])
    rep.add(check_leq("conjugation_order_deficit", 3.5 - order, 0.0, order=order,
                      note=f"{errs[3e-3]:.3e} -> {errs[1.5e-3]:.3e}"))

    # duality pairing residual on the static flat background
    flat = integrate(flat_torus3_state(32),
                     StepperConfig(t_end=0.5, scheme="rk4", dt=2e-3))
    thf = flat.system.backend.theta
    times = flat.times
    uu = np.array([1 + 0.3 * np.exp(-t) * np.cos(thf) for t in times])
    du = np.array([-0.3 * np.exp(-t) * np.cos(thf) for t in times])
    vv = np.array([2 + 0.2 * np.exp(-2 * t) * np.sin(2 * thf) * np.cos(t) for t in times])
    dv = np.array([0.2 * np.exp(-2 * t) * np.sin(2 * thf) * (-2 * np.cos(t) - np.sin(t))
                   for t in times])
    up, vp = SolutionPath(times, uu, du), SolutionPath(times, vv, dv)
    rep.add(check_leq("duality_residual_weighted",
                      duality_residual(flat, up, vp, weighted=True), 1e-7))
    rep.add(check_leq("duality_residual_plain",
                      duality_residual(flat, up, vp, weighted=False), 1e-7))

    # forward heat against backward solution: constant pairing
    hpath = forward_heat_solve(flat, 1 + 0.5 * np.cos(thf), 0.0, 0.5)
    usf = conjugate_solve(flat, 1 + 0.4 * np.sin(thf), mode="weighted", T=0.5,
                          t0=0.0, normalization="steady")
    pair = np.empty(len(times))
    for i, t in enumerate(times):
        st = flat.state_at(float(t))
        geo = Geometry(flat.system.backend, st.metric)
        pair[i] = geo.weighted_integral(hpath.values[i] * usf.upath.values[i], st.phi)
    rep.add(check_leq("pairing_constancy",
                      float(np.max(np.abs(pair - pair[0])) / abs(pair[0])), 1e-9))

    rep.wall_time_s = time.time() - t_start
    return rep


def run_suite(name: str, resolution: int | None = None) -> RunReport:
    table = {
        "scalar": suite_scalar,
        "energy": suite_energy,
        "shrinker": suite_shrinker,
        "nash": suite_nash,
        "lambda": suite_lambda,
        "iso": suite_iso,
        "soliton": suite_soliton,
        "heat-duality": suite_heat_duality,
    }
    if name not in table:
        raise RangeError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return table[name](resolution=resolution)
