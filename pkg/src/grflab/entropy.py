"""Curvature and entropy monitors: evolution-identity residuals, Nash and
Perelman entropies, the lowest eigenvalue of the weighted Schroedinger
operator, and monotonicity sign suites.

All time derivatives in residuals use fourth-order centered differencing of
the stored node series (never one-sided at interior times), which keeps the
measured residual order aligned with the RK4 integrator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EigenFail, NormalizationError, RangeError, RicciFlowOnly
from .fields import FormField
from .flow import FlowState, Trajectory
from .geometry import Geometry, bakry_emery_norm2, bakry_emery_parts
from .heat import ConjugateDilaton, ConjugateSolution, _d4, _torsion_forms


@dataclass
class MonitorSeries:
    """Named scalar channels on a shared time grid."""

    times: np.ndarray
    channels: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def add(self, name: str, values) -> "MonitorSeries":
        values = np.asarray(values, dtype=float)
        if values.shape != self.times.shape:
            raise RangeError(f"channel {name!r} does not match the time grid")
        self.channels[name] = values
        return self

    def flag_nan(self):
        bad = sorted(name for name, v in self.channels.items()
                     if not np.all(np.isfinite(v)))
        if bad:
            self.meta["nan_channels"] = bad
        return bad


@dataclass
class EigenReport:
    """Lowest eigenvalue with its normalized eigenfunction and residual."""

    lam: float
    w: np.ndarray
    residual: float


def monotone_check(values: np.ndarray, direction: str = "nondecreasing",
                   slack: float = 1e-6) -> tuple:
    """(ok, worst) for a monotonicity claim with additive slack."""
    d = np.diff(np.asarray(values, dtype=float))
    if direction == "nonincreasing":
        d = -d
    worst = float(-np.min(d)) if d.size else 0.0
    return worst <= slack, worst


# -- weighted curvature surfaces -------------------------------------------


def bakry_emery(state: FlowState, w) -> tuple:
    """Twisted Bakry-Emery curvature pieces (symmetric part, 2-form parts).

    The tensor is not symmetric: its norm is assembled as
    |sym|^2 + (1/4) |form parts|^2 by :func:`grflab.geometry.bakry_emery_norm2`.
    """
    geo = state.geometry()
    sym, bforms, _ = bakry_emery_parts(geo, _torsion_forms(state), w)
    return sym, bforms


def generalized_scalar(state: FlowState, w) -> np.ndarray:
    """R^{H,w} = R - (1/4) sum |H_k|^2/k + 2 lap w - |grad w|^2."""
    geo = state.geometry()
    _, _, scal = bakry_emery_parts(geo, _torsion_forms(state), w)
    return scal


def oneform_generalized_scalar(state: FlowState) -> np.ndarray:
    """R^{H,alpha} with the divergence of alpha in place of lap phi.

    The divergence term enters with the sign that reduces to +2 lap phi for
    exact alpha = d phi; with the opposite sign the evolution identity fails
    at O(1).
    """
    geo = state.geometry()
    _, R = geo.ricci()
    a = state.alpha
    out = R + 2.0 * geo.divergence_oneform(a) - geo.form_norm2(a)
    for k, Hk in _torsion_forms(state).items():
        out = out - 0.25 / k * geo.form_norm2(Hk)
    return out


def entropy_density(state: FlowState, F, tau: float) -> np.ndarray:
    """W^{H,F} = tau R^{H,F} + F - n."""
    if tau <= 0:
        raise RangeError("entropy density needs tau > 0")
    return tau * generalized_scalar(state, F) + np.asarray(F, float) - state.backend.n


# -- evolution-identity residuals -------------------------------------------


def _stencil(traj_times: np.ndarray, t: float) -> int:
    i = int(np.argmin(np.abs(traj_times - t)))
    if i < 2 or i > len(traj_times) - 3:
        raise RangeError("t too close to the trajectory boundary for the stencil")
    return i


def scalar_monotonicity_residual(traj: Trajectory, t: float) -> float:
    """sup | (d/dt - lap) R^{H,phi} - 2 |Rc^{H,phi}|^2 | at the node nearest t."""
    i = _stencil(traj.times, t)
    dt = traj.dt
    fields = []
    for j in range(i - 2, i + 3):
        st = traj.state_node(j)
        geo = st.geometry()
        sym, bforms, scal = bakry_emery_parts(geo, _torsion_forms(st), st.phi)
        fields.append((scal, sym, bforms, geo))
    series = np.stack([f[0] for f in fields])
    rdot = _d4(series, dt, 2)
    scal, sym, bforms, geo = fields[2]
    rhs = 2.0 * bakry_emery_norm2(geo, sym, bforms)
    return float(np.max(np.abs(rdot - geo.laplace(scal) - rhs)))


def oneform_scalar_residual(traj: Trajectory, t: float) -> float:
    """Residual of the one-form variant evolution identity."""
    i = _stencil(traj.times, t)
    dt = traj.dt
    scals, data = [], None
    for j in range(i - 2, i + 3):
        st = traj.state_node(j)
        scals.append(oneform_generalized_scalar(st))
        if j == i:
            geo = st.geometry()
            rc, _ = geo.ricci()
            forms = _torsion_forms(st)
            h2 = np.zeros_like(rc)
            for Hk in forms.values():
                h2 += geo.h_square(Hk)
            sym = rc - 0.25 * h2 + geo.sym_grad_oneform(st.alpha)
            rhs = 2.0 * geo.tensor_norm2(sym)
            rhs = rhs + 0.5 * geo.form_norm2(geo.exterior_d(st.alpha))
            avec = geo.gi * st.alpha.comps
            for Hk in forms.values():
                bf = geo.codifferential(Hk) + geo.interior_product(avec, Hk)
                rhs = rhs + 0.5 * geo.form_norm2(bf)
            data = (geo, rhs, scals[-1])
    rdot = _d4(np.stack(scals), dt, 2)
    geo, rhs, scal = data
    return float(np.max(np.abs(rdot - geo.laplace(scal) - rhs)))


def ggrf_scalar_residual(traj: Trajectory, t: float) -> float:
    """Residual of the general-degree evolution identity (same as scalar)."""
    return scalar_monotonicity_residual(traj, t)


def _usol_state(traj: Trajectory, usol: ConjugateSolution, i: int):
    t = float(usol.times[i])
    st = traj.state_at(t)
    return t, st, st.geometry()


def energy_density_residual(traj: Trajectory, usol: ConjugateSolution,
                            t: float) -> float:
    """sup | box*_phi(R^{H,f+phi} u) + 2 |Rc^{H,f+phi}|^2 u |."""
    i = _stencil(usol.times, t)
    dt = usol.upath.dt
    vs = []
    for j in range(i - 2, i + 3):
        _, st, geo = _usol_state(traj, usol, j)
        F = usol.f_node(j) + st.phi
        sym, bforms, scal = bakry_emery_parts(geo, _torsion_forms(st), F)
        vs.append((scal * usol.u_node(j), st, geo, sym, bforms))
    vdot = _d4(np.stack([v[0] for v in vs]), dt, 2)
    v, st, geo, sym, bforms = vs[2]
    _, _, rhphi = bakry_emery_parts(geo, _torsion_forms(st), st.phi)
    box_v = -vdot - geo.laplace(v) + 2.0 * geo.inner_grad(st.phi, v) + rhphi * v
    rhs = -2.0 * bakry_emery_norm2(geo, sym, bforms) * usol.u_node(i)
    return float(np.max(np.abs(box_v - rhs)))


def shrinker_residual(traj: Trajectory, usol: ConjugateSolution,
                      psi: ConjugateDilaton, t: float) -> float:
    """sup | box*_phi[(W^{H,f+phi} + psi) u] + 2 tau |Rc^{H,f+phi} - g/(2tau)|^2 u |."""
    i = _stencil(usol.times, t)
    tau_c = usol.tau(float(usol.times[i]))
    if tau_c <= 0:
        raise RangeError("shrinker residual needs tau > 0")
    dt = usol.upath.dt
    vs, mid = [], None
    for j in range(i - 2, i + 3):
        tj, st, geo = _usol_state(traj, usol, j)
        tau = usol.tau(tj)
        F = usol.f_node(j) + st.phi
        sym, bforms, scal = bakry_emery_parts(geo, _torsion_forms(st), F)
        W = tau * scal + F - st.backend.n
        vs.append((W + psi.psi_node(j)) * usol.u_node(j))
        if j == i:
            mid = (st, geo, sym, bforms, tau)
    vdot = _d4(np.stack(vs), dt, 2)
    st, geo, sym, bforms, tau = mid
    _, _, rhphi = bakry_emery_parts(geo, _torsion_forms(st), st.phi)
    v = vs[2]
    box_v = -vdot - geo.laplace(v) + 2.0 * geo.inner_grad(st.phi, v) + rhphi * v
    rhs = -2.0 * tau * bakry_emery_norm2(geo, sym, bforms, shift=0.5 / tau) \
        * usol.u_node(i)
    return float(np.max(np.abs(box_v - rhs)))


def plain_shrinker_residual(traj: Trajectory, usol: ConjugateSolution,
                            t: float) -> float:
    """Residual of box*(W^{H,f} u) = -2 tau |Rc^{H,f} - g/2tau|^2 u + (1/6)|H|^2 u.

    The plain-measure engine behind the heat-kernel entropy inequality; the
    (1/6)|H|^2 u source is exactly what the conjugate dilaton flow absorbs
    in the weighted version.
    """
    if usol.mode != "plain":
        raise RangeError("plain shrinker residual needs a plain-mode solution")
    i = _stencil(usol.times, t)
    dt = usol.upath.dt
    vs, mid = [], None
    for j in range(i - 2, i + 3):
        tj, st, geo = _usol_state(traj, usol, j)
        tau = usol.tau(tj)
        f = usol.f_node(j)
        sym, bforms, scal = bakry_emery_parts(geo, _torsion_forms(st), f)
        W = tau * scal + f - st.backend.n
        vs.append(W * usol.u_node(j))
        if j == i:
            mid = (st, geo, sym, bforms, tau)
    vdot = _d4(np.stack(vs), dt, 2)
    st, geo, sym, bforms, tau = mid
    forms = _torsion_forms(st)
    _, R = geo.ricci()
    pot = R
    hn2 = np.zeros(st.backend.grid_shape)
    for k, Hk in forms.items():
        pot = pot - 0.25 * geo.form_norm2(Hk)
        if k == 3:
            hn2 = hn2 + geo.form_norm2(Hk)
    v = vs[2]
    box_v = -vdot - geo.laplace(v) + pot * v
    u = usol.u_node(i)
    rhs = -2.0 * tau * bakry_emery_norm2(geo, sym, bforms, shift=0.5 / tau) * u \
        + hn2 / 6.0 * u
    return float(np.max(np.abs(box_v - rhs)))


# -- Harnack and heat-kernel checks -----------------------------------------


def harnack_check(traj: Trajectory, usol: ConjugateSolution,
                  psi: ConjugateDilaton, tol_harnack: float = 1e-3,
                  skip_last: int = 1) -> MonitorSeries:
    """Track max (W^{H,f+phi} + psi) u and its weighted integral.

    Reports, never asserts: metadata carries the first time the pointwise
    maximum exceeds +tol_harnack and the slack of the integrated
    monotonicity.  Terminal data that is not bump-like is flagged
    NotDeltaLike and the pointwise channel is not judged.
    """
    u_T = usol.upath.values[-1]
    spread = float(np.max(u_T) - np.min(u_T)) / max(float(np.mean(u_T)), 1e-300)
    times = usol.times[:len(usol.times) - skip_last]
    mx = np.empty(len(times))
    integ = np.empty(len(times))
    for i, t in enumerate(times):
        st = traj.state_at(float(t))
        geo = st.geometry()
        tau = usol.tau(float(t))
        F = usol.f_node(i) + st.phi
        W = tau * generalized_scalar(st, F) + F - st.backend.n
        v = (W + psi.psi_node(i)) * usol.u_node(i)
        mx[i] = np.max(v)
        integ[i] = geo.weighted_integral(v, st.phi)
    series = MonitorSeries(np.asarray(times, float))
    series.add("max_entropy_density", mx)
    series.add("integrated_entropy", integ)
    series.meta["not_delta_like"] = bool(spread < 1.0)
    series.meta["tol_harnack"] = tol_harnack
    if not series.meta["not_delta_like"]:
        viol = np.nonzero(mx > tol_harnack)[0]
        series.meta["first_violation_time"] = (
            float(times[viol[0]]) if viol.size else None)
    ok, worst = monotone_check(integ, "nondecreasing", 1e-6)
    series.meta["integrated_monotone_slack"] = worst
    series.meta["integrated_monotone_ok"] = ok
    series.flag_nan()
    return series


def heat_kernel_inequality(traj: Trajectory, hpath, usol: ConjugateSolution,
                           t1: float, t2: float) -> dict:
    """Both sides of the entropy comparison across [t1, t2].

    LHS(t1) <= RHS = LHS(t2) + int_{t1}^{t2} int (1/6) h |H|^2 u dV dt, where
    LHS(t) = int h W^{H,f} u dV against the plain-solve density u.
    """
    if usol.mode != "plain":
        raise RangeError("the heat-kernel inequality uses the plain conjugate solve")
    times = usol.times
    i1 = usol.upath.node_index(t1, tol=np.inf)
    i2 = usol.upath.node_index(t2, tol=np.inf)
    if i1 >= i2:
        raise RangeError("need t1 < t2")

    def lhs_at(i):
        t = float(times[i])
        st = traj.state_at(t)
        geo = st.geometry()
        tau = usol.tau(t)
        f = usol.f_node(i)
        W = tau * generalized_scalar(st, f) + f - st.backend.n
        return geo.integral(hpath.value_at(t) * W * usol.u_node(i))

    def torsion_term(i):
        t = float(times[i])
        st = traj.state_at(t)
        geo = st.geometry()
        hn2 = np.zeros(st.backend.grid_shape)
        for k, Hk in _torsion_forms(st).items():
            if k == 3:
                hn2 = hn2 + geo.form_norm2(Hk)
        return geo.integral(hpath.value_at(t) * hn2 * usol.u_node(i) / 6.0)

    vals = np.array([torsion_term(i) for i in range(i1, i2 + 1)])
    correction = float(np.trapezoid(vals, dx=usol.upath.dt))
    a1, a2 = lhs_at(i1), lhs_at(i2)
    return {"lhs": a1, "rhs": a2 + correction, "t1_value": a1, "t2_value": a2,
            "correction": correction, "slack": a2 + correction - a1}


# -- Nash and Perelman entropies ---------------------------------------------


def _require_ricci_unit(traj: Trajectory, usol: ConjugateSolution,
                        mass_tol: float = 1e-6):
    st = traj.state_node(0)
    if _torsion_forms(st):
        raise RicciFlowOnly("Nash entropies are defined for torsion-free runs")
    if usol.mode != "weighted" or usol.normalization != "shrinker":
        raise RangeError("Nash entropies need a weighted shrinker-normalized solve")
    if abs(usol.mass[-1] - 1.0) > mass_tol:
        raise NormalizationError(
            f"measure mass {usol.mass[-1]:.2e} not unit within {mass_tol:.0e}")


def _dnu_integral(traj, usol, i, fld) -> float:
    t = float(usol.times[i])
    st = traj.state_at(t)
    geo = st.geometry()
    return geo.weighted_integral(fld * usol.u_node(i), st.phi)


def nash_entropy(traj: Trajectory, usol: ConjugateSolution, t: float) -> float:
    """N = int f dnu - n/2 against dnu = u e^{-phi} dV."""
    _require_ricci_unit(traj, usol)
    i = usol.upath.node_index(t)
    return _dnu_integral(traj, usol, i, usol.f_node(i)) - 0.5 * usol.n


def perelman_entropy(traj: Trajectory, usol: ConjugateSolution, t: float) -> float:
    """W = int [tau R^{f+phi} + f - n] dnu."""
    _require_ricci_unit(traj, usol)
    i = usol.upath.node_index(t)
    st = traj.state_at(float(usol.times[i]))
    tau = usol.tau(float(usol.times[i]))
    f = usol.f_node(i)
    integrand = tau * generalized_scalar(st, f + st.phi) + f - usol.n
    return _dnu_integral(traj, usol, i, integrand)


def entropy_cross_check(traj: Trajectory, usol: ConjugateSolution, t: float) -> float:
    """|W - int [W^{f+phi} - phi] dnu|: the two expressions agree pointwise."""
    i = usol.upath.node_index(t)
    st = traj.state_at(float(usol.times[i]))
    tau = usol.tau(float(usol.times[i]))
    F = usol.f_node(i) + st.phi
    W_density = entropy_density(st, F, tau)
    alt = _dnu_integral(traj, usol, i, W_density - st.phi)
    return abs(perelman_entropy(traj, usol, t) - alt)


def nash_relations_residual(traj: Trajectory, usol: ConjugateSolution,
                            tau_min: float, tau_max: float,
                            samples: int = 9, slack: float = 1e-6) -> dict:
    """Residuals of d/dtau (tau N) = W and dW/dtau = -2 tau int |Rc - g/2tau|^2 dnu.

    tau samples are geometrically spaced in [tau_min, tau_max], snapped to
    stored nodes so the centered differencing keeps integrator order.
    """
    _require_ricci_unit(traj, usol)
    T = usol.T
    taus = np.geomspace(tau_min, tau_max, samples)
    idx = sorted({usol.upath.node_index(T - tau, tol=np.inf) for tau in taus})
    idx = [i for i in idx if 2 <= i <= len(usol.times) - 3]
    if not idx:
        raise RangeError("no interior nodes in the requested tau window")
    res1 = res2 = 0.0
    wdots = []
    for i in idx:
        ts = [float(usol.times[j]) for j in range(i - 2, i + 3)]
        Ns = np.array([nash_entropy(traj, usol, tj) for tj in ts])
        Ws = np.array([perelman_entropy(traj, usol, tj) for tj in ts])
        taus_st = np.array([usol.tau(tj) for tj in ts])
        dt = usol.upath.dt
        # d/dtau = -d/dt on the node grid
        d_tauN = -_d4(taus_st * Ns, dt, 2)
        dW = -_d4(Ws, dt, 2)
        res1 = max(res1, abs(d_tauN - Ws[2]))
        st = traj.state_at(ts[2])
        geo = st.geometry()
        tau = taus_st[2]
        F = usol.f_node(i) + st.phi
        sym, bforms, _ = bakry_emery_parts(geo, {}, F)
        dens = bakry_emery_norm2(geo, sym, bforms, shift=0.5 / tau)
        rhs = -2.0 * tau * _dnu_integral(traj, usol, i, dens)
        res2 = max(res2, abs(dW - rhs))
        wdots.append(dW)
    wdots = np.array(wdots)
    return {
        "dtauN_minus_W": float(res1),
        "dW_identity": float(res2),
        "dW_dtau_max": float(np.max(wdots)),
        "dW_nonpositive": bool(np.max(wdots) <= slack),
        "node_indices": idx,
    }


# -- energy functional and lowest eigenvalue ---------------------------------


def f_functional(state: FlowState, F) -> float:
    """F-energy int (|grad F|^2 + R - (1/4) sum |H_k|^2/k) e^{-F} dV."""
    geo = state.geometry()
    _, R = geo.ricci()
    dens = geo.inner_grad(F, F) + R
    for k, Hk in _torsion_forms(state).items():
        dens = dens - 0.25 / k * geo.form_norm2(Hk)
    return geo.weighted_integral(dens, F)


def _cg(apply_A, b, tol=1e-13, maxiter=5000):
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = float(np.sum(r * r))
    bn = np.sqrt(float(np.sum(b * b))) + 1e-300
    for _ in range(maxiter):
        Ap = apply_A(p)
        alpha = rs / float(np.sum(p * Ap))
        x = x + alpha * p
        r = r - alpha * Ap
        rs_new = float(np.sum(r * r))
        if np.sqrt(rs_new) <= tol * bn:
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x


class WeightedOperator:
    """Self-adjoint realization of -c lap + c grad w . grad + V from its form.

    Built so that <L a, b>_rho is exactly symmetric on the grid, where
    rho = e^{-w} sqrt(g) and the quadratic form is
    int (c |grad a|^2 + V a^2) e^{-w} dV.  The operator acts on the
    sub-Nyquist mode space; the Nyquist sawtooth is annihilated by the
    antisymmetric spectral derivative and would otherwise show up as a
    spurious low-energy direction.
    """

    def __init__(self, geo: Geometry, weight, potential, grad_coeff=4.0):
        self.geo = geo
        self.rho = np.exp(-np.asarray(weight, float)) * geo.sqrtg \
            + np.zeros(geo.backend.grid_shape)
        self.V = np.asarray(potential, float) + np.zeros(geo.backend.grid_shape)
        self.gw = grad_coeff * geo.gi * self.rho
        self.cell = geo.backend.cell_volume

    def apply_weak(self, w: np.ndarray) -> np.ndarray:
        """rho * (L w): symmetric under the plain grid dot product."""
        bk = self.geo.backend
        out = self.V * self.rho * w
        for i in range(self.geo.n):
            out = out - bk.deriv(self.gw[i] * bk.deriv(w, i), i)
        return out

    def apply(self, w: np.ndarray) -> np.ndarray:
        return self.apply_weak(w) / self.rho

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.sum(a * b * self.rho) * self.cell)

    def smallest(self, tol=1e-9, maxiter=80, deflate_constant=False) -> EigenReport:
        """Shifted inverse power iteration for the lowest eigenvalue."""
        P = self.geo.backend.nyquist_project
        rng_free = np.cos(np.arange(self.rho.size, dtype=float)).reshape(self.rho.shape)
        w = np.ones_like(self.rho) + 0.3 * rng_free  # deterministic start
        if deflate_constant:
            w = rng_free.copy()
        sigma = float(np.min(self.V)) - 1.0

        def project(v):
            v = P(v)
            if deflate_constant:
                one = np.ones_like(v)
                return v - self.inner(v, one) / self.inner(one, one) * one
            return v

        def apply_shifted(v):
            return P(self.apply_weak(P(v)) - sigma * self.rho * P(v))

        w = project(w)
        lam = None
        for _ in range(maxiter):
            b = project(self.rho * w)
            w = project(_cg(apply_shifted, b))
            w = w / np.sqrt(self.inner(w, w))
            aw = self.apply_weak(w)
            lam = float(np.sum(w * aw)) * self.cell
            r = project(aw - lam * self.rho * w) / self.rho
            resid = np.sqrt(self.inner(r, r))
            if resid <= tol:
                return EigenReport(float(lam), w, float(resid))
        raise EigenFail(f"eigen iteration stalled at residual {resid:.3e}")


def lambda_eig(state: FlowState, tol: float = 1e-9) -> EigenReport:
    """Lowest eigenvalue of -4 lap + 4 grad phi . grad + R^{H,phi}.

    Self-adjoint against e^{-phi} dV; the eigenfunction is normalized to
    int w^2 e^{-phi} dV = 1.  On the homogeneous backend every field is
    constant and the eigenvalue is R^{H,phi} itself.
    """
    geo = state.geometry()
    _, _, rhphi = bakry_emery_parts(geo, _torsion_forms(state), state.phi)
    if not state.backend.is_grid:
        vol = geo.weighted_integral(np.ones(()), state.phi)
        return EigenReport(float(rhphi), np.full((), 1.0 / np.sqrt(vol)), 0.0)
    op = WeightedOperator(geo, state.phi, rhphi, grad_coeff=4.0)
    return op.smallest(tol=tol)


def lambda_dense_oracle(state: FlowState) -> float:
    """Dense generalized eigensolve of the same operator (test oracle).

    Assembles the quadratic form on an explicit orthonormal basis of the
    sub-Nyquist space and solves the dense symmetric pencil directly.
    """
    from scipy.linalg import eigh

    geo = state.geometry()
    _, _, rhphi = bakry_emery_parts(geo, _torsion_forms(state), state.phi)
    if not state.backend.is_grid:
        return float(rhphi)
    op = WeightedOperator(geo, state.phi, rhphi, grad_coeff=4.0)
    npts = op.rho.size
    shape = op.rho.shape
    P = state.backend.nyquist_project
    cols = np.empty((npts, npts))
    basis = np.zeros(npts)
    for j in range(npts):
        basis[:] = 0.0
        basis[j] = 1.0
        cols[:, j] = P(basis.reshape(shape)).reshape(-1)
    U, svals, _ = np.linalg.svd(cols)
    Q = U[:, svals > 1e-8]
    AQ = np.stack([op.apply_weak(Q[:, j].reshape(shape)).reshape(-1)
                   for j in range(Q.shape[1])], axis=1)
    a = Q.T @ AQ
    b = Q.T @ (op.rho.reshape(-1)[:, None] * Q)
    a = 0.5 * (a + a.T)
    b = 0.5 * (b + b.T)
    return float(eigh(a, b, eigvals_only=True, subset_by_index=[0, 0])[0])


def lambda_series(traj: Trajectory, samples: int = 8) -> MonitorSeries:
    """lambda(g, H, phi) sampled along a trajectory."""
    idx = np.unique(np.linspace(0, len(traj.times) - 1, samples).astype(int))
    times = traj.times[idx]
    vals = np.array([lambda_eig(traj.state_node(int(i))).lam for i in idx])
    series = MonitorSeries(times).add("lambda", vals)
    series.flag_nan()
    return series


def sup_monotonicity(series: MonitorSeries, channel: str,
                     direction: str = "nondecreasing",
                     slack: float = 1e-6) -> dict:
    """Monotonicity flag for one monitor channel."""
    ok, worst = monotone_check(series.channels[channel], direction, slack)
    return {"channel": channel, "direction": direction, "slack": slack,
            "worst": worst, "ok": ok}


def monitor_scalar_extrema(traj: Trajectory, stride: int = 1) -> MonitorSeries:
    """min/max of R^{H,phi} and the sup-norm of Rc^{H,phi} along the run."""
    idx = range(0, len(traj.times), stride)
    times, mn, mx, rcn = [], [], [], []
    for i in idx:
        st = traj.state_node(i)
        geo = st.geometry()
        sym, bforms, scal = bakry_emery_parts(geo, _torsion_forms(st), st.phi)
        times.append(traj.times[i])
        mn.append(np.min(scal))
        mx.append(np.max(scal))
        rcn.append(np.sqrt(np.max(bakry_emery_norm2(geo, sym, bforms))))
    series = MonitorSeries(np.array(times))
    series.add("min_weighted_scalar", mn)
    series.add("max_weighted_scalar", mx)
    series.add("bakry_emery_norm_sup", rcn)
    series.flag_nan()
    return series


def monitor_weighted_scalar_sup(traj: Trajectory,
                                usol: ConjugateSolution) -> MonitorSeries:
    """sup_M R^{H,f+phi} along a weighted conjugate solution."""
    times = usol.times
    sup = np.empty(len(times))
    for i, t in enumerate(times):
        st = traj.state_at(float(t))
        F = usol.f_node(i) + st.phi
        sup[i] = np.max(generalized_scalar(st, F))
    series = MonitorSeries(np.asarray(times, float)).add("sup_weighted_scalar", sup)
    series.flag_nan()
    return series
