"""Forward heat solves and backward conjugate solves along a trajectory.

The heat operator is ``box = d/dt - lap``; its conjugates along the flow are

    box*      = -d/dt - lap + R - (1/4)|H|^2          (against dV_g)
    box*_phi  = -d/dt - lap + 2 grad phi . grad + R^{H,phi}   (against e^{-phi} dV_g)

Backward solves reuse the forward RK4 stepper in reversed time with
coefficients interpolated from the stored trajectory.  Positivity and the
conserved mass integral are monitored every accepted node; failures raise
rather than clip.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    MassDrift,
    MaxPrincipleViolation,
    PositivityLoss,
    PositivityRequired,
    RangeError,
)
from .flow import FlowState, Trajectory
from .geometry import Geometry, bakry_emery_parts

DEFAULT_MASS_TOL = 1e-8


def _torsion_forms(state: FlowState) -> dict:
    if state.mode == "ggrf":
        return dict(state.forms or {})
    H = state.torsion()
    return {3: H} if H is not None and np.any(H.comps) else {}


def periodic_bump(backend, sigma: float, center=None, floor: float = 1e-10,
                  images: int = 3) -> np.ndarray:
    """Wrapped Gaussian of width sigma on the grid backend, strictly positive.

    Built from a sum of periodic images (positive in floating point even in
    the far tail) plus a tiny uniform floor so that backward solves from
    near-delta data never trip the positivity monitor on round-off.  The
    caller normalizes against the weighted volume of the terminal slice.
    """
    if not backend.is_grid:
        return np.ones(())
    axes = [backend.theta] if backend.kind == "cohom1_torus3" \
        else [backend.theta, backend.theta]
    if center is None:
        center = [np.pi] * len(axes)
    out = np.ones(backend.grid_shape)
    for d, ax in enumerate(axes):
        prof = np.zeros_like(ax)
        for m in range(-images, images + 1):
            prof = prof + np.exp(-0.5 * ((ax - center[d] - 2 * np.pi * m) / sigma) ** 2)
        shape = [1] * len(axes)
        shape[d] = len(ax)
        out = out * prof.reshape(shape)
    return out + floor * float(np.max(out))


def weighted_scalar_curvature(state: FlowState) -> np.ndarray:
    """R^{H,phi} of a flow slice (dilaton weight)."""
    geo = state.geometry()
    _, _, scal = bakry_emery_parts(geo, _torsion_forms(state), state.phi)
    return scal


@dataclass
class SolutionPath:
    """Scalar field sampled on a uniform time grid with stored derivatives."""

    times: np.ndarray
    values: np.ndarray  # (M, *grid)
    derivs: np.ndarray  # d(values)/dt at nodes

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def node_index(self, t: float, tol: float = 1e-9) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > tol * max(1.0, abs(t)):
            raise RangeError(f"t={t} is not a stored node of the solution path")
        return i

    def value_at(self, t: float) -> np.ndarray:
        if t < self.times[0] - 1e-12 or t > self.times[-1] + 1e-12:
            raise RangeError("t outside the solution span")
        t = min(max(t, self.times[0]), self.times[-1])
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        i = min(max(i, 0), len(self.times) - 2)
        t0, t1 = self.times[i], self.times[i + 1]
        if t == t0:
            return self.values[i].copy()
        h = t1 - t0
        s = (t - t0) / h
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return (h00 * self.values[i] + h10 * h * self.derivs[i]
                + h01 * self.values[i + 1] + h11 * h * self.derivs[i + 1])


def _solve_grid(traj: Trajectory, t0: float, t1: float, dt: float | None) -> np.ndarray:
    if not (traj.t0 - 1e-12 <= t0 < t1 <= traj.t1 + 1e-12):
        raise RangeError(f"[{t0}, {t1}] not inside trajectory span")
    if dt is None:
        try:
            dt = traj.dt
        except RangeError:  # adaptive trajectory: pick a uniform backward grid
            dt = (t1 - t0) / 256
    nsteps = max(1, int(round((t1 - t0) / dt)))
    return np.linspace(t0, t1, nsteps + 1)


def _rk4_path(times: np.ndarray, y0: np.ndarray, rhs, monitor=None) -> SolutionPath:
    """March y' = rhs(t, y) over the given uniform grid, storing derivatives."""
    dt = times[1] - times[0]
    vals = np.empty((len(times),) + y0.shape)
    ders = np.empty_like(vals)
    y = y0.copy()
    vals[0] = y
    ders[0] = rhs(times[0], y)
    for i in range(len(times) - 1):
        t = times[i]
        k1 = ders[i]
        k2 = rhs(t + dt / 2, y + dt / 2 * k1)
        k3 = rhs(t + dt / 2, y + dt / 2 * k2)
        k4 = rhs(t + dt, y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        vals[i + 1] = y
        ders[i + 1] = rhs(times[i + 1], y)
        if monitor is not None:
            monitor(times[i + 1], y)
    return SolutionPath(times, vals, ders)


def forward_heat_solve(traj: Trajectory, h0: np.ndarray, t0: float, t1: float,
                       dt: float | None = None,
                       neg_tol: float = 1e-6) -> SolutionPath:
    """Solve box h = 0 forward on [t0, t1] with initial data h0 >= 0.

    The discrete maximum principle is monitored: the solution may not dip
    below -neg_tol * max|h0|.
    """
    times = _solve_grid(traj, t0, t1, dt)
    scale = float(np.max(np.abs(h0))) + 1e-300

    def rhs(t, h):
        geo = Geometry(traj.system.backend, traj.state_at(t).metric)
        return geo.laplace(h)

    def monitor(t, h):
        m = float(np.min(h))
        if m < -neg_tol * scale:
            raise MaxPrincipleViolation(
                f"forward heat solution reached {m:.3e} at t={t:.6g}")

    return _rk4_path(times, np.asarray(h0, dtype=float) + np.zeros(traj.system.backend.grid_shape),
                     rhs, monitor)


@dataclass
class ConjugateSolution:
    """Positive backward solution u with derived potential f and scale tau."""

    traj: Trajectory
    upath: SolutionPath
    mode: str            # 'plain' or 'weighted'
    normalization: str   # 'shrinker' (needs T) or 'steady'
    T: float | None
    n: int
    mass: np.ndarray
    mass_drift: float

    @property
    def times(self) -> np.ndarray:
        return self.upath.times

    def tau(self, t: float) -> float:
        if self.T is None:
            raise RangeError("steady-normalized solution has no time scale")
        return self.T - t

    def u_node(self, i: int) -> np.ndarray:
        return self.upath.values[i]

    def f_node(self, i: int) -> np.ndarray:
        """Potential via u = (4 pi tau)^{-n/2} e^{-f} (or u = e^{-f} steady)."""
        u = self.upath.values[i]
        f = -np.log(u)
        if self.normalization == "shrinker":
            tau = self.tau(float(self.times[i]))
            if tau <= 0:
                raise RangeError("f undefined at tau <= 0")
            f = f - 0.5 * self.n * np.log(4.0 * np.pi * tau)
        return f

    def grad_f_comps(self, geo: Geometry, i: int) -> np.ndarray:
        """Covariant components of grad f, computed as -grad u / u."""
        u = self.upath.values[i]
        return -geo.grad_comps(u) / u


def _conjugate_rhs_factory(traj: Trajectory, mode: str):
    bk = traj.system.backend

    def rhs_t(t, u):
        """du/dt along the *backward* solve, written in forward time."""
        state = traj.state_at(t)
        geo = Geometry(bk, state.metric)
        lap_u = geo.laplace(u)
        if mode == "plain":
            forms = _torsion_forms(state)
            _, R = geo.ricci()
            pot = R
            for k, Hk in forms.items():
                pot = pot - 0.25 * geo.form_norm2(Hk)
            return -lap_u + pot * u
        _, _, rhphi = bakry_emery_parts(geo, _torsion_forms(state), state.phi)
        drift = 2.0 * geo.inner_grad(state.phi, u)
        return -lap_u + drift + rhphi * u

    return rhs_t


def conjugate_solve(traj: Trajectory, u_T: np.ndarray, mode: str = "weighted",
                    T: float | None = None, t0: float | None = None,
                    dt: float | None = None, normalization: str = "shrinker",
                    mass_tol: float = DEFAULT_MASS_TOL) -> ConjugateSolution:
    """Solve the (weighted) conjugate heat equation backward from u_T at T.

    Mass against e^{-phi} dV (weighted) or dV (plain) is conserved by the
    continuum equation; drift beyond ``mass_tol`` relative raises MassDrift.
    Positivity is enforced strictly at every node.
    """
    if mode not in ("plain", "weighted"):
        raise RangeError(f"unknown conjugate mode {mode!r}")
    if normalization == "shrinker" and T is None:
        T = traj.t1
    T = traj.t1 if T is None else T
    t0 = traj.t0 if t0 is None else t0
    bk = traj.system.backend
    u_T = np.asarray(u_T, dtype=float) + np.zeros(bk.grid_shape)
    if np.min(u_T) <= 0.0:
        raise PositivityRequired("terminal data must be strictly positive")
    times = _solve_grid(traj, t0, T, dt)
    rhs_t = _conjugate_rhs_factory(traj, mode)

    def rhs_s(s, u):
        return -rhs_t(T - s, u)

    def monitor(s, u):
        m = float(np.min(u))
        if m <= 0.0:
            loc = np.unravel_index(int(np.argmin(u)), u.shape) if u.shape else ()
            raise PositivityLoss(T - s, loc, m)

    back = _rk4_path(T - times[::-1], u_T, rhs_s, monitor)
    # reorder to increasing t; du/dt = -du/ds
    upath = SolutionPath(times, back.values[::-1].copy(), -back.derivs[::-1].copy())

    mass = np.empty(len(times))
    for i, t in enumerate(times):
        state = traj.state_at(t)
        geo = Geometry(bk, state.metric)
        w = state.phi if mode == "weighted" else 0.0
        mass[i] = geo.weighted_integral(upath.values[i], w)
    m_T = mass[-1]
    drift = float(np.max(np.abs(mass - m_T)) / max(abs(m_T), 1e-300))
    if drift > mass_tol:
        raise MassDrift(f"relative mass drift {drift:.3e} exceeds {mass_tol:.1e}")
    return ConjugateSolution(traj, upath, mode, normalization, T, bk.n, mass, drift)


@dataclass
class ConjugateDilaton:
    """Backward solution psi of the conjugate dilaton flow."""

    psipath: SolutionPath
    usol: ConjugateSolution

    @property
    def times(self) -> np.ndarray:
        return self.psipath.times

    def psi_node(self, i: int) -> np.ndarray:
        return self.psipath.values[i]


def conjugate_dilaton_solve(traj: Trajectory, usol: ConjugateSolution,
                            psi_T=0.0) -> ConjugateDilaton:
    """Solve (-d/dt - lap + 2 grad(f+phi) . grad) psi = -(1/6)|H|^2 backward.

    Equivalent to box*_phi(psi u) = -(1/6)|H|^2 u for the positive u carried
    by ``usol``; the equivalence is a checked residual in the test suite.
    """
    if np.min(usol.upath.values) <= 0.0:
        raise PositivityRequired("conjugate dilaton flow needs positive u")
    bk = traj.system.backend
    times = usol.times
    T = float(times[-1])
    psi0 = np.asarray(psi_T, dtype=float) + np.zeros(bk.grid_shape)

    def rhs_s(s, psi):
        t = T - s
        state = traj.state_at(t)
        geo = Geometry(bk, state.metric)
        u = usol.upath.value_at(t)
        grad_w = (-geo.grad_comps(u) / u) + geo.grad_comps(state.phi)
        drift = np.einsum("i...,i...,i...->...", geo.gi, grad_w, geo.grad_comps(psi))
        forms = _torsion_forms(state)
        src = np.zeros(bk.grid_shape)
        for k, Hk in forms.items():
            if k == 3:
                src = src + geo.form_norm2(Hk) / 6.0
        return geo.laplace(psi) - 2.0 * drift - src

    back = _rk4_path(T - times[::-1], psi0, rhs_s)
    psipath = SolutionPath(times, back.values[::-1].copy(), -back.derivs[::-1].copy())
    return ConjugateDilaton(psipath, usol)


def _d4(series: np.ndarray, dt: float, i: int):
    """Fourth-order centered first derivative at interior node i."""
    return (-series[i + 2] + 8 * series[i + 1]
            - 8 * series[i - 1] + series[i - 2]) / (12 * dt)


def duality_residual(traj: Trajectory, upath: SolutionPath, vpath: SolutionPath,
                     weighted: bool = True) -> float:
    """max_t | d/dt int u v w dV - int (v box u - u box*_w v) w dV |.

    ``w`` is e^{-phi} in weighted mode and 1 otherwise.  The time derivative
    of the pairing uses fourth-order centered differencing on the common
    node grid; box u and box*_w v use the stored path derivatives.
    """
    if len(upath.times) != len(vpath.times) or not np.allclose(upath.times, vpath.times):
        raise RangeError("paths must share one time grid")
    times = upath.times
    if len(times) < 5:
        raise RangeError("need at least five nodes for the centered stencil")
    dt = upath.dt
    bk = traj.system.backend
    pairing = np.empty(len(times))
    bulk = np.empty(len(times))
    for i, t in enumerate(times):
        state = traj.state_at(t)
        geo = Geometry(bk, state.metric)
        u, v = upath.values[i], vpath.values[i]
        du, dv = upath.derivs[i], vpath.derivs[i]
        box_u = du - geo.laplace(u)
        forms = _torsion_forms(state)
        if weighted:
            _, _, rhphi = bakry_emery_parts(geo, forms, state.phi)
            box_v = (-dv - geo.laplace(v) + 2.0 * geo.inner_grad(state.phi, v)
                     + rhphi * v)
            wfield = state.phi
        else:
            _, R = geo.ricci()
            pot = R
            for k, Hk in forms.items():
                pot = pot - 0.25 * geo.form_norm2(Hk)
            box_v = -dv - geo.laplace(v) + pot * v
            wfield = 0.0
        pairing[i] = geo.weighted_integral(u * v, wfield)
        bulk[i] = geo.weighted_integral(v * box_u - u * box_v, wfield)
    res = 0.0
    for i in range(2, len(times) - 2):
        res = max(res, abs(_d4(pairing, dt, i) - bulk[i]))
    return float(res)
