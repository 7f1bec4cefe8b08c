"""Time integration of generalized Ricci flow and its variants.

The flow system couples a metric to a closed torsion form and a dilaton:

    dg/dt = -2 Rc + (1/2) H^2,     db/dt = -d* H,      H = H0 + db,
    dphi/dt = lap phi + (1/6) |H|^2.

Two variants are supported: the one-form mode evolves an auxiliary 1-form
by ``dalpha/dt = lap_d alpha + (1/6) d|H|^2``, and the general-degree mode
replaces the 3-form by a collection of closed forms H_k evolving by
``dH_k/dt = lap_d H_k`` with the dilaton source ``(1/4) sum (k-1)/k |H_k|^2``.

Every accepted step is checkpointed together with its time derivative, so
backward (conjugate) solves can interpolate coefficients anywhere on the
span with dense-output error O(dt^4).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .backends import (
    Backend,
    BackendDescriptor,
    CONFORMAL_TORUS2,
    COHOM1_TORUS3,
    HOMOGENEOUS3,
    make_backend,
)
from .errors import (
    AnsatzBreak,
    MetricDegenerate,
    MissingField,
    NotClosed,
    RangeError,
    StiffnessAbort,
)
from .fields import FormField, MetricState, n_components
from .geometry import Geometry

MODES = ("ricci", "grf", "oneform", "ggrf")

ANSATZ_RTOL = 1e-7
CLOSED_TOL = 1e-9


@dataclass
class StepperConfig:
    """Time-stepping knobs.

    ``scheme='rk4'`` uses a fixed step dt = cfl * h^2 on grid backends;
    ``scheme='rkck45'`` is the adaptive Cash-Karp 4(5) pair used on the
    homogeneous backend.
    """

    t_end: float
    scheme: str = "rk4"
    dt: float | None = None
    cfl: float = 0.2
    spd_floor: float = 1e-8
    atol: float = 1e-10
    rtol: float = 1e-10

    def __post_init__(self):
        if self.t_end <= 0:
            raise RangeError("t_end must be positive")
        if self.dt is not None and self.dt <= 0:
            raise RangeError("dt must be positive")
        if self.spd_floor <= 0:
            raise RangeError("spd_floor must be positive")


@dataclass
class FlowState:
    """One time slice of the coupled flow."""

    t: float
    backend: Backend
    mode: str
    metric: MetricState
    phi: np.ndarray
    b: FormField | None = None
    H0: FormField | None = None
    alpha: FormField | None = None
    forms: dict | None = None  # ggrf mode: degree -> closed FormField

    def torsion(self) -> FormField | None:
        """The closed torsion H = H0 + db (grf family), None if absent."""
        if self.mode == "ggrf" or self.backend.n < 3:
            return None
        if self.H0 is None and self.b is None:
            return None
        H = FormField.zero(self.backend, 3)
        if self.H0 is not None:
            H = H + self.H0
        if self.b is not None:
            geo = Geometry(self.backend, self.metric)
            H = H + geo.exterior_d(self.b)
        return H

    def geometry(self) -> Geometry:
        return Geometry(self.backend, self.metric)


@dataclass
class StateDot:
    """Time derivative of a FlowState, same field layout."""

    metric_dot: np.ndarray
    phi_dot: np.ndarray
    b_dot: FormField | None = None
    alpha_dot: FormField | None = None
    forms_dot: dict | None = None


class FlowSystem:
    """Packing layout and vector-field assembly for one flow mode."""

    def __init__(self, backend: Backend, mode: str, H0: FormField | None = None,
                 form_degrees: tuple = ()):
        if mode not in MODES:
            raise ValueError(f"unknown flow mode {mode!r}")
        self.backend = backend
        self.mode = mode
        self.H0 = H0
        self.form_degrees = tuple(sorted(form_degrees))
        gs = backend.grid_shape
        npts = int(np.prod(gs)) if gs else 1
        blocks = []
        if backend.kind == HOMOGENEOUS3:
            blocks.append(("metric", (3,), 3))
        elif backend.kind == COHOM1_TORUS3:
            blocks.append(("metric", (3,) + gs, 3 * npts))
        else:
            blocks.append(("metric", gs, npts))
        if mode in ("grf", "oneform") and backend.n == 3:
            nc = n_components(3, 2)
            blocks.append(("b", (nc,) + gs, nc * npts))
        blocks.append(("phi", gs, npts))
        if mode == "oneform":
            blocks.append(("alpha", (backend.n,) + gs, backend.n * npts))
        if mode == "ggrf":
            for k in self.form_degrees:
                nc = n_components(backend.n, k)
                blocks.append((f"form{k}", (nc,) + gs, nc * npts))
        self.blocks = blocks
        self.dof = sum(sz for _, _, sz in blocks)
        self._slices = {}
        off = 0
        for name, shape, sz in blocks:
            self._slices[name] = (slice(off, off + sz), shape)
            off += sz

    def pack(self, s: FlowState) -> np.ndarray:
        y = np.empty(self.dof)
        self._put(y, "metric", s.metric.data)
        self._put(y, "phi", s.phi)
        if "b" in self._slices:
            self._put(y, "b", s.b.comps if s.b is not None else 0.0)
        if "alpha" in self._slices:
            if s.alpha is None:
                raise MissingField("one-form mode needs the alpha field")
            self._put(y, "alpha", s.alpha.comps)
        for k in self.form_degrees:
            self._put(y, f"form{k}", s.forms[k].comps)
        return y

    def pack_dot(self, dot: StateDot) -> np.ndarray:
        y = np.empty(self.dof)
        self._put(y, "metric", dot.metric_dot)
        self._put(y, "phi", dot.phi_dot)
        if "b" in self._slices:
            self._put(y, "b", dot.b_dot.comps if dot.b_dot is not None else 0.0)
        if "alpha" in self._slices:
            self._put(y, "alpha", dot.alpha_dot.comps)
        for k in self.form_degrees:
            self._put(y, f"form{k}", dot.forms_dot[k].comps)
        return y

    def _put(self, y, name, value):
        sl, shape = self._slices[name]
        y[sl] = np.broadcast_to(np.asarray(value, dtype=float), shape).reshape(-1)

    def _get(self, y, name):
        sl, shape = self._slices[name]
        return y[sl].reshape(shape)

    def unpack(self, t: float, y: np.ndarray) -> FlowState:
        bk = self.backend
        metric = MetricState(bk.kind, self._get(y, "metric").copy())
        phi = self._get(y, "phi").copy()
        b = None
        if "b" in self._slices:
            b = FormField(2, self._get(y, "b").copy())
        alpha = None
        if "alpha" in self._slices:
            alpha = FormField(1, self._get(y, "alpha").copy())
        forms = None
        if self.form_degrees:
            forms = {k: FormField(k, self._get(y, f"form{k}").copy())
                     for k in self.form_degrees}
        return FlowState(t, bk, self.mode, metric, phi, b=b, H0=self.H0,
                         alpha=alpha, forms=forms)

    def rhs_vec(self, t: float, y: np.ndarray) -> np.ndarray:
        return self.pack_dot(full_rhs(self.unpack(t, y)))

    def metric_min(self, y: np.ndarray) -> tuple:
        """Minimum metric eigenvalue and its grid location."""
        data = self._get(y, "metric")
        if self.backend.kind == CONFORMAL_TORUS2:
            diag = np.exp(2.0 * data)
        else:
            diag = data
        loc = np.unravel_index(int(np.argmin(diag)), diag.shape)
        return float(diag[loc]), loc


# -- right-hand sides -------------------------------------------------------


def _metric_rhs_tensor(geo: Geometry, H2_total: np.ndarray) -> np.ndarray:
    rc, _ = geo.ricci()
    return -2.0 * rc + 0.5 * H2_total


def _project_metric_rhs(state: FlowState, rhs: np.ndarray) -> np.ndarray:
    """Project -2Rc + H^2/2 onto the ansatz; raise if the projection lost mass."""
    bk = state.backend
    scale = float(np.max(np.abs(rhs))) + 1.0
    tol = ANSATZ_RTOL * scale
    n = bk.n
    off = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            off = max(off, float(np.max(np.abs(rhs[i, j]))))
    if off > tol:
        raise AnsatzBreak(f"off-diagonal metric rhs {off:.3e} exceeds {tol:.1e}")
    if bk.kind in (HOMOGENEOUS3, COHOM1_TORUS3):
        return np.stack([rhs[i, i] for i in range(n)])
    # conformal: rhs must be a multiple of g
    e2u = np.exp(2.0 * state.metric.data)
    aniso = float(np.max(np.abs(rhs[0, 0] - rhs[1, 1])))
    if aniso > tol:
        raise AnsatzBreak(f"anisotropic conformal rhs {aniso:.3e} exceeds {tol:.1e}")
    return (rhs[0, 0] + rhs[1, 1]) / (4.0 * e2u)


def _h2_total(geo: Geometry, state: FlowState) -> tuple:
    """(sum of H_k^2 tensors, dict degree -> FormField) for the active mode."""
    n = geo.n
    zero = np.zeros((n, n) + geo.backend.grid_shape)
    if state.mode == "ggrf":
        forms = state.forms or {}
        total = zero.copy()
        for k, Hk in forms.items():
            total += geo.h_square(Hk)
        return total, dict(forms)
    H = state.torsion()
    if H is None or not np.any(H.comps):
        return zero, {}
    return geo.h_square(H), {3: H}


def grf_rhs(state: FlowState) -> StateDot:
    """Metric and torsion-potential flow, restricted to the backend ansatz."""
    geo = state.geometry()
    H = state.torsion()
    H2 = geo.h_square(H) if H is not None else np.zeros(
        (geo.n, geo.n) + geo.backend.grid_shape)
    rhs = _metric_rhs_tensor(geo, H2)
    mdot = _project_metric_rhs(state, rhs)
    bdot = None
    if state.b is not None:
        if H is not None:
            bdot = geo.codifferential(H) * (-1.0)
        else:
            bdot = FormField.zero(state.backend, 2)
    return StateDot(metric_dot=mdot, phi_dot=dilaton_rhs(state), b_dot=bdot)


def dilaton_rhs(state: FlowState) -> np.ndarray:
    """lap phi plus the mode-specific torsion source."""
    geo = state.geometry()
    out = geo.laplace(state.phi)
    if state.mode == "ggrf":
        for k, Hk in (state.forms or {}).items():
            if k >= 2:
                out = out + 0.25 * (k - 1.0) / k * geo.form_norm2(Hk)
    else:
        H = state.torsion()
        if H is not None:
            out = out + geo.form_norm2(H) / 6.0
    return out


def oneform_dilaton_rhs(state: FlowState) -> FormField:
    """lap_d alpha + (1/6) d |H|^2."""
    if state.alpha is None:
        raise MissingField("one-form dilaton flow needs alpha")
    geo = state.geometry()
    out = geo.hodge_laplacian(state.alpha)
    H = state.torsion()
    if H is not None:
        out = out + FormField(1, geo.grad_comps(geo.form_norm2(H) / 6.0))
    return out


def ggrf_rhs(state: FlowState) -> StateDot:
    """General-degree coupling: dH_k/dt = lap_d H_k, plus metric and dilaton."""
    if state.mode != "ggrf" or not state.forms:
        raise MissingField("general-degree mode needs the form collection")
    geo = state.geometry()
    for k, Hk in state.forms.items():
        dn = geo.d_sup_norm(Hk)
        if dn > CLOSED_TOL * (1.0 + Hk.sup_norm()):
            raise NotClosed(f"degree-{k} form has |dH| = {dn:.3e}")
    H2, forms = _h2_total(geo, state)
    mdot = _project_metric_rhs(state, _metric_rhs_tensor(geo, H2))
    fdot = {k: geo.hodge_laplacian(Hk) for k, Hk in forms.items()}
    return StateDot(metric_dot=mdot, phi_dot=dilaton_rhs(state), forms_dot=fdot)


def full_rhs(state: FlowState) -> StateDot:
    """Assemble the complete vector field for the state's mode."""
    if state.mode == "ggrf":
        return ggrf_rhs(state)
    dot = grf_rhs(state)
    if state.mode == "oneform":
        dot.alpha_dot = oneform_dilaton_rhs(state)
    return dot


# -- trajectories -----------------------------------------------------------


@dataclass
class Trajectory:
    """Checkpointed flow history with cubic-Hermite dense output."""

    system: FlowSystem
    times: np.ndarray
    states: np.ndarray  # (M, dof)
    derivs: np.ndarray  # (M, dof)
    config_hash: str = ""
    step_log: list = field(default_factory=list)

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t1(self) -> float:
        return float(self.times[-1])

    @property
    def dt(self) -> float:
        """Uniform node spacing; RangeError if the grid is not uniform."""
        d = np.diff(self.times)
        if d.size == 0 or not np.allclose(d, d[0], rtol=1e-10, atol=1e-14):
            raise RangeError("trajectory does not have a uniform time grid")
        return float(d[0])

    def node_index(self, t: float, tol: float = 1e-9) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > tol * max(1.0, abs(t)):
            raise RangeError(f"t={t} is not a stored node")
        return i

    def state_node(self, i: int) -> FlowState:
        return self.system.unpack(float(self.times[i]), self.states[i])

    def interp_vec(self, t: float) -> np.ndarray:
        if t < self.t0 - 1e-12 or t > self.t1 + 1e-12:
            raise RangeError(f"t={t} outside trajectory span [{self.t0}, {self.t1}]")
        t = min(max(t, self.t0), self.t1)
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        i = min(max(i, 0), len(self.times) - 2)
        t0, t1 = self.times[i], self.times[i + 1]
        if t == t0:
            return self.states[i].copy()
        h = t1 - t0
        s = (t - t0) / h
        y0, y1 = self.states[i], self.states[i + 1]
        f0, f1 = self.derivs[i], self.derivs[i + 1]
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1

    def state_at(self, t: float) -> FlowState:
        return self.system.unpack(t, self.interp_vec(t))

    def save(self, path: str):
        meta = {
            "format": "grflab-trajectory",
            "version": 1,
            "kind": self.system.backend.kind,
            "resolution": self.system.backend.desc.resolution,
            "structure_constants": list(self.system.backend.desc.structure_constants),
            "mode": self.system.mode,
            "form_degrees": list(self.system.form_degrees),
            "config_hash": self.config_hash,
        }
        arrays = {
            "times": self.times,
            "states": self.states,
            "derivs": self.derivs,
            "meta_json": np.frombuffer(json.dumps(meta, sort_keys=True).encode(),
                                       dtype=np.uint8),
        }
        if self.system.H0 is not None:
            arrays["H0_comps"] = self.system.H0.comps
            arrays["H0_degree"] = np.array([self.system.H0.degree])
        np.savez_compressed(path, **arrays)

    @staticmethod
    def load(path: str) -> "Trajectory":
        data = np.load(path)
        meta = json.loads(bytes(data["meta_json"]).decode())
        if meta.get("format") != "grflab-trajectory" or meta.get("version") != 1:
            raise RangeError("unrecognized trajectory container")
        desc = BackendDescriptor(
            meta["kind"],
            resolution=int(meta["resolution"]),
            structure_constants=tuple(meta["structure_constants"]),
        )
        H0 = None
        if "H0_comps" in data:
            H0 = FormField(int(data["H0_degree"][0]), data["H0_comps"])
        system = FlowSystem(make_backend(desc), meta["mode"], H0=H0,
                            form_degrees=tuple(meta["form_degrees"]))
        return Trajectory(system, data["times"], data["states"], data["derivs"],
                          config_hash=meta["config_hash"])


def state_at(traj: Trajectory, t: float) -> FlowState:
    return traj.state_at(t)


def config_fingerprint(payload) -> str:
    js = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(js.encode()).hexdigest()[:16]


# -- integrators ------------------------------------------------------------

_CK_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (3 / 10, -9 / 10, 6 / 5),
    (-11 / 54, 5 / 2, -70 / 27, 35 / 27),
    (1631 / 55296, 175 / 512, 575 / 13824, 44275 / 110592, 253 / 4096),
)
_CK_B5 = (37 / 378, 0, 250 / 621, 125 / 594, 0, 512 / 1771)
_CK_B4 = (2825 / 27648, 0, 18575 / 48384, 13525 / 55296, 277 / 14336, 1 / 4)


def _rk4_step(f, t, y, dt, k1=None):
    if k1 is None:
        k1 = f(t, y)
    k2 = f(t + dt / 2, y + dt / 2 * k1)
    k3 = f(t + dt / 2, y + dt / 2 * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _check_step(system, t, y, spd_floor):
    if not np.all(np.isfinite(y)):
        raise StiffnessAbort(t, "non-finite state (dt likely violates the CFL bound)")
    mval, loc = system.metric_min(y)
    if mval <= spd_floor:
        raise MetricDegenerate(t, loc, mval)


def integrate(s0: FlowState, cfg: StepperConfig, config_hash: str = "") -> Trajectory:
    """Run the flow to t_end, checkpointing every accepted step.

    Deterministic for fixed (s0, cfg).  Raises MetricDegenerate when the SPD
    floor is breached and StiffnessAbort on divergence or step underflow.
    """
    system = FlowSystem(s0.backend, s0.mode, H0=s0.H0,
                        form_degrees=tuple((s0.forms or {}).keys()))
    y0 = system.pack(s0)
    t0 = s0.t
    _check_step(system, t0, y0, cfg.spd_floor)
    if not config_hash:
        config_hash = config_fingerprint({
            "t_end": cfg.t_end, "scheme": cfg.scheme, "dt": cfg.dt,
            "cfl": cfg.cfl, "mode": s0.mode, "kind": s0.backend.kind,
            "state": hashlib.sha256(y0.tobytes()).hexdigest(),
        })
    f = system.rhs_vec
    times, states, derivs, log = [t0], [y0], [f(t0, y0)], []

    if cfg.scheme == "rk4":
        if cfg.dt is not None:
            dt = cfg.dt
        elif s0.backend.is_grid:
            dt = cfg.cfl * s0.backend.h ** 2
        else:
            dt = cfg.cfl * 1e-2
        nsteps = max(1, int(np.ceil(cfg.t_end / dt - 1e-12)))
        dt = cfg.t_end / nsteps
        y, t = y0, t0
        for i in range(nsteps):
            y = _rk4_step(f, t, y, dt, k1=derivs[-1])
            t = t0 + (i + 1) * dt
            _check_step(system, t, y, cfg.spd_floor)
            times.append(t)
            states.append(y)
            derivs.append(f(t, y))
        log.append({"scheme": "rk4", "dt": dt, "steps": nsteps, "rejected": 0})
    elif cfg.scheme == "rkck45":
        t, y = t0, y0
        t_final = t0 + cfg.t_end
        dt = min(1e-3, cfg.t_end / 10)
        rejected = 0
        while t < t_final - 1e-14:
            dt = min(dt, t_final - t)
            if dt < 1e-14 * max(1.0, abs(t_final)):
                raise StiffnessAbort(t, "step size underflow")
            ks = [derivs[-1] if t == times[-1] else f(t, y)]
            for irow in range(1, 6):
                yi = y + dt * sum(a * k for a, k in zip(_CK_A[irow], ks))
                ks.append(f(t + dt * sum(_CK_A[irow]), yi))
            y5 = y + dt * sum(b * k for b, k in zip(_CK_B5, ks))
            y4 = y + dt * sum(b * k for b, k in zip(_CK_B4, ks))
            err = np.max(np.abs(y5 - y4) / (cfg.atol + cfg.rtol * np.abs(y5)))
            if err <= 1.0 or dt <= 1e-13:
                t = t + dt
                y = y5
                _check_step(system, t, y, cfg.spd_floor)
                times.append(t)
                states.append(y)
                derivs.append(f(t, y))
            else:
                rejected += 1
            dt = dt * float(np.clip(0.9 * (max(err, 1e-16)) ** (-0.2), 0.2, 5.0))
        log.append({"scheme": "rkck45", "steps": len(times) - 1,
                    "rejected": rejected})
    else:
        raise RangeError(f"unknown scheme {cfg.scheme!r}")

    return Trajectory(system, np.array(times), np.array(states),
                      np.array(derivs), config_hash=config_hash, step_log=log)
