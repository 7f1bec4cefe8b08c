"""Geometry backends: the three metric ansatz families and their grids.

Three backends are supported:

* ``homogeneous3``   -- left-invariant metrics on a unimodular 3d Lie group
  given by Milnor structure constants ``[e2,e3] = l1 e1`` (cyclic).  Fields
  are frame-constant, so arrays carry no grid axes at all.
* ``cohom1_torus3``  -- diagonal metrics diag(a,b,c) on T^3 whose profiles
  depend on the first coordinate only; fields live on a periodic 1d grid.
* ``conformal_torus2`` -- metrics e^{2u} (dx^2 + dy^2) on T^2; fields live
  on a periodic NxN grid.

Spatial differentiation on the grid backends is spectral (trigonometric
interpolation); the Nyquist mode of the derivative is zeroed so the
differentiation matrix is exactly antisymmetric, which makes all discrete
integration-by-parts identities hold to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

HOMOGENEOUS3 = "homogeneous3"
COHOM1_TORUS3 = "cohom1_torus3"
CONFORMAL_TORUS2 = "conformal_torus2"

KINDS = (HOMOGENEOUS3, COHOM1_TORUS3, CONFORMAL_TORUS2)


def _deriv_multiplier(npts: int) -> np.ndarray:
    """i*k multiplier for the rfft of a 2*pi-periodic grid, Nyquist zeroed."""
    k = np.fft.rfftfreq(npts, d=1.0 / npts)
    mult = 1j * k
    if npts % 2 == 0:
        mult[-1] = 0.0
    return mult


@dataclass(frozen=True)
class BackendDescriptor:
    """Which ansatz family a state lives on, plus its discretization size.

    ``structure_constants`` is used by the homogeneous backend only;
    ``resolution`` by the grid backends only.
    """

    kind: str
    resolution: int = 0
    structure_constants: tuple = (2.0, 2.0, 2.0)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown backend kind {self.kind!r}")
        if self.kind != HOMOGENEOUS3:
            if self.resolution < 16 or self.resolution % 2 != 0:
                raise ConfigError("grid backends need an even node count N >= 16")
        if self.kind == HOMOGENEOUS3 and len(self.structure_constants) != 3:
            raise ConfigError("homogeneous3 takes exactly three structure constants")

    @property
    def n(self) -> int:
        return 2 if self.kind == CONFORMAL_TORUS2 else 3

    @property
    def grid_shape(self) -> tuple:
        if self.kind == HOMOGENEOUS3:
            return ()
        if self.kind == COHOM1_TORUS3:
            return (self.resolution,)
        return (self.resolution, self.resolution)

    @property
    def is_grid(self) -> bool:
        return self.kind != HOMOGENEOUS3


class Backend:
    """Grid data and spectral differentiation bound to one descriptor.

    A Backend is immutable and shared by every state on a trajectory.
    """

    def __init__(self, desc: BackendDescriptor):
        self.desc = desc
        self.kind = desc.kind
        self.n = desc.n
        self.grid_shape = desc.grid_shape
        self.is_grid = desc.is_grid
        N = desc.resolution
        if self.kind == HOMOGENEOUS3:
            # [e2,e3] = l1 e1 and cyclic, encoded as C[k,i,j] with
            # [e_i, e_j] = C[k,i,j] e_k.
            l1, l2, l3 = map(float, desc.structure_constants)
            C = np.zeros((3, 3, 3))
            C[0, 1, 2], C[0, 2, 1] = l1, -l1
            C[1, 2, 0], C[1, 0, 2] = l2, -l2
            C[2, 0, 1], C[2, 1, 0] = l3, -l3
            self.structure = C
            self.h = 0.0
            self.cell_volume = 1.0  # unit coordinate volume for the group
            self.theta = None
        elif self.kind == COHOM1_TORUS3:
            self.structure = None
            self.h = 2.0 * np.pi / N
            self.cell_volume = self.h * (2.0 * np.pi) ** 2  # y,z fibers integrated
            self.theta = self.h * np.arange(N)
            self._mult = _deriv_multiplier(N)
        else:
            self.structure = None
            self.h = 2.0 * np.pi / N
            self.cell_volume = self.h ** 2
            self.theta = self.h * np.arange(N)
            x = self.theta
            self.xx, self.yy = np.meshgrid(x, x, indexing="ij")
            self._mult = _deriv_multiplier(N)

    def deriv(self, arr: np.ndarray, direction: int) -> np.ndarray:
        """Spectral partial derivative along coordinate ``direction``.

        Directions without grid dependence (all of them on homogeneous3,
        the fiber directions on cohom1_torus3) differentiate to zero.
        """
        if self.kind == HOMOGENEOUS3:
            return np.zeros_like(arr)
        if self.kind == COHOM1_TORUS3:
            if direction != 0:
                return np.zeros_like(arr)
            axis = arr.ndim - 1
        else:
            if direction not in (0, 1):
                return np.zeros_like(arr)
            axis = arr.ndim - 2 + direction
        spec = np.fft.rfft(arr, axis=axis)
        shape = [1] * arr.ndim
        shape[axis] = spec.shape[axis]
        spec *= self._mult.reshape(shape)
        return np.fft.irfft(spec, n=arr.shape[axis], axis=axis)

    def nyquist_project(self, arr: np.ndarray) -> np.ndarray:
        """Zero the Nyquist coefficient along every grid axis.

        The antisymmetric spectral derivative annihilates the Nyquist
        sawtooth, which would otherwise appear as a spurious gradient-free
        direction in quadratic-form eigenproblems.  Smooth fields are
        unchanged up to round-off.
        """
        if self.kind == HOMOGENEOUS3:
            return np.asarray(arr, dtype=float)
        out = np.asarray(arr, dtype=float)
        naxes = 1 if self.kind == COHOM1_TORUS3 else 2
        for ax in range(out.ndim - naxes, out.ndim):
            spec = np.fft.rfft(out, axis=ax)
            idx = [slice(None)] * out.ndim
            idx[ax] = -1
            spec[tuple(idx)] = 0.0
            out = np.fft.irfft(spec, n=out.shape[ax], axis=ax)
        return out

    def zeros(self, lead: tuple = ()) -> np.ndarray:
        return np.zeros(lead + self.grid_shape)

    def constant(self, value: float, lead: tuple = ()) -> np.ndarray:
        return np.full(lead + self.grid_shape, float(value))


def make_backend(desc: BackendDescriptor) -> Backend:
    return Backend(desc)
