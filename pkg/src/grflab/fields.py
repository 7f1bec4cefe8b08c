"""Field containers: metric states, differential forms, symmetric tensors.

Forms store only their independent components, ordered by increasing
lexicographic multi-index, e.g. degree 2 in dimension 3 uses the slots
(0,1), (0,2), (1,2).  Component arrays have shape ``(ncomp, *grid)``;
scalar fields are bare ndarrays of shape ``grid`` (a 0-d array on the
homogeneous backend).  Symmetric 2-tensors are stored as full (n, n, *grid)
arrays and symmetrized on construction, so symmetry is exact by
representation.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import factorial

import numpy as np

from .backends import Backend, CONFORMAL_TORUS2, COHOM1_TORUS3, HOMOGENEOUS3
from .errors import DegenerateMetric, UnsupportedDegree

_INDEX_CACHE: dict = {}


def form_indices(n: int, k: int) -> tuple:
    """Sorted multi-indices enumerating the independent degree-k components."""
    key = (n, k)
    if key not in _INDEX_CACHE:
        _INDEX_CACHE[key] = tuple(combinations(range(n), k))
    return _INDEX_CACHE[key]


def n_components(n: int, k: int) -> int:
    return len(form_indices(n, k))


def component_lookup(n: int, k: int) -> dict:
    """Map any k-tuple of distinct indices to (sign, slot) by antisymmetry."""
    key = ("lookup", n, k)
    if key not in _INDEX_CACHE:
        table = {}
        for slot, idx in enumerate(form_indices(n, k)):
            from itertools import permutations

            for perm in permutations(idx):
                sign = _perm_sign(perm, idx)
                table[perm] = (sign, slot)
        _INDEX_CACHE[key] = table
    return _INDEX_CACHE[key]


def _perm_sign(perm, sorted_idx):
    sign = 1
    perm = list(perm)
    for i, target in enumerate(sorted_idx):
        j = perm.index(target)
        if j != i:
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


@dataclass
class MetricState:
    """One backend-specific metric slice.

    data layout:
      homogeneous3     -- (3,) positive frame coefficients (x1, x2, x3)
      cohom1_torus3    -- (3, N) positive profiles a, b, c of the diagonal
      conformal_torus2 -- (N, N) conformal exponent u, metric e^{2u} delta
    """

    kind: str
    data: np.ndarray

    def copy(self) -> "MetricState":
        return MetricState(self.kind, self.data.copy())

    def diag(self, backend: Backend) -> np.ndarray:
        """Diagonal metric entries broadcast over the grid, shape (n, *grid)."""
        if self.kind == HOMOGENEOUS3:
            return np.asarray(self.data, dtype=float).reshape(3)
        if self.kind == COHOM1_TORUS3:
            return np.asarray(self.data, dtype=float)
        e2u = np.exp(2.0 * self.data)
        return np.stack([e2u, e2u])

    def min_eigenvalue(self, backend: Backend) -> float:
        return float(np.min(self.diag(backend)))

    def check_positive(self, backend: Backend, floor: float = 0.0):
        m = self.min_eigenvalue(backend)
        if not np.isfinite(m) or m <= floor:
            raise DegenerateMetric(f"metric coefficient {m:.3e} <= {floor:.1e}")


@dataclass
class FormField:
    """Differential form of fixed degree with independent components only."""

    degree: int
    comps: np.ndarray  # shape (ncomp, *grid)

    def copy(self) -> "FormField":
        return FormField(self.degree, self.comps.copy())

    def __add__(self, other: "FormField") -> "FormField":
        if self.degree != other.degree:
            raise UnsupportedDegree("cannot add forms of different degree")
        return FormField(self.degree, self.comps + other.comps)

    def __mul__(self, scalar) -> "FormField":
        return FormField(self.degree, self.comps * scalar)

    __rmul__ = __mul__

    @staticmethod
    def zero(backend: Backend, degree: int) -> "FormField":
        if not 0 <= degree <= backend.n:
            raise UnsupportedDegree(
                f"degree {degree} invalid on a {backend.n}-manifold"
            )
        nc = n_components(backend.n, degree)
        return FormField(degree, backend.zeros((nc,)))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.comps))) if self.comps.size else 0.0


def sym_tensor(values: np.ndarray) -> np.ndarray:
    """Symmetrize the leading two axes; exact symmetry by representation."""
    return 0.5 * (values + np.swapaxes(values, 0, 1))


def volume_form(backend: Backend, metric: MetricState) -> FormField:
    """Riemannian volume form dV_g as a top-degree FormField."""
    gd = metric.diag(backend)
    sqrtg = np.sqrt(np.prod(gd, axis=0))
    return FormField(backend.n, sqrtg[None, ...].copy())
