"""Discrete differential-geometry kernels bound to one metric slice.

A :class:`Geometry` packages everything downstream solvers need at a fixed
time: Christoffel symbols, Ricci curvature, the exterior derivative and its
exact discrete adjoint, torsion contractions, and weighted quadrature.

Conventions, fixed once for the whole package:

* ``H2[i,j] = H_{iab} H_j^{ab}`` summed over all index orderings, and
  ``|H_k|^2`` is the full contraction without a 1/k! factor, so that
  ``tr_g H2 = |H|^2`` pointwise.
* The codifferential ``d*`` is the exact adjoint of the discrete ``d``
  under the dV_g quadrature pairing (not the smooth formula), so discrete
  integration by parts is exact.
* ``lap = tr grad^2`` has nonpositive spectrum, and the form Laplacian is
  ``lap_d = -(d d* + d* d)``, which agrees with ``lap`` on functions.
"""

from __future__ import annotations

from math import factorial

import numpy as np

from .backends import Backend, HOMOGENEOUS3
from .errors import DegenerateMetric, UnsupportedDegree
from .fields import (
    FormField,
    MetricState,
    component_lookup,
    form_indices,
    n_components,
    sym_tensor,
)


class Geometry:
    """Curvature and exterior-calculus kernels for one (backend, metric)."""

    def __init__(self, backend: Backend, metric: MetricState):
        self.backend = backend
        self.metric = metric
        self.n = backend.n
        gd = metric.diag(backend)
        if not np.all(np.isfinite(gd)) or np.min(gd) <= 0.0:
            raise DegenerateMetric(
                f"metric coefficient min {np.min(gd):.3e} is not positive"
            )
        self.gd = gd                       # (n, *grid) diagonal entries
        self.gi = 1.0 / gd                 # inverse metric diagonal
        self.sqrtg = np.sqrt(np.prod(gd, axis=0))
        self._gamma = None
        self._d_mats = None

    # -- connection and curvature -------------------------------------

    @property
    def christoffels(self) -> np.ndarray:
        """Connection coefficients Gamma[k,i,j], shape (n,n,n,*grid).

        Coordinate-frame Christoffels on the grid backends; left-invariant
        frame coefficients <nabla_{e_i} e_j, e_k>/x_k on homogeneous3.
        """
        if self._gamma is not None:
            return self._gamma
        n = self.n
        if self.backend.kind == HOMOGENEOUS3:
            C = self.backend.structure
            x = self.gd
            c = np.einsum("lij,l->ijl", C, x)  # c[i,j,l] = <[e_i,e_j], e_l>
            inner = 0.5 * (c - np.transpose(c, (1, 2, 0)) + np.transpose(c, (2, 0, 1)))
            gamma = np.einsum("ijk,k->kij", inner, 1.0 / x)
        else:
            d = self.backend.deriv
            gd, gi = self.gd, self.gi
            dg = np.stack([np.stack([d(gd[m], i) for m in range(n)]) for i in range(n)])
            # dg[i, m] = partial_i g_mm
            gamma = np.zeros((n, n, n) + self.backend.grid_shape)
            for k in range(n):
                for i in range(n):
                    for j in range(n):
                        term = 0.0
                        if k == j:
                            term = term + dg[i, j]
                        if k == i:
                            term = term + dg[j, i]
                        if i == j:
                            term = term - dg[k, i]
                        gamma[k, i, j] = 0.5 * gi[k] * term
        self._gamma = gamma
        return gamma

    def ricci(self) -> tuple:
        """Ricci tensor (n,n,*grid) and scalar curvature field."""
        n = self.n
        gamma = self.christoffels
        if self.backend.kind == HOMOGENEOUS3:
            C = self.backend.structure
            # Riem^l_{kij} = G^m_{jk} G^l_{im} - G^m_{ik} G^l_{jm} - C^m_{ij} G^l_{mk}
            riem = (
                np.einsum("mjk,lim->lkij", gamma, gamma)
                - np.einsum("mik,ljm->lkij", gamma, gamma)
                - np.einsum("mij,lmk->lkij", C, gamma)
            )
            rc = sym_tensor(np.einsum("ikij->jk", riem))
        else:
            d = self.backend.deriv
            grid = self.backend.grid_shape
            dgam = np.zeros((n, n, n, n) + grid)  # dgam[p,k,i,j] = partial_p G^k_ij
            for p in range(n):
                for k in range(n):
                    for i in range(n):
                        for j in range(i, n):
                            val = d(gamma[k, i, j], p)
                            dgam[p, k, i, j] = val
                            dgam[p, k, j, i] = val
            term1 = np.einsum("kkij...->ij...", dgam)
            term2 = np.einsum("ikkj...->ij...", dgam)
            term3 = np.einsum("kkl...,lij...->ij...", gamma, gamma)
            term4 = np.einsum("kil...,lkj...->ij...", gamma, gamma)
            rc = sym_tensor(term1 - term2 + term3 - term4)
        scal = np.einsum("i...,ii...->...", self.gi, rc)
        return rc, scal

    # -- gradients, Hessians, Laplacians -------------------------------

    def grad_comps(self, s: np.ndarray) -> np.ndarray:
        """Covariant components (partial_i s), shape (n,*grid)."""
        return np.stack([self.backend.deriv(s, i) for i in range(self.n)])

    def grad_vec(self, s: np.ndarray) -> np.ndarray:
        """Contravariant gradient g^{ii} partial_i s."""
        return self.gi * self.grad_comps(s)

    def inner_grad(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """<grad a, grad b> pointwise."""
        da, db = self.grad_comps(a), self.grad_comps(b)
        return np.einsum("i...,i...,i...->...", self.gi, da, db)

    def hessian(self, s: np.ndarray) -> np.ndarray:
        """Covariant Hessian (n,n,*grid)."""
        n = self.n
        ds = self.grad_comps(s)
        hess = np.zeros((n, n) + self.backend.grid_shape)
        for i in range(n):
            for j in range(i, n):
                val = self.backend.deriv(ds[j], i)
                hess[i, j] = val
                hess[j, i] = val
        hess -= np.einsum("kij...,k...->ij...", self.christoffels, ds)
        return sym_tensor(hess)

    def laplace(self, s: np.ndarray) -> np.ndarray:
        """Laplace-Beltrami tr grad^2 s, realized as -d* d s (exact match)."""
        ds = FormField(1, self.grad_comps(s))
        return -self.codifferential(ds).comps[0]

    # -- exterior calculus ---------------------------------------------

    def exterior_d_scalar(self, s: np.ndarray) -> FormField:
        return FormField(1, self.grad_comps(s))

    def exterior_d(self, w: FormField) -> FormField:
        """Discrete exterior derivative; d(d(.)) vanishes to round-off."""
        n, k = self.n, w.degree
        if k >= n:
            raise UnsupportedDegree(f"d of a degree-{k} form on a {n}-manifold")
        out_idx = form_indices(n, k + 1)
        in_pos = {idx: p for p, idx in enumerate(form_indices(n, k))}
        out = np.zeros((len(out_idx),) + self.backend.grid_shape)
        if self.backend.kind == HOMOGENEOUS3:
            C = self.backend.structure
            lut = component_lookup(n, k) if k > 0 else None
            for J_pos, J in enumerate(out_idx):
                acc = 0.0
                for p in range(len(J)):
                    for q in range(p + 1, len(J)):
                        rest = J[:p] + J[p + 1:q] + J[q + 1:]
                        for m in range(n):
                            cval = C[m, J[p], J[q]]
                            if cval == 0.0 or m in rest:
                                continue
                            if k == 0:
                                continue  # d of constants vanishes
                            sign, slot = lut[(m,) + rest]
                            acc = acc + ((-1) ** (p + q)) * cval * sign * w.comps[slot]
                out[J_pos] = acc
            return FormField(k + 1, out)
        for J_pos, J in enumerate(out_idx):
            for m, j in enumerate(J):
                rest = J[:m] + J[m + 1:]
                out[J_pos] += ((-1) ** m) * self.backend.deriv(w.comps[in_pos[rest]], j)
        return FormField(k + 1, out)

    def _d_transpose(self, eta: np.ndarray, k: int) -> np.ndarray:
        """ell^2 transpose of the raw component map d: degree k-1 -> k."""
        n = self.n
        in_idx = form_indices(n, k - 1)
        out_pos = {idx: p for p, idx in enumerate(form_indices(n, k))}
        res = np.zeros((len(in_idx),) + self.backend.grid_shape)
        if self.backend.kind == HOMOGENEOUS3:
            D = self._homogeneous_d_matrix(k - 1)
            return D.T @ eta
        for I_pos, I in enumerate(in_idx):
            for j in range(n):
                if j in I:
                    continue
                J = tuple(sorted(I + (j,)))
                m = J.index(j)
                res[I_pos] += ((-1) ** m) * (-self.backend.deriv(eta[out_pos[J]], j))
        return res

    def _homogeneous_d_matrix(self, k: int) -> np.ndarray:
        """Matrix of the algebraic d on invariant k-forms."""
        if self._d_mats is None:
            self._d_mats = {}
        if k not in self._d_mats:
            n = self.n
            nc_in, nc_out = n_components(n, k), n_components(n, k + 1)
            D = np.zeros((nc_out, nc_in))
            for c in range(nc_in):
                basis = FormField(k, np.zeros(nc_in))
                basis.comps[c] = 1.0
                D[:, c] = self.exterior_d(basis).comps
            self._d_mats[k] = D
        return self._d_mats[k]

    def form_inv_factors(self, k: int) -> np.ndarray:
        """prod_{i in I} g^{ii} per component, shape (ncomp,*grid)."""
        idx = form_indices(self.n, k)
        out = np.ones((len(idx),) + self.backend.grid_shape)
        for p, I in enumerate(idx):
            for i in I:
                out[p] = out[p] * self.gi[i]
        return out

    def form_mass_density(self, k: int) -> np.ndarray:
        """Quadrature density per component for the adjointness pairing.

        The pairing sums over sorted multi-indices only (no k! multiplicity);
        this is the unique choice whose discrete adjoint reproduces the
        smooth codifferential -div(first slot) and hence the torsion Bianchi
        identities.  Full-contraction norms carry the k! separately.
        """
        return self.form_inv_factors(k) * self.sqrtg

    def form_dot(self, a: FormField, b: FormField) -> np.ndarray:
        """Pairing density: sum over sorted components with raised indices."""
        if a.degree != b.degree:
            raise UnsupportedDegree("inner product needs equal degrees")
        fac = self.form_inv_factors(a.degree)
        return np.einsum("c...,c...,c...->...", fac, a.comps, b.comps)

    def form_inner_pointwise(self, a: FormField, b: FormField) -> np.ndarray:
        """Full contraction a_{I} b^{I} over all index orderings (k! included)."""
        return factorial(a.degree) * self.form_dot(a, b)

    def form_norm2(self, a: FormField) -> np.ndarray:
        """|a|^2 as a full contraction, so tr_g h_square(H) = |H|^2."""
        return self.form_inner_pointwise(a, a)

    def form_pairing_global(self, a: FormField, b: FormField) -> float:
        """The dV_g quadrature pairing under which d* is the exact adjoint."""
        return float(np.sum(self.form_dot(a, b) * self.sqrtg)
                     * self.backend.cell_volume)

    def codifferential(self, w: FormField) -> FormField:
        """Exact discrete adjoint of d under the dV_g pairing, degree k -> k-1."""
        k = w.degree
        if k == 0:
            raise UnsupportedDegree("codifferential undefined on 0-forms")
        weighted = w.comps * self.form_mass_density(k)
        raw = self._d_transpose(weighted, k)
        return FormField(k - 1, raw / self.form_mass_density(k - 1))

    def hodge_laplacian(self, w: FormField) -> FormField:
        """lap_d = -(d d* + d* d); agrees with Laplace-Beltrami on degree 0."""
        k = w.degree
        out = FormField.zero(self.backend, k)
        if k > 0:
            out = out + self.exterior_d(self.codifferential(w)) * (-1.0)
        if k < self.n:
            out = out + self.codifferential(self.exterior_d(w)) * (-1.0)
        return out

    def d_sup_norm(self, w: FormField) -> float:
        """sup-norm of the exterior derivative; 0 for top-degree forms."""
        if w.degree >= self.n:
            return 0.0
        return self.exterior_d(w).sup_norm()

    def divergence_oneform(self, a: FormField) -> np.ndarray:
        """div alpha = tr_g grad alpha = -d* alpha."""
        return -self.codifferential(a).comps[0]

    # -- torsion contractions -------------------------------------------

    def h_square(self, H: FormField) -> np.ndarray:
        """H2(X,Y) = <i_X H, i_Y H> as a symmetric tensor (n,n,*grid)."""
        n, k = self.n, H.degree
        if not 1 <= k <= n:
            raise UnsupportedDegree(f"h_square needs degree 1..{n}, got {k}")
        lut = component_lookup(n, k)
        out = np.zeros((n, n) + self.backend.grid_shape)
        fac = factorial(k - 1)
        for A in form_indices(n, k - 1):
            gA = np.ones(self.backend.grid_shape)
            for a in A:
                gA = gA * self.gi[a]
            for i in range(n):
                if i in A:
                    continue
                si, ci = lut[(i,) + A]
                for j in range(i, n):
                    if j in A:
                        continue
                    sj, cj = lut[(j,) + A]
                    out[i, j] += fac * si * sj * H.comps[ci] * H.comps[cj] * gA
        for i in range(n):
            for j in range(i + 1, n):
                out[j, i] = out[i, j]
        return out

    def interior_product(self, xvec: np.ndarray, H: FormField) -> FormField:
        """i_X H for a contravariant vector X, shape (n,*grid)."""
        n, k = self.n, H.degree
        if k == 0:
            raise UnsupportedDegree("cannot contract a 0-form")
        lut = component_lookup(n, k)
        out_idx = form_indices(n, k - 1)
        out = np.zeros((len(out_idx),) + self.backend.grid_shape)
        for B_pos, B in enumerate(out_idx):
            for a in range(n):
                if a in B:
                    continue
                sign, slot = lut[(a,) + B]
                out[B_pos] += sign * xvec[a] * H.comps[slot]
        return FormField(k - 1, out)

    def covariant_deriv_oneform(self, a: FormField) -> np.ndarray:
        """grad alpha with components nabla_i alpha_j, shape (n,n,*grid)."""
        n = self.n
        da = np.zeros((n, n) + self.backend.grid_shape)
        for i in range(n):
            for j in range(n):
                da[i, j] = self.backend.deriv(a.comps[j], i)
        da -= np.einsum("kij...,k...->ij...", self.christoffels, a.comps)
        return da

    def lie_metric(self, a: FormField) -> np.ndarray:
        """L_{alpha^sharp} g = nabla_i alpha_j + nabla_j alpha_i."""
        da = self.covariant_deriv_oneform(a)
        return da + np.swapaxes(da, 0, 1)

    def sym_grad_oneform(self, a: FormField) -> np.ndarray:
        """Symmetric part of grad alpha; equals the Hessian when alpha = d phi."""
        return 0.5 * self.lie_metric(a)

    # -- tensor algebra ---------------------------------------------------

    def trace_tensor(self, S: np.ndarray) -> np.ndarray:
        return np.einsum("i...,ii...->...", self.gi, S)

    def tensor_norm2(self, S: np.ndarray) -> np.ndarray:
        return np.einsum("i...,j...,ij...,ij...->...", self.gi, self.gi, S, S)

    def metric_tensor(self) -> np.ndarray:
        """The metric itself as a (n,n,*grid) tensor."""
        n = self.n
        g = np.zeros((n, n) + self.backend.grid_shape)
        for i in range(n):
            g[i, i] = self.gd[i]
        return g

    # -- quadrature --------------------------------------------------------

    def weighted_integral(self, s: np.ndarray, w) -> float:
        """integral of s e^{-w} dV_g by the backend quadrature."""
        wt = np.exp(-np.asarray(w, dtype=float))
        return float(np.sum(s * wt * self.sqrtg) * self.backend.cell_volume)

    def integral(self, s: np.ndarray) -> float:
        return float(np.sum(s * self.sqrtg) * self.backend.cell_volume)

    def volume(self) -> float:
        return float(np.sum(self.sqrtg) * self.backend.cell_volume)


# -- weighted curvature combinations ---------------------------------------

def bakry_emery_parts(geo: Geometry, forms: dict, w) -> tuple:
    """Pieces of the twisted Bakry-Emery curvature for weight w.

    ``forms`` maps degree -> closed FormField (a single degree-3 entry in the
    standard torsion case).  Returns (sym, bforms, scal) with

        sym    = Rc - (1/4) sum_k H_k^2 + hess(w)            (symmetric part)
        bforms = {k: d* H_k + i_{grad w} H_k}                ((k-1)-form parts)
        scal   = R - (1/4) sum_k |H_k|^2/k + 2 lap w - |grad w|^2
    """
    rc, R = geo.ricci()
    w = np.asarray(w, dtype=float)
    h2 = np.zeros_like(rc)
    scal = R + 2.0 * geo.laplace(w) - geo.inner_grad(w, w)
    gw = geo.grad_vec(w)
    bforms = {}
    for k, Hk in forms.items():
        h2 = h2 + geo.h_square(Hk)
        scal = scal - 0.25 / k * geo.form_norm2(Hk)
        bforms[k] = geo.codifferential(Hk) + geo.interior_product(gw, Hk)
    sym = rc - 0.25 * h2 + geo.hessian(w)
    return sym, bforms, scal


def bakry_emery_norm2(geo: Geometry, sym: np.ndarray, bforms: dict,
                      shift: float = 0.0) -> np.ndarray:
    """|Rc^{H,w} - shift g|^2 with the symmetric/2-form split.

    The tensor is not symmetric; its norm is |sym - shift g|^2 plus one
    quarter of the squared form parts.  The shift only moves the symmetric
    part (used for the shrinker combination with shift = 1/(2 tau)).
    """
    S = sym - shift * geo.metric_tensor() if shift else sym
    out = geo.tensor_norm2(S)
    for bf in bforms.values():
        out = out + 0.25 * geo.form_norm2(bf)
    return out


# -- module-level convenience wrappers used by tests and the CLI ----------

def curvature(metric: MetricState, backend: Backend) -> tuple:
    """(Ricci tensor, scalar curvature) of a metric state."""
    return Geometry(backend, metric).ricci()


def h_square(H: FormField, metric: MetricState, backend: Backend) -> np.ndarray:
    return Geometry(backend, metric).h_square(H)


def weighted_integral(s, w, metric: MetricState, backend: Backend) -> float:
    return Geometry(backend, metric).weighted_integral(s, w)
