"""Weighted isoperimetric constants, radial rearrangement, and the weighted
log-Sobolev inequality on planar charts.

Regions are superlevel sets {psi >= s} on an N x N cell-centered chart
[-L, L]^2.  Each grid cell is split into four triangles through its center;
on a triangle the field is linear, so the interface is a segment and the
region polygon has exact area.  Weighted measures use the density
e^{-phi} (times e^{2u} for area and e^{u} for length on a conformal chart)
interpolated linearly over each piece.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gamma, pi

import numpy as np

from .errors import TooSmall, ZeroFunction

COLLAR_CELLS = 2


def euclidean_isoperimetric_constant(n: int) -> float:
    """c_n = n^n omega_n; the sharp Area^n >= c_n Vol^{n-1} constant."""
    omega = pi ** (n / 2.0) / gamma(n / 2.0 + 1.0)
    return float(n ** n * omega)


def ball_ratio_radial(n: int, radius: float, samples: int = 4096) -> float:
    """Perimeter^n / Volume^{n-1} of a round ball from a radial quadrature."""
    omega = pi ** (n / 2.0) / gamma(n / 2.0 + 1.0)
    r = np.linspace(0.0, radius, samples)
    vol = float(np.trapezoid(n * omega * r ** (n - 1), r))
    area = n * omega * radius ** (n - 1)
    return area ** n / vol ** (n - 1)


@dataclass
class ChartDomain:
    """Planar chart [-L, L]^2 with N x N cell-centered nodes and weight phi.

    ``u`` is an optional conformal exponent pulling the metric e^{2u} delta
    onto the chart; None means the flat metric.  Test functions must vanish
    on a two-cell boundary collar.
    """

    L: float
    N: int
    phi: np.ndarray
    u: np.ndarray | None = None
    n: int = 2

    def __post_init__(self):
        self.h = 2.0 * self.L / self.N
        axis = -self.L + (np.arange(self.N) + 0.5) * self.h
        self.xx, self.yy = np.meshgrid(axis, axis, indexing="ij")
        self.phi = np.asarray(self.phi, float) + np.zeros((self.N, self.N))
        if self.u is not None:
            self.u = np.asarray(self.u, float) + np.zeros((self.N, self.N))
        # densities for area, length, and plain volume quadrature
        self.area_density = np.exp(-self.phi + (2.0 * self.u if self.u is not None else 0.0))
        self.length_density = np.exp(-self.phi + (self.u if self.u is not None else 0.0))

    @staticmethod
    def flat(L: float, N: int) -> "ChartDomain":
        return ChartDomain(L, N, np.zeros((N, N)))

    def deriv(self, arr: np.ndarray, axis: int) -> np.ndarray:
        """Spectral derivative; valid for fields with a zero boundary collar."""
        npts = arr.shape[axis]
        k = np.fft.rfftfreq(npts, d=1.0 / npts) * (np.pi / self.L)
        mult = 1j * k
        if npts % 2 == 0:
            mult[-1] = 0.0
        spec = np.fft.rfft(arr, axis=axis)
        shape = [1] * arr.ndim
        shape[axis] = spec.shape[axis]
        spec *= mult.reshape(shape)
        return np.fft.irfft(spec, n=npts, axis=axis)

    def grad_sq_flat(self, psi: np.ndarray) -> np.ndarray:
        return self.deriv(psi, 0) ** 2 + self.deriv(psi, 1) ** 2

    def integrate(self, field: np.ndarray) -> float:
        """integral against e^{-phi} dV_g over the chart."""
        return float(np.sum(field * self.area_density) * self.h ** 2)

    def check_support(self, psi: np.ndarray):
        c = COLLAR_CELLS
        border = np.concatenate([
            psi[:c].ravel(), psi[-c:].ravel(), psi[:, :c].ravel(), psi[:, -c:].ravel()])
        if np.max(np.abs(border)) > 1e-12 * max(1.0, float(np.max(np.abs(psi)))):
            raise ZeroFunction(
                "test function must vanish on the boundary collar")


class _Triangulation:
    """Per-chart triangle decomposition reused across thresholds."""

    def __init__(self, dom: ChartDomain, psi: np.ndarray):
        h = dom.h
        v = np.asarray(psi, float)
        ad, ld = dom.area_density, dom.length_density
        vc = 0.25 * (v[:-1, :-1] + v[1:, :-1] + v[1:, 1:] + v[:-1, 1:])
        adc = 0.25 * (ad[:-1, :-1] + ad[1:, :-1] + ad[1:, 1:] + ad[:-1, 1:])
        ldc = 0.25 * (ld[:-1, :-1] + ld[1:, :-1] + ld[1:, 1:] + ld[:-1, 1:])
        corner = {
            "00": (v[:-1, :-1], ad[:-1, :-1], ld[:-1, :-1], (0.0, 0.0)),
            "10": (v[1:, :-1], ad[1:, :-1], ld[1:, :-1], (h, 0.0)),
            "11": (v[1:, 1:], ad[1:, 1:], ld[1:, 1:], (h, h)),
            "01": (v[:-1, 1:], ad[:-1, 1:], ld[:-1, 1:], (0.0, h)),
        }
        center = (vc, adc, ldc, (h / 2.0, h / 2.0))
        tris = [("00", "10"), ("10", "11"), ("11", "01"), ("01", "00")]
        vals, areaw, lenw, pos = [], [], [], []
        for a, b in tris:
            for item, store in ((0, vals), (1, areaw), (2, lenw)):
                store.append(np.stack([corner[a][item].ravel(),
                                       corner[b][item].ravel(),
                                       center[item].ravel()]))
            pa, pb, pc = corner[a][3], corner[b][3], center[3]
            pos.append(np.array([pa, pb, pc]))
        # shapes: (ntris=4, 3, ncells)
        self.vals = np.stack(vals)
        self.areaw = np.stack(areaw)
        self.lenw = np.stack(lenw)
        self.pos = np.stack(pos)  # (4, 3, 2) local vertex offsets
        self.tri_area = h * h / 4.0

    def measures(self, s: float) -> tuple:
        """(weighted volume, weighted perimeter, raw area) of {psi >= s}."""
        vol = 0.0
        per = 0.0
        raw = 0.0
        for it in range(4):
            v = self.vals[it]
            aw = self.areaw[it]
            lw = self.lenw[it]
            p = self.pos[it]
            above = v >= s
            nab = above.sum(axis=0)
            full = nab == 3
            vol += self.tri_area * np.sum(np.mean(aw[:, full], axis=0))
            raw += self.tri_area * np.count_nonzero(full)
            for d in range(3):
                e1, e2 = (d + 1) % 3, (d + 2) % 3
                solo = (nab == 1) & above[d]
                anti = (nab == 2) & ~above[d]
                for mask, complement in ((solo, False), (anti, True)):
                    if not np.any(mask):
                        continue
                    vd, v1, v2 = v[d][mask], v[e1][mask], v[e2][mask]
                    t1 = (vd - s) / (vd - v1)
                    t2 = (vd - s) / (vd - v2)
                    # crossing points along the edges from vertex d
                    q1 = p[d] + np.outer(t1, p[e1] - p[d])
                    q2 = p[d] + np.outer(t2, p[e2] - p[d])
                    seg = np.linalg.norm(q1 - q2, axis=1)
                    lmid = (lw[d][mask]
                            + 0.5 * t1 * (lw[e1][mask] - lw[d][mask])
                            + 0.5 * t2 * (lw[e2][mask] - lw[d][mask]))
                    per += float(np.sum(seg * lmid))
                    ad_, a1_, a2_ = aw[d][mask], aw[e1][mask], aw[e2][mask]
                    wd1 = ad_ + t1 * (a1_ - ad_)
                    wd2 = ad_ + t2 * (a2_ - ad_)
                    small = self.tri_area * t1 * t2
                    small_w = small * (ad_ + wd1 + wd2) / 3.0
                    if complement:
                        total_w = self.tri_area * (ad_ + a1_ + a2_) / 3.0
                        vol += float(np.sum(total_w - small_w))
                        raw += self.tri_area * np.count_nonzero(mask) \
                            - float(np.sum(small))
                    else:
                        vol += float(np.sum(small_w))
                        raw += float(np.sum(small))
        return vol, per, raw


def region_measures(dom: ChartDomain, psi: np.ndarray, s: float) -> tuple:
    """(weighted volume, weighted perimeter) of {psi >= s}."""
    tri = _Triangulation(dom, psi)
    vol, per, _ = tri.measures(s)
    return vol, per


def weighted_volume(dom: ChartDomain, psi: np.ndarray, s: float) -> float:
    return region_measures(dom, psi, s)[0]


def weighted_perimeter(dom: ChartDomain, psi: np.ndarray, s: float) -> float:
    return region_measures(dom, psi, s)[1]


def iso_ratio(dom: ChartDomain, psi: np.ndarray, s: float,
              n: int | None = None) -> float:
    """Perimeter^n / Volume^{n-1} of one superlevel set."""
    n = dom.n if n is None else n
    tri = _Triangulation(dom, psi)
    vol, per, raw = tri.measures(s)
    if raw < 4.0 * dom.h ** 2:
        raise TooSmall(f"region area {raw:.3e} below four cells")
    return per ** n / vol ** (n - 1)


class LevelSetFamily:
    """Nested superlevel sets of a nonnegative field with their measures."""

    def __init__(self, dom: ChartDomain, psi: np.ndarray,
                 thresholds: np.ndarray | int = 64):
        psi = np.asarray(psi, float)
        if np.max(psi) <= 0.0:
            raise ZeroFunction("level sets need a nontrivial nonnegative field")
        if isinstance(thresholds, (int, np.integer)):
            pos = psi[psi > 0]
            qs = np.linspace(0.02, 0.98, int(thresholds))
            thresholds = np.unique(np.quantile(pos, qs))
        self.dom = dom
        self.psi = psi
        self.thresholds = np.sort(np.asarray(thresholds, float))
        tri = _Triangulation(dom, psi)
        vols, pers, raws = [], [], []
        for s in self.thresholds:
            v, p, r = tri.measures(float(s))
            vols.append(v)
            pers.append(p)
            raws.append(r)
        self.volumes = np.array(vols)
        self.perimeters = np.array(pers)
        self.raw_areas = np.array(raws)

    def iso_bound(self, n: int | None = None) -> float:
        """min over thresholds of the isoperimetric ratio (degenerates skipped)."""
        n = self.dom.n if n is None else n
        good = self.raw_areas >= 4.0 * self.dom.h ** 2
        if not np.any(good):
            raise TooSmall("all level sets degenerate")
        ratios = self.perimeters[good] ** n / self.volumes[good] ** (n - 1)
        return float(np.min(ratios))


def level_set_iso_bound(dom: ChartDomain, psi: np.ndarray,
                        thresholds=64) -> float:
    """The isoperimetric information consumed by the symmetrization argument."""
    dom.check_support(psi)
    return LevelSetFamily(dom, psi, thresholds).iso_bound()


@dataclass
class RadialProfile:
    """Matched-volume radial rearrangement h on R^n (n = 2)."""

    levels: np.ndarray  # decreasing level values s
    radii: np.ndarray   # increasing radii rho(s) with Vol{h >= s} = F(s)
    r0: float

    def value(self, r: np.ndarray) -> np.ndarray:
        """h(r) by inverting the radius-of-level map."""
        r = np.asarray(r, float)
        out = np.interp(r, self.radii, self.levels)
        return np.where(r >= self.r0, 0.0, out)

    def integral_sq(self) -> float:
        """int h^2 dV over R^2 via the layer-cake measure."""
        F = np.pi * self.radii ** 2
        s = self.levels
        return float(-np.trapezoid(2.0 * s * F, s))

    def integral_sq_log(self) -> float:
        """int h^2 log h^2 dV via the layer-cake measure."""
        s = self.levels
        lam = np.where(s > 0, np.log(np.maximum(s, 1e-300) ** 2) * s ** 2, 0.0)
        dlam = np.gradient(lam, s)
        F = np.pi * self.radii ** 2
        return float(-np.trapezoid(dlam * F, s))

    def grad_sq(self) -> float:
        """int |grad h|^2 dV from the piecewise-linear radial profile."""
        out = 0.0
        for i in range(len(self.levels) - 1):
            ds = self.levels[i] - self.levels[i + 1]
            dr = self.radii[i + 1] - self.radii[i]
            if dr <= 0:
                continue
            rbar = 0.5 * (self.radii[i] + self.radii[i + 1])
            out += 2.0 * np.pi * rbar * ds * ds / dr
        return float(out)


def symmetrize(dom: ChartDomain, psi: np.ndarray, levels: int = 256) -> RadialProfile:
    """Volume-matched rotationally invariant rearrangement of psi.

    The support radius r0 matches the weighted support volume via
    omega_n r0^n, and every superlevel volume is preserved.
    """
    psi = np.asarray(psi, float)
    dom.check_support(psi)
    if np.max(psi) <= 0:
        raise ZeroFunction("cannot rearrange the zero function")
    pos = psi[psi > 0]
    smax = float(np.max(pos))
    ss = np.linspace(smax * (1 - 1e-6), smax * 1e-4, levels)
    tri = _Triangulation(dom, psi)
    F = np.array([tri.measures(float(s))[0] for s in ss])
    F = np.maximum.accumulate(F)  # enforce monotone volumes against noise
    support = tri.measures(smax * 1e-6)[0]
    r0 = np.sqrt(support / np.pi)
    radii = np.sqrt(F / np.pi)
    return RadialProfile(levels=ss, radii=radii, r0=float(r0))


def log_sobolev_deficit(dom: ChartDomain, psi: np.ndarray, Lambda: float) -> float:
    """LHS - RHS of the weighted logarithmic Sobolev inequality.

    Inequality (psi-squared form, n = dom.n):

        int (2 |grad psi|_g^2 - psi^2 log psi^2) e^{-phi} dV_g
          + log(S) S  >=  (n/2 log(2 pi) + n + Lambda) S,

    with S = int psi^2 e^{-phi} dV_g.  In two dimensions the gradient term
    is conformally invariant, so it is integrated against the flat measure.
    """
    psi = np.asarray(psi, float)
    if not np.any(psi):
        raise ZeroFunction("deficit undefined for the zero function")
    dom.check_support(psi)
    S = dom.integrate(psi ** 2)
    grad_term = float(np.sum(2.0 * dom.grad_sq_flat(psi) * np.exp(-dom.phi))
                      * dom.h ** 2)
    p2 = psi ** 2
    ent = dom.integrate(np.where(p2 > 0, -p2 * np.log(np.maximum(p2, 1e-300)), 0.0))
    n = dom.n
    lhs = grad_term + ent + np.log(S) * S
    rhs = (0.5 * n * np.log(2.0 * np.pi) + n + Lambda) * S
    return float(lhs - rhs)


def log_sobolev_deficit_density_form(dom: ChartDomain, u: np.ndarray,
                                     Lambda: float) -> float:
    """Deficit in the density form for u = (2 pi)^{-n/2} e^{-f} of unit mass.

        int (1/2 |grad f|^2 + f - n) u e^{-phi} dV_g - Lambda.

    An independent code path from the psi-squared form; the two agree after
    the substitution psi^2 = u * S up to round-off.
    """
    u = np.asarray(u, float)
    if np.max(u) <= 0:
        raise ZeroFunction("density must be nontrivial")
    n = dom.n
    umax = float(np.max(u))
    mask = u > 1e-13 * umax
    uf = np.maximum(u, 1e-300)
    f = -np.log(uf) - 0.5 * n * np.log(2.0 * np.pi)
    gu2 = dom.grad_sq_flat(u)
    # (1/2)|grad f|^2 u = (1/2)|grad u|^2 / u, conformally invariant in 2d
    grad_term = float(np.sum(np.where(mask, 0.5 * gu2 / uf, 0.0)
                             * np.exp(-dom.phi)) * dom.h ** 2)
    rest = dom.integrate(np.where(mask, (f - n) * u, 0.0))
    return grad_term + rest - Lambda


def coarea_reconstruction_error(dom: ChartDomain, psi: np.ndarray,
                                t: float, smax: float | None = None,
                                levels: int = 400) -> float:
    """Relative mismatch of F(t) against its co-area reconstruction.

    F(t) = int_t^inf int_{psi = s} |grad psi|^{-1} e^{-phi} dA ds, realized
    by quadrature of the weighted perimeter divided by the interface
    gradient magnitude.
    """
    psi = np.asarray(psi, float)
    smax = float(np.max(psi)) if smax is None else smax
    ss = np.linspace(t, smax * (1 - 1e-4), levels)
    gmag = np.sqrt(np.maximum(dom.grad_sq_flat(psi), 1e-300))
    if dom.u is not None:
        gmag = gmag * np.exp(-dom.u)  # |grad psi|_g on the conformal chart
    tri_g = _Triangulation(dom, psi)
    # perimeter weighted additionally by 1/|grad psi|: fold into length density
    dom_mod = ChartDomain(dom.L, dom.N, dom.phi, dom.u)
    dom_mod.length_density = dom.length_density / gmag
    tri = _Triangulation(dom_mod, psi)
    integrand = np.array([tri.measures(float(s))[1] for s in ss])
    recon = float(np.trapezoid(integrand, ss))
    direct = tri_g.measures(t)[0]
    return abs(recon - direct) / direct
