"""Error measurement against the manufactured solution and EOC fits.

The benchmark solution on the unit square is
    u(x, y) = (1-x)^2 x^2 (1-y)^2 y^2,
which vanishes on the boundary together with its normal derivative; the
load is -Lap(u) for the Poisson problem and Lap^2(u) for the biharmonic
problem.  Virtual solutions are only accessible through their elementwise
polynomial projections, so every norm below compares u with Pi_r u_h.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import poly

# 1D factor t^2 (1-t)^2 and its derivatives, highest power first
_X = np.array([1.0, -2.0, 1.0, 0.0, 0.0])
_DX = [np.polyder(np.poly1d(_X), m) for m in range(5)]


@dataclass(frozen=True)
class ExactSolution:
    """Closed-form manufactured solution with derivatives of any order."""

    def deriv(self, pts, d=(0, 0)):
        pts = np.atleast_2d(pts)
        a, b = d
        if a > 4 or b > 4:
            return np.zeros(len(pts))
        return _DX[a](pts[:, 0]) * _DX[b](pts[:, 1])

    def __call__(self, pts):
        return self.deriv(pts, (0, 0))

    def gradient(self, pts):
        return np.column_stack([self.deriv(pts, (1, 0)),
                                self.deriv(pts, (0, 1))])

    def laplacian(self, pts):
        return self.deriv(pts, (2, 0)) + self.deriv(pts, (0, 2))

    def bilaplacian(self, pts):
        return self.deriv(pts, (4, 0)) + 2.0 * self.deriv(pts, (2, 2)) + \
            self.deriv(pts, (0, 4))

    def load(self, p1):
        if p1 == 1:
            return lambda pts: -self.laplacian(pts)
        if p1 == 2:
            return self.bilaplacian
        raise ValueError("p1 must be 1 or 2")


def _element_coeffs(factory, gmap, elem, x):
    ls, pack, _ = factory.build(elem)
    gids, signs = gmap.element_dofs(ls)
    return ls, pack.pi_star @ (x[gids] * signs)


def energy_error(mesh, factory, gmap, x, exact, p1):
    """( sum_P |u - Pi_r u_h|^2_{p1,P} )^{1/2}: the H^1 seminorm of the
    error for p1 = 1, the full-Hessian H^2 seminorm for p1 = 2."""
    total = 0.0
    order = 2 * gmap.tup.r + 4
    for elem in mesh.elements:
        ls, c = _element_coeffs(factory, gmap, elem, x)
        pts, wts = poly.polygon_quadrature(ls.verts, order)
        if p1 == 1:
            ex = ls.basis.eval(pts, (1, 0)) @ c - exact.deriv(pts, (1, 0))
            ey = ls.basis.eval(pts, (0, 1)) @ c - exact.deriv(pts, (0, 1))
            total += float(wts @ (ex * ex + ey * ey))
        else:
            exx = ls.basis.eval(pts, (2, 0)) @ c - exact.deriv(pts, (2, 0))
            exy = ls.basis.eval(pts, (1, 1)) @ c - exact.deriv(pts, (1, 1))
            eyy = ls.basis.eval(pts, (0, 2)) @ c - exact.deriv(pts, (0, 2))
            total += float(wts @ (exx * exx + 2.0 * exy * exy + eyy * eyy))
    return np.sqrt(total)


def l2_error(mesh, factory, gmap, x, exact):
    total = 0.0
    order = 2 * gmap.tup.r + 4
    for elem in mesh.elements:
        ls, c = _element_coeffs(factory, gmap, elem, x)
        pts, wts = poly.polygon_quadrature(ls.verts, order)
        e = ls.basis.eval(pts) @ c - exact(pts)
        total += float(wts @ (e * e))
    return np.sqrt(total)


def linf_error(mesh, factory, gmap, x, exact):
    """Max of |u - Pi_r u_h| over all element quadrature points and
    vertices (the sampling is part of the reported number)."""
    worst = 0.0
    order = 2 * gmap.tup.r + 4
    for elem in mesh.elements:
        ls, c = _element_coeffs(factory, gmap, elem, x)
        pts, _ = poly.polygon_quadrature(ls.verts, order)
        pts = np.vstack([pts, ls.verts])
        e = ls.basis.eval(pts) @ c - exact(pts)
        worst = max(worst, float(np.abs(e).max()))
    return worst


# ---------------------------------------------------------------------------
# convergence and growth fits
# ---------------------------------------------------------------------------

@dataclass
class EocTable:
    rates: list
    slope: float


def eoc(errors, hs):
    """Pairwise rates log(e_i/e_{i+1})/log(h_i/h_{i+1}) and the
    least-squares slope of log(err) against log(h)."""
    errors = np.asarray(errors, dtype=float)
    hs = np.asarray(hs, dtype=float)
    if len(errors) != len(hs) or len(errors) < 2:
        raise ValueError("need at least two levels")
    good = errors > 0
    if not np.all(good):
        warnings.warn("nonpositive errors excluded from the EOC fit")
    rates = []
    for i in range(len(errors) - 1):
        if good[i] and good[i + 1]:
            rates.append(float(np.log(errors[i] / errors[i + 1]) /
                               np.log(hs[i] / hs[i + 1])))
        else:
            rates.append(np.nan)
    le, lh = np.log(errors[good]), np.log(hs[good])
    slope = float(np.polyfit(lh, le, 1)[0]) if good.sum() >= 2 else np.nan
    return EocTable(rates=rates, slope=slope)


def growth_fit(kappas, hs):
    """Least-squares slope of log(kappa) against log(1/h)."""
    kappas = np.asarray(kappas, dtype=float)
    hs = np.asarray(hs, dtype=float)
    good = np.isfinite(kappas) & (kappas > 0)
    if good.sum() < 2:
        return np.nan
    return float(np.polyfit(np.log(1.0 / hs[good]), np.log(kappas[good]),
                            1)[0])


# ---------------------------------------------------------------------------
# experiment report rows
# ---------------------------------------------------------------------------

@dataclass
class LevelResult:
    family: str
    one_over_h: int
    n_elems: int
    n_dofs: int
    stab_u: str
    stab_alpha: str
    energy_err: float
    second_err: float          # L2 (Poisson) or Linf (biharmonic)
    cond_est: float            # nan when unavailable
    cg_iters: int


@dataclass
class ErrorReport:
    problem: str               # "poisson" | "biharmonic"
    levels: list = field(default_factory=list)

    @property
    def second_err_name(self):
        return "l2_err" if self.problem == "poisson" else "linf_err"

    def hs(self):
        return np.array([1.0 / lv.one_over_h for lv in self.levels])

    def energy_eoc(self):
        return eoc([lv.energy_err for lv in self.levels], self.hs())

    def second_eoc(self):
        return eoc([lv.second_err for lv in self.levels], self.hs())

    def cond_slope(self):
        return growth_fit([lv.cond_est for lv in self.levels], self.hs())
