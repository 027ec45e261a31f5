"""Scaled monomial calculus and quadrature on polygons and edges.

Monomials on an element P are m_a(x, y) = X^a1 * Y^a2 with
X = (x - x_c)/h_P, Y = (y - y_c)/h_P, enumerated in graded lexicographic
order (0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .kernels import monomial_vandermonde


def multi_indices(r):
    """All multi-indices |nu| <= r in graded lex order, as an (m, 2) int array."""
    out = []
    for total in range(r + 1):
        for a in range(total, -1, -1):
            out.append((a, total - a))
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def basis_dim(r):
    """dim P_r = (r+1)(r+2)/2; r = -1 and below give 0."""
    if r < 0:
        return 0
    return (r + 1) * (r + 2) // 2


def index_of(nu):
    """Position of multi-index nu in the graded lex enumeration."""
    a, b = nu
    total = a + b
    return total * (total + 1) // 2 + (total - a)


@lru_cache(maxsize=64)
def _falling_table(n):
    # fall[k, d] = k * (k-1) * ... * (k-d+1)
    fall = np.ones((n + 1, n + 1))
    for k in range(n + 1):
        for d in range(1, n + 1):
            fall[k, d] = fall[k, d - 1] * (k - d + 1) if k - d + 1 > 0 else 0.0
    return fall


@dataclass(frozen=True)
class ScaledMonomialBasis:
    """Scaled monomial basis of P_r centered at (xc, yc) with diameter h."""

    xc: float
    yc: float
    h: float
    degree: int

    @property
    def dim(self):
        return basis_dim(self.degree)

    @property
    def exponents(self):
        return multi_indices(self.degree)

    def eval(self, points, deriv=(0, 0)):
        """D^deriv m_a at points, shape (npoints, dim).

        Each derivative order j carries the factor h^-j from the scaling.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        xs = (pts[:, 0] - self.xc) / self.h
        ys = (pts[:, 1] - self.yc) / self.h
        dx, dy = deriv
        exps = self.exponents.copy()
        fall = _falling_table(max(self.degree, dx, dy))
        coeffs = np.empty(self.dim)
        scale = self.h ** (-(dx + dy))
        for k in range(self.dim):
            a, b = exps[k]
            coeffs[k] = fall[a, dx] * fall[b, dy] * scale
            exps[k, 0] = a - dx
            exps[k, 1] = b - dy
        return monomial_vandermonde(xs, ys, exps, coeffs)

    def eval_coeffs(self, coeffs, points, deriv=(0, 0)):
        """Evaluate D^deriv of the polynomial with the given coefficients."""
        return self.eval(points, deriv) @ np.asarray(coeffs, dtype=float)


def derivative_matrix(r, deriv, h):
    """Coefficient map of D^deriv : P_r -> P_{r-|deriv|} in scaled bases.

    Returns a (dim P_{r-|deriv|}, dim P_r) matrix; each derivative order
    contributes a factor 1/h.
    """
    dx, dy = deriv
    src = multi_indices(r)
    s = r - dx - dy
    n_out = basis_dim(s)
    out = np.zeros((n_out, basis_dim(r)))
    fall = _falling_table(max(r, dx, dy, 1))
    scale = h ** (-(dx + dy))
    for k, (a, b) in enumerate(src):
        if a < dx or b < dy:
            continue
        c = fall[a, dx] * fall[b, dy] * scale
        out[index_of((a - dx, b - dy)), k] = c
    return out


def laplacian_power(r, s, h=1.0):
    """Coefficient map of Delta^s : P_r -> P_{r-2s} (factor 1/h^2 per Delta)."""
    if 2 * s > r:
        raise ValueError(f"need 2s <= r, got r={r}, s={s}")
    op = np.eye(basis_dim(r))
    deg = r
    for _ in range(s):
        lap = derivative_matrix(deg, (2, 0), h) + derivative_matrix(deg, (0, 2), h)
        op = lap @ op
        deg -= 2
    return op


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureRule:
    """Points/weights exact for polynomials of total degree <= order."""

    points: np.ndarray
    weights: np.ndarray
    order: int


@lru_cache(maxsize=64)
def segment_rule(order):
    """Gauss-Legendre rule on [0, 1] exact for degree <= order."""
    npts = max(1, (order + 2) // 2)
    x, w = np.polynomial.legendre.leggauss(npts)
    return QuadratureRule(points=(x + 1.0) / 2.0, weights=w / 2.0,
                          order=2 * npts - 1)


@lru_cache(maxsize=64)
def triangle_rule(order):
    """Duffy-collapsed tensor Gauss rule on the unit reference triangle.

    Exact for total degree <= order on {(u, v): u, v >= 0, u + v <= 1}.
    The collapse (u, v) = (x, y(1-x)) raises the x-degree by one, hence the
    extra point in that direction.
    """
    mx = max(1, (order + 3) // 2)
    my = max(1, (order + 2) // 2)
    gx, wx = np.polynomial.legendre.leggauss(mx)
    gy, wy = np.polynomial.legendre.leggauss(my)
    gx = (gx + 1.0) / 2.0
    wx = wx / 2.0
    gy = (gy + 1.0) / 2.0
    wy = wy / 2.0
    pts = np.empty((mx * my, 2))
    wts = np.empty(mx * my)
    k = 0
    for i in range(mx):
        for j in range(my):
            pts[k, 0] = gx[i]
            pts[k, 1] = gy[j] * (1.0 - gx[i])
            wts[k] = wx[i] * wy[j] * (1.0 - gx[i])
            k += 1
    return QuadratureRule(points=pts, weights=wts, order=order)


def polygon_quadrature(verts, order):
    """Fan-triangulate a star-shaped polygon from its centroid; return
    physical points and weights exact for degree <= order."""
    verts = np.asarray(verts, dtype=float)
    n = len(verts)
    cx, cy = polygon_centroid(verts)
    rule = triangle_rule(order)
    pts_all = []
    wts_all = []
    for i in range(n):
        a = verts[i]
        b = verts[(i + 1) % n]
        # affine map from reference triangle to (centroid, a, b)
        j11, j12 = a[0] - cx, b[0] - cx
        j21, j22 = a[1] - cy, b[1] - cy
        det = j11 * j22 - j12 * j21
        if det <= 0.0:
            raise ValueError("degenerate or misoriented fan sub-triangle")
        px = cx + rule.points[:, 0] * j11 + rule.points[:, 1] * j12
        py = cy + rule.points[:, 0] * j21 + rule.points[:, 1] * j22
        pts_all.append(np.column_stack([px, py]))
        wts_all.append(rule.weights * det)
    return np.vstack(pts_all), np.concatenate(wts_all)


def polygon_area(verts):
    verts = np.asarray(verts, dtype=float)
    x, y = verts[:, 0], verts[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def polygon_centroid(verts):
    verts = np.asarray(verts, dtype=float)
    x, y = verts[:, 0], verts[:, 1]
    cross = x * np.roll(y, -1) - np.roll(x, -1) * y
    area = 0.5 * np.sum(cross)
    cx = np.sum((x + np.roll(x, -1)) * cross) / (6.0 * area)
    cy = np.sum((y + np.roll(y, -1)) * cross) / (6.0 * area)
    return cx, cy


def integrate_polygon(verts, f, order):
    """Integral of f(points) over the polygon; f maps (n,2) -> (n,)."""
    pts, wts = polygon_quadrature(verts, order)
    return float(np.dot(wts, f(pts)))


def integrate_edge(p0, p1, f, order):
    """Integral of f over the segment p0 -> p1."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    rule = segment_rule(order)
    pts = p0[None, :] + rule.points[:, None] * (p1 - p0)[None, :]
    length = float(np.hypot(*(p1 - p0)))
    return float(np.dot(rule.weights, f(pts))) * length


def mass_matrix(verts, basis, degree=None, order=None):
    """H_{ab} = int_P m_a m_b for the scaled basis, optionally rectangular
    against the sub-basis of the given (lower) degree on the columns."""
    r = basis.degree
    s = r if degree is None else degree
    if order is None:
        order = r + s + 2
    pts, wts = polygon_quadrature(verts, order)
    va = basis.eval(pts)
    vb = va[:, :basis_dim(s)]
    return (va * wts[:, None]).T @ vb
