"""Per-element projector matrices.

D collects the DOF values of the scaled monomial basis, G the bilinear form
on monomials, and B expresses a^P(v, m_a) through the DOF values of v via
integration by parts.  The elliptic projector Pi* maps DOF values to the
coefficients of the a^P-orthogonal polynomial projection, with the kernel
fixed by vertex-average conditions on D^nu for |nu| <= p1 - 1.
"""

from dataclasses import dataclass
from math import comb

import numpy as np
import scipy.linalg

from . import poly
from .space import shifted_legendre


def build_D(ls):
    """DOF-of-monomial matrix, N_dof x dim P_r."""
    tup = ls.tup
    basis = ls.basis
    order = 2 * tup.r + 2
    D = np.empty((ls.n_dofs, basis.dim))
    i = 0
    for loc in range(len(ls.verts)):
        pt = ls.verts[loc][None, :]
        for nu in ls.nus:
            D[i] = ls.h_v[loc] ** sum(nu) * basis.eval(pt, nu)[0]
            i += 1
    for loc in range(len(ls.edges)):
        xi, _, wts = ls.edge_points(loc, order)
        for j in range(tup.p2):
            if tup.d_edge[j] < 0:
                continue
            dnj = ls.normal_deriv_rows(loc, j, order)
            q = shifted_legendre(xi, tup.d_edge[j])
            for m in range(tup.d_edge[j] + 1):
                D[i] = ls.h_e[loc] ** (j - 1) * \
                    (wts * q[:, m]) @ dnj
                i += 1
    if ls.betas:
        pts, wts = poly.polygon_quadrature(ls.verts, order)
        vb = ls.basis.eval(pts)
        for beta in ls.betas:
            col = vb[:, poly.index_of(beta)]
            D[i] = ls.h_P ** (-2) * (wts * col) @ vb
            i += 1
    return D


def build_G(ls, p1, order=None):
    """Gram matrix G_{ab} = a^P_{p1}(m_a, m_b) by quadrature.

    p1 = 1 uses the gradient form; p1 = 2 uses the full Hessian form
    int_P D2(m_a) : D2(m_b), whose kernel on P_r is exactly the degree-<=1
    polynomials (the Laplacian-squared form would leave every harmonic
    polynomial in the kernel and the elliptic projector undetermined).
    """
    r = ls.tup.r
    if order is None:
        order = 2 * r + 2
    pts, wts = poly.polygon_quadrature(ls.verts, order)
    if p1 == 1:
        gx = ls.basis.eval(pts, (1, 0))
        gy = ls.basis.eval(pts, (0, 1))
        return (gx * wts[:, None]).T @ gx + (gy * wts[:, None]).T @ gy
    if p1 == 2:
        hxx = ls.basis.eval(pts, (2, 0))
        hxy = ls.basis.eval(pts, (1, 1))
        hyy = ls.basis.eval(pts, (0, 2))
        return (hxx * wts[:, None]).T @ hxx + \
            2.0 * (hxy * wts[:, None]).T @ hxy + \
            (hyy * wts[:, None]).T @ hyy
    raise ValueError("p1 must be 1 or 2")


def build_B(ls, p1, order=None):
    """Integration-by-parts matrix: row a gives a^P(v, m_a) as a linear
    functional of the DOF values of v.

    p1 = 1:  -int_P v Lap(m_a) + sum_e int_e (trace v) dn(m_a)

    p1 = 2 (Hessian form):
        int_P v Lap^2(m_a)
        + sum_e int_e (n.D2(m_a).n) (trace dn v) ds
        + sum_e int_e [-dn(Lap m_a) - dt(t.D2(m_a).n)] (trace v) ds
        + sum_e [ (t.D2(m_a).n) v ]_{edge start}^{edge end}
    where the edge terms come from splitting (D2(m_a) n).grad(v) into its
    normal and tangential parts and integrating the tangential part along
    the edge; the endpoint terms use the vertex value DOFs.
    """
    tup = ls.tup
    r = tup.r
    if order is None:
        order = 2 * r + 2
    B = np.zeros((ls.basis.dim, ls.n_dofs))
    int_base = ls.n_dofs - len(ls.betas)

    if p1 == 1:
        interior_op, sign = poly.laplacian_power(r, 1, ls.h_P), -1.0
    elif p1 == 2:
        if r >= 4:
            interior_op, sign = poly.laplacian_power(r, 2, ls.h_P), 1.0
        else:
            interior_op, sign = np.zeros((0, ls.basis.dim)), 1.0
    else:
        raise ValueError("p1 must be 1 or 2")
    n_int_needed = interior_op.shape[0]
    if n_int_needed:
        assert n_int_needed <= len(ls.betas), \
            "layout lacks the interior moments required by the dofs-tuple"
        # int_P v m_beta = h_P^2 * interior DOF beta
        B[:, int_base:int_base + n_int_needed] += \
            sign * ls.h_P ** 2 * interior_op.T

    for loc in range(len(ls.edges)):
        xi, pts, wts = ls.edge_points(loc, order)
        n = ls.outward_normal(loc)
        T0 = ls.trace_matrix(loc, 0)
        L0 = shifted_legendre(xi, tup.alphas[0])
        trace0 = L0 @ T0                      # npts x N_dof values of v
        if p1 == 1:
            dn = ls.normal_deriv_rows(loc, 1, order)
            B += (dn * wts[:, None]).T @ trace0
        else:
            e = ls.edges[loc]
            t = e.tangent
            # dn(Lap m_a) at the edge points
            dn_lap = n[0] * (ls.basis.eval(pts, (3, 0)) +
                             ls.basis.eval(pts, (1, 2))) + \
                n[1] * (ls.basis.eval(pts, (2, 1)) +
                        ls.basis.eval(pts, (0, 3)))
            # n.D2.n and the tangential derivative of t.D2.n
            hxx = ls.basis.eval(pts, (2, 0))
            hxy = ls.basis.eval(pts, (1, 1))
            hyy = ls.basis.eval(pts, (0, 2))
            ndn = n[0] * n[0] * hxx + 2 * n[0] * n[1] * hxy + n[1] * n[1] * hyy
            gxx = ls.basis.eval(pts, (3, 0))
            gxy = ls.basis.eval(pts, (2, 1))
            gyx = ls.basis.eval(pts, (1, 2))
            gyy = ls.basis.eval(pts, (0, 3))
            # t.grad of W = t.D2.n  (W = t_i H_ij n_j)
            dt_tdn = \
                t[0] * (t[0] * n[0] * gxx + (t[0] * n[1] + t[1] * n[0]) * gxy
                        + t[1] * n[1] * gyx) + \
                t[1] * (t[0] * n[0] * gxy + (t[0] * n[1] + t[1] * n[0]) * gyx
                        + t[1] * n[1] * gyy)
            T1 = ls.trace_matrix(loc, 1)
            L1 = shifted_legendre(xi, tup.alphas[1])
            trace1 = L1 @ T1
            B += (ndn * wts[:, None]).T @ trace1
            B += ((-dn_lap - dt_tdn) * wts[:, None]).T @ trace0
            # endpoint terms of the tangential integration by parts
            for endpoint, es in ((e.v1, 1.0), (e.v0, -1.0)):
                pt = ls.mesh.coords[endpoint][None, :]
                wxx = ls.basis.eval(pt, (2, 0))[0]
                wxy = ls.basis.eval(pt, (1, 1))[0]
                wyy = ls.basis.eval(pt, (0, 2))[0]
                w_val = t[0] * n[0] * wxx + \
                    (t[0] * n[1] + t[1] * n[0]) * wxy + t[1] * n[1] * wyy
                loc_v = int(np.where(ls.elem.vertices == endpoint)[0][0])
                col = loc_v * tup.n_vertex_dofs + ls.nus.index((0, 0))
                B[:, col] += es * w_val
    return B


@dataclass
class ProjectorPack:
    """Elliptic projector data: Pi* maps DOF values to P_r coefficients;
    Q = D Pi* is the projector in DOF space."""

    pi_star: np.ndarray
    Q: np.ndarray
    D: np.ndarray
    G: np.ndarray
    B: np.ndarray
    kernel_dim: int


def kernel_rows_vertex(ls, p1):
    """Vertex-average kernel-fixing rows: the mean over the element's
    vertices of D^nu(Pi v) must match that of D^nu v, |nu| <= p1 - 1.
    Rows are scaled by h_P^{|nu|} to keep the system well conditioned."""
    tup = ls.tup
    nv = len(ls.verts)
    rows_G, rows_B = [], []
    for nu in (tuple(n) for n in poly.multi_indices(p1 - 1)):
        scale = ls.h_P ** sum(nu)
        rows_G.append(scale * np.mean(ls.basis.eval(ls.verts, nu), axis=0))
        row = np.zeros(ls.n_dofs)
        col_nu = ls.nus.index(nu)
        for loc in range(nv):
            col = loc * tup.n_vertex_dofs + col_nu
            row[col] = scale / (nv * ls.h_v[loc] ** sum(nu))
        rows_B.append(row)
    return rows_G, rows_B


def kernel_rows_boundary(ls, p1):
    """Boundary-average kernel-fixing rows: the mean of D^nu(Pi v) over the
    element boundary must match that of D^nu v, |nu| <= p1 - 1.  First-order
    derivatives on an edge split into the tangential derivative of the value
    trace and the normal-derivative trace."""
    tup = ls.tup
    order = 2 * tup.r + 2
    perimeter = float(np.sum(ls.h_e))
    rows_G, rows_B = [], []
    for nu in (tuple(n) for n in poly.multi_indices(p1 - 1)):
        scale = ls.h_P ** sum(nu) / perimeter
        rowG = np.zeros(ls.basis.dim)
        rowB = np.zeros(ls.n_dofs)
        for loc, e in enumerate(ls.edges):
            xi, pts, wts = ls.edge_points(loc, order)
            rowG += scale * (wts @ ls.basis.eval(pts, nu))
            T0 = ls.trace_matrix(loc, 0)
            if nu == (0, 0):
                L0 = shifted_legendre(xi, tup.alphas[0])
                rowB += scale * (wts @ (L0 @ T0))
            else:
                # D^nu v = t_nu * d(trace_0)/ds + n_nu * trace_1
                t, n = e.tangent, ls.outward_normal(loc)
                comp = 0 if nu == (1, 0) else 1
                dL0 = shifted_legendre(xi, tup.alphas[0], 1) / e.length
                L1 = shifted_legendre(xi, tup.alphas[1])
                T1 = ls.trace_matrix(loc, 1)
                rowB += scale * (wts @ (t[comp] * (dL0 @ T0)
                                        + n[comp] * (L1 @ T1)))
        rows_G.append(rowG)
        rows_B.append(rowB)
    return rows_G, rows_B


def solve_projector(D, G, B, ls, p1, kernel_fix="boundary"):
    """Solve the augmented square system for Pi*.

    The zero rows of G (monomials with |a| <= p1-1, the kernel of a^P) are
    replaced by kernel-fixing average conditions; `kernel_fix` selects the
    boundary-integral average (default) or the vertex average.
    """
    n_k = p1 * (p1 + 1) // 2
    G_aug = G.copy()
    B_aug = B.copy()
    rows_G, rows_B = (kernel_rows_boundary if kernel_fix == "boundary"
                      else kernel_rows_vertex)(ls, p1)
    for idx in range(n_k):
        G_aug[idx] = rows_G[idx]
        B_aug[idx] = rows_B[idx]
    try:
        lu = scipy.linalg.lu_factor(G_aug)
        pi_star = scipy.linalg.lu_solve(lu, B_aug)
        # one step of iterative refinement: the ill-conditioned
        # high-regularity spaces otherwise leave a cond*eps residual that
        # the stabilization amplifies by alpha_stab * ||I - Q||
        pi_star += scipy.linalg.lu_solve(lu, B_aug - G_aug @ pi_star)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise ValueError("singular projector system (degenerate element or "
                         "invalid layout)") from exc
    if not np.all(np.isfinite(pi_star)):
        raise ValueError("singular projector system (degenerate element or "
                         "invalid layout)")
    return ProjectorPack(pi_star=pi_star, Q=D @ pi_star, D=D, G=G, B=B,
                         kernel_dim=n_k)


def element_projector(ls, p1, kernel_fix="boundary"):
    """Convenience: build D, G, B and solve for the pack in one call."""
    D = build_D(ls)
    G = build_G(ls, p1)
    B = build_B(ls, p1)
    return solve_projector(D, G, B, ls, p1, kernel_fix=kernel_fix)


def l2_poly_projection(verts, g, degree, order=None):
    """Coefficients of the L2(P) projection of g onto P_degree in the scaled
    monomial basis of the polygon's own centroid/diameter frame."""
    verts = np.asarray(verts, dtype=float)
    cx, cy = poly.polygon_centroid(verts)
    h = _diameter(verts)
    basis = poly.ScaledMonomialBasis(xc=cx, yc=cy, h=h, degree=degree)
    if order is None:
        order = 2 * degree + 2
    pts, wts = poly.polygon_quadrature(verts, order)
    vb = basis.eval(pts)
    H = (vb * wts[:, None]).T @ vb
    mom = (vb * wts[:, None]).T @ g(pts)
    return np.linalg.solve(H, mom), basis


def _diameter(verts):
    d = 0.0
    for i in range(len(verts)):
        diff = verts[i + 1:] - verts[i]
        if len(diff):
            d = max(d, float(np.max(np.einsum("ij,ij->i", diff, diff))))
    return np.sqrt(d)
