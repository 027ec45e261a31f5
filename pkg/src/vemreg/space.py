"""Degrees of freedom for C^k-conforming spaces on polygons.

A space is determined by (p1, p2, r): the PDE order parameter, the global
regularity parameter (the space is C^{p2-1}), and the contained polynomial
degree.  The dofs-tuple encodes which vertex derivatives, edge
normal-derivative moments, and interior moments form the local DOF set:

* vertex: h_v^{|nu|} D^nu v(vertex), |nu| <= p2 - 1
* edge, order j: h_e^{j-1} int_e q_m d^j v/dn^j ds, deg q_m <= d_edge[j]
* interior: h_P^{-2} int_P m_beta v, |beta| <= d_interior

Edge moment test functions q_m are shifted Legendre polynomials in the
arc-length parameter of the globally oriented edge (lower vertex id first).
Element-local edge functionals use the element's outward normal; they equal
sign^j times the global ones, with sign from Element.edge_signs.
"""

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np

from . import poly


@dataclass(frozen=True)
class SpaceParams:
    p1: int
    p2: int
    r: int

    def __post_init__(self):
        if self.p1 < 1:
            raise ValueError("p1 must be >= 1")
        if self.p2 < self.p1:
            raise ValueError(f"need p2 >= p1, got p2={self.p2} < p1={self.p1}")
        if self.r < self.p2:
            raise ValueError(f"need r >= p2, got r={self.r} < p2={self.p2}")


@dataclass(frozen=True)
class DofsTuple:
    p1: int
    p2: int
    r: int
    d_vertex: tuple     # entries for j = 0..p2-1, always 0 here
    d_edge: tuple       # max moment degree of d^j v/dn^j per edge, -1 = none
    d_interior: int     # max interior moment degree, negative = none
    alphas: tuple       # trace degree of d^j v/dn^j on an edge

    @property
    def n_vertex_dofs(self):
        return self.p2 * (self.p2 + 1) // 2

    @property
    def n_edge_dofs(self):
        return sum(d + 1 for d in self.d_edge if d >= 0)

    @property
    def n_interior_dofs(self):
        return poly.basis_dim(self.d_interior)


def dofs_tuple(params):
    """Dofs-tuple for the space (p1, p2, r), covering both the r >= 2*p2-1
    branch and the lower-order branch p2 <= r < 2*p2-1.

    The edge moment degree is alpha_j - 2*(p2 - j): the trace of the j-th
    normal derivative has alpha_j + 1 coefficients, of which 2*(p2 - j) are
    fixed by endpoint derivative data.
    """
    if isinstance(params, tuple):
        params = SpaceParams(*params)
    p1, p2, r = params.p1, params.p2, params.r
    k = p2 - 1
    alphas = tuple(max(2 * p2 - 1 - 2 * j, r - j) for j in range(k + 1))
    d_edge = tuple(alphas[j] - 2 * (p2 - j) for j in range(k + 1))
    return DofsTuple(p1=p1, p2=p2, r=r, d_vertex=(0,) * (k + 1),
                     d_edge=d_edge, d_interior=r - 2 * p1, alphas=alphas)


# ---------------------------------------------------------------------------
# DOF descriptors and the local layout
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VertexDeriv:
    vertex: int          # global vertex id
    nu: tuple            # multi-index, |nu| <= p2-1
    h_v: float


@dataclass(frozen=True)
class EdgeMoment:
    edge: int            # global edge id
    j: int               # normal-derivative order
    m: int               # Legendre moment index
    sign: int            # +1 if element outward normal == global edge normal


@dataclass(frozen=True)
class InteriorMoment:
    beta: tuple


@lru_cache(maxsize=512)
def _shifted_legendre_deriv_coeffs(deg, m):
    """Legendre-series derivative scaling: returns the series coefficients
    of d^m/dxi^m for each shifted Legendre polynomial up to degree deg."""
    eye = np.eye(deg + 1)
    out = []
    for c in range(deg + 1):
        ser = eye[c]
        ser = np.polynomial.legendre.legder(ser, m) if m else ser
        out.append(ser * 2.0**m)
    return out


def shifted_legendre(xi, deg, m=0):
    """(npts, deg+1) values of d^m/dxi^m P_c(2 xi - 1), c = 0..deg."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    t = 2.0 * xi - 1.0
    cols = [np.polynomial.legendre.legval(t, ser) * np.ones_like(t)
            for ser in _shifted_legendre_deriv_coeffs(deg, m)]
    return np.column_stack(cols)


class LocalSpace:
    """Per-element view: ordered DOF descriptors plus the geometry needed to
    evaluate the DOF functionals and reconstruct edge traces."""

    def __init__(self, mesh, mets, elem, tup):
        self.mesh = mesh
        self.elem = elem
        self.tup = tup
        self.h_P = elem.diameter
        self.basis = poly.ScaledMonomialBasis(
            xc=elem.centroid[0], yc=elem.centroid[1], h=elem.diameter,
            degree=tup.r)
        self.verts = mesh.coords[elem.vertices]
        self.h_v = mets.h_vertex[elem.vertices]
        self.edges = [mesh.edges[e] for e in elem.edges]
        self.h_e = np.array([e.length for e in self.edges])
        self.nus = [tuple(nu) for nu in poly.multi_indices(tup.p2 - 1)]
        self.betas = [tuple(b) for b in poly.multi_indices(tup.d_interior)] \
            if tup.d_interior >= 0 else []
        descriptors = []
        for loc, v in enumerate(elem.vertices):
            for nu in self.nus:
                descriptors.append(VertexDeriv(vertex=int(v), nu=nu,
                                               h_v=float(self.h_v[loc])))
        for loc, e in enumerate(self.edges):
            for j in range(tup.p2):
                for m in range(tup.d_edge[j] + 1):
                    descriptors.append(EdgeMoment(
                        edge=e.id, j=j, m=m,
                        sign=int(elem.edge_signs[loc])))
        for beta in self.betas:
            descriptors.append(InteriorMoment(beta=beta))
        self.descriptors = descriptors
        self._trace_cache = {}

    @property
    def n_dofs(self):
        return len(self.descriptors)

    def edge_points(self, loc, order):
        """Edge quadrature: (xi, points, weights*h_e) on local edge `loc`,
        parametrized from the global lower-id endpoint."""
        e = self.edges[loc]
        rule = poly.segment_rule(order)
        p0 = self.mesh.coords[e.v0]
        p1 = self.mesh.coords[e.v1]
        pts = p0[None, :] + rule.points[:, None] * (p1 - p0)[None, :]
        return rule.points, pts, rule.weights * e.length

    def outward_normal(self, loc):
        e = self.edges[loc]
        return e.normal * self.elem.edge_signs[loc]

    def normal_deriv_rows(self, loc, j, order):
        """(npts, dim P_r) values of d^j m_a / dn^j along local edge `loc`,
        n = element outward normal, at the quadrature points of `order`."""
        _, pts, _ = self.edge_points(loc, order)
        n = self.outward_normal(loc)
        out = np.zeros((len(pts), self.basis.dim))
        for b in range(j + 1):
            c = comb(j, b) * n[0]**b * n[1]**(j - b)
            if c != 0.0:
                out += c * self.basis.eval(pts, (b, j - b))
        return out

    # -- DOF functionals -----------------------------------------------------

    def apply_to_function(self, deriv_eval, order=None):
        """DOF vector of a smooth function.

        deriv_eval(points, (dx, dy)) -> values of the (dx, dy) derivative.
        """
        tup = self.tup
        if order is None:
            order = 2 * tup.r + 2
        vals = np.empty(self.n_dofs)
        i = 0
        for loc in range(len(self.verts)):
            pt = self.verts[loc][None, :]
            for nu in self.nus:
                vals[i] = self.h_v[loc] ** sum(nu) * \
                    float(deriv_eval(pt, nu)[0])
                i += 1
        for loc, e in enumerate(self.edges):
            xi, pts, wts = self.edge_points(loc, order)
            n = self.outward_normal(loc)
            for j in range(tup.p2):
                if tup.d_edge[j] < 0:
                    continue
                dnj = np.zeros(len(pts))
                for b in range(j + 1):
                    c = comb(j, b) * n[0]**b * n[1]**(j - b)
                    if c != 0.0:
                        dnj += c * deriv_eval(pts, (b, j - b))
                q = shifted_legendre(xi, tup.d_edge[j])
                for m in range(tup.d_edge[j] + 1):
                    vals[i] = self.h_e[loc] ** (j - 1) * \
                        float(np.dot(wts, q[:, m] * dnj))
                    i += 1
        if self.betas:
            pts, wts = poly.polygon_quadrature(self.verts, order)
            vb = self.basis.eval(pts)
            f = deriv_eval(pts, (0, 0))
            for beta in self.betas:
                col = vb[:, poly.index_of(beta)]
                vals[i] = self.h_P ** (-2) * float(np.dot(wts, col * f))
                i += 1
        return vals

    # -- edge trace reconstruction -------------------------------------------

    def trace_matrix(self, loc, j):
        """Map local DOF values -> shifted-Legendre coefficients of the trace
        of d^j v/dn^j (outward normal) on local edge `loc`.

        The trace is the unique polynomial of degree alpha_j matching the
        endpoint tangential derivatives up to order p2-1-j (from the vertex
        DOFs) and the edge moments of order <= d_edge[j].
        """
        key = (loc, j)
        if key not in self._trace_cache:
            self._trace_cache[key] = self._build_trace_matrix(loc, j)
        return self._trace_cache[key]

    def _build_trace_matrix(self, loc, j):
        tup = self.tup
        alpha = tup.alphas[j]
        ncoef = alpha + 1
        e = self.edges[loc]
        h_e = e.length
        t = e.tangent
        n = self.outward_normal(loc)
        nloop = len(self.verts)
        # local loop positions of the global endpoints
        loc_v0 = int(np.where(self.elem.vertices == e.v0)[0][0])
        loc_v1 = int(np.where(self.elem.vertices == e.v1)[0][0])

        C = np.zeros((ncoef, ncoef))       # conditions x coefficients
        R = np.zeros((ncoef, self.n_dofs))  # conditions x dofs
        row = 0
        for xi_end, loc_v in ((0.0, loc_v0), (1.0, loc_v1)):
            for m in range(tup.p2 - j):
                # d^m/ds^m of the trace at the endpoint
                C[row] = shifted_legendre(xi_end, alpha, m)[0] / h_e**m
                # tangential/normal expansion into Cartesian vertex DOFs
                h_v = self.h_v[loc_v]
                for a in range(m + 1):
                    for b in range(j + 1):
                        c = comb(m, a) * comb(j, b) * \
                            t[0]**a * t[1]**(m - a) * n[0]**b * n[1]**(j - b)
                        if c == 0.0:
                            continue
                        nu = (a + b, (m - a) + (j - b))
                        col = loc_v * tup.n_vertex_dofs + self.nus.index(nu)
                        R[row, col] += c / h_v**(m + j)
                row += 1
        if tup.d_edge[j] >= 0:
            base = nloop * tup.n_vertex_dofs + loc * tup.n_edge_dofs + \
                sum(tup.d_edge[jj] + 1 for jj in range(j) if tup.d_edge[jj] >= 0)
            for m in range(tup.d_edge[j] + 1):
                # int_e q_m * trace ds = h_e^{1-j} * dof
                C[row, m] = h_e / (2 * m + 1)
                R[row, base + m] = h_e ** (1 - j)
                row += 1
        assert row == ncoef, "trace interpolation system is not square"
        return np.linalg.solve(C, R)


def local_layout(mesh, mets, elem, tup):
    """Ordered DOF descriptor list for one element (vertex loop order with
    graded-lex nu, then edges with (j, m), then graded-lex interior beta)."""
    return LocalSpace(mesh, mets, elem, tup).descriptors


def edge_trace(local_space, loc, j, dof_values):
    """Shifted-Legendre coefficients (degree alpha_j, global edge parameter)
    of d^j v/dn^j on local edge `loc`, n = element outward normal."""
    return local_space.trace_matrix(loc, j) @ np.asarray(dof_values)


# ---------------------------------------------------------------------------
# global numbering
# ---------------------------------------------------------------------------

class GlobalDofMap:
    """Global DOF numbering: vertex blocks, then edge blocks, then interior
    blocks.  Edge normal-moment DOFs are defined with the global edge normal;
    an element whose outward normal opposes it sees (-1)^j times the global
    value, recorded in per-element sign arrays."""

    def __init__(self, mesh, tup, mets=None):
        from .mesh import metrics

        self.mesh = mesh
        self.tup = tup
        self.mets = mets if mets is not None else metrics(mesh)
        self.nvd = tup.n_vertex_dofs
        self.ned = tup.n_edge_dofs
        self.nid = tup.n_interior_dofs
        self.vertex_offset = 0
        self.edge_offset = mesh.n_vertices * self.nvd
        self.interior_offset = self.edge_offset + mesh.n_edges * self.ned
        self.n_dofs = self.interior_offset + mesh.n_elements * self.nid
        self._edge_jm = []
        for j in range(tup.p2):
            for m in range(tup.d_edge[j] + 1):
                self._edge_jm.append((j, m))

    def vertex_dof(self, v, nu_idx):
        return self.vertex_offset + v * self.nvd + nu_idx

    def edge_dof(self, e, j, m):
        pos = self._edge_jm.index((j, m))
        return self.edge_offset + e * self.ned + pos

    def interior_dof(self, p, beta_idx):
        return self.interior_offset + p * self.nid + beta_idx

    def element_dofs(self, local_space):
        """(global ids, signs) aligned with the local descriptor order."""
        ids = np.empty(local_space.n_dofs, dtype=np.int64)
        signs = np.ones(local_space.n_dofs)
        for i, d in enumerate(local_space.descriptors):
            if isinstance(d, VertexDeriv):
                ids[i] = self.vertex_dof(d.vertex, local_space.nus.index(d.nu))
            elif isinstance(d, EdgeMoment):
                ids[i] = self.edge_dof(d.edge, d.j, d.m)
                signs[i] = float(d.sign ** d.j)
            else:
                ids[i] = self.interior_dof(local_space.elem.id,
                                           local_space.betas.index(d.beta))
        return ids, signs


def global_numbering(mesh, tup, mets=None):
    """Global DOF map and total DOF count for the mesh/space pair."""
    gmap = GlobalDofMap(mesh, tup, mets)
    return gmap, gmap.n_dofs
