"""Local stiffness with configurable stabilization, load vector, essential
boundary conditions, and global sparse assembly.

The local matrix is A_P = M_P + S_P with the consistency part
M_P = Pi*^T G Pi* and the stabilization
S_P = alpha_stab (I - Q)^T U (I - Q), Q = D Pi*,
where U is the identity ("dofi-dofi") or the orthogonal projector onto the
complement of the column space of D ("D-perp").
"""

from dataclasses import dataclass, field
from math import comb

import numpy as np
import scipy.sparse as sp

from . import poly, projector
from .space import LocalSpace, dofs_tuple, GlobalDofMap, shifted_legendre

U_CHOICES = ("I", "Dperp")
ALPHA_CHOICES = ("trace-ndofs", "trace-3", "inv-area", "inv-h2")
ALPHA_BY_P1 = {1: ("trace-ndofs",), 2: ("trace-3", "inv-area", "inv-h2")}


@dataclass(frozen=True)
class StabConfig:
    u: str = "I"
    alpha: str = "trace-ndofs"

    def validate(self, p1):
        if self.u not in U_CHOICES:
            raise ValueError(f"stabilizer U must be one of {U_CHOICES}")
        if self.alpha not in ALPHA_BY_P1[p1]:
            raise ValueError(
                f"alpha choice {self.alpha!r} is not admissible for p1={p1}; "
                f"choose from {ALPHA_BY_P1[p1]}")


def default_stab(p1):
    return StabConfig(u="I", alpha="trace-ndofs" if p1 == 1 else "trace-3")


@dataclass
class LocalStiffness:
    consistency: np.ndarray
    stabilization: np.ndarray
    matrix: np.ndarray


def local_stiffness(pack, ls, config, p1, nominal_h):
    """A_P = M_P + S_P for one element.

    alpha_stab for p1 = 1 ("trace-ndofs") is the mean diagonal energy of the
    monomial Gram, trace(G_P)/dim P_r: the trace of the consistency matrix
    itself is inflated by the interior-moment dual functions (their
    projections carry O(1/h^2)-normalized bubble energy), which overweights
    the stabilization by two orders for the higher-regularity spaces.  For
    p1 = 2: trace(M_P)/3, 1/|P|, or 1/h^2 with h the nominal mesh size 1/n
    (which makes the latter two coincide on uniform QUAD meshes).
    """
    config.validate(p1)
    M = pack.pi_star.T @ pack.G @ pack.pi_star
    M = 0.5 * (M + M.T)
    IQ = np.eye(ls.n_dofs) - pack.Q
    if config.u == "I":
        core = IQ.T @ IQ
    else:
        DtD = pack.D.T @ pack.D
        U = np.eye(ls.n_dofs) - pack.D @ np.linalg.solve(DtD, pack.D.T)
        core = IQ.T @ U @ IQ
    if config.alpha == "trace-ndofs":
        alpha = np.trace(pack.G) / pack.G.shape[0]
    elif config.alpha == "trace-3":
        alpha = np.trace(M) / 3.0
    elif config.alpha == "inv-area":
        alpha = 1.0 / ls.elem.area
    else:
        alpha = 1.0 / nominal_h**2
    S = alpha * 0.5 * (core + core.T)
    return LocalStiffness(consistency=M, stabilization=S, matrix=M + S)


def load_vector(ls, pack, f, p1, method="auto"):
    """Discrete load <f_h, phi_i> on one element.

    moments:    f_h = Pi0_{d_i} f paired with the interior moment DOFs
                (exactly computable; requires d_interior >= 0)
    projection: int_P (Pi0_{r-p1} f) (Pi_r phi_i), the fallback when the
                space has no interior moments ((2,2,2)-type layouts)
    auto:       `moments` when the layout has interior moments, otherwise
                `projection`.

    hybrid:     the moment pairing plus the elliptic-projection pairing of
                the remaining load content between degrees d_i and r-p1
                (still exact when f is a polynomial of degree <= d_i).
    """
    tup = ls.tup
    vec = np.zeros(ls.n_dofs)
    if method == "auto":
        method = "moments" if tup.d_interior >= 0 else "projection"
    if method in ("moments", "hybrid"):
        if tup.d_interior < 0:
            raise ValueError("moment path needs interior moments")
        s = tup.d_interior
        coeffs = _project_f(ls, f, s)
        base = ls.n_dofs - len(ls.betas)
        vec[base:base + poly.basis_dim(s)] = coeffs * ls.h_P**2
        if method == "moments":
            return vec
        s2 = tup.r - p1
        if s2 > s:
            c2 = _project_f(ls, f, s2)
            H = poly.mass_matrix(ls.verts, ls.basis, degree=s2,
                                 order=2 * tup.r + 2)
            rem = H[:, :poly.basis_dim(s2)] @ c2
            rem -= H[:, :poly.basis_dim(s)] @ coeffs
            vec += pack.pi_star.T @ rem
        return vec
    if method != "projection":
        raise ValueError(f"unknown load method {method!r}")
    s = tup.r - p1
    coeffs = _project_f(ls, f, s)
    H = poly.mass_matrix(ls.verts, ls.basis, degree=s,
                         order=2 * tup.r + 2)
    return pack.pi_star.T @ (H[:, :poly.basis_dim(s)] @ coeffs)


def _project_f(ls, f, s):
    """L2(P)-projection coefficients of f onto P_s in the element basis."""
    order = 2 * ls.tup.r + 4
    pts, wts = poly.polygon_quadrature(ls.verts, order)
    vb = ls.basis.eval(pts)[:, :poly.basis_dim(s)]
    H = (vb * wts[:, None]).T @ vb
    mom = (vb * wts[:, None]).T @ f(pts)
    return np.linalg.solve(H, mom)


# ---------------------------------------------------------------------------
# essential boundary conditions
# ---------------------------------------------------------------------------

@dataclass
class ConstraintSet:
    dofs: np.ndarray      # global dof ids
    values: np.ndarray


def boundary_constraints(mesh, gmap, g_derivs=None, p1=None):
    """Constrain the DOFs that parametrize the traces of d^j v/dn^j,
    j = 0..p1-1, on every boundary edge.

    All boundary edges are axis-aligned, so the vertex DOFs entering the
    trace of order j on an edge are the Cartesian derivatives D^(a,b) with
    the cross-edge order b <= j (horizontal edge) or a <= j (vertical edge)
    and a+b <= p2-1, set to the scaled derivatives of g; the edge moment
    DOFs of order <= j are set to the moments of d^j g/dn^j (global normal).
    g_derivs(points, (dx, dy)) defaults to zero data.
    """
    tup = gmap.tup
    if p1 is None:
        p1 = tup.p1
    mets = gmap.mets
    nus = [tuple(nu) for nu in poly.multi_indices(tup.p2 - 1)]
    values = {}

    def set_value(gid, val):
        old = values.get(gid)
        if old is not None and abs(old - val) > 1e-12 * (1.0 + abs(val)):
            raise ValueError("conflicting boundary prescriptions at a "
                             "corner (inconsistent boundary data)")
        values[gid] = val

    for e in mesh.edges:
        if not e.boundary:
            continue
        horizontal = abs(e.tangent[1]) < 1e-12
        for j in range(p1):
            for v in (e.v0, e.v1):
                pt = mesh.coords[v][None, :]
                h_v = mets.h_vertex[v]
                for idx, (a, b) in enumerate(nus):
                    cross = b if horizontal else a
                    if cross > j:
                        continue
                    val = 0.0
                    if g_derivs is not None:
                        val = h_v ** (a + b) * float(g_derivs(pt, (a, b))[0])
                    set_value(gmap.vertex_dof(v, idx), val)
            for m in range(tup.d_edge[j] + 1):
                val = 0.0
                if g_derivs is not None:
                    val = _edge_moment_of(mesh, e, g_derivs, j, m, tup)
                set_value(gmap.edge_dof(e.id, j, m), val)
    gids = np.array(sorted(values), dtype=np.int64)
    return ConstraintSet(dofs=gids,
                         values=np.array([values[g] for g in gids]))


def _edge_moment_of(mesh, e, g_derivs, j, m, tup):
    """h_e^{j-1} int_e q_m d^j g/dn^j ds with the global edge normal."""
    rule = poly.segment_rule(2 * tup.r + 2)
    p0, p1_ = mesh.coords[e.v0], mesh.coords[e.v1]
    pts = p0[None, :] + rule.points[:, None] * (p1_ - p0)[None, :]
    n = e.normal
    dnj = np.zeros(len(pts))
    for b in range(j + 1):
        c = comb(j, b) * n[0]**b * n[1]**(j - b)
        if c != 0.0:
            dnj += c * g_derivs(pts, (b, j - b))
    q = shifted_legendre(rule.points, tup.d_edge[j])[:, m]
    return e.length ** j * float(np.dot(rule.weights, q * dnj))


# ---------------------------------------------------------------------------
# global assembly
# ---------------------------------------------------------------------------

@dataclass
class LinearSystem:
    matrix: sp.csr_matrix         # full symmetric matrix
    rhs: np.ndarray
    constraints: ConstraintSet
    free: np.ndarray              # free dof ids
    gmap: GlobalDofMap = None

    def reduced(self):
        """(A_ff, b_f) after symmetric elimination of the constraints."""
        A = self.matrix
        b = self.rhs.copy()
        if len(self.constraints.dofs):
            x_c = np.zeros(A.shape[0])
            x_c[self.constraints.dofs] = self.constraints.values
            b -= A @ x_c
        return A[self.free][:, self.free].tocsr(), b[self.free]

    def expand(self, x_free):
        x = np.zeros(self.matrix.shape[0])
        x[self.free] = x_free
        x[self.constraints.dofs] = self.constraints.values
        return x


def _cache_key(ls, config, p1, nominal_h):
    rel = np.round(ls.verts - ls.elem.centroid, 12)
    return (ls.tup, config, p1, round(nominal_h, 12), rel.tobytes(),
            np.round(ls.h_v, 12).tobytes(),
            ls.elem.edge_signs.tobytes(),
            tuple(int(np.where(ls.elem.vertices == e.v0)[0][0])
                  for e in ls.edges))


class ElementFactory:
    """Builds per-element projector packs and stiffness matrices, reusing
    results across congruent elements (uniform QUAD levels hit one entry)."""

    def __init__(self, mesh, mets, tup, config, p1, use_cache=True):
        self.mesh = mesh
        self.mets = mets
        self.tup = tup
        self.config = config
        self.p1 = p1
        self.nominal_h = 1.0 / mesh.n if mesh.n else mets.h
        self.use_cache = use_cache
        self._cache = {}

    def local_space(self, elem):
        return LocalSpace(self.mesh, self.mets, elem, self.tup)

    def build(self, elem):
        ls = self.local_space(elem)
        key = _cache_key(ls, self.config, self.p1, self.nominal_h) \
            if self.use_cache else None
        if key is not None and key in self._cache:
            pack, stiff = self._cache[key]
        else:
            pack = projector.element_projector(ls, self.p1)
            stiff = local_stiffness(pack, ls, self.config, self.p1,
                                    self.nominal_h)
            if key is not None:
                self._cache[key] = (pack, stiff)
        return ls, pack, stiff


def assemble(mesh, tup, config, f, g_derivs=None, mets=None, factory=None,
             use_cache=True):
    """Assemble the global linear system for the given space and load.

    Local matrices are scattered through the global DOF map with the edge
    orientation signs; essential boundary conditions are eliminated
    symmetrically via LinearSystem.reduced().
    """
    from .mesh import metrics

    if isinstance(tup, (tuple, list)) and not hasattr(tup, "d_edge"):
        tup = dofs_tuple(tuple(tup))
    p1 = tup.p1
    config.validate(p1)
    if mets is None:
        mets = factory.mets if factory is not None else metrics(mesh)
    gmap = GlobalDofMap(mesh, tup, mets)
    if factory is None:
        factory = ElementFactory(mesh, mets, tup, config, p1,
                                 use_cache=use_cache)

    nnz = sum((len(e.vertices) * tup.n_vertex_dofs
               + len(e.vertices) * tup.n_edge_dofs
               + tup.n_interior_dofs) ** 2 for e in mesh.elements)
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz)
    rhs = np.zeros(gmap.n_dofs)
    at = 0
    for elem in mesh.elements:
        ls, pack, stiff = factory.build(elem)
        gids, signs = gmap.element_dofs(ls)
        A_loc = stiff.matrix * np.outer(signs, signs)
        b_loc = load_vector(ls, pack, f, p1) * signs
        k = len(gids)
        rows[at:at + k * k] = np.repeat(gids, k)
        cols[at:at + k * k] = np.tile(gids, k)
        vals[at:at + k * k] = A_loc.ravel()
        at += k * k
        np.add.at(rhs, gids, b_loc)
    A = sp.coo_matrix((vals[:at], (rows[:at], cols[:at])),
                      shape=(gmap.n_dofs, gmap.n_dofs)).tocsr()
    A.sum_duplicates()
    cons = boundary_constraints(mesh, gmap, g_derivs, p1=p1)
    free = np.setdiff1d(np.arange(gmap.n_dofs), cons.dofs)
    return LinearSystem(matrix=A, rhs=rhs, constraints=cons, free=free,
                        gmap=gmap)


def export_matrix(system, path):
    """Coordinate text format: `row col value` per line, 0-based indices."""
    A = system.matrix.tocoo()
    with open(path, "w") as fh:
        for i, j, v in zip(A.row, A.col, A.data):
            fh.write(f"{i} {j} {v:.17g}\n")
