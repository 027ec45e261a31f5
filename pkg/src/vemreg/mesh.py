"""Polygonal meshes of the unit square: generation, validation, IO, metrics.

Four families are provided: QUAD (axis-aligned n x n squares), TRI
(diagonal-split grid with seeded interior jitter), CVT (Lloyd-relaxed
Voronoi tessellation) and HEX (hexagonal tiling clipped to the square).

Edges carry a global orientation (lower vertex id first); the normal is the
tangent rotated by +90 degrees.  Each element stores, per edge, the sign
relating its outward normal to the global edge normal.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Voronoi

from .poly import polygon_area, polygon_centroid

FAMILIES = ("QUAD", "TRI", "CVT", "HEX")

BND_TOL = 1e-12
AREA_TOL = 1e-10
NEEDLE_LIMIT = 1e4


class MeshError(ValueError):
    """Raised for invalid meshes or malformed mesh files."""


@dataclass(frozen=True)
class Vertex:
    id: int
    x: float
    y: float
    boundary: bool


@dataclass(frozen=True)
class Edge:
    id: int
    v0: int               # lower vertex id
    v1: int               # higher vertex id
    tangent: np.ndarray   # unit, v0 -> v1
    normal: np.ndarray    # tangent rotated +90 degrees
    length: float
    boundary: bool


@dataclass(frozen=True)
class Element:
    id: int
    vertices: np.ndarray    # CCW loop of vertex ids
    edges: np.ndarray       # edge ids, edge k joins loop vertex k -> k+1
    edge_signs: np.ndarray  # +1 if outward normal == global edge normal
    area: float
    centroid: np.ndarray
    diameter: float


@dataclass
class Mesh:
    coords: np.ndarray            # (nv, 2)
    vertex_boundary: np.ndarray   # (nv,) bool
    edges: list = field(default_factory=list)
    elements: list = field(default_factory=list)
    family: str = "QUAD"
    n: int = 0                    # nominal resolution 1/h

    @property
    def n_vertices(self):
        return len(self.coords)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_elements(self):
        return len(self.elements)

    def vertex(self, i):
        return Vertex(i, self.coords[i, 0], self.coords[i, 1],
                      bool(self.vertex_boundary[i]))

    def element_coords(self, elem):
        return self.coords[elem.vertices]


@dataclass(frozen=True)
class MeshMetrics:
    h: float
    h_elem: np.ndarray    # h_P per element
    h_edge: np.ndarray    # h_e per edge
    h_vertex: np.ndarray  # h_v per vertex (mean diameter of incident elements)


def _polygon_diameter(verts):
    d2 = 0.0
    n = len(verts)
    for i in range(n):
        diff = verts[i + 1:] - verts[i]
        if len(diff):
            d2 = max(d2, float(np.max(np.einsum("ij,ij->i", diff, diff))))
    return np.sqrt(d2)


def build_mesh(coords, cells, family="QUAD", n=0, validate=True):
    """Assemble a Mesh from vertex coordinates and CCW cell loops.

    Cells given clockwise are flipped.  Edges, orientation signs, boundary
    flags and element geometry are derived here.
    """
    coords = np.asarray(coords, dtype=float)
    edge_ids = {}
    edge_elems = {}
    elements = []
    for eid, loop in enumerate(cells):
        loop = np.asarray(loop, dtype=np.int64)
        if len(loop) < 3:
            raise MeshError(f"element {eid} has fewer than 3 vertices")
        if len(np.unique(loop)) != len(loop):
            raise MeshError(f"element {eid} repeats a vertex")
        verts = coords[loop]
        area = polygon_area(verts)
        if area < 0:
            loop = loop[::-1]
            verts = coords[loop]
            area = -area
        if area <= 0:
            raise MeshError(f"element {eid} has zero area")
        k = len(loop)
        eids = np.empty(k, dtype=np.int64)
        signs = np.empty(k, dtype=np.int64)
        for i in range(k):
            a, b = int(loop[i]), int(loop[(i + 1) % k])
            key = (a, b) if a < b else (b, a)
            if key not in edge_ids:
                edge_ids[key] = len(edge_ids)
                edge_elems[key] = []
            eids[i] = edge_ids[key]
            # traversing lo->hi puts the interior on the +90-rotation side,
            # so the outward normal opposes the global normal
            signs[i] = -1 if a < b else 1
            edge_elems[key].append((eid, int(signs[i])))
        cx, cy = polygon_centroid(verts)
        elements.append(Element(
            id=eid, vertices=loop, edges=eids, edge_signs=signs,
            area=float(area), centroid=np.array([cx, cy]),
            diameter=_polygon_diameter(verts),
        ))

    nv = len(coords)
    vertex_boundary = np.zeros(nv, dtype=bool)
    edges = [None] * len(edge_ids)
    for (a, b), eid in edge_ids.items():
        if a >= nv or b >= nv or a < 0 or b < 0:
            raise MeshError(f"edge ({a},{b}) references a missing vertex")
        refs = edge_elems[(a, b)]
        if len(refs) > 2:
            raise MeshError(f"edge ({a},{b}) shared by {len(refs)} elements")
        bnd = len(refs) == 1
        if not bnd and refs[0][1] == refs[1][1]:
            raise MeshError(f"edge ({a},{b}) traversed in the same direction "
                            "by both elements")
        d = coords[b] - coords[a]
        length = float(np.hypot(d[0], d[1]))
        if length <= 0:
            raise MeshError(f"edge ({a},{b}) has zero length")
        t = d / length
        edges[eid] = Edge(id=eid, v0=a, v1=b, tangent=t,
                          normal=np.array([-t[1], t[0]]), length=length,
                          boundary=bnd)
        if bnd:
            vertex_boundary[a] = True
            vertex_boundary[b] = True

    mesh = Mesh(coords=coords, vertex_boundary=vertex_boundary, edges=edges,
                elements=elements, family=family, n=n)
    if validate:
        validate_mesh(mesh)
    return mesh


def validate_mesh(mesh):
    """Check the unit-square mesh invariants; raise MeshError on violation."""
    coords = mesh.coords
    if not np.all(np.isfinite(coords)):
        raise MeshError("non-finite vertex coordinate")
    if coords.min() < -BND_TOL or coords.max() > 1 + BND_TOL:
        raise MeshError("vertex outside the unit square")
    total = sum(e.area for e in mesh.elements)
    if abs(total - 1.0) > AREA_TOL:
        raise MeshError(f"element areas sum to {total!r}, not 1")
    on_bnd = (np.abs(coords) < BND_TOL) | (np.abs(coords - 1.0) < BND_TOL)
    on_bnd = on_bnd.any(axis=1)
    if np.any(mesh.vertex_boundary & ~on_bnd):
        raise MeshError("boundary-flagged vertex off the boundary")
    for e in mesh.edges:
        if e.boundary:
            p0, p1 = coords[e.v0], coords[e.v1]
            if not (_same_side_coord(p0[0], p1[0]) or
                    _same_side_coord(p0[1], p1[1])):
                raise MeshError(f"boundary edge ({e.v0},{e.v1}) is not an "
                                "axis-aligned segment of the square boundary")
    for el in mesh.elements:
        if el.diameter ** 2 / el.area > NEEDLE_LIMIT:
            raise MeshError(f"element {el.id} is needle-shaped "
                            f"(h^2/|P| = {el.diameter ** 2 / el.area:.3g})")
        if not _is_simple(coords[el.vertices]):
            raise MeshError(f"element {el.id} is self-intersecting")


def _same_side_coord(a, b):
    return (abs(a) < BND_TOL and abs(b) < BND_TOL) or \
           (abs(a - 1) < BND_TOL and abs(b - 1) < BND_TOL)


def _is_simple(verts):
    n = len(verts)
    d = np.roll(verts, -1, axis=0) - verts
    cross = d[:, 0] * np.roll(d, -1, axis=0)[:, 1] - \
        d[:, 1] * np.roll(d, -1, axis=0)[:, 0]
    if np.all(cross > -1e-14):   # convex CCW polygons are simple
        return True
    for i in range(n):
        a0, a1 = verts[i], verts[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _segments_cross(a0, a1, verts[j], verts[(j + 1) % n]):
                return False
    return True


def _segments_cross(p0, p1, q0, q1):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(p0, p1, q0), orient(p0, p1, q1)
    d3, d4 = orient(q0, q1, p0), orient(q0, q1, p1)
    return d1 * d2 < 0 and d3 * d4 < 0


def metrics(mesh):
    """Size metrics: h, per-element h_P, per-edge h_e, per-vertex h_v."""
    h_elem = np.array([e.diameter for e in mesh.elements])
    h_edge = np.array([e.length for e in mesh.edges])
    acc = np.zeros(mesh.n_vertices)
    cnt = np.zeros(mesh.n_vertices)
    for el in mesh.elements:
        acc[el.vertices] += el.diameter
        cnt[el.vertices] += 1
    if np.any(cnt == 0):
        raise MeshError("isolated vertex")
    return MeshMetrics(h=float(h_elem.max()), h_elem=h_elem, h_edge=h_edge,
                       h_vertex=acc / cnt)


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def generate(family, n, seed=0):
    """Generate a mesh of the unit square with nominal resolution 1/h = n."""
    if family not in FAMILIES:
        raise MeshError(f"unknown family {family!r}; choose from {FAMILIES}")
    if n < 2:
        raise MeshError("resolution must be at least 2")
    if family == "QUAD":
        return _generate_quad(n)
    if family == "TRI":
        return _generate_tri(n, seed)
    if family == "CVT":
        return lloyd_cvt(n * n, iterations=100, seed=seed, n=n)
    if n < 4:
        raise MeshError("HEX tiling needs n >= 4")
    return _generate_hex(n)


def _grid_points(n):
    xs = np.linspace(0.0, 1.0, n + 1)
    gx, gy = np.meshgrid(xs, xs, indexing="xy")
    return np.column_stack([gx.ravel(), gy.ravel()])


def _generate_quad(n):
    pts = _grid_points(n)
    cells = []
    for j in range(n):
        for i in range(n):
            v = j * (n + 1) + i
            cells.append([v, v + 1, v + n + 2, v + n + 1])
    return build_mesh(pts, cells, family="QUAD", n=n)


def _generate_tri(n, seed, jitter=0.2):
    pts = _grid_points(n)
    rng = np.random.default_rng(seed)
    interior = (pts[:, 0] > 0) & (pts[:, 0] < 1) & \
               (pts[:, 1] > 0) & (pts[:, 1] < 1)
    pts = pts.copy()
    pts[interior] += rng.uniform(-jitter / n, jitter / n,
                                 size=(int(interior.sum()), 2))
    cells = []
    for j in range(n):
        for i in range(n):
            v00 = j * (n + 1) + i
            v10, v01, v11 = v00 + 1, v00 + n + 1, v00 + n + 2
            if (i + j) % 2 == 0:
                cells += [[v00, v10, v11], [v00, v11, v01]]
            else:
                cells += [[v00, v10, v01], [v10, v11, v01]]
    return build_mesh(pts, cells, family="TRI", n=n)


def _generate_hex(n):
    a = 1.0 / n
    ny = max(2, round(1.0 / (np.sqrt(3.0) / 2.0 * a)))
    dy = 1.0 / ny
    seeds = []
    for j in range(ny):
        off = 0.25 * a if j % 2 == 0 else 0.75 * a
        xs = np.arange(off, 1.0, a)
        ys = np.full_like(xs, (j + 0.5) * dy)
        seeds.append(np.column_stack([xs, ys]))
    return _voronoi_mesh(np.vstack(seeds), family="HEX", n=n)


def lloyd_cvt(n_seeds, iterations, seed=0, n=None):
    """Centroidal Voronoi tessellation of the unit square by Lloyd iteration.

    Stops after `iterations` rounds or when the largest seed movement falls
    below 1e-8.  Deterministic for a fixed seed.
    """
    if n_seeds < 4:
        raise MeshError("need at least 4 seeds")
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, 1.0, size=(n_seeds, 2))
    for _ in range(5):
        if len(np.unique(np.round(pts / BND_TOL), axis=0)) == n_seeds:
            break
        pts += rng.uniform(-1e-6, 1e-6, size=pts.shape)
        np.clip(pts, 1e-9, 1 - 1e-9, out=pts)
    else:
        raise MeshError("could not separate duplicate seeds")
    band = min(1.0, max(0.2, 8.0 / np.sqrt(n_seeds)))
    for _ in range(iterations):
        new_pts = _lloyd_step(pts, band=band if band < 1.0 else None)
        move = np.max(np.abs(new_pts - pts))
        pts = new_pts
        if move < 1e-8:
            break
    return _voronoi_mesh(pts, family="CVT",
                         n=n if n is not None else max(2, int(np.sqrt(n_seeds))),
                         band=band if band < 1.0 else None)


def _lloyd_step(pts, band=None):
    """Centroids of the clipped Voronoi cells of all seeds, vectorized over
    the ragged cell structure (orientation-free shoelace formulas)."""
    vor = Voronoi(_mirrored(pts, band))
    nseeds = len(pts)
    regs = [vor.regions[r] for r in vor.point_region[:nseeds]]
    lens = np.fromiter((len(r) for r in regs), np.int64, nseeds)
    flat = np.fromiter((v for r in regs for v in r), np.int64, int(lens.sum()))
    if np.any(flat < 0):
        if band is not None:
            return _lloyd_step(pts, band=None)
        raise MeshError("unbounded Voronoi cell (degenerate seeds?)")
    starts = np.zeros(nseeds + 1, dtype=np.int64)
    np.cumsum(lens, out=starts[1:])
    nxt = np.arange(1, len(flat) + 1)
    nxt[starts[1:] - 1] = starts[:-1]
    v = vor.vertices[flat]
    w = v[nxt]
    x, y = v[:, 0], v[:, 1]
    xn, yn = w[:, 0], w[:, 1]
    cross = x * yn - xn * y
    area2 = np.add.reduceat(cross, starts[:-1])
    cx = np.add.reduceat((x + xn) * cross, starts[:-1]) / (3.0 * area2)
    cy = np.add.reduceat((y + yn) * cross, starts[:-1]) / (3.0 * area2)
    return np.column_stack([cx, cy])


def _mirrored(seeds, band=None):
    """Seed set extended by reflections across the four sides of the square.

    Only seeds within `band` of a side need mirroring (a cell can touch a
    side only if its seed is nearby); band=None mirrors everything.
    """
    if band is None:
        left = right = bottom = top = seeds
    else:
        left = seeds[seeds[:, 0] < band]
        right = seeds[seeds[:, 0] > 1.0 - band]
        bottom = seeds[seeds[:, 1] < band]
        top = seeds[seeds[:, 1] > 1.0 - band]
    m = [seeds,
         left * np.array([-1.0, 1.0]),
         bottom * np.array([1.0, -1.0]),
         np.array([2.0, 0.0]) + right * np.array([-1.0, 1.0]),
         np.array([0.0, 2.0]) + top * np.array([1.0, -1.0])]
    return np.vstack(m)


def _clipped_voronoi_cells(seeds):
    """Voronoi cells of the seeds clipped exactly to the unit square, via
    reflection of the seed set across all four sides."""
    vor = Voronoi(_mirrored(seeds))
    cells = []
    for i in range(len(seeds)):
        region = vor.regions[vor.point_region[i]]
        if -1 in region or len(region) < 3:
            raise MeshError("unbounded Voronoi cell (degenerate seeds?)")
        verts = vor.vertices[region]
        if polygon_area(verts) < 0:
            verts = verts[::-1]
        cells.append(verts)
    return cells


def _voronoi_mesh(seeds, family, n, band=None):
    """Mesh from the clipped Voronoi diagram of the seeds, with shared
    vertex indices, boundary snapping, and short-edge merging."""
    vor = Voronoi(_mirrored(seeds, band))
    nseeds = len(seeds)
    used = {}
    coords = []
    loops = []
    for i in range(nseeds):
        region = vor.regions[vor.point_region[i]]
        if -1 in region or len(region) < 3:
            if band is not None:
                return _voronoi_mesh(seeds, family, n, band=None)
            raise MeshError("unbounded Voronoi cell (degenerate seeds?)")
        verts = vor.vertices[region]
        if polygon_area(verts) < 0:
            region = region[::-1]
        loop = []
        for vid in region:
            if vid not in used:
                x, y = vor.vertices[vid]
                x = _snap01(x)
                y = _snap01(y)
                used[vid] = len(coords)
                coords.append((x, y))
            loop.append(used[vid])
        loops.append(loop)
    coords = np.asarray(coords)
    coords, loops = _merge_close_vertices(coords, loops)
    return build_mesh(coords, loops, family=family, n=n)


def _snap01(v):
    if abs(v) < 1e-9:
        return 0.0
    if abs(v - 1.0) < 1e-9:
        return 1.0
    return v


def _merge_close_vertices(coords, loops, tol=1e-9):
    """Collapse vertices closer than tol (qhull emits near-duplicates for
    cocircular mirrored seeds) and drop the resulting repeated loop entries."""
    from scipy.spatial import cKDTree

    root = np.arange(len(coords))

    def find(i):
        while root[i] != i:
            root[i] = root[root[i]]
            i = root[i]
        return i

    for a, b in cKDTree(coords).query_pairs(tol):
        ra, rb = find(a), find(b)
        if ra != rb:
            root[max(ra, rb)] = min(ra, rb)
    kept = sorted({find(i) for i in range(len(coords))})
    final = {old: new for new, old in enumerate(kept)}
    new_coords = coords[kept]
    new_loops = []
    for loop in loops:
        out = []
        for v in loop:
            nv = final[find(int(v))]
            if not out or out[-1] != nv:
                out.append(nv)
        if len(out) > 1 and out[0] == out[-1]:
            out.pop()
        new_loops.append(out)
    return new_coords, new_loops


# ---------------------------------------------------------------------------
# plain-text IO
# ---------------------------------------------------------------------------

def write_mesh(mesh, path):
    """Plain-text format: `nv ne np`, nv coordinate lines, np polygon lines."""
    with open(path, "w") as fh:
        fh.write(f"# family={mesh.family} n={mesh.n}\n")
        fh.write(f"{mesh.n_vertices} {mesh.n_edges} {mesh.n_elements}\n")
        for x, y in mesh.coords:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for el in mesh.elements:
            ids = " ".join(str(int(v)) for v in el.vertices)
            fh.write(f"{len(el.vertices)} {ids}\n")


def read_mesh(path):
    """Read the plain-text polygon format; errors report the line number."""
    family, n = "QUAD", 0
    with open(path) as fh:
        raw = fh.readlines()
    lines = []
    for lineno, text in enumerate(raw, start=1):
        s = text.strip()
        if s.startswith("#"):
            for tok in s[1:].split():
                if tok.startswith("family="):
                    family = tok.split("=", 1)[1]
                elif tok.startswith("n="):
                    n = int(tok.split("=", 1)[1])
            continue
        if s:
            lines.append((lineno, s))
    if not lines:
        raise MeshError("empty mesh file")
    lineno, header = lines[0]
    parts = header.split()
    if len(parts) != 3:
        raise MeshError(f"line {lineno}: header must be 'nv ne np'")
    try:
        nv, ne, npoly = (int(p) for p in parts)
    except ValueError:
        raise MeshError(f"line {lineno}: non-integer header counts") from None
    if len(lines) != 1 + nv + npoly:
        raise MeshError(f"line {lineno}: expected {nv} vertex and {npoly} "
                        f"polygon lines, found {len(lines) - 1}")
    coords = np.empty((nv, 2))
    for i in range(nv):
        lineno, s = lines[1 + i]
        parts = s.split()
        if len(parts) != 2:
            raise MeshError(f"line {lineno}: expected 'x y'")
        try:
            coords[i] = [float(parts[0]), float(parts[1])]
        except ValueError:
            raise MeshError(f"line {lineno}: bad coordinate") from None
    cells = []
    for j in range(npoly):
        lineno, s = lines[1 + nv + j]
        parts = s.split()
        try:
            vals = [int(p) for p in parts]
        except ValueError:
            raise MeshError(f"line {lineno}: bad vertex index") from None
        if not vals or vals[0] != len(vals) - 1:
            raise MeshError(f"line {lineno}: vertex count mismatch")
        loop = vals[1:]
        if any(v < 0 or v >= nv for v in loop):
            raise MeshError(f"line {lineno}: vertex index out of range")
        cells.append(loop)
    try:
        mesh = build_mesh(coords, cells, family=family, n=n)
    except MeshError as exc:
        raise MeshError(f"invalid mesh in {path}: {exc}") from None
    if mesh.n_edges != ne:
        raise MeshError(f"header declares {ne} edges, derived {mesh.n_edges}")
    return mesh
