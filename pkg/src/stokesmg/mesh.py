"""Quadrilateral macro meshes, quadtree refinement with 2:1 edge balance, hierarchies.

All meshes grown from one macro mesh share a :class:`Forest`, a registry that
hands out a global id per vertex. A new vertex is keyed by how it was made
(midpoint of an edge, centre of a cell), so the same point gets the same id
whichever cell creates it and whichever level looks at it. Nesting and the
inter-level transfer both read off these ids.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple

import numpy as np

log = logging.getLogger(__name__)


class MeshError(ValueError):
    pass


class BoundaryTag(IntEnum):
    DIRICHLET_WALL = 1
    DIRICHLET_LID = 2
    DIRICHLET_INFLOW = 3
    NEUMANN_OUTFLOW = 4
    CYLINDER = 5


# ---------------------------------------------------------------------------
# geometries


@dataclass(frozen=True)
class UnitSquare:
    """[0, 1]^2 with a moving lid on top, split into an n x n macro grid."""

    macro_divisions: int = 1

    def __post_init__(self):
        if self.macro_divisions < 1:
            raise MeshError("macro_divisions must be at least 1")

    def element_boundary_distance(self, xy):
        # distance to the boundary of a convex domain is concave, so the
        # minimum over a convex cell sits at a corner
        d = np.minimum.reduce([xy[..., 0], 1.0 - xy[..., 0], xy[..., 1], 1.0 - xy[..., 1]])
        return d.min(axis=1)


@dataclass(frozen=True)
class ChannelWithCylinder:
    """Channel [0, length] x [0, height] with a circular obstacle."""

    length_m: float = 2.2
    height_m: float = 0.41
    center_xy_m: tuple = (0.2, 0.2)
    radius_m: float = 0.05

    def __post_init__(self):
        cx, cy = self.center_xy_m
        r = self.radius_m
        if r <= 0:
            raise MeshError("cylinder radius must be positive")
        if not (r < cx < self.length_m - r and r < cy < self.height_m - r):
            raise MeshError("cylinder must lie strictly inside the channel")

    def wall_distance(self, xy):
        return np.minimum(xy[..., 1], self.height_m - xy[..., 1]).min(axis=1)

    def cylinder_distance(self, xy):
        c = np.asarray(self.center_xy_m)
        return np.maximum(_point_polygon_distance(c, xy) - self.radius_m, 0.0)

    def element_boundary_distance(self, xy):
        inout = np.minimum(xy[..., 0], self.length_m - xy[..., 0]).min(axis=1)
        return np.minimum.reduce([self.wall_distance(xy), inout, self.cylinder_distance(xy)])


def _point_polygon_distance(p, xy):
    """Distance from point p to each quadrilateral in xy (ne, 4, 2); 0 if inside."""
    a = xy
    b = np.roll(xy, -1, axis=1)
    ab = b - a
    t = np.einsum("eki,eki->ek", p - a, ab) / np.einsum("eki,eki->ek", ab, ab)
    t = np.clip(t, 0.0, 1.0)
    proj = a + t[..., None] * ab
    d = np.linalg.norm(proj - p, axis=2).min(axis=1)
    cross = ab[..., 0] * (p[1] - a[..., 1]) - ab[..., 1] * (p[0] - a[..., 0])
    inside = np.all(cross >= 0.0, axis=1)
    return np.where(inside, 0.0, d)


@dataclass(frozen=True)
class MacroMeshSpec:
    geometry: object = field(default_factory=UnitSquare)
    initial_uniform_levels: int = 0

    def __post_init__(self):
        if self.initial_uniform_levels < 0:
            raise MeshError("initial_uniform_levels must be non-negative")


# ---------------------------------------------------------------------------
# forest


class Cell(NamedTuple):
    corners: tuple  # four global vertex ids, counter-clockwise
    level: int
    root: int
    path: tuple  # child digits from the macro cell down


class Forest:
    """Global vertex registry shared by every mesh refined from one macro mesh."""

    def __init__(self, circle=None):
        self.coords = []
        self.keys = {}
        self.origin = []  # ("macro",), ("edge", a, b) or ("cell", a, b, c, d)
        self.boundary = {}  # (lo, hi) -> BoundaryTag, every level
        self.circle = circle  # (cx, cy, r) for radial projection, or None

    def __len__(self):
        return len(self.coords)

    def add_macro_vertex(self, xy):
        gid = len(self.coords)
        self.coords.append((float(xy[0]), float(xy[1])))
        self.keys[("v", gid)] = gid
        self.origin.append(("macro",))
        return gid

    def _new(self, key, xy, origin):
        gid = len(self.coords)
        self.coords.append((float(xy[0]), float(xy[1])))
        self.keys[key] = gid
        self.origin.append(origin)
        return gid

    def edge_midpoint_id(self, a, b):
        return self.keys.get(("e", min(a, b), max(a, b)))

    def midpoint(self, a, b):
        lo, hi = min(a, b), max(a, b)
        key = ("e", lo, hi)
        gid = self.keys.get(key)
        if gid is not None:
            return gid
        pa, pb = self.coords[lo], self.coords[hi]
        xy = (0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1]))
        tag = self.boundary.get((lo, hi))
        if tag == BoundaryTag.CYLINDER:
            cx, cy, r = self.circle
            dx, dy = xy[0] - cx, xy[1] - cy
            s = r / math.hypot(dx, dy)
            xy = (cx + s * dx, cy + s * dy)
        gid = self._new(key, xy, ("edge", lo, hi))
        if tag is not None:
            self.boundary[(min(lo, gid), max(lo, gid))] = tag
            self.boundary[(min(gid, hi), max(gid, hi))] = tag
        return gid

    def center(self, corners):
        key = ("c",) + tuple(corners)
        gid = self.keys.get(key)
        if gid is not None:
            return gid
        pts = [self.coords[c] for c in corners]
        xy = (sum(p[0] for p in pts) / 4.0, sum(p[1] for p in pts) / 4.0)
        return self._new(key, xy, ("cell",) + tuple(corners))

    def children(self, cell):
        c0, c1, c2, c3 = cell.corners
        m01, m12 = self.midpoint(c0, c1), self.midpoint(c1, c2)
        m23, m30 = self.midpoint(c2, c3), self.midpoint(c3, c0)
        cc = self.center(cell.corners)
        lv, root, path = cell.level + 1, cell.root, cell.path
        return (
            Cell((c0, m01, cc, m30), lv, root, path + (0,)),
            Cell((m01, c1, m12, cc), lv, root, path + (1,)),
            Cell((cc, m12, c2, m23), lv, root, path + (2,)),
            Cell((m30, cc, m23, c3), lv, root, path + (3,)),
        )


# ---------------------------------------------------------------------------
# mesh


class QuadMesh:
    """One leaf layer of the forest, with a compact local vertex numbering.

    Local vertex ``i`` is global vertex ``global_ids[i]``; local numbering
    follows global ids, so vertices inherited from coarser meshes come first.
    Treat instances as immutable.
    """

    def __init__(self, forest, cells, geometry=None):
        self.forest = forest
        self.cells = tuple(cells)
        self.geometry = geometry
        gids = np.unique(np.array([c.corners for c in self.cells], dtype=np.int64).ravel())
        self.global_ids = gids
        self._local = {int(g): i for i, g in enumerate(gids)}
        coords = np.asarray(forest.coords)
        self.vertices = coords[gids]
        loc = self._local
        self.elements = np.array([[loc[g] for g in c.corners] for c in self.cells], dtype=np.int64)
        self.element_level = np.array([c.level for c in self.cells], dtype=np.int64)
        self.hanging = self._find_hanging()
        self.boundary_edges, self.boundary_edge_tags = self._find_boundary()

    @property
    def n_vertices(self):
        return len(self.global_ids)

    @property
    def n_elements(self):
        return len(self.cells)

    def local_index(self, gid):
        return self._local.get(int(gid))

    def has_vertex(self, gid):
        return int(gid) in self._local

    def element_coords(self):
        return self.vertices[self.elements]

    def _find_hanging(self):
        hanging = {}
        f = self.forest
        for c in self.cells:
            k = c.corners
            for a, b in ((k[0], k[1]), (k[1], k[2]), (k[2], k[3]), (k[3], k[0])):
                m = f.edge_midpoint_id(a, b)
                if m is not None and m in self._local:
                    hanging[self._local[m]] = (self._local[a], self._local[b])
        return hanging

    def _find_boundary(self):
        edges, tags = [], []
        bnd = self.forest.boundary
        for c in self.cells:
            k = c.corners
            for a, b in ((k[0], k[1]), (k[1], k[2]), (k[2], k[3]), (k[3], k[0])):
                tag = bnd.get((min(a, b), max(a, b)))
                if tag is not None:
                    edges.append((self._local[a], self._local[b]))
                    tags.append(int(tag))
        return np.array(edges, dtype=np.int64).reshape(-1, 2), np.array(tags, dtype=np.int64)

    def vertex_tags(self):
        """Map local vertex -> set of BoundaryTag of the boundary edges touching it."""
        out = {}
        for (a, b), t in zip(self.boundary_edges, self.boundary_edge_tags):
            out.setdefault(int(a), set()).add(BoundaryTag(t))
            out.setdefault(int(b), set()).add(BoundaryTag(t))
        return out

    def non_hanging_count(self):
        return self.n_vertices - len(self.hanging)

    def edge_neighbors(self):
        """Pairs of element indices sharing (part of) an edge, with their levels.

        Conforming neighbours share an edge; across a hanging vertex the coarse
        cell's edge contains the fine cell's edge.
        """
        owner = {}
        for e, c in enumerate(self.cells):
            k = c.corners
            for a, b in ((k[0], k[1]), (k[1], k[2]), (k[2], k[3]), (k[3], k[0])):
                owner.setdefault((min(a, b), max(a, b)), []).append(e)
        pairs = set()
        f = self.forest
        for key, es in owner.items():
            if len(es) == 2:
                pairs.add((min(es), max(es)))
            m = f.edge_midpoint_id(*key)
            if m is None:
                continue
            # sub-edges of a longer edge, possibly several levels down
            stack = [(key, es)]
            while stack:
                (lo, hi), coarse = stack.pop()
                mid = f.edge_midpoint_id(lo, hi)
                if mid is None:
                    continue
                for sub in ((min(lo, mid), max(lo, mid)), (min(mid, hi), max(mid, hi))):
                    fine = owner.get(sub, [])
                    for e1 in coarse:
                        for e2 in fine:
                            if e1 != e2:
                                pairs.add((min(e1, e2), max(e1, e2)))
                    stack.append((sub, coarse))
        return sorted(pairs)

    def max_level_jump(self):
        pairs = self.edge_neighbors()
        if not pairs:
            return 0
        p = np.array(pairs)
        return int(np.abs(self.element_level[p[:, 0]] - self.element_level[p[:, 1]]).max())

    def signed_areas(self):
        xy = self.element_coords()
        x, y = xy[..., 0], xy[..., 1]
        return 0.5 * np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1)

    def is_convex(self):
        xy = self.element_coords()
        e1 = np.roll(xy, -1, axis=1) - xy
        e2 = np.roll(xy, -2, axis=1) - np.roll(xy, -1, axis=1)
        cross = e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0]
        return bool(np.all(cross > 0.0))


# ---------------------------------------------------------------------------
# construction and refinement


def _square_macro(forest, n):
    t = np.linspace(0.0, 1.0, n + 1)
    ids = [[forest.add_macro_vertex((x, y)) for x in t] for y in t]
    for k in range(n):
        for a, b, tag in (
            (ids[0][k], ids[0][k + 1], BoundaryTag.DIRICHLET_WALL),
            (ids[n][k], ids[n][k + 1], BoundaryTag.DIRICHLET_LID),
            (ids[k][0], ids[k + 1][0], BoundaryTag.DIRICHLET_WALL),
            (ids[k][n], ids[k + 1][n], BoundaryTag.DIRICHLET_WALL),
        ):
            forest.boundary[(min(a, b), max(a, b))] = tag
    cells = []
    for j in range(n):
        for i in range(n):
            corners = (ids[j][i], ids[j][i + 1], ids[j + 1][i + 1], ids[j + 1][i])
            cells.append(Cell(corners, 0, len(cells), ()))
    return cells


def _channel_macro(forest, g):
    """Block layout: a uniform grid of blocks with the 2 x 2 blocks around the
    cylinder replaced by an O-grid ring of 8 quads."""
    cx, cy = g.center_xy_m
    r, L, H = g.radius_m, g.length_m, g.height_m
    a = min(2.0 * r, 0.5 * (cx - r) + r, 0.5 * (cy - r) + r, 0.5 * (H - cy - r) + r)
    xs = sorted({0.0, cx - a, cx, cx + a} | set(np.arange(cx + 2 * a, L - 0.5 * a, a).round(12)) | {L})
    xs = [x for x in xs if x <= L + 1e-12]
    xs = _drop_close(xs, 0.3 * a)
    ys = _drop_close(sorted({0.0, cy - a, cy, cy + a, H}), 0.3 * a)
    ix = {round(v, 12): i for i, v in enumerate(xs)}
    iy = {round(v, 12): j for j, v in enumerate(ys)}
    for v in (cx - a, cx, cx + a):
        if round(v, 12) not in ix:
            raise MeshError("block layout does not resolve the cylinder box")
    for v in (cy - a, cy, cy + a):
        if round(v, 12) not in iy:
            raise MeshError("block layout does not resolve the cylinder box")
    i0, i1 = ix[round(cx - a, 12)], ix[round(cx + a, 12)]
    j0, j1 = iy[round(cy - a, 12)], iy[round(cy + a, 12)]
    ic, jc = ix[round(cx, 12)], iy[round(cy, 12)]
    if i1 - i0 != 2 or j1 - j0 != 2:
        raise MeshError("cylinder box must span exactly 2 x 2 blocks")

    grid = {}
    for j, y in enumerate(ys):
        for i, x in enumerate(xs):
            if (i, j) == (ic, jc):
                continue
            grid[(i, j)] = forest.add_macro_vertex((x, y))
    # box boundary points walked counter-clockwise from angle 0
    box = [(i1, jc), (i1, j1), (ic, j1), (i0, j1), (i0, jc), (i0, j0), (ic, j0), (i1, j0)]
    inner = []
    for k in range(8):
        t = k * math.pi / 4.0
        inner.append(forest.add_macro_vertex((cx + r * math.cos(t), cy + r * math.sin(t))))

    cells = []
    nx, ny = len(xs) - 1, len(ys) - 1
    for j in range(ny):
        for i in range(nx):
            if i0 <= i < i1 and j0 <= j < j1:
                continue
            k = (grid[(i, j)], grid[(i + 1, j)], grid[(i + 1, j + 1)], grid[(i, j + 1)])
            cells.append(Cell(k, 0, len(cells), ()))
    for k in range(8):
        k1 = (k + 1) % 8
        corners = (inner[k], grid[box[k]], grid[box[k1]], inner[k1])
        cells.append(Cell(corners, 0, len(cells), ()))
        forest.boundary[(min(inner[k], inner[k1]), max(inner[k], inner[k1]))] = BoundaryTag.CYLINDER

    def tag_line(pts, tag):
        for p, q in zip(pts[:-1], pts[1:]):
            forest.boundary[(min(p, q), max(p, q))] = tag

    tag_line([grid[(i, 0)] for i in range(nx + 1)], BoundaryTag.DIRICHLET_WALL)
    tag_line([grid[(i, ny)] for i in range(nx + 1)], BoundaryTag.DIRICHLET_WALL)
    tag_line([grid[(0, j)] for j in range(ny + 1)], BoundaryTag.DIRICHLET_INFLOW)
    tag_line([grid[(nx, j)] for j in range(ny + 1)], BoundaryTag.NEUMANN_OUTFLOW)
    forest.circle = (cx, cy, r)
    return cells


def _drop_close(vals, tol):
    out = [vals[0]]
    for v in vals[1:-1]:
        if v - out[-1] >= tol:
            out.append(v)
    if vals[-1] - out[-1] < tol and len(out) > 1:
        out.pop()
    out.append(vals[-1])
    return out


def build_macro_mesh(spec):
    """Macro mesh after ``spec.initial_uniform_levels`` uniform refinements."""
    g = spec.geometry
    forest = Forest()
    if isinstance(g, UnitSquare):
        cells = _square_macro(forest, g.macro_divisions)
    elif isinstance(g, ChannelWithCylinder):
        cells = _channel_macro(forest, g)
    else:
        raise MeshError(f"unsupported geometry {g!r}")
    mesh = QuadMesh(forest, cells, g)
    if not mesh.is_convex():
        raise MeshError("macro mesh has non-convex or inverted cells")
    for _ in range(spec.initial_uniform_levels):
        mesh = refine_uniform(mesh)
    return mesh


def refine_cells(mesh, mask, balance=True):
    """Split the cells where ``mask`` is true, then restore 2:1 balance."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (mesh.n_elements,):
        raise ValueError("mask must have one entry per element")
    cells = []
    for c, m in zip(mesh.cells, mask):
        if m:
            cells.extend(mesh.forest.children(c))
        else:
            cells.append(c)
    out = QuadMesh(mesh.forest, cells, mesh.geometry)
    return enforce_two_to_one_balance(out) if balance else out


def refine_uniform(mesh):
    return refine_cells(mesh, np.ones(mesh.n_elements, dtype=bool), balance=False)


def refine_adaptive(mesh, marker, step=1):
    """Refine marked cells plus the closure needed for 2:1 balance.

    ``marker`` is a refinement rule (with ``mark(mesh, step)``) or a boolean
    mask. An empty marking returns ``mesh`` itself and logs a warning.
    """
    mask = marker.mark(mesh, step) if hasattr(marker, "mark") else np.asarray(marker, dtype=bool)
    if not mask.any():
        log.warning("refine_adaptive: no cells marked, mesh unchanged")
        return mesh
    return refine_cells(mesh, mask, balance=True)


def _unbalanced(mesh):
    """Cells with an edge neighbour two or more levels finer.

    Such a neighbour puts a vertex at a quarter point of the cell's edge.
    """
    f = mesh.forest
    have = mesh.has_vertex
    bad = np.zeros(mesh.n_elements, dtype=bool)
    for e, c in enumerate(mesh.cells):
        k = c.corners
        for a, b in ((k[0], k[1]), (k[1], k[2]), (k[2], k[3]), (k[3], k[0])):
            m = f.edge_midpoint_id(a, b)
            if m is None or not have(m):
                continue
            q1, q2 = f.edge_midpoint_id(a, m), f.edge_midpoint_id(m, b)
            if (q1 is not None and have(q1)) or (q2 is not None and have(q2)):
                bad[e] = True
                break
    return bad


def enforce_two_to_one_balance(mesh):
    """Refine coarse cells until no edge neighbours differ by more than one level."""
    while True:
        bad = _unbalanced(mesh)
        if not bad.any():
            return mesh
        mesh = refine_cells(mesh, bad, balance=False)


# ---------------------------------------------------------------------------
# refinement rules


@dataclass(frozen=True)
class UniformMarker:
    def mark(self, mesh, step):
        return np.ones(mesh.n_elements, dtype=bool)


# Band widths reproducing the reference driven-cavity hierarchy (64, 208,
# 676, 2296, 7672, 25612 cells on the first six levels): 2, 3, 5, 8, 13, 19,
# 27, 31, 17 cells of the current finest width at each step.
CAVITY_BANDS = (2 / 8, 3 / 16, 5 / 32, 8 / 64, 13 / 128, 19 / 256, 27 / 512, 31 / 1024, 17 / 2048)


@dataclass(frozen=True)
class TowardAllBoundaries:
    """Mark cells closer than ``band_width_per_level[step - 1]`` to the boundary."""

    band_width_per_level: tuple = CAVITY_BANDS

    def __post_init__(self):
        if any(w <= 0 for w in self.band_width_per_level):
            raise MeshError("band widths must be positive")

    def band(self, step):
        w = self.band_width_per_level
        return w[min(step, len(w)) - 1]

    def mark(self, mesh, step):
        d = mesh.geometry.element_boundary_distance(mesh.element_coords())
        return d < self.band(step) - 1e-12


@dataclass(frozen=True)
class TowardWallsAndCylinder:
    """Mark cells near the channel walls or the cylinder; the band shrinks
    by ``shrinking_band_factor`` with every step."""

    initial_band: float = 0.3
    shrinking_band_factor: float = 0.5

    def __post_init__(self):
        if self.initial_band <= 0:
            raise MeshError("initial band must be positive")
        if not 0.0 < self.shrinking_band_factor < 1.0:
            raise MeshError("shrinking factor must lie in (0, 1)")

    def band(self, step):
        return self.initial_band * self.shrinking_band_factor ** (step - 1)

    def mark(self, mesh, step):
        g = mesh.geometry
        xy = mesh.element_coords()
        d = np.minimum(g.wall_distance(xy), g.cylinder_distance(xy))
        return d < self.band(step) - 1e-12


# ---------------------------------------------------------------------------
# hierarchy


VERTEX, EDGE, CELL = 0, 1, 2


@dataclass
class ParentMap:
    """Fine level -> coarse level correspondence.

    ``element_parent[e]`` is the coarse cell containing fine cell ``e``.
    ``vertex_kind[v]`` is VERTEX, EDGE or CELL; ``vertex_parents[v]`` holds the
    coarse local vertex ids involved (padded with -1).
    """

    element_parent: np.ndarray
    vertex_kind: np.ndarray
    vertex_parents: np.ndarray


@dataclass
class GridHierarchy:
    levels: list
    parent_maps: list  # parent_maps[l] maps levels[l] onto levels[l - 1]; entry 0 is None

    def __len__(self):
        return len(self.levels)

    def truncated(self, n_levels):
        return GridHierarchy(self.levels[:n_levels], self.parent_maps[:n_levels])


def parent_map(coarse, fine):
    cidx = {(c.root, c.path): i for i, c in enumerate(coarse.cells)}
    eparent = np.empty(fine.n_elements, dtype=np.int64)
    for e, c in enumerate(fine.cells):
        p = cidx.get((c.root, c.path))
        if p is None:
            p = cidx.get((c.root, c.path[:-1]))
        if p is None:
            raise MeshError("levels are not nested: fine cell without coarse parent")
        eparent[e] = p
    kind = np.empty(fine.n_vertices, dtype=np.int64)
    parents = np.full((fine.n_vertices, 4), -1, dtype=np.int64)
    origin = fine.forest.origin
    for v, g in enumerate(fine.global_ids):
        lc = coarse.local_index(g)
        if lc is not None:
            kind[v] = VERTEX
            parents[v, 0] = lc
            continue
        o = origin[g]
        ids = [coarse.local_index(x) for x in o[1:]]
        if o[0] == "macro" or any(i is None for i in ids):
            raise MeshError(f"non-nested vertex {g}: parents missing on the coarse level")
        kind[v] = EDGE if o[0] == "edge" else CELL
        parents[v, : len(ids)] = ids
    return ParentMap(eparent, kind, parents)


def build_hierarchy(spec, marker, n_levels):
    """Level 1 is the macro mesh after the initial uniform refinements; each
    further level refines the previous one with ``marker`` at step l - 1."""
    if n_levels < 1:
        raise MeshError("need at least one level")
    levels = [build_macro_mesh(spec)]
    maps = [None]
    for step in range(1, n_levels):
        coarse = levels[-1]
        fine = refine_adaptive(coarse, marker, step)
        if fine is coarse or fine.n_elements == coarse.n_elements:
            raise MeshError(f"refinement step {step} marked nothing; hierarchy would stall")
        levels.append(fine)
        maps.append(parent_map(coarse, fine))
    return GridHierarchy(levels, maps)


# ---------------------------------------------------------------------------
# output


def write_vtk(path, mesh, point_data=None, title="stokesmg mesh"):
    """Legacy ASCII VTK unstructured grid with optional point data.

    ``point_data`` maps names to arrays of shape (nv,) (scalars) or (nv, 2)
    (vectors, padded with a zero z-component).
    """
    nv, ne = mesh.n_vertices, mesh.n_elements
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {nv} double")
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {ne} {5 * ne}")
    lines += ["4 " + " ".join(str(int(v)) for v in el) for el in mesh.elements]
    lines.append(f"CELL_TYPES {ne}")
    lines += ["9"] * ne
    lines.append(f"CELL_DATA {ne}")
    lines.append("SCALARS level int 1")
    lines.append("LOOKUP_TABLE default")
    lines += [str(int(v)) for v in mesh.element_level]
    if point_data:
        lines.append(f"POINT_DATA {nv}")
        for name, arr in point_data.items():
            arr = np.asarray(arr, dtype=float)
            if arr.ndim == 1:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines += [f"{v:.17g}" for v in arr]
            else:
                lines.append(f"VECTORS {name} double")
                lines += [f"{u:.17g} {v:.17g} 0" for u, v in arr[:, :2]]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
