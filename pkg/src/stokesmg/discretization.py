"""Stabilized equal-order Q1-Q1 Stokes discretization.

The assembled operator is the symmetric saddle-point matrix

    L = [[A, B], [B^T, C]],  A = eta (grad v, grad u),  B = -(div v, p),
    C = -beta sum_e h_e^2 (grad q, grad p)_e,

with h_e the longer diagonal of cell e. Dirichlet, hanging-node and pressure
pin constraints are eliminated by condensation: with x_full = T x + g the
free system is L = T^T K T and b = T^T (F - K g).
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .linalg import CSRMatrix
from .mesh import BoundaryTag

CONSTRAINED = -1

_GP = 1.0 / np.sqrt(3.0)
GAUSS2 = (np.array([[-_GP, -_GP], [_GP, -_GP], [_GP, _GP], [-_GP, _GP]]), np.ones(4))
_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


class AssemblyError(ValueError):
    pass


def gauss_rule(n):
    """Tensor Gauss-Legendre rule with n points per direction on [-1, 1]^2."""
    x, w = np.polynomial.legendre.leggauss(n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w)
    return np.column_stack([X.ravel(), Y.ravel()]), W.ravel()


def shape_functions(ref):
    """Bilinear shape values (nq, 4) and reference gradients (nq, 4, 2)."""
    xi, eta = ref[:, 0:1], ref[:, 1:2]
    cx, cy = _CORNERS[:, 0], _CORNERS[:, 1]
    N = 0.25 * (1 + xi * cx) * (1 + eta * cy)
    dN = np.stack([0.25 * cx * (1 + eta * cy), 0.25 * cy * (1 + xi * cx)], axis=2)
    return N, dN


def _geometry(xy, ref):
    """Physical points, |det J| and physical gradients for cells xy (ne, 4, 2)."""
    N, dN = shape_functions(ref)
    J = np.einsum("eai,qaj->eqij", xy, dN)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if np.any(det <= 0.0):
        bad = int(np.flatnonzero((det <= 0.0).any(axis=1))[0])
        raise AssemblyError(f"non-positive Jacobian in element {bad}")
    inv = np.empty_like(J)
    inv[..., 0, 0] = J[..., 1, 1] / det
    inv[..., 1, 1] = J[..., 0, 0] / det
    inv[..., 0, 1] = -J[..., 0, 1] / det
    inv[..., 1, 0] = -J[..., 1, 0] / det
    grads = np.einsum("qai,eqij->eqaj", dN, inv)
    pts = np.einsum("qa,eai->eqi", N, xy)
    return N, pts, det, grads


def element_diameter(xy):
    d1 = np.linalg.norm(xy[..., 2, :] - xy[..., 0, :], axis=-1)
    d2 = np.linalg.norm(xy[..., 3, :] - xy[..., 1, :], axis=-1)
    return np.maximum(d1, d2)


def element_blocks(xy, beta):
    """Scalar element blocks for a batch of cells.

    Returns K (stiffness, grad.grad), Bx, By (-(d_c phi_a) phi_b with
    velocity index a, pressure index b) and C, each of shape (ne, 4, 4).
    """
    ref, w = GAUSS2
    N, _, det, grads = _geometry(np.asarray(xy, dtype=float), ref)
    wd = w[None, :] * det
    K = np.einsum("eq,eqai,eqbi->eab", wd, grads, grads)
    Bx = -np.einsum("eq,eqa,qb->eab", wd, grads[..., 0], N)
    By = -np.einsum("eq,eqa,qb->eab", wd, grads[..., 1], N)
    h = element_diameter(xy)
    C = -beta * (h ** 2)[:, None, None] * K
    return K, Bx, By, C


def element_matrices(xy, eta, beta):
    """Dense blocks of one cell: A_e (8x8), B_e (8x4), C_e (4x4).

    Velocity unknowns are ordered [u_x at corners 0..3, u_y at corners 0..3].
    """
    xy = np.asarray(xy, dtype=float).reshape(1, 4, 2)
    K, Bx, By, C = element_blocks(xy, beta)
    A = np.zeros((8, 8))
    A[:4, :4] = eta * K[0]
    A[4:, 4:] = eta * K[0]
    B = np.vstack([Bx[0], By[0]])
    return A, B, C[0]


# ---------------------------------------------------------------------------
# boundary conditions


def _zero(x, y):
    return np.zeros_like(x), np.zeros_like(x)


@dataclass(frozen=True)
class BoundaryConditions:
    """Velocity Dirichlet data per tag, natural (Neumann) tags, pressure pin.

    Where tags meet at a vertex the first Dirichlet tag in ``priority`` wins.
    ``neumann`` maps tags to a traction callable or None for homogeneous data.
    """

    dirichlet: dict = field(default_factory=dict)
    neumann: dict = field(default_factory=dict)
    pin_pressure: bool = False
    priority: tuple = ()

    def covers(self, tags):
        return set(tags) <= set(self.dirichlet) | set(self.neumann)


def cavity_bcs(lid_velocity=1.0, leaky_lid=False):
    def lid(x, y):
        return np.full_like(x, lid_velocity), np.zeros_like(x)

    order = (BoundaryTag.DIRICHLET_LID, BoundaryTag.DIRICHLET_WALL) if leaky_lid else (
        BoundaryTag.DIRICHLET_WALL, BoundaryTag.DIRICHLET_LID)
    return BoundaryConditions(
        dirichlet={BoundaryTag.DIRICHLET_WALL: _zero, BoundaryTag.DIRICHLET_LID: lid},
        pin_pressure=True,
        priority=order,
    )


def apply_inflow_profile(bcs, u_bar, height):
    """Attach u_x = 4 u_bar y (H - y) / H^2, u_y = 0 to the inflow tag."""
    if u_bar <= 0 or height <= 0:
        raise ValueError("inflow peak velocity and channel height must be positive")

    def inflow(x, y):
        return 4.0 * u_bar * y * (height - y) / height ** 2, np.zeros_like(x)

    dirichlet = dict(bcs.dirichlet)
    dirichlet[BoundaryTag.DIRICHLET_INFLOW] = inflow
    prio = tuple(bcs.priority)
    if BoundaryTag.DIRICHLET_INFLOW not in prio:
        prio = prio + (BoundaryTag.DIRICHLET_INFLOW,)
    return replace(bcs, dirichlet=dirichlet, priority=prio)


def channel_bcs(u_bar=0.3, height=0.41):
    base = BoundaryConditions(
        dirichlet={BoundaryTag.DIRICHLET_WALL: _zero, BoundaryTag.CYLINDER: _zero},
        neumann={BoundaryTag.NEUMANN_OUTFLOW: None},
        pin_pressure=False,
        priority=(BoundaryTag.DIRICHLET_WALL, BoundaryTag.CYLINDER),
    )
    return apply_inflow_profile(base, u_bar, height)


# ---------------------------------------------------------------------------
# DoFs and constraints


@dataclass(frozen=True)
class Constraint:
    dof: int  # full index
    masters: tuple  # ((full index, weight), ...)
    value: float
    kind: str  # "dirichlet" | "hanging" | "pin"


class ConstraintSet:
    """Constraints on full DoFs and their closure x_full = T x_free + g.

    Full numbering: u_x(v) = 2v, u_y(v) = 2v + 1, p(v) = 2 nv + v.
    """

    def __init__(self, n_vertices, constraints=()):
        self.n_vertices = n_vertices
        self.n_full = 3 * n_vertices
        self.by_dof = {c.dof: c for c in constraints}

    def __len__(self):
        return len(self.by_dof)

    def __iter__(self):
        return iter(self.by_dof.values())

    def of_kind(self, kind):
        return [c for c in self if c.kind == kind]

    def closure(self):
        """Resolve constraint chains: full dof -> ({free full dof: weight}, value)."""
        memo = {}

        def expand(d, depth=0):
            if d in memo:
                return memo[d]
            c = self.by_dof.get(d)
            if c is None:
                return {d: 1.0}, 0.0
            if depth > 64:
                raise AssemblyError("cyclic constraints")
            acc, val = {}, c.value
            for m, w in c.masters:
                sub, v = expand(m, depth + 1)
                val += w * v
                for k, x in sub.items():
                    acc[k] = acc.get(k, 0.0) + w * x
            memo[d] = (acc, val)
            return memo[d]

        return {d: expand(d) for d in self.by_dof}


@dataclass
class DofMap:
    """Free numbering: velocities first (vertex-major, x then y), then pressures."""

    n_vertices: int
    ux: np.ndarray
    uy: np.ndarray
    p: np.ndarray
    n_u: int
    n_p: int

    @property
    def n(self):
        return self.n_u + self.n_p

    def full_to_free(self):
        return np.concatenate([np.column_stack([self.ux, self.uy]).ravel(), self.p])

    def free_to_full(self):
        f2f = self.full_to_free()
        out = np.empty(self.n, dtype=np.int64)
        ok = f2f >= 0
        out[f2f[ok]] = np.flatnonzero(ok)
        return out


def build_dof_map(mesh, constraints=None):
    nv = mesh.n_vertices
    cons = set(constraints.by_dof) if constraints is not None else set()
    vel = np.full(2 * nv, CONSTRAINED, dtype=np.int64)
    k = 0
    for d in range(2 * nv):
        if d not in cons:
            vel[d] = k
            k += 1
    n_u = k
    p = np.full(nv, CONSTRAINED, dtype=np.int64)
    for v in range(nv):
        if 2 * nv + v not in cons:
            p[v] = k
            k += 1
    return DofMap(nv, vel[0::2].copy(), vel[1::2].copy(), p, n_u, k - n_u)


def pin_vertex(mesh):
    """Lowest-numbered non-hanging vertex; macro vertices come first, so the
    pin sits on the same point on every level."""
    for v in range(mesh.n_vertices):
        if v not in mesh.hanging:
            return v
    raise AssemblyError("mesh has no non-hanging vertex")


def build_constraints(mesh, bcs):
    nv = mesh.n_vertices
    out = []
    tags = mesh.vertex_tags()
    prio = list(bcs.priority) + [t for t in bcs.dirichlet if t not in bcs.priority]
    dir_vertices, dir_funcs = [], []
    for v, vt in sorted(tags.items()):
        for t in prio:
            if t in vt and t in bcs.dirichlet:
                dir_vertices.append(v)
                dir_funcs.append(t)
                break
    dir_vertices = np.array(dir_vertices, dtype=np.int64)
    for t in set(dir_funcs):
        sel = dir_vertices[np.array(dir_funcs) == t]
        ux, uy = bcs.dirichlet[t](mesh.vertices[sel, 0], mesh.vertices[sel, 1])
        ux = np.broadcast_to(ux, sel.shape)
        uy = np.broadcast_to(uy, sel.shape)
        for v, a, b in zip(sel, ux, uy):
            out.append(Constraint(2 * int(v), (), float(a), "dirichlet"))
            out.append(Constraint(2 * int(v) + 1, (), float(b), "dirichlet"))
    for h, (a, b) in mesh.hanging.items():
        for off, scale in ((0, 2), (1, 2), (2 * nv, 1)):
            if scale == 2:
                da, db, dh = 2 * a + off, 2 * b + off, 2 * h + off
            else:
                da, db, dh = off + a, off + b, off + h
            out.append(Constraint(dh, ((da, 0.5), (db, 0.5)), 0.0, "hanging"))
    if bcs.pin_pressure:
        out.append(Constraint(2 * nv + pin_vertex(mesh), (), 0.0, "pin"))
    return ConstraintSet(nv, out)


def constraint_operator(constraints, dof_map):
    """T (n_full x n_free, CSR) and g (n_full) with x_full = T x + g."""
    n_full = constraints.n_full
    f2f = dof_map.full_to_free()
    closure = constraints.closure()
    rows, cols, vals = [], [], []
    g = np.zeros(n_full)
    free_rows = np.flatnonzero(f2f >= 0)
    rows.append(free_rows)
    cols.append(f2f[free_rows])
    vals.append(np.ones(len(free_rows)))
    for d, (comb, val) in closure.items():
        g[d] = val
        if comb:
            ks = sorted(comb)
            rows.append(np.full(len(ks), d))
            cols.append(f2f[ks])
            vals.append(np.array([comb[k] for k in ks]))
    T = CSRMatrix.from_coo(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
                           (n_full, dof_map.n))
    return T, g


# ---------------------------------------------------------------------------
# assembly


def _full_coo(mesh, eta, beta):
    """COO triplets of the unconstrained operator over full DoFs."""
    nv = mesh.n_vertices
    K, Bx, By, C = element_blocks(mesh.element_coords(), beta)
    el = mesh.elements
    ra = el[:, :, None] * np.ones((1, 1, 4), dtype=np.int64)
    ca = el[:, None, :] * np.ones((1, 4, 1), dtype=np.int64)
    ra, ca = ra.ravel(), ca.ravel()
    kv = (eta * K).ravel()
    pr, pc = 2 * nv + ra, 2 * nv + ca
    rows = np.concatenate([2 * ra, 2 * ra + 1, 2 * ra, pc, 2 * ra + 1, pc, pr])
    cols = np.concatenate([2 * ca, 2 * ca + 1, pc, 2 * ra, pc, 2 * ra + 1, pc])
    vals = np.concatenate([kv, kv, Bx.ravel(), Bx.ravel(), By.ravel(), By.ravel(), C.ravel()])
    return rows, cols, vals


def _expand_rows(rows, other, vals, T):
    """Replace full row indices by their T expansions (weights multiply vals)."""
    cnt = np.diff(T.indptr)[rows]
    src = np.repeat(np.arange(len(rows)), cnt)
    start = np.repeat(T.indptr[rows] - np.cumsum(cnt) + cnt, cnt)
    pos = start + np.arange(len(src))
    return T.indices[pos], other[src], vals[src] * T.data[pos]


def condense(rows, cols, vals, T):
    """COO of T^T K T on the free DoFs; structural zeros are kept."""
    r, c, v = _expand_rows(rows, cols, vals, T)
    c, r, v = _expand_rows(c, r, v, T)
    n = T.shape[1]
    return CSRMatrix.from_coo(r, c, v, (n, n)).symmetrize()


def _load_vector(mesh, f, quad=GAUSS2):
    nv = mesh.n_vertices
    F = np.zeros(3 * nv)
    if f is None:
        return F
    ref, w = quad
    N, pts, det, _ = _geometry(mesh.element_coords(), ref)
    fx, fy = f(pts[..., 0], pts[..., 1])
    fx = np.broadcast_to(fx, pts.shape[:2])
    fy = np.broadcast_to(fy, pts.shape[:2])
    wd = w[None, :] * det
    Fx = np.einsum("eq,qa,eq->ea", wd, N, fx)
    Fy = np.einsum("eq,qa,eq->ea", wd, N, fy)
    el = mesh.elements.ravel()
    F[: 2 * nv] += np.bincount(2 * el, Fx.ravel(), minlength=2 * nv)
    F[: 2 * nv] += np.bincount(2 * el + 1, Fy.ravel(), minlength=2 * nv)
    return F


def _neumann_vector(mesh, bcs):
    nv = mesh.n_vertices
    F = np.zeros(3 * nv)
    xg, wg = np.polynomial.legendre.leggauss(2)
    for tag, h in bcs.neumann.items():
        if h is None:
            continue
        sel = mesh.boundary_edge_tags == int(tag)
        for a, b in mesh.boundary_edges[sel]:
            pa, pb = mesh.vertices[a], mesh.vertices[b]
            length = np.linalg.norm(pb - pa)
            for s, w in zip(xg, wg):
                t = 0.5 * (s + 1.0)
                x = (1 - t) * pa + t * pb
                hx, hy = h(np.array([x[0]]), np.array([x[1]]))
                for v, phi in ((a, 1 - t), (b, t)):
                    F[2 * v] += 0.5 * w * length * phi * float(hx[0])
                    F[2 * v + 1] += 0.5 * w * length * phi * float(hy[0])
    return F


def untagged_boundary_edges(mesh):
    owner = {}
    for c in mesh.cells:
        k = c.corners
        for a, b in ((k[0], k[1]), (k[1], k[2]), (k[2], k[3]), (k[3], k[0])):
            key = (min(a, b), max(a, b))
            owner[key] = owner.get(key, 0) + 1
    f = mesh.forest
    loc = mesh.local_index
    out = []
    for (a, b), n in owner.items():
        if n != 1 or (a, b) in f.boundary:
            continue
        m = f.edge_midpoint_id(a, b)
        if m is not None and mesh.has_vertex(m):
            continue  # coarse side of a hanging vertex
        la, lb = loc(a), loc(b)
        if la in mesh.hanging and lb in mesh.hanging[la]:
            continue
        if lb in mesh.hanging and la in mesh.hanging[lb]:
            continue
        out.append((la, lb))
    return out


@dataclass
class SaddleSystem:
    """Condensed system L x = b on the free DoFs of one mesh."""

    mesh: object
    bcs: BoundaryConditions
    eta: float
    beta: float
    dof_map: DofMap
    constraints: ConstraintSet
    T: CSRMatrix
    g: np.ndarray
    L: CSRMatrix
    b: np.ndarray
    full: CSRMatrix  # unconstrained operator over full DoFs

    @property
    def n(self):
        return self.dof_map.n

    @property
    def n_u(self):
        return self.dof_map.n_u

    @property
    def n_p(self):
        return self.dof_map.n_p

    def block(self, name):
        nu, n = self.n_u, self.n
        rng = {"A": (slice(0, nu), slice(0, nu)), "B": (slice(0, nu), slice(nu, n)),
               "BT": (slice(nu, n), slice(0, nu)), "C": (slice(nu, n), slice(nu, n))}[name]
        r, c = rng
        return self.L.submatrix(np.arange(n)[r], np.arange(n)[c])

    def full_pressure_block(self):
        """C over all vertex pressures, before any pin or hanging elimination."""
        nv = self.mesh.n_vertices
        idx = np.arange(2 * nv, 3 * nv)
        return self.full.submatrix(idx, idx)

    def expand(self, x):
        """Full vertex vector T x + g."""
        return self.T @ np.asarray(x, dtype=float) + self.g

    def fields(self, x):
        """(velocity (nv, 2), pressure (nv,)) at all mesh vertices."""
        nv = self.mesh.n_vertices
        full = self.expand(x)
        return full[: 2 * nv].reshape(nv, 2), full[2 * nv:]


def assemble_system(mesh, bcs, eta, beta=None, f=None):
    """Assemble and condense the stabilized Stokes system.

    ``beta`` defaults to 0.1 / eta.
    """
    if eta <= 0:
        raise AssemblyError("viscosity must be positive")
    beta = 0.1 / eta if beta is None else beta
    if beta <= 0:
        raise AssemblyError("stabilization beta must be positive for equal-order elements")
    tags = {BoundaryTag(t) for t in np.unique(mesh.boundary_edge_tags)}
    if not bcs.covers(tags):
        missing = sorted(t.name for t in tags - set(bcs.dirichlet) - set(bcs.neumann))
        raise AssemblyError(f"boundary tags without a condition: {missing}")
    if untagged_boundary_edges(mesh):
        raise AssemblyError("mesh has untagged boundary edges")
    constraints = build_constraints(mesh, bcs)
    dof_map = build_dof_map(mesh, constraints)
    T, g = constraint_operator(constraints, dof_map)
    rows, cols, vals = _full_coo(mesh, eta, beta)
    n_full = 3 * mesh.n_vertices
    full = CSRMatrix.from_coo(rows, cols, vals, (n_full, n_full))
    L = condense(rows, cols, vals, T)
    system = SaddleSystem(mesh, bcs, eta, beta, dof_map, constraints, T, g, L, np.zeros(dof_map.n), full)
    system.b = assemble_rhs(system, f)
    return system


def assemble_rhs(system, f=None):
    """Condensed load vector T^T (F + Neumann - K g) for body force f(x, y) -> (fx, fy)."""
    F = _load_vector(system.mesh, f) + _neumann_vector(system.mesh, system.bcs)
    F -= system.full @ system.g
    T = system.T
    return np.bincount(T.indices, weights=T.data * F[T.row_ids()], minlength=T.shape[1])


def velocity_l2_error(system, x, exact, order=4):
    """L2 norm of u_h - u over the mesh; ``exact(x, y)`` returns (ux, uy)."""
    ref, w = gauss_rule(order)
    mesh = system.mesh
    N, pts, det, _ = _geometry(mesh.element_coords(), ref)
    u, _ = system.fields(x)
    uh = np.einsum("qa,eai->eqi", N, u[mesh.elements])
    ux, uy = exact(pts[..., 0], pts[..., 1])
    err2 = (uh[..., 0] - ux) ** 2 + (uh[..., 1] - uy) ** 2
    return float(np.sqrt(np.sum(w[None, :] * det * err2)))


def velocity_block_cholesky(system):
    """Check that the constrained velocity block admits a Cholesky factorization.

    Symmetric elimination without pivoting (SuperLU with diagonal pivoting
    and a fill-reducing symmetric ordering) runs to completion with positive
    pivots exactly when the block is symmetric positive definite. Returns the
    smallest pivot; raises ``numpy.linalg.LinAlgError`` otherwise.
    """
    import scipy.sparse.linalg

    A = system.block("A").to_scipy().tocsc()
    if A.shape[0] == 0:
        return float("inf")
    try:
        lu = scipy.sparse.linalg.splu(
            A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
            options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise np.linalg.LinAlgError(f"velocity block factorization failed: {exc}") from exc
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise np.linalg.LinAlgError("elimination needed off-diagonal pivots")
    piv = lu.U.diagonal()
    if np.any(piv <= 0.0):
        raise np.linalg.LinAlgError("velocity block is not positive definite")
    return float(piv.min())


def zero_mean(p):
    """Shift a vertex pressure to zero arithmetic mean."""
    p = np.asarray(p, dtype=float)
    return p - p.mean()
