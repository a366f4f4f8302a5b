"""Geometric multigrid V-cycle on a nested adaptive hierarchy.

Every level is rediscretized (assembled directly on its mesh). Prolongation is
nested Q1 interpolation composed with the constraint elimination on both
levels; restriction is its exact transpose. The coarsest level is solved with
a dense LU factorization.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse

from .linalg import CSRMatrix, residual
from .mesh import CELL, EDGE, VERTEX, MeshError, parent_map
from .smoothers import SmootherConfig, VankaSmoother


class ConfigurationError(RuntimeError):
    pass


@dataclass(frozen=True)
class TransferOperator:
    """Prolongation from the coarse free DoFs to the fine free DoFs."""

    P: CSRMatrix
    R: CSRMatrix

    def prolong(self, x):
        return self.P @ x

    def restrict(self, r):
        return self.R @ r


def interpolation_matrix(pmap, n_coarse_vertices):
    """Nested Q1 vertex interpolation (n_fine x n_coarse, scipy CSR)."""
    kind = pmap.vertex_kind
    par = pmap.vertex_parents
    nf = len(kind)
    count = np.select([kind == VERTEX, kind == EDGE, kind == CELL], [1, 2, 4], 0)
    if np.any(count == 0) or np.any(par[np.arange(4)[None, :] < count[:, None]] < 0):
        raise MeshError("corrupt parent map")
    rows = np.repeat(np.arange(nf), count)
    cols = par[np.arange(4)[None, :] < count[:, None]]
    vals = 1.0 / np.repeat(count, count)
    return scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(nf, n_coarse_vertices))


def build_transfer(coarse, fine, pmap=None):
    """Transfer between two assembled levels (``SaddleSystem`` objects).

    ``pmap`` defaults to the parent map computed from the two meshes; a
    non-nested pair raises ``MeshError``.
    """
    if pmap is None:
        pmap = parent_map(coarse.mesh, fine.mesh)
    nvc, nvf = coarse.mesh.n_vertices, fine.mesh.n_vertices
    iv = interpolation_matrix(pmap, nvc)
    # the same vertex interpolation for u_x, u_y and p in the full numbering
    ex = scipy.sparse.csr_matrix(([1.0] * nvc, (2 * np.arange(nvc), np.arange(nvc))), shape=(3 * nvc, nvc))
    ey = scipy.sparse.csr_matrix(([1.0] * nvc, (2 * np.arange(nvc) + 1, np.arange(nvc))), shape=(3 * nvc, nvc))
    ep = scipy.sparse.csr_matrix(([1.0] * nvc, (2 * nvc + np.arange(nvc), np.arange(nvc))), shape=(3 * nvc, nvc))
    fx = scipy.sparse.csr_matrix(([1.0] * nvf, (2 * np.arange(nvf), np.arange(nvf))), shape=(3 * nvf, nvf))
    fy = scipy.sparse.csr_matrix(([1.0] * nvf, (2 * np.arange(nvf) + 1, np.arange(nvf))), shape=(3 * nvf, nvf))
    fp = scipy.sparse.csr_matrix(([1.0] * nvf, (2 * nvf + np.arange(nvf), np.arange(nvf))), shape=(3 * nvf, nvf))
    full = fx @ iv @ ex.T + fy @ iv @ ey.T + fp @ iv @ ep.T
    sel = fine.dof_map.free_to_full()
    P = (full[sel] @ coarse.T.to_scipy()).tocsr()
    P.sum_duplicates()
    P.sort_indices()
    P.eliminate_zeros()
    Pm = CSRMatrix(P.indptr, P.indices, P.data, P.shape)
    return TransferOperator(Pm, Pm.transpose())


class CoarseSolver:
    """Dense LU of the coarsest matrix (LAPACK getrf/getrs)."""

    def __init__(self, system, singular_rtol=1e-13):
        L = system.L if hasattr(system, "L") else system
        dense = L.to_dense()
        self.n = dense.shape[0]
        if self.n == 0:
            self.factors = None
            return
        self.factors = scipy.linalg.lu_factor(dense, check_finite=True)
        d = np.abs(np.diag(self.factors[0]))
        if d.min() <= singular_rtol * d.max():
            raise ConfigurationError(
                "coarse matrix is numerically singular; is the pressure pinned for an enclosed flow?")

    def __call__(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        if self.factors is None:
            return rhs.copy()
        return scipy.linalg.lu_solve(self.factors, rhs, check_finite=False)


def coarse_solve(system, rhs):
    """One-off coarse solve; ``Multigrid`` keeps the factors instead."""
    return CoarseSolver(system)(rhs)


@dataclass(frozen=True)
class MultigridConfig:
    n_pre: int = 3
    n_post: int = 3
    smoother: SmootherConfig = field(default_factory=SmootherConfig)
    reduction_target: float = 1e-8
    max_iterations: int = 500
    divergence_factor: float = 1e12  # stop once ||r|| exceeds this multiple of ||r_0||
    backend: str = None
    # Galerkin correction along the constant-pressure vector after each cycle;
    # "auto" enables it when the finest level carries a pressure pin
    pressure_shift_correction: str = "auto"

    def __post_init__(self):
        if self.n_pre < 0 or self.n_post < 0:
            raise ValueError("smoothing step counts must be non-negative")
        if not 0.0 < self.reduction_target < 1.0:
            raise ValueError("reduction_target must lie in (0, 1)")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")
        if self.pressure_shift_correction not in ("auto", "on", "off"):
            raise ValueError("pressure_shift_correction must be 'auto', 'on' or 'off'")


@dataclass
class SolveReport:
    iterations: int
    residual_history: list
    converged: bool
    diverged: bool
    reduction_factor: float
    setup_s: float
    per_iter_s: float
    total_s: float
    level_dofs: list
    level_elements: list
    smoother: str
    damping: float
    n_pre: int
    n_post: int


def compute_metrics(residual_history, total_s, setup_s=0.0):
    """Average reduction factor and per-iteration time from a residual history."""
    k = len(residual_history) - 1
    if k < 0:
        raise ValueError("empty residual history")
    if k == 0:
        return {"iterations": 0, "reduction_factor": None, "per_iter_s": None}
    r0, rk = residual_history[0], residual_history[-1]
    rho = (rk / r0) ** (1.0 / k) if r0 > 0 else 0.0
    return {"iterations": k, "reduction_factor": float(rho), "per_iter_s": (total_s - setup_s) / k}


class Multigrid:
    """Level systems (coarsest first), transfers and per-level smoothers."""

    def __init__(self, systems, config=None, transfers=None, parent_maps=None):
        t0 = time.perf_counter()
        self.config = config or MultigridConfig()
        self.systems = list(systems)
        if not self.systems:
            raise ValueError("need at least one level")
        if transfers is None:
            pms = parent_maps or [None] * len(self.systems)
            transfers = [None] + [
                build_transfer(self.systems[i - 1], self.systems[i], pms[i]) for i in range(1, len(self.systems))
            ]
        self.transfers = transfers
        self.smoothers = [None] + [
            VankaSmoother(s, self.config.smoother, self.config.backend) for s in self.systems[1:]
        ]
        self.coarse = CoarseSolver(self.systems[0])
        self._setup_shift()
        self.setup_s = time.perf_counter() - t0

    def _setup_shift(self):
        fine = self.finest
        mode = self.config.pressure_shift_correction
        pinned = bool(fine.constraints.of_kind("pin")) if hasattr(fine, "constraints") else False
        self.shift = None
        if mode == "on" or (mode == "auto" and pinned):
            z = np.zeros(fine.n)
            z[fine.n_u:] = 1.0
            lz = fine.L @ z
            denom = float(z @ lz)
            if denom != 0.0:
                self.shift = (z, lz, denom)

    def shift_correction(self, x, r):
        """Galerkin correction of x along the constant pressure; updates r in place.

        With a single pinned pressure the constant mode has a residual only
        next to the pin, and rediscretized coarse levels scale it differently
        from the fine level, so V-cycles alone remove it slowly.
        """
        if self.shift is None:
            return x
        z, lz, denom = self.shift
        alpha = float(z @ r) / denom
        r -= alpha * lz
        return x + alpha * z

    @property
    def n_levels(self):
        return len(self.systems)

    @property
    def finest(self):
        return self.systems[-1]

    def v_cycle(self, level, x, b):
        """One V-cycle on ``level`` (0 is the coarsest) from iterate x."""
        if level == 0:
            return self.coarse(b)
        L = self.systems[level].L
        if x is None:
            x = np.zeros(len(b))
        smooth = self.smoothers[level]
        cfg = self.config
        for _ in range(cfg.n_pre):
            x = smooth(x, b)
        r = residual(L, x, b)
        tr = self.transfers[level]
        e = self.v_cycle(level - 1, None, tr.restrict(r))
        x = x + tr.prolong(e)
        for _ in range(cfg.n_post):
            x = smooth(x, b)
        return x

    def solve(self, b=None, x0=None, extra_setup_s=0.0, callback=None):
        """Fixed-point iteration x <- x + V(b - L x) until the residual target.

        For pinned systems each cycle is followed by the constant-pressure
        correction (see ``shift_correction``).

        Returns (x, SolveReport); ``extra_setup_s`` adds assembly time measured
        by the caller to the reported setup time.
        """
        cfg = self.config
        fine = self.finest
        b = fine.b if b is None else np.asarray(b, dtype=float)
        x = np.zeros(fine.n) if x0 is None else np.array(x0, dtype=float)
        top = self.n_levels - 1
        t0 = time.perf_counter()
        r0 = float(np.linalg.norm(residual(fine.L, x, b)))
        history = [r0]
        converged = r0 == 0.0
        diverged = False
        while not converged and len(history) - 1 < cfg.max_iterations:
            x = self.v_cycle(top, x, b)
            r = residual(fine.L, x, b)
            x = self.shift_correction(x, r)
            rk = float(np.linalg.norm(r))
            history.append(rk)
            if callback is not None:
                callback(len(history) - 1, rk)
            if rk <= cfg.reduction_target * r0:
                converged = True
            elif not np.isfinite(rk) or rk > cfg.divergence_factor * r0:
                diverged = True
                break
        iter_s = time.perf_counter() - t0
        setup_s = self.setup_s + extra_setup_s
        total_s = setup_s + iter_s
        m = compute_metrics(history, total_s, setup_s)
        report = SolveReport(
            iterations=m["iterations"],
            residual_history=history,
            converged=converged,
            diverged=diverged,
            reduction_factor=m["reduction_factor"],
            setup_s=setup_s,
            per_iter_s=m["per_iter_s"],
            total_s=total_s,
            level_dofs=[s.n for s in self.systems],
            level_elements=[s.mesh.n_elements for s in self.systems],
            smoother=cfg.smoother.variant.value,
            damping=cfg.smoother.damping,
            n_pre=cfg.n_pre,
            n_post=cfg.n_post,
        )
        return x, report


def solve(systems, b=None, config=None, parent_maps=None):
    """Set up multigrid on ``systems`` (coarsest first) and iterate to the target."""
    return Multigrid(systems, config, parent_maps=parent_maps).solve(b)
