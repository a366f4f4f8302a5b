"""Driven-cavity and cylinder-channel benchmark drivers and report output."""

import csv
import io
import json
import platform
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone

import numpy as np

from . import kernels
from .discretization import BoundaryTag, assemble_system, cavity_bcs, channel_bcs, zero_mean
from .mesh import (
    CAVITY_BANDS,
    ChannelWithCylinder,
    MacroMeshSpec,
    TowardAllBoundaries,
    TowardWallsAndCylinder,
    UnitSquare,
    build_hierarchy,
    write_vtk,
)
from .multigrid import Multigrid, MultigridConfig
from .smoothers import SmootherConfig, Variant

CSV_COLUMNS = (
    "depth", "n_e", "n_dof", "smoother", "n_pre", "n_post", "damping", "iterations",
    "converged", "reduction_factor", "setup_s", "per_iter_s", "total_s",
)

BENCHMARKS = ("cavity", "cylinder")


@dataclass
class RunConfig:
    benchmark: str = "cavity"
    n_levels: int = 4
    smoothers: tuple = ("mv",)
    n_pre: int = 3
    n_post: int = 3
    damping: float = None  # None keeps each smoother's default
    beta: float = None  # None means 0.1 / eta
    eta: float = 1e-3
    reduction_target: float = 1e-8
    max_iterations: int = 500
    output: str = None
    format: str = "csv"
    deterministic: bool = False
    vtk: str = None  # path of a legacy VTK file for the finest solution
    mean_velocity: float = 0.3  # cylinder inflow parameter
    lid_velocity: float = 1.0

    def __post_init__(self):
        if isinstance(self.smoothers, str):
            self.smoothers = (self.smoothers,)
        self.smoothers = tuple(Variant(s).value for s in self.smoothers)
        self.validate()

    def validate(self):
        if self.benchmark not in BENCHMARKS:
            raise ValueError(f"benchmark must be one of {BENCHMARKS}")
        if self.n_levels < 2:
            raise ValueError("n_levels must be at least 2")
        if self.benchmark == "cavity" and self.n_levels > len(CAVITY_BANDS) + 1:
            raise ValueError(f"the cavity hierarchy has at most {len(CAVITY_BANDS) + 1} levels")
        for name in ("eta", "mean_velocity", "lid_velocity"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.beta is not None and self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.format not in ("csv", "json"):
            raise ValueError("format must be csv or json")
        if not self.smoothers:
            raise ValueError("at least one smoother is required")

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        d = asdict(self)
        d["smoothers"] = list(self.smoothers)
        return d

    def multigrid_config(self, variant, n_pre=None, n_post=None):
        return MultigridConfig(
            n_pre=self.n_pre if n_pre is None else n_pre,
            n_post=self.n_post if n_post is None else n_post,
            smoother=SmootherConfig(variant, self.damping),
            reduction_target=self.reduction_target,
            max_iterations=self.max_iterations,
        )


@dataclass
class BenchmarkReport:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    residual_histories: list = field(default_factory=list)

    def add(self, depth, system, report):
        self.rows.append({
            "depth": depth,
            "n_e": system.mesh.n_elements,
            "n_dof": 3 * system.mesh.non_hanging_count(),
            "smoother": report.smoother,
            "n_pre": report.n_pre,
            "n_post": report.n_post,
            "damping": report.damping,
            "iterations": report.iterations,
            "converged": report.converged,
            "reduction_factor": report.reduction_factor,
            "setup_s": report.setup_s,
            "per_iter_s": report.per_iter_s,
            "total_s": report.total_s,
        })
        self.residual_histories.append(list(report.residual_history))

    def to_json(self):
        return json.dumps(
            {"metadata": self.metadata, "rows": self.rows, "residual_histories": self.residual_histories},
            indent=2,
        )

    def to_csv(self):
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in self.rows:
            w.writerow({k: ("" if row[k] is None else repr(row[k]) if isinstance(row[k], float) else row[k])
                        for k in CSV_COLUMNS})
        return buf.getvalue()


def _metadata(cfg, kind):
    meta = {
        "run": kind,
        "config": cfg.to_dict(),
        "host": platform.node(),
        "platform": platform.platform(),
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "kernels": kernels.BACKEND_NAME,
    }
    if not cfg.deterministic:
        meta["timestamp"] = datetime.now(timezone.utc).isoformat()
    return meta


def benchmark_hierarchy(cfg):
    """Mesh hierarchy and boundary conditions for ``cfg.benchmark``."""
    if cfg.benchmark == "cavity":
        spec = MacroMeshSpec(UnitSquare(), initial_uniform_levels=3)
        h = build_hierarchy(spec, TowardAllBoundaries(CAVITY_BANDS), cfg.n_levels)
        return h, cavity_bcs(cfg.lid_velocity)
    geom = ChannelWithCylinder()
    spec = MacroMeshSpec(geom, initial_uniform_levels=1)
    h = build_hierarchy(spec, TowardWallsAndCylinder(), cfg.n_levels)
    return h, channel_bcs(cfg.mean_velocity, geom.height_m)


def assemble_levels(cfg, hierarchy, bcs):
    """Assembled systems and their cumulative assembly times."""
    systems, cumulative, total = [], [], 0.0
    for mesh in hierarchy.levels:
        t0 = time.perf_counter()
        systems.append(assemble_system(mesh, bcs, cfg.eta, cfg.beta))
        total += time.perf_counter() - t0
        cumulative.append(total)
    return systems, cumulative


def _export(cfg, system, x):
    u, p = system.fields(x)
    if system.constraints.of_kind("pin"):
        p = zero_mean(p)
    write_vtk(cfg.vtk, system.mesh, {"velocity": u, "pressure": p})


def _run(cfg, kind, depths, step_counts):
    hierarchy, bcs = benchmark_hierarchy(cfg)
    systems, assembly_s = assemble_levels(cfg, hierarchy, bcs)
    report = BenchmarkReport(metadata=_metadata(cfg, kind))
    last = None
    for depth in depths:
        for s in step_counts:
            for variant in cfg.smoothers:
                n_pre, n_post = (cfg.n_pre, cfg.n_post) if s is None else (s, s)
                mg = Multigrid(systems[:depth], cfg.multigrid_config(variant, n_pre, n_post),
                               parent_maps=hierarchy.parent_maps[:depth])
                x, rep = mg.solve(extra_setup_s=assembly_s[depth - 1])
                report.add(depth, systems[depth - 1], rep)
                last = (systems[depth - 1], x)
    if cfg.vtk and last is not None:
        _export(cfg, *last)
    return report


def run_cavity(cfg):
    """Solve the driven cavity on depths 2..n_levels with every requested smoother."""
    if cfg.benchmark != "cavity":
        cfg = RunConfig.from_dict({**cfg.to_dict(), "benchmark": "cavity"})
    return _run(cfg, "cavity", range(2, cfg.n_levels + 1), [None])


def run_cylinder(cfg):
    """Solve the cylinder channel on depths 2..n_levels with every requested smoother."""
    if cfg.benchmark != "cylinder":
        cfg = RunConfig.from_dict({**cfg.to_dict(), "benchmark": "cylinder"})
    return _run(cfg, "cylinder", range(2, cfg.n_levels + 1), [None])


def sweep_smoothing_steps(cfg, steps=(1, 2, 3, 4, 5)):
    """Rows for n_pre = n_post = s at the finest configured depth."""
    steps = [int(s) for s in steps]
    if any(s < 0 for s in steps):
        raise ValueError("smoothing step counts must be non-negative")
    return _run(cfg, "sweep", [cfg.n_levels], steps)


def emit_report(report, fmt, path=None):
    """Write the report as CSV or JSON; returns the text. ``path=None`` skips writing."""
    if fmt == "csv":
        text = report.to_csv()
    elif fmt == "json":
        text = report.to_json()
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


# ---------------------------------------------------------------------------
# solution checks


def boundary_flux(system, x, tag):
    """Integral of u . n over the boundary edges with ``tag`` (exact for Q1 traces).

    The sign follows the outward normal of the domain, taken from the cell
    that owns each edge.
    """
    u, _ = system.fields(x)
    mesh = system.mesh
    sel = mesh.boundary_edge_tags == int(tag)
    edges = mesh.boundary_edges[sel]
    if len(edges) == 0:
        return 0.0
    a, b = mesh.vertices[edges[:, 0]], mesh.vertices[edges[:, 1]]
    t = b - a
    # cells are counter-clockwise, so the outward normal is the right-hand normal
    n = np.column_stack([t[:, 1], -t[:, 0]])
    mean_u = 0.5 * (u[edges[:, 0]] + u[edges[:, 1]])
    return float(np.sum(np.einsum("ei,ei->e", mean_u, n)))


def vertical_centerline_profile(system, x, tol=1e-12):
    """(y, u_x) at the vertices on x = 0.5, sorted by y."""
    u, _ = system.fields(x)
    v = system.mesh.vertices
    on = np.abs(v[:, 0] - 0.5) < tol
    order = np.argsort(v[on, 1])
    return v[on, 1][order], u[on, 0][order]


def flux_imbalance(system, x):
    """Relative mismatch between inflow and outflow volume rates."""
    q_in = -boundary_flux(system, x, BoundaryTag.DIRICHLET_INFLOW)
    q_out = boundary_flux(system, x, BoundaryTag.NEUMANN_OUTFLOW)
    return abs(q_out - q_in) / abs(q_in)
