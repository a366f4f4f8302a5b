"""Adaptive geometric multigrid for stabilized Q1-Q1 Stokes flow with
multiplicative, additive and restricted additive Vanka smoothers."""

from .discretization import (
    BoundaryConditions,
    SaddleSystem,
    apply_inflow_profile,
    assemble_rhs,
    assemble_system,
    cavity_bcs,
    channel_bcs,
)
from .kernels import BACKEND_NAME
from .mesh import (
    BoundaryTag,
    ChannelWithCylinder,
    MacroMeshSpec,
    QuadMesh,
    UnitSquare,
    build_hierarchy,
    build_macro_mesh,
)
from .multigrid import Multigrid, MultigridConfig, SolveReport, solve
from .smoothers import SmootherConfig, Variant, VankaSmoother

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME",
    "BoundaryConditions",
    "BoundaryTag",
    "ChannelWithCylinder",
    "MacroMeshSpec",
    "Multigrid",
    "MultigridConfig",
    "QuadMesh",
    "SaddleSystem",
    "SmootherConfig",
    "SolveReport",
    "UnitSquare",
    "VankaSmoother",
    "Variant",
    "apply_inflow_profile",
    "assemble_rhs",
    "assemble_system",
    "build_hierarchy",
    "build_macro_mesh",
    "cavity_bcs",
    "channel_bcs",
    "solve",
]
