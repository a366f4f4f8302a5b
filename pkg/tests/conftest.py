import numpy as np
import pytest

from stokesmg.bench import RunConfig, assemble_levels, benchmark_hierarchy
from stokesmg.discretization import assemble_system, cavity_bcs
from stokesmg.mesh import MacroMeshSpec, UnitSquare, build_macro_mesh


@pytest.fixture(scope="session")
def square8():
    """Unit square after 3 uniform refinements (64 cells, 81 vertices)."""
    return build_macro_mesh(MacroMeshSpec(UnitSquare(), 3))


@pytest.fixture(scope="session")
def cavity8(square8):
    return assemble_system(square8, cavity_bcs(), 1e-3)


@pytest.fixture(scope="session")
def cavity3x3():
    mesh = build_macro_mesh(MacroMeshSpec(UnitSquare(macro_divisions=3), 0))
    return assemble_system(mesh, cavity_bcs(), 1e-3)


def _levels(benchmark, n_levels):
    cfg = RunConfig(benchmark=benchmark, n_levels=n_levels)
    hierarchy, bcs = benchmark_hierarchy(cfg)
    systems, _ = assemble_levels(cfg, hierarchy, bcs)
    return hierarchy, systems


@pytest.fixture(scope="session")
def cavity_levels():
    """Adaptive cavity hierarchy with 5 levels and assembled systems."""
    return _levels("cavity", 5)


@pytest.fixture(scope="session")
def cylinder_levels():
    """Cylinder-channel hierarchy with 3 levels and assembled systems."""
    return _levels("cylinder", 3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def record_criterion(number, part, ok, detail):
    ACCEPTANCE.setdefault(number, []).append((part, bool(ok), detail))
    print(f"{'PASS' if ok else 'FAIL'} criterion {number} [{part}]: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[number]
        ok = all(p[1] for p in parts)
        detail = "; ".join(f"{name}: {'ok' if good else 'FAILED'} ({d})" for name, good, d in parts)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
