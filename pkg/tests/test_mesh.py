import numpy as np
import pytest

from stokesmg.mesh import (
    CAVITY_BANDS,
    CELL,
    EDGE,
    VERTEX,
    BoundaryTag,
    ChannelWithCylinder,
    MacroMeshSpec,
    MeshError,
    TowardAllBoundaries,
    TowardWallsAndCylinder,
    UniformMarker,
    UnitSquare,
    build_hierarchy,
    build_macro_mesh,
    enforce_two_to_one_balance,
    parent_map,
    refine_adaptive,
    refine_cells,
    refine_uniform,
    write_vtk,
)


def cell_keys(mesh):
    return sorted((c.root, c.path) for c in mesh.cells)


def brute_force_level_jump(mesh):
    """Largest level difference between cells whose edges overlap on a segment."""
    xy = mesh.element_coords()
    segs = []
    for e in range(mesh.n_elements):
        for k in range(4):
            segs.append((e, xy[e, k], xy[e, (k + 1) % 4]))
    worst = 0
    for i, (e1, a1, b1) in enumerate(segs):
        d1 = b1 - a1
        for e2, a2, b2 in segs[i + 1:]:
            if e1 == e2:
                continue
            # collinear and overlapping on a set of positive length
            cross = lambda p: d1[0] * (p[1] - a1[1]) - d1[1] * (p[0] - a1[0])
            if abs(cross(a2)) > 1e-12 or abs(cross(b2)) > 1e-12:
                continue
            t = sorted(np.dot(p - a1, d1) / np.dot(d1, d1) for p in (a2, b2))
            if min(t[1], 1.0) - max(t[0], 0.0) > 1e-12:
                worst = max(worst, abs(int(mesh.element_level[e1] - mesh.element_level[e2])))
    return worst


class TestMacroMesh:
    def test_single_cell(self):
        mesh = build_macro_mesh(MacroMeshSpec(UnitSquare(), 0))
        assert mesh.n_elements == 1
        assert mesh.n_vertices == 4

    def test_three_uniform_levels(self, square8):
        assert square8.n_elements == 64
        assert square8.n_vertices == 81
        assert 3 * square8.n_vertices == 243

    def test_macro_divisions(self):
        mesh = build_macro_mesh(MacroMeshSpec(UnitSquare(macro_divisions=3), 0))
        assert (mesh.n_elements, mesh.n_vertices) == (9, 16)
        with pytest.raises(MeshError):
            UnitSquare(macro_divisions=0)

    def test_square_boundary_tags(self, square8):
        tags = square8.boundary_edge_tags
        assert len(tags) == 32
        assert np.sum(tags == BoundaryTag.DIRICHLET_LID) == 8
        lid = square8.boundary_edges[tags == BoundaryTag.DIRICHLET_LID]
        assert np.all(square8.vertices[lid][..., 1] == 1.0)

    def test_elements_convex_and_positive(self, square8):
        assert square8.is_convex()
        assert np.all(square8.signed_areas() > 0)

    def test_channel_macro_is_valid(self):
        g = ChannelWithCylinder()
        mesh = build_macro_mesh(MacroMeshSpec(g, 0))
        assert mesh.is_convex()
        assert np.isclose(mesh.signed_areas().sum(), g.length_m * g.height_m - np.pi * g.radius_m**2, rtol=0.02)
        present = set(mesh.boundary_edge_tags.tolist())
        assert present == {int(t) for t in (BoundaryTag.DIRICHLET_WALL, BoundaryTag.DIRICHLET_INFLOW,
                                            BoundaryTag.NEUMANN_OUTFLOW, BoundaryTag.CYLINDER)}

    @pytest.mark.parametrize("kwargs", [
        {"radius_m": 0.0},
        {"radius_m": -0.1},
        {"center_xy_m": (0.2, 0.38)},
        {"center_xy_m": (0.03, 0.2)},
        {"radius_m": 0.3},
    ])
    def test_degenerate_channel_rejected(self, kwargs):
        with pytest.raises(MeshError):
            ChannelWithCylinder(**kwargs)

    def test_negative_uniform_levels_rejected(self):
        with pytest.raises(MeshError):
            MacroMeshSpec(UnitSquare(), -1)


class TestRefinement:
    def test_uniform_quadruples(self, square8):
        fine = refine_uniform(square8)
        assert fine.n_elements == 256
        assert np.all(fine.element_level == 4)

    def test_child_levels(self, square8):
        fine = refine_uniform(square8)
        parents = {(c.root, c.path): c.level for c in square8.cells}
        for c in fine.cells:
            assert c.level == parents[(c.root, c.path[:-1])] + 1

    @pytest.mark.parametrize("k", range(5))
    def test_euler_counts(self, k):
        mesh = build_macro_mesh(MacroMeshSpec(UnitSquare(), k))
        assert mesh.n_elements == 4**k
        assert mesh.n_vertices == (2**k + 1) ** 2
        assert not mesh.hanging

    def test_cylinder_midpoints_on_circle(self):
        g = ChannelWithCylinder()
        mesh = build_macro_mesh(MacroMeshSpec(g, 3))
        edges = mesh.boundary_edges[mesh.boundary_edge_tags == BoundaryTag.CYLINDER]
        pts = mesh.vertices[np.unique(edges)]
        r = np.linalg.norm(pts - np.asarray(g.center_xy_m), axis=1)
        assert len(pts) > 8
        assert np.max(np.abs(r - g.radius_m)) < 1e-12
        assert mesh.is_convex()

    def test_mark_all_equals_uniform(self, square8):
        a = refine_adaptive(square8, np.ones(square8.n_elements, dtype=bool))
        assert cell_keys(a) == cell_keys(refine_uniform(square8))

    def test_empty_marking_returns_same_mesh(self, square8):
        assert refine_adaptive(square8, np.zeros(square8.n_elements, dtype=bool)) is square8

    def test_corner_refinement_closure(self):
        grid = build_macro_mesh(MacroMeshSpec(UnitSquare(), 2))
        corner = int(np.argmin(grid.element_coords().sum(axis=(1, 2))))
        once = refine_adaptive(grid, np.eye(grid.n_elements, dtype=bool)[corner])
        assert once.n_elements == 16 + 3
        # refine the same corner twice more; its neighbours must follow
        mesh = once
        for _ in range(2):
            d = mesh.element_coords().sum(axis=(1, 2))
            mesh = refine_adaptive(mesh, d == d.min())
        assert mesh.max_level_jump() <= 1
        assert brute_force_level_jump(mesh) <= 1
        assert len(mesh.hanging) > 0
        # no cell outside the closure of the corner was touched
        untouched = [c for c in mesh.cells if c.level == 2]
        assert len(untouched) >= 16 - 4

    def test_neighbour_refined_once(self):
        grid = build_macro_mesh(MacroMeshSpec(UnitSquare(), 1))
        once = refine_cells(grid, np.eye(4, dtype=bool)[0], balance=False)
        # refine the child of the lower-left quadrant nearest the centre
        d = np.where(once.element_level == 2, once.element_coords().sum(axis=(1, 2)), -1.0)
        raw = refine_cells(once, d == d.max(), balance=False)
        assert raw.max_level_jump() == 2
        balanced = enforce_two_to_one_balance(raw)
        assert balanced.max_level_jump() <= 1
        assert brute_force_level_jump(balanced) <= 1
        # the right and top neighbours are split once, the diagonal one is not
        assert np.bincount(balanced.element_level).tolist() == [0, 1, 3 + 8, 4]

    def test_balance_idempotent(self, cavity_levels):
        hierarchy, _ = cavity_levels
        mesh = hierarchy.levels[3]
        once = enforce_two_to_one_balance(mesh)
        assert once is mesh
        assert cell_keys(enforce_two_to_one_balance(once)) == cell_keys(mesh)

    def test_hanging_vertices_at_edge_midpoints(self, cavity_levels):
        hierarchy, _ = cavity_levels
        for mesh in hierarchy.levels:
            v = mesh.vertices
            for h, (a, b) in mesh.hanging.items():
                assert np.allclose(v[h], 0.5 * (v[a] + v[b]), rtol=0, atol=1e-15)

    def test_toward_all_boundaries_marks_boundary_cells(self, square8):
        mark = TowardAllBoundaries().mark(square8, 1)
        touching = set()
        for a, b in square8.boundary_edges:
            for e, el in enumerate(square8.elements):
                if a in el and b in el:
                    touching.add(e)
        assert touching <= set(np.flatnonzero(mark).tolist())


class TestHierarchy:
    def test_uniform_counts(self):
        h = build_hierarchy(MacroMeshSpec(UnitSquare(), 3), UniformMarker(), 3)
        assert [m.n_elements for m in h.levels] == [64, 256, 1024]

    def test_cavity_hierarchy_counts(self, cavity_levels):
        hierarchy, _ = cavity_levels
        counts = [m.n_elements for m in hierarchy.levels]
        dofs = [3 * m.non_hanging_count() for m in hierarchy.levels]
        assert counts == [64, 208, 676, 2296, 7672]
        assert dofs == [243, 699, 2139, 7059, 23283]
        growth = np.array(counts[1:]) / np.array(counts[:-1])
        assert np.all(growth < 4.0)

    def test_cavity_band_marker(self):
        assert TowardAllBoundaries().band(1) == CAVITY_BANDS[0]
        assert TowardAllBoundaries().band(100) == CAVITY_BANDS[-1]

    def test_cylinder_marker_shrinks(self):
        m = TowardWallsAndCylinder(0.3, 0.5)
        assert [m.band(s) for s in (1, 2, 3)] == [0.3, 0.15, 0.075]
        with pytest.raises(MeshError):
            TowardWallsAndCylinder(0.3, 1.0)

    def test_parent_containment(self, cavity_levels):
        hierarchy, _ = cavity_levels
        for l in range(1, len(hierarchy)):
            coarse, fine = hierarchy.levels[l - 1], hierarchy.levels[l]
            pm = hierarchy.parent_maps[l]
            centroids = fine.element_coords().mean(axis=1)
            box = coarse.element_coords()[pm.element_parent]
            lo, hi = box.min(axis=1), box.max(axis=1)
            assert np.all((centroids > lo) & (centroids < hi))

    def test_vertex_nesting(self, cavity_levels, cylinder_levels):
        for hierarchy, _ in (cavity_levels, cylinder_levels):
            for l in range(1, len(hierarchy)):
                coarse, fine = hierarchy.levels[l - 1], hierarchy.levels[l]
                assert set(coarse.global_ids.tolist()) <= set(fine.global_ids.tolist())
                idx = [fine.local_index(g) for g in coarse.global_ids]
                assert np.array_equal(fine.vertices[idx], coarse.vertices)

    def test_parent_map_kinds(self, cavity_levels):
        hierarchy, _ = cavity_levels
        coarse, fine = hierarchy.levels[0], hierarchy.levels[1]
        pm = hierarchy.parent_maps[1]
        cv = coarse.vertices
        for v in range(fine.n_vertices):
            k, par = pm.vertex_kind[v], pm.vertex_parents[v]
            n = {VERTEX: 1, EDGE: 2, CELL: 4}[int(k)]
            assert np.all(par[:n] >= 0) and np.all(par[n:] < 0)
            assert np.allclose(cv[par[:n]].mean(axis=0), fine.vertices[v], rtol=0, atol=1e-15)

    def test_non_nested_levels_rejected(self, square8):
        other = build_macro_mesh(MacroMeshSpec(UnitSquare(), 3))
        with pytest.raises(MeshError):
            parent_map(refine_uniform(other), square8)

    def test_stall_raises(self):
        class MarkNothing:
            def mark(self, mesh, step):
                return np.zeros(mesh.n_elements, dtype=bool)

        with pytest.raises(MeshError):
            build_hierarchy(MacroMeshSpec(UnitSquare(), 1), MarkNothing(), 2)

    def test_levels_balanced(self, cavity_levels, cylinder_levels):
        for hierarchy, _ in (cavity_levels, cylinder_levels):
            for mesh in hierarchy.levels:
                assert mesh.max_level_jump() <= 1
                assert mesh.is_convex()

    def test_truncated(self, cavity_levels):
        hierarchy, _ = cavity_levels
        t = hierarchy.truncated(2)
        assert len(t) == 2 and t.parent_maps[0] is None


def test_write_vtk(tmp_path, square8):
    path = tmp_path / "mesh.vtk"
    u = np.zeros((square8.n_vertices, 2))
    write_vtk(path, square8, {"velocity": u, "pressure": np.ones(square8.n_vertices)})
    text = path.read_text()
    assert text.startswith("# vtk DataFile Version 3.0")
    assert "POINTS 81 double" in text
    assert "CELLS 64 320" in text
    assert "VECTORS velocity double" in text
    assert "SCALARS pressure double" in text
