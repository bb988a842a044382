"""Temporal grid and spatial mesh construction, refinement, conformity."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from backsolve.mesh import (
    SpatialMesh,
    TimeMesh,
    boundary_flags_from_cells,
    cell_volumes,
    check_conforming,
    dump_mesh,
    refine_uniform,
    uniform_time_mesh,
    unit_interval_mesh,
    unit_square_initial,
)


class TestTimeMesh:
    def test_single_element(self):
        tm = uniform_time_mesh(0.0, 1.0, 0)
        assert np.array_equal(tm.breakpoints, [0.0, 1.0])
        assert tm.n_elements == 1

    def test_four_elements(self):
        tm = uniform_time_mesh(0.0, 1.0, 2)
        assert np.array_equal(tm.breakpoints, [0.0, 0.25, 0.5, 0.75, 1.0])

    def test_short_end_interval(self):
        tm = uniform_time_mesh(7.0 / 8.0, 1.0, 0)
        assert np.array_equal(tm.breakpoints, [0.875, 1.0])

    def test_degenerate_interval_rejected(self):
        with pytest.raises(ValueError):
            uniform_time_mesh(1.0, 1.0, 1)
        with pytest.raises(ValueError):
            uniform_time_mesh(1.0, 0.5, 1)

    def test_unsorted_breakpoints_rejected(self):
        with pytest.raises(ValueError):
            TimeMesh(np.array([0.0, 0.5, 0.5, 1.0]))
        with pytest.raises(ValueError):
            TimeMesh(np.array([1.0]))

    def test_endpoints_and_lengths(self):
        tm = uniform_time_mesh(0.25, 2.25, 3)
        assert tm.t_start == 0.25
        assert tm.t_end == 2.25
        assert np.all(tm.lengths > 0.0)
        assert tm.lengths.sum() == pytest.approx(2.0, abs=1e-15)

    @given(
        k=st.integers(min_value=0, max_value=12),
        t0=st.floats(min_value=-4.0, max_value=4.0),
        dt=st.floats(min_value=1e-3, max_value=8.0),
    )
    def test_uniform_lengths_exact(self, k, t0, dt):
        # dyadic splitting keeps every element exactly T * 2^-k long
        tm = uniform_time_mesh(t0, t0 + dt, k)
        assert tm.n_elements == 2**k
        assert np.max(tm.lengths) == pytest.approx(dt * 2.0**-k, rel=1e-12)
        assert tm.breakpoints[0] == t0
        assert tm.breakpoints[-1] == t0 + dt


class TestUnitSquare:
    def test_structure(self):
        m = unit_square_initial()
        assert m.n_vertices == 5
        assert m.n_cells == 4
        # corners on the boundary, center interior
        assert m.boundary_vertex_flags.sum() == 4
        assert not m.boundary_vertex_flags[4]

    def test_areas(self):
        m = unit_square_initial()
        vols = cell_volumes(m)
        assert np.allclose(vols, 0.25, atol=1e-15)
        assert vols.sum() == pytest.approx(1.0, abs=1e-15)

    def test_conforming(self):
        check_conforming(unit_square_initial())


class TestUnitInterval:
    def test_single_element(self):
        m = unit_interval_mesh(1)
        assert np.array_equal(m.vertices.ravel(), [0.0, 1.0])
        assert m.n_cells == 1

    def test_four_elements(self):
        m = unit_interval_mesh(4)
        assert m.n_vertices == 5
        assert np.allclose(cell_volumes(m), 0.25)

    def test_interior_vertex(self):
        m = unit_interval_mesh(2)
        interior = m.vertices[~m.boundary_vertex_flags]
        assert interior.shape == (1, 1)
        assert interior[0, 0] == 0.5

    def test_zero_elements_rejected(self):
        with pytest.raises(ValueError):
            unit_interval_mesh(0)


class TestRefinement:
    def test_two_sweeps_square(self):
        m = refine_uniform(unit_square_initial(), 2)
        assert m.n_cells == 16
        assert cell_volumes(m).sum() == pytest.approx(1.0, rel=1e-14)

    def test_zero_sweeps_identity(self):
        m0 = unit_square_initial()
        m1 = refine_uniform(m0, 0)
        assert m1 is m0

    def test_interval_split(self):
        m = refine_uniform(unit_interval_mesh(2), 1)
        assert m.n_cells == 4
        assert np.allclose(cell_volumes(m), 0.25)

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_measure_preserved_and_conforming(self, n):
        m = refine_uniform(unit_square_initial(), n)
        assert m.n_cells == 4 * 2**n
        assert cell_volumes(m).sum() == pytest.approx(1.0, rel=1e-14)
        assert np.all(cell_volumes(m) > 0.0)
        check_conforming(m)

    def test_shape_regularity_bounded(self):
        # uniform bisection of the diagonal cut produces finitely many
        # similarity classes, so the worst radius ratio never grows
        def worst_ratio(mesh):
            v = mesh.vertices[mesh.cells]
            a = np.linalg.norm(v[:, 1] - v[:, 0], axis=1)
            b = np.linalg.norm(v[:, 2] - v[:, 1], axis=1)
            c = np.linalg.norm(v[:, 0] - v[:, 2], axis=1)
            s = 0.5 * (a + b + c)
            area = cell_volumes(mesh)
            inradius = area / s
            circumradius = a * b * c / (4.0 * area)
            return float(np.max(circumradius / inradius))

        initial = worst_ratio(unit_square_initial())
        for n in range(1, 5):
            assert worst_ratio(refine_uniform(unit_square_initial(), n)) <= (
                initial + 1e-12
            )

    def test_negative_sweeps_rejected(self):
        with pytest.raises(ValueError):
            refine_uniform(unit_square_initial(), -1)


class TestMeshValidation:
    def test_boundary_flags_recomputed(self):
        m = refine_uniform(unit_square_initial(), 2)
        flags = boundary_flags_from_cells(2, m.vertices, m.cells)
        assert np.array_equal(flags, m.boundary_vertex_flags)

    def test_wrong_flags_rejected(self):
        m = unit_square_initial()
        bad = SpatialMesh(
            2, m.vertices, m.cells, np.zeros(m.n_vertices, dtype=bool)
        )
        with pytest.raises(ValueError):
            check_conforming(bad)

    def test_out_of_range_cell_rejected(self):
        with pytest.raises(ValueError):
            SpatialMesh(
                1,
                np.array([[0.0], [1.0]]),
                np.array([[0, 2]]),
                np.array([True, True]),
            )

    def test_dump_round_structure(self):
        text = dump_mesh(unit_square_initial())
        lines = text.strip().splitlines()
        assert sum(1 for ln in lines if ln.startswith("v ")) == 5
        assert sum(1 for ln in lines if ln.startswith("c ")) == 4
