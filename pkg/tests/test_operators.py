"""Space-time tensor operators checked against direct quadrature assembly."""

import numpy as np
import pytest
import scipy.linalg

from backsolve.assembly import (
    space_mass,
    space_stiffness,
    time_mass_trial,
    time_stiffness_trial,
)
from backsolve.mesh import (
    refine_uniform,
    uniform_time_mesh,
    unit_interval_mesh,
    unit_square_initial,
)
from backsolve.operators import (
    TRIAL_SPACE,
    KroneckerOperator,
    MassSolveMass,
    assemble_B,
    dense_from_apply,
    gram_X,
    gram_Y,
    infsup_constant,
    trace_operator,
)

# aliased so pytest does not collect the source helper as a test
from backsolve.operators import test_space_spec as enriched_space_spec


# ---------------------------------------------------------- oracle pieces ----
# Hand-rolled shape functions and quadrature, independent of the assembly
# module, used to re-derive the space-time matrices entry by entry.


def hat_1d(mesh, points):
    """P1 values and derivatives at physical points: (n_free, q) each."""
    verts = mesh.vertices[:, 0]
    free = np.nonzero(~mesh.boundary_vertex_flags)[0]
    vals = np.zeros((len(free), len(points)))
    ders = np.zeros_like(vals)
    order = np.argsort(verts)
    xs = verts[order]
    for row, v in enumerate(free):
        pos = int(np.searchsorted(xs, verts[v]))
        left, mid, right = xs[pos - 1], xs[pos], xs[pos + 1]
        on_l = (points >= left) & (points <= mid)
        on_r = (points > mid) & (points <= right)
        vals[row, on_l] = (points[on_l] - left) / (mid - left)
        vals[row, on_r] = (right - points[on_r]) / (right - mid)
        ders[row, on_l] = 1.0 / (mid - left)
        ders[row, on_r] = -1.0 / (right - mid)
    return vals, ders


def legendre_pair(s, h):
    """Orthonormal constant and linear test modes at local coordinates s."""
    return np.stack(
        [np.full_like(s, 1.0 / np.sqrt(h)), np.sqrt(3.0 / h) * (2.0 * s - 1.0)]
    )


def quadrature_B_1d(tm, sm):
    """Parabolic form matrix assembled by explicit space-time quadrature."""
    sq, wq = np.polynomial.legendre.leggauss(4)
    sq = (sq + 1.0) / 2.0
    wq = wq / 2.0
    xq, xw = np.polynomial.legendre.leggauss(4)

    n_hat = tm.n_elements + 1
    hats_t = np.array(tm.breakpoints)
    free = np.nonzero(~sm.boundary_vertex_flags)[0]
    n_x = len(free)
    B = np.zeros((2 * tm.n_elements * n_x, n_hat * n_x))

    # spatial quadrature points per cell
    cells = sm.vertices[sm.cells][:, :, 0]
    lo = cells.min(axis=1)
    hi = cells.max(axis=1)
    pts = lo[:, None] + (xq[None, :] + 1.0) / 2.0 * (hi - lo)[:, None]
    wts = xw[None, :] / 2.0 * (hi - lo)[:, None]
    phi, dphi = hat_1d(sm, pts.ravel())
    phi = phi.reshape(n_x, len(cells), len(xq))
    dphi = dphi.reshape(n_x, len(cells), len(xq))
    mass_x = np.einsum("ncq,mcq,cq->nm", phi, phi, wts)
    stiff_x = np.einsum("ncq,mcq,cq->nm", dphi, dphi, wts)

    for e in range(tm.n_elements):
        t0, t1 = hats_t[e], hats_t[e + 1]
        h = t1 - t0
        tq = t0 + sq * h
        tw = wq * h
        psi = legendre_pair(sq, h)  # (2, q)
        for j in range(n_hat):
            hat_vals = np.interp(tq, hats_t, np.eye(n_hat)[j])
            hat_der = np.zeros_like(tq)
            if j == e + 1:
                hat_der[:] = 1.0 / h
            elif j == e:
                hat_der[:] = -1.0 / h
            dt_mom = psi @ (tw * hat_der)  # (2,)
            ms_mom = psi @ (tw * hat_vals)
            for i in range(2):
                row = (2 * e + i) * n_x
                col = j * n_x
                B[row : row + n_x, col : col + n_x] += (
                    dt_mom[i] * mass_x + ms_mom[i] * stiff_x
                )
    return B


# ------------------------------------------------------------------- tests ----


class TestFactors:
    def test_enriched_space_spec(self):
        assert enriched_space_spec(0).degree == 1
        assert enriched_space_spec(1).degree == 2
        with pytest.raises(ValueError):
            enriched_space_spec(2)

    def test_mass_solve_mass(self):
        sm = unit_interval_mesh(4)
        M = space_mass(sm, TRIAL_SPACE)
        A = space_stiffness(sm, TRIAL_SPACE)
        op = MassSolveMass(M, A)
        dense = M.toarray() @ np.linalg.solve(A.toarray(), M.toarray())
        rng = np.random.default_rng(0)
        v = rng.standard_normal(M.shape[0])
        assert np.allclose(op @ v, dense @ v, atol=1e-13)
        assert op.T is op
        assert np.allclose(op.to_dense(), dense, atol=1e-13)

    def test_kronecker_requires_terms(self):
        with pytest.raises(ValueError):
            KroneckerOperator([])

    def test_dense_from_apply(self):
        mat = np.arange(6.0).reshape(2, 3)
        assert np.array_equal(dense_from_apply(lambda v: mat @ v, 3), mat)


class TestParabolicOperator:
    def test_quadrature_oracle_1d(self):
        # dense Kronecker assembly against the raw quadrature route
        tm = uniform_time_mesh(0.0, 1.0, 1)
        sm = unit_interval_mesh(4)
        B = assemble_B(tm, sm, l=0).to_dense()
        ref = quadrature_B_1d(tm, sm)
        assert B.shape == ref.shape
        assert np.max(np.abs(B - ref)) <= 1e-13

    def test_shape_2d(self):
        tm = uniform_time_mesh(0.0, 1.0, 0)
        sm = refine_uniform(unit_square_initial(), 1)
        n_trial = int((~sm.boundary_vertex_flags).sum())
        B = assemble_B(tm, sm, l=0)
        assert B.shape == (2 * n_trial, 2 * n_trial)
        B1 = assemble_B(tm, sm, l=1)
        assert B1.shape[1] == 2 * n_trial
        assert B1.shape[0] > B.shape[0]

    def test_constant_in_time_drops_derivative(self):
        # u constant in time: B u reduces to the stiffness term alone
        tm = uniform_time_mesh(0.0, 1.0, 2)
        sm = unit_interval_mesh(4)
        rng = np.random.default_rng(1)
        n_x = int((~sm.boundary_vertex_flags).sum())
        z_x = rng.standard_normal(n_x)
        z = np.tile(z_x, tm.n_elements + 1)
        out = assemble_B(tm, sm, 0).apply(z).reshape(tm.n_elements, 2, n_x)
        A = space_stiffness(sm, TRIAL_SPACE)
        h = tm.lengths
        # constant test mode picks up sqrt(h) * A z, the linear mode zero
        for e in range(tm.n_elements):
            assert np.allclose(
                out[e, 0], np.sqrt(h[e]) * (A @ z_x), atol=1e-13
            )
            assert np.allclose(out[e, 1], 0.0, atol=1e-13)

    def test_adjoint_identity(self):
        tm = uniform_time_mesh(0.0, 1.0, 1)
        sm = refine_uniform(unit_square_initial(), 1)
        B = assemble_B(tm, sm, 0)
        rng = np.random.default_rng(2)
        z = rng.standard_normal(B.shape[1])
        w = rng.standard_normal(B.shape[0])
        assert B.apply(z) @ w == pytest.approx(z @ B.apply_transpose(w), rel=1e-13)

    def test_discrete_injectivity(self):
        # (Bz)' G_Y^{-1} (Bz) > 0 for z != 0: no kernel in the trial space
        tm = uniform_time_mesh(0.0, 1.0, 1)
        sm = unit_interval_mesh(4)
        B = assemble_B(tm, sm, 0).to_dense()
        Y = gram_Y(tm, sm, 0).to_dense()
        rng = np.random.default_rng(3)
        for _ in range(20):
            z = rng.standard_normal(B.shape[1])
            r = B @ z
            assert r @ np.linalg.solve(Y, r) > 1e-10 * (z @ z)

    @pytest.mark.parametrize(
        "pair",
        [
            (uniform_time_mesh(0.0, 1.0, 0), unit_interval_mesh(2)),
            (
                uniform_time_mesh(0.0, 1.0, 1),
                refine_uniform(unit_square_initial(), 1),
            ),
        ],
    )
    def test_matrix_free_matches_dense(self, pair):
        tm, sm = pair
        for op in (
            assemble_B(tm, sm, 0),
            assemble_B(tm, sm, 1),
            gram_X(tm, sm),
            gram_Y(tm, sm, 0),
        ):
            dense = op.to_dense()
            rng = np.random.default_rng(4)
            for _ in range(5):
                z = rng.standard_normal(op.shape[1])
                w = rng.standard_normal(op.shape[0])
                assert np.allclose(op.apply(z), dense @ z, atol=1e-13)
                assert np.allclose(
                    op.apply_transpose(w), dense.T @ w, atol=1e-13
                )


class TestGramY:
    def test_quadrature_oracle_1d(self):
        # identity in time x stiffness in space, re-derived by quadrature
        tm = uniform_time_mesh(0.0, 1.0, 1)
        sm = unit_interval_mesh(4)
        G = gram_Y(tm, sm, 0).to_dense()

        xq, xw = np.polynomial.legendre.leggauss(3)
        cells = sm.vertices[sm.cells][:, :, 0]
        lo, hi = cells.min(axis=1), cells.max(axis=1)
        pts = lo[:, None] + (xq[None, :] + 1.0) / 2.0 * (hi - lo)[:, None]
        wts = xw[None, :] / 2.0 * (hi - lo)[:, None]
        _, dphi = hat_1d(sm, pts.ravel())
        n_x = dphi.shape[0]
        dphi = dphi.reshape(n_x, len(cells), len(xq))
        stiff = np.einsum("ncq,mcq,cq->nm", dphi, dphi, wts)
        ref = np.kron(np.eye(2 * tm.n_elements), stiff)
        assert np.max(np.abs(G - ref)) <= 1e-12

    def test_symmetric_positive(self):
        tm = uniform_time_mesh(0.0, 1.0, 1)
        sm = refine_uniform(unit_square_initial(), 1)
        G = gram_Y(tm, sm, 1).to_dense()
        assert np.max(np.abs(G - G.T)) <= 1e-13
        assert np.linalg.eigvalsh(G).min() > 0.0


class TestGramX:
    def test_single_eigenfunction_closed_form(self):
        # for a generalized stiffness eigenvector the squared norm is
        # mu * int tau^2 + (1/mu) * int (tau')^2
        tm = uniform_time_mesh(0.0, 1.0, 2)
        sm = unit_interval_mesh(8)
        A = space_stiffness(sm, TRIAL_SPACE).toarray()
        M = space_mass(sm, TRIAL_SPACE).toarray()
        mus, vecs = scipy.linalg.eigh(A, M)
        G = gram_X(tm, sm)
        Mt = time_mass_trial(tm).toarray()
        Tt = time_stiffness_trial(tm).toarray()
        rng = np.random.default_rng(5)
        tau = rng.standard_normal(tm.n_elements + 1)
        for idx in range(len(mus)):
            v = vecs[:, idx]  # M-orthonormal
            u = np.kron(tau, v)
            expected = mus[idx] * (tau @ Mt @ tau) + (tau @ Tt @ tau) / mus[idx]
            assert G.inner(u, u) == pytest.approx(expected, rel=1e-10)

    def test_spd(self):
        tm = uniform_time_mesh(0.0, 1.0, 1)
        sm = refine_uniform(unit_square_initial(), 1)
        G = gram_X(tm, sm)
        rng = np.random.default_rng(6)
        for _ in range(10):
            v = rng.standard_normal(G.shape[1])
            assert G.inner(v, v) > 0.0
        dense = G.to_dense()
        assert np.max(np.abs(dense - dense.T)) <= 1e-12


class TestTrace:
    def test_end_trace_picks_last_slab(self):
        tm = uniform_time_mesh(0.0, 1.0, 2)
        sm = unit_interval_mesh(4)
        n_x = int((~sm.boundary_vertex_flags).sum())
        rng = np.random.default_rng(7)
        z = rng.standard_normal((tm.n_elements + 1) * n_x)
        got = trace_operator(tm, sm, 1.0).apply(z)
        assert np.array_equal(got, z.reshape(-1, n_x)[-1])

    def test_start_trace_of_vanishing_function(self):
        tm = uniform_time_mesh(0.0, 1.0, 2)
        sm = unit_interval_mesh(4)
        n_x = int((~sm.boundary_vertex_flags).sum())
        z = np.zeros((tm.n_elements + 1, n_x))
        z[1:] = np.random.default_rng(8).standard_normal((tm.n_elements, n_x))
        got = trace_operator(tm, sm, 0.0).apply(z.ravel())
        assert np.max(np.abs(got)) <= 1e-15

    def test_midpoint_averages(self):
        tm = uniform_time_mesh(0.0, 1.0, 0)
        sm = unit_interval_mesh(4)
        n_x = int((~sm.boundary_vertex_flags).sum())
        rng = np.random.default_rng(9)
        z = rng.standard_normal((2, n_x))
        got = trace_operator(tm, sm, 0.5).apply(z.ravel())
        assert np.allclose(got, 0.5 * (z[0] + z[1]), atol=1e-15)


class TestInfSup:
    def test_equal_enrichment_is_one(self):
        tm = uniform_time_mesh(0.0, 1.0, 1)
        sm = refine_uniform(unit_square_initial(), 1)
        assert infsup_constant(tm, sm, 0, 0) == 1.0
        assert infsup_constant(tm, sm, 1, 1) == 1.0

    def test_reversed_enrichment_rejected(self):
        tm = uniform_time_mesh(0.0, 1.0, 1)
        sm = refine_uniform(unit_square_initial(), 1)
        with pytest.raises(ValueError):
            infsup_constant(tm, sm, 1, 0)

    @pytest.mark.parametrize("k", [1, 2])
    def test_nested_bounded_by_one(self, k):
        tm = uniform_time_mesh(0.0, 1.0, k)
        sm = refine_uniform(unit_square_initial(), 2 * k)
        gamma = infsup_constant(tm, sm, 0, 1)
        assert gamma <= 1.0 + 1e-10
        assert gamma > 0.5
