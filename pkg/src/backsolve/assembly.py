"""Temporal and spatial finite element assembly.

Builds every 1-d matrix the space-time operators are composed of: hat mass,
derivative and stiffness matrices in time, mixed matrices against an
element-wise Legendre test basis, Lagrange P1/P2 mass and stiffness on
simplicial meshes (Dirichlet dofs eliminated, not penalized), trace vectors,
tensor-quadrature load vectors and L2 projections.

Test dof numbering in time is element-major: dof = element*(p+1) + n where n
is the local polynomial degree. Spatial P2 numbering lists retained vertex
dofs first, then retained edge (2d) or element-midpoint (1d) dofs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numpy.polynomial.legendre import legvander
from scipy.sparse.linalg import spsolve

from .mesh import SpatialMesh, TimeMesh, _facets, cell_volumes
from .quadrature import gauss_1d_for_degree, triangle_rule


@dataclass(frozen=True)
class SpaceBasisSpec:
    """Continuous Lagrange space of the given degree, optionally H_0^1."""

    degree: int = 1
    dirichlet: bool = True

    def __post_init__(self):
        if self.degree not in (1, 2):
            raise ValueError("only degrees 1 and 2 are supported")


@dataclass(frozen=True)
class TimeBasisSpec:
    """Trial hats or a discontinuous element-wise Legendre test basis."""

    continuity: str = "discontinuous-pw-poly"
    degree: int = 1
    orthonormal: bool = True

    def __post_init__(self):
        if self.continuity not in ("continuous-pw-linear", "discontinuous-pw-poly"):
            raise ValueError(f"unknown continuity {self.continuity!r}")
        if self.continuity == "continuous-pw-linear" and self.degree != 1:
            raise ValueError("continuous trial basis is piecewise linear")
        if self.degree < 0:
            raise ValueError("degree must be nonnegative")


# ---------------------------------------------------------------- time ----


def time_mass_trial(mesh: TimeMesh) -> sp.csr_matrix:
    """Mass matrix of the continuous piecewise linear hats."""
    h = mesh.lengths
    n = mesh.n_elements
    rows, cols, vals = [], [], []
    for (i, j, c) in ((0, 0, 1 / 3), (0, 1, 1 / 6), (1, 0, 1 / 6), (1, 1, 1 / 3)):
        rows.append(np.arange(n) + i)
        cols.append(np.arange(n) + j)
        vals.append(c * h)
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n + 1, n + 1),
    ).tocsr()


def time_stiffness_trial(mesh: TimeMesh) -> sp.csr_matrix:
    h = mesh.lengths
    n = mesh.n_elements
    rows, cols, vals = [], [], []
    for (i, j, c) in ((0, 0, 1.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 1.0)):
        rows.append(np.arange(n) + i)
        cols.append(np.arange(n) + j)
        vals.append(c / h)
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n + 1, n + 1),
    ).tocsr()


def time_test_dim(mesh: TimeMesh, test: TimeBasisSpec) -> int:
    return mesh.n_elements * (test.degree + 1)


def test_basis_values(test: TimeBasisSpec, s: np.ndarray, h: float) -> np.ndarray:
    """Values of the element test basis at local coordinates s in (0,1).

    Returns shape (degree+1, len(s)). With test.orthonormal the functions are
    Legendre scaled to unit L2 norm on an element of length h, so the time
    Gram of the test space is the identity.
    """
    if test.continuity != "discontinuous-pw-poly":
        raise ValueError("test basis must be discontinuous")
    v = legvander(2.0 * np.asarray(s) - 1.0, test.degree).T
    if test.orthonormal:
        scale = np.sqrt((2.0 * np.arange(test.degree + 1) + 1.0) / h)
        v = v * scale[:, None]
    return v


def time_mass_mixed(mesh: TimeMesh, test: TimeBasisSpec) -> sp.csr_matrix:
    """N_t[i][j] = integral of trial hat j against test function i."""
    p = test.degree
    sq, wq = gauss_1d_for_degree(p + 1)
    n = mesh.n_elements
    rows, cols, vals = [], [], []
    hats = np.stack([1.0 - sq, sq])  # (2, q)
    for e in range(n):
        h = mesh.lengths[e]
        psi = test_basis_values(test, sq, h)  # (p+1, q)
        loc = h * np.einsum("q,iq,jq->ij", wq, psi, hats)
        for i in range(p + 1):
            for j in range(2):
                rows.append(e * (p + 1) + i)
                cols.append(e + j)
                vals.append(loc[i, j])
    return sp.coo_matrix(
        (vals, (rows, cols)), shape=(n * (p + 1), n + 1)
    ).tocsr()


def time_derivative_mixed(mesh: TimeMesh, test: TimeBasisSpec) -> sp.csr_matrix:
    """D_t[i][j] = integral of (trial hat j)' against test function i."""
    p = test.degree
    sq, wq = gauss_1d_for_degree(p)
    n = mesh.n_elements
    rows, cols, vals = [], [], []
    for e in range(n):
        h = mesh.lengths[e]
        psi = test_basis_values(test, sq, h)
        ints = h * psi @ wq  # integral of each test function over the element
        for i in range(p + 1):
            for j, slope in ((0, -1.0 / h), (1, 1.0 / h)):
                rows.append(e * (p + 1) + i)
                cols.append(e + j)
                vals.append(slope * ints[i])
    return sp.coo_matrix(
        (vals, (rows, cols)), shape=(n * (p + 1), n + 1)
    ).tocsr()


def trace_vector(mesh: TimeMesh, t: float) -> np.ndarray:
    """Hat values at time t: e_t[j] = hat_j(t)."""
    bp = mesh.breakpoints
    if t < bp[0] or t > bp[-1]:
        raise ValueError(f"t={t} outside [{bp[0]}, {bp[-1]}]")
    e = int(np.clip(np.searchsorted(bp, t, side="right") - 1, 0, mesh.n_elements - 1))
    s = (t - bp[e]) / (bp[e + 1] - bp[e])
    out = np.zeros(bp.size)
    out[e] = 1.0 - s
    out[e + 1] = s
    return out


# --------------------------------------------------------------- space ----


@dataclass(frozen=True)
class DofMap:
    """Cell -> global dof table; -1 marks an eliminated (Dirichlet) slot."""

    n_dofs: int
    cell_dofs: np.ndarray


def _ref_shapes_interval(degree: int, s: np.ndarray):
    s = np.asarray(s)
    if degree == 1:
        vals = np.stack([1.0 - s, s], axis=1)
        grads = np.broadcast_to(
            np.array([[-1.0], [1.0]]), (s.size, 2, 1)
        ).copy()
        return vals, grads
    vals = np.stack(
        [(1.0 - s) * (1.0 - 2.0 * s), s * (2.0 * s - 1.0), 4.0 * s * (1.0 - s)],
        axis=1,
    )
    grads = np.stack(
        [4.0 * s - 3.0, 4.0 * s - 1.0, 4.0 - 8.0 * s], axis=1
    )[:, :, None]
    return vals, grads


def _ref_shapes_triangle(degree: int, bary: np.ndarray):
    lam = np.asarray(bary)
    dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    if degree == 1:
        vals = lam.copy()
        grads = np.broadcast_to(dlam, (lam.shape[0], 3, 2)).copy()
        return vals, grads
    q = lam.shape[0]
    vals = np.empty((q, 6))
    grads = np.empty((q, 6, 2))
    for i in range(3):
        vals[:, i] = lam[:, i] * (2.0 * lam[:, i] - 1.0)
        grads[:, i] = (4.0 * lam[:, i, None] - 1.0) * dlam[i]
    for k, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
        vals[:, 3 + k] = 4.0 * lam[:, i] * lam[:, j]
        grads[:, 3 + k] = 4.0 * (lam[:, i, None] * dlam[j] + lam[:, j, None] * dlam[i])
    return vals, grads


def ref_shapes(dimension: int, degree: int, pts: np.ndarray):
    """Shape values (q, nloc) and reference gradients (q, nloc, d)."""
    if dimension == 1:
        return _ref_shapes_interval(degree, pts)
    if dimension == 2:
        return _ref_shapes_triangle(degree, pts)
    raise NotImplementedError("3d shape functions not implemented")


def space_dof_map(mesh: SpatialMesh, spec: SpaceBasisSpec) -> DofMap:
    keep_v = (
        ~mesh.boundary_vertex_flags
        if spec.dirichlet
        else np.ones(mesh.n_vertices, dtype=bool)
    )
    vdof = np.full(mesh.n_vertices, -1, dtype=np.int64)
    vdof[keep_v] = np.arange(keep_v.sum())
    n = int(keep_v.sum())
    if spec.degree == 1:
        return DofMap(n, vdof[mesh.cells])
    if mesh.dimension == 1:
        mids = n + np.arange(mesh.n_cells)
        cd = np.column_stack([vdof[mesh.cells], mids])
        return DofMap(n + mesh.n_cells, cd)
    facets, cell_facets, counts = _facets(mesh)
    keep_e = counts == 2 if spec.dirichlet else np.ones(len(counts), dtype=bool)
    edof = np.full(len(facets), -1, dtype=np.int64)
    edof[keep_e] = n + np.arange(keep_e.sum())
    # local edges (01, 12, 20) are the facets opposite local vertices (2, 0, 1)
    edge_cols = cell_facets[:, [2, 0, 1]]
    cd = np.column_stack([vdof[mesh.cells], edof[edge_cols]])
    return DofMap(n + int(keep_e.sum()), cd)


def _geometry(mesh: SpatialMesh):
    """Per-cell |volume| and inverse Jacobians (reference -> physical)."""
    vol = cell_volumes(mesh)
    if np.any(vol <= 0.0):
        raise ValueError("cell with nonpositive volume")
    v = mesh.vertices[mesh.cells]
    if mesh.dimension == 1:
        jinv = (1.0 / (v[:, 1, 0] - v[:, 0, 0]))[:, None, None]
        return vol, jinv
    jac = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=2)
    jinv = np.linalg.inv(jac)
    return vol, jinv


def _cell_rule(mesh: SpatialMesh, degree: int):
    # both rules have weights summing to 1: integral = |cell| * sum(w * f)
    if mesh.dimension == 1:
        return gauss_1d_for_degree(degree)
    return triangle_rule(degree)


def quad_points_physical(mesh: SpatialMesh, pts: np.ndarray) -> np.ndarray:
    """Map reference/barycentric rule points to all cells: (nc, q, d)."""
    v = mesh.vertices[mesh.cells]
    if mesh.dimension == 1:
        s = np.asarray(pts)
        return (
            v[:, None, 0, :] * (1.0 - s)[None, :, None]
            + v[:, None, 1, :] * s[None, :, None]
        )
    return np.einsum("qi,cid->cqd", np.asarray(pts), v)


def _accumulate(rows_t, cols_t, local, shape):
    r = np.broadcast_to(rows_t[:, :, None], local.shape).ravel()
    c = np.broadcast_to(cols_t[:, None, :], local.shape).ravel()
    v = local.ravel()
    keep = (r >= 0) & (c >= 0)
    return sp.coo_matrix((v[keep], (r[keep], c[keep])), shape=shape).tocsr()


def _assemble_pair(mesh, test_spec, trial_spec, kind):
    dm_test = space_dof_map(mesh, test_spec)
    dm_trial = space_dof_map(mesh, trial_spec)
    if kind == "mass":
        deg = test_spec.degree + trial_spec.degree
    else:
        deg = max(1, (test_spec.degree - 1) + (trial_spec.degree - 1))
    pts, w = _cell_rule(mesh, deg)
    vol, jinv = _geometry(mesh)
    te_v, te_g = ref_shapes(mesh.dimension, test_spec.degree, pts)
    tr_v, tr_g = ref_shapes(mesh.dimension, trial_spec.degree, pts)
    if kind == "mass":
        k_ref = np.einsum("q,qi,qj->ij", w, te_v, tr_v)
        local = vol[:, None, None] * k_ref[None]
    else:
        gte = np.einsum("qie,ced->cqid", te_g, jinv)
        gtr = np.einsum("qje,ced->cqjd", tr_g, jinv)
        local = vol[:, None, None] * np.einsum("q,cqid,cqjd->cij", w, gte, gtr)
    return _accumulate(
        dm_test.cell_dofs, dm_trial.cell_dofs, local, (dm_test.n_dofs, dm_trial.n_dofs)
    )


def space_mass(mesh: SpatialMesh, spec: SpaceBasisSpec) -> sp.csr_matrix:
    return _assemble_pair(mesh, spec, spec, "mass")


def space_stiffness(mesh: SpatialMesh, spec: SpaceBasisSpec) -> sp.csr_matrix:
    return _assemble_pair(mesh, spec, spec, "stiffness")


def space_mixed(
    mesh: SpatialMesh, trial: SpaceBasisSpec, test: SpaceBasisSpec
) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Mixed mass and stiffness, shape (dim test) x (dim trial)."""
    if trial.degree != 1:
        raise ValueError("trial space is piecewise linear")
    return (
        _assemble_pair(mesh, test, trial, "mass"),
        _assemble_pair(mesh, test, trial, "stiffness"),
    )


def space_load(
    mesh: SpatialMesh, spec: SpaceBasisSpec, func, degree: int
) -> np.ndarray:
    """Vector of integrals func * basis_i, quadrature exact to `degree`."""
    dm = space_dof_map(mesh, spec)
    pts, w = _cell_rule(mesh, degree)
    vol, _ = _geometry(mesh)
    vals, _ = ref_shapes(mesh.dimension, spec.degree, pts)
    xq = quad_points_physical(mesh, pts)
    fq = np.asarray(func(xq.reshape(-1, mesh.dimension))).reshape(xq.shape[:2])
    cell_load = vol[:, None] * np.einsum("q,cq,qi->ci", w, fq, vals)
    out = np.zeros(dm.n_dofs)
    np.add.at(out, dm.cell_dofs.ravel().clip(min=0), np.where(
        dm.cell_dofs.ravel() >= 0, cell_load.ravel(), 0.0
    ))
    return out


def integrate_squared(mesh: SpatialMesh, func, degree: int) -> float:
    """Quadrature of the square of a callable over the mesh."""
    pts, w = _cell_rule(mesh, degree)
    vol, _ = _geometry(mesh)
    xq = quad_points_physical(mesh, pts)
    fq = np.asarray(func(xq.reshape(-1, mesh.dimension))).reshape(xq.shape[:2])
    return float(np.einsum("c,q,cq->", vol, w, fq**2))


def l2_projection(
    mesh: SpatialMesh, spec: SpaceBasisSpec, g, quad_degree: int | None = None
) -> np.ndarray:
    """Coefficients of the L2 projection of g onto the space."""
    if quad_degree is None:
        quad_degree = 2 * spec.degree + 2
    m = space_mass(mesh, spec)
    if m.shape[0] == 0:
        return np.zeros(0)
    rhs = space_load(mesh, spec, g, quad_degree)
    coeffs = spsolve(m.tocsc(), rhs)
    if not np.all(np.isfinite(coeffs)):
        raise RuntimeError("mass solve produced non-finite values")
    return np.atleast_1d(coeffs)


def load_vector_f(
    time_mesh: TimeMesh,
    space_mesh: SpatialMesh,
    time_spec: TimeBasisSpec,
    space_spec: SpaceBasisSpec,
    f,
    quad_order: int,
) -> np.ndarray:
    """Tensor-quadrature load F[(e,n),j] = iint f psi_{e,n}(t) eta_j(x).

    f is called as f(t, points) with scalar t and points (m, d).
    """
    n_x = space_dof_map(space_mesh, space_spec).n_dofs
    p = time_spec.degree
    out = np.zeros((time_mesh.n_elements * (p + 1), n_x))
    sq, wq = gauss_1d_for_degree(quad_order)
    for e in range(time_mesh.n_elements):
        t0, t1 = time_mesh.breakpoints[e], time_mesh.breakpoints[e + 1]
        h = t1 - t0
        psi = test_basis_values(time_spec, sq, h)
        for q in range(sq.size):
            t = t0 + h * sq[q]
            lx = space_load(space_mesh, space_spec, lambda x: f(t, x), quad_order)
            out[e * (p + 1) : (e + 1) * (p + 1)] += (h * wq[q]) * np.outer(
                psi[:, q], lx
            )
    return out.reshape(-1)


# ------------------------------------------------------------- fields ----


@dataclass(frozen=True)
class FEField:
    """Spatial finite element function given by coefficients."""

    mesh: SpatialMesh
    spec: SpaceBasisSpec
    coeffs: np.ndarray

    def l2_norm(self) -> float:
        m = space_mass(self.mesh, self.spec)
        return float(np.sqrt(self.coeffs @ (m @ self.coeffs)))


def fe_values_on_cells(
    mesh: SpatialMesh, spec: SpaceBasisSpec, coeffs: np.ndarray, pts: np.ndarray
) -> np.ndarray:
    """FE values at rule points of every cell: (nc, q). Eliminated dofs are 0."""
    dm = space_dof_map(mesh, spec)
    vals, _ = ref_shapes(mesh.dimension, spec.degree, pts)
    c = np.where(dm.cell_dofs >= 0, coeffs[dm.cell_dofs.clip(min=0)], 0.0)
    return np.einsum("ci,qi->cq", c, vals)


def fe_gradients_on_cells(
    mesh: SpatialMesh, spec: SpaceBasisSpec, coeffs: np.ndarray, pts: np.ndarray
) -> np.ndarray:
    """FE gradients at rule points of every cell: (nc, q, d)."""
    dm = space_dof_map(mesh, spec)
    _, grads = ref_shapes(mesh.dimension, spec.degree, pts)
    _, jinv = _geometry(mesh)
    phys = np.einsum("qie,ced->cqid", grads, jinv)
    c = np.where(dm.cell_dofs >= 0, coeffs[dm.cell_dofs.clip(min=0)], 0.0)
    return np.einsum("ci,cqid->cqd", c, phys)
