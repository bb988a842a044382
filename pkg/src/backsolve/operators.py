"""Space-time operators composed from 1-d factors, applied matrix-free.

A space-time coefficient vector is the row-major flattening of a
(time dofs) x (space dofs) array, so a tensor-product operator acts by
multiplying a reshaped vector from both sides. Dense materialization is a
test/oracle facility only; runtime code must use apply().
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .assembly import (
    SpaceBasisSpec,
    TimeBasisSpec,
    space_dof_map,
    space_mass,
    space_mixed,
    space_stiffness,
    time_derivative_mixed,
    time_mass_mixed,
    time_mass_trial,
    time_stiffness_trial,
    trace_vector,
)
from .mesh import SpatialMesh, TimeMesh

TRIAL_TIME = TimeBasisSpec("continuous-pw-linear", 1)
TEST_TIME = TimeBasisSpec("discontinuous-pw-poly", 1, orthonormal=True)
TRIAL_SPACE = SpaceBasisSpec(1, dirichlet=True)


def test_space_spec(l: int) -> SpaceBasisSpec:
    if l not in (0, 1):
        raise ValueError("test space enrichment l must be 0 or 1")
    return SpaceBasisSpec(1 + l, dirichlet=True)


def _to_dense(factor) -> np.ndarray:
    if hasattr(factor, "toarray"):
        return factor.toarray()
    if hasattr(factor, "to_dense"):
        return factor.to_dense()
    return np.asarray(factor)


class MassSolveMass:
    """Symmetric spatial factor M A^{-1} M with a cached factorization of A."""

    def __init__(self, mass: sp.spmatrix, stiffness: sp.spmatrix):
        if mass.shape != stiffness.shape:
            raise ValueError("mass/stiffness shape mismatch")
        self.shape = mass.shape
        self._mass = mass.tocsr()
        self._lu = splu(stiffness.tocsc())

    def __matmul__(self, other: np.ndarray) -> np.ndarray:
        w = self._lu.solve(np.asarray(self._mass @ other))
        return self._mass @ w

    @property
    def T(self) -> "MassSolveMass":
        return self

    def to_dense(self) -> np.ndarray:
        return self @ np.eye(self.shape[1])


class KroneckerOperator:
    """Sum of tensor products (time factor) x (space factor)."""

    def __init__(self, terms):
        if not terms:
            raise ValueError("need at least one term")
        t0, s0 = terms[0]
        for t, s in terms[1:]:
            if t.shape != t0.shape or s.shape != s0.shape:
                raise ValueError("inconsistent factor dimensions across terms")
        self.terms = list(terms)
        self.time_shape = t0.shape
        self.space_shape = s0.shape
        self.shape = (
            t0.shape[0] * s0.shape[0],
            t0.shape[1] * s0.shape[1],
        )

    def apply(self, v: np.ndarray) -> np.ndarray:
        mat = np.asarray(v).reshape(self.time_shape[1], self.space_shape[1])
        out = np.zeros((self.time_shape[0], self.space_shape[0]))
        for t, s in self.terms:
            out += np.asarray(s @ np.asarray(t @ mat).T).T
        return out.ravel()

    def apply_transpose(self, v: np.ndarray) -> np.ndarray:
        mat = np.asarray(v).reshape(self.time_shape[0], self.space_shape[0])
        out = np.zeros((self.time_shape[1], self.space_shape[1]))
        for t, s in self.terms:
            out += np.asarray(s.T @ np.asarray(t.T @ mat).T).T
        return out.ravel()

    def to_dense(self) -> np.ndarray:
        """Materialized matrix; test/oracle use only (it is dense and large)."""
        out = np.zeros(self.shape)
        for t, s in self.terms:
            out += np.kron(_to_dense(t), _to_dense(s))
        return out


class GramOperator(KroneckerOperator):
    """KroneckerOperator that realizes an inner product (SPD on its space)."""

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.asarray(u) @ self.apply(v))


def assemble_B(time_mesh: TimeMesh, space_mesh: SpatialMesh, l: int) -> KroneckerOperator:
    """Discrete parabolic form: time derivative against mass plus stiffness.

    Maps trial coefficients (hats x P1) to duals of the test space
    (elementwise orthonormal Legendre x P_{1+l}).
    """
    m_mix, a_mix = space_mixed(space_mesh, TRIAL_SPACE, test_space_spec(l))
    if m_mix.shape[1] == 0:
        raise ValueError("trial space is empty after boundary elimination")
    if m_mix.shape[0] == 0:
        raise ValueError("test space is empty after boundary elimination")
    d_t = time_derivative_mixed(time_mesh, TEST_TIME)
    n_t = time_mass_mixed(time_mesh, TEST_TIME)
    return KroneckerOperator([(d_t, m_mix), (n_t, a_mix)])


def gram_Y(time_mesh: TimeMesh, space_mesh: SpatialMesh, l: int) -> GramOperator:
    """Test-space Gram: identity in time (orthonormal basis) x stiffness."""
    a_test = space_stiffness(space_mesh, test_space_spec(l))
    if a_test.shape[0] == 0:
        raise ValueError("test space is empty after boundary elimination")
    eye_t = sp.identity(
        time_mesh.n_elements * (TEST_TIME.degree + 1), format="csr"
    )
    return GramOperator([(eye_t, a_test)])


def gram_X(time_mesh: TimeMesh, space_mesh: SpatialMesh) -> GramOperator:
    """Trial-space Gram: L2-in-time x H1_0 plus H1-in-time x dual-H1 factor."""
    a = space_stiffness(space_mesh, TRIAL_SPACE)
    if a.shape[0] == 0:
        raise ValueError("trial space is empty after boundary elimination")
    m = space_mass(space_mesh, TRIAL_SPACE)
    return GramOperator(
        [
            (time_mass_trial(time_mesh), a),
            (time_stiffness_trial(time_mesh), MassSolveMass(m, a)),
        ]
    )


def trace_operator(time_mesh: TimeMesh, space_mesh: SpatialMesh, t: float) -> KroneckerOperator:
    """Evaluation at time t: rank-one in time, identity in space."""
    row = sp.csr_matrix(trace_vector(time_mesh, t)[None, :])
    n_x = space_dof_map(space_mesh, TRIAL_SPACE).n_dofs
    return KroneckerOperator([(row, sp.identity(n_x, format="csr"))])


def _normal_matrix_dense(time_mesh: TimeMesh, space_mesh: SpatialMesh, l: int) -> np.ndarray:
    """Dense Bt G_Y B on the trial space via the tensor identity

        sum_{a,b} (T_a^T T_b) kron (S_a^T A_test^{-1} S_b),

    which never forms the (much larger) test-space matrices as a Kronecker
    product. Desk-scale meshes only.
    """
    b_op = assemble_B(time_mesh, space_mesh, l)
    a_test = space_stiffness(space_mesh, test_space_spec(l))
    lu = splu(a_test.tocsc())
    space_factors = [s.toarray() for _, s in b_op.terms]
    solved = [lu.solve(s) for s in space_factors]
    time_factors = [t.toarray() for t, _ in b_op.terms]
    n = b_op.shape[1]
    out = np.zeros((n, n))
    for ta, sa in zip(time_factors, space_factors):
        for tb, sb in zip(time_factors, solved):
            out += np.kron(ta.T @ tb, sa.T @ sb)
    return out


def infsup_constant(
    time_mesh: TimeMesh, space_mesh: SpatialMesh, l_small: int, l_big: int
) -> float:
    """Stability constant of the small test space relative to the enriched one.

    Square root of the smallest generalized eigenvalue of the pencil formed by
    the two normal matrices. Dense eigensolve; diagnostic, not runtime.
    """
    if l_small > l_big:
        raise ValueError("l_small must not exceed l_big")
    if l_small == l_big:
        return 1.0
    small = _normal_matrix_dense(time_mesh, space_mesh, l_small)
    big = _normal_matrix_dense(time_mesh, space_mesh, l_big)
    try:
        eigvals = scipy.linalg.eigh(small, big, eigvals_only=True)
    except scipy.linalg.LinAlgError as exc:
        raise RuntimeError(
            "enriched normal matrix is singular: the space-time form lost "
            "injectivity, which points at an assembly bug"
        ) from exc
    return float(np.sqrt(max(eigvals[0], 0.0)))


def dense_from_apply(apply, n_cols: int) -> np.ndarray:
    """Materialize a linear map column-by-column; test/oracle helper."""
    cols = []
    eye = np.eye(n_cols)
    for j in range(n_cols):
        cols.append(apply(eye[:, j]))
    return np.stack(cols, axis=1)
