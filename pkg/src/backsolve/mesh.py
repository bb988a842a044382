"""Temporal grids and simplicial spatial meshes.

Spatial meshes are conforming simplicial partitions of (0,1)^d, d in {1,2}
(the data model permits d=3 but nothing here builds such meshes). Refinement
is uniform bisection: every cell is bisected once per sweep. In 2d the cell
tuple encodes the bisection rule positionally: the edge between the first two
vertices is the refinement edge, the third vertex is the newest. The initial
square mesh makes the center vertex newest in all four triangles, which keeps
every uniform sweep conforming.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TimeMesh:
    """Partition of a time interval into ordered elements."""

    breakpoints: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        if bp.ndim != 1 or bp.size < 2:
            raise ValueError("need at least two breakpoints")
        if not np.all(np.diff(bp) > 0.0):
            raise ValueError("breakpoints must be strictly increasing")
        bp.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)

    @property
    def t_start(self) -> float:
        return float(self.breakpoints[0])

    @property
    def t_end(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def n_elements(self) -> int:
        return self.breakpoints.size - 1

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.breakpoints)


@dataclass(frozen=True)
class SpatialMesh:
    """Conforming simplicial mesh with per-vertex boundary flags."""

    dimension: int
    vertices: np.ndarray
    cells: np.ndarray
    boundary_vertex_flags: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=float))
        c = np.ascontiguousarray(np.asarray(self.cells, dtype=np.int64))
        f = np.asarray(self.boundary_vertex_flags, dtype=bool)
        if self.dimension not in (1, 2, 3):
            raise ValueError("dimension must be 1, 2 or 3")
        if v.ndim != 2 or v.shape[1] != self.dimension:
            raise ValueError("vertex array shape mismatch")
        if c.ndim != 2 or c.shape[1] != self.dimension + 1:
            raise ValueError("cell array shape mismatch")
        if f.shape != (v.shape[0],):
            raise ValueError("boundary flag length mismatch")
        if c.size and (c.min() < 0 or c.max() >= v.shape[0]):
            raise ValueError("cell index out of range")
        for arr in (v, c, f):
            arr.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "cells", c)
        object.__setattr__(self, "boundary_vertex_flags", f)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]


def uniform_time_mesh(t_start: float, t_end: float, k: int) -> TimeMesh:
    """Split (t_start, t_end) into 2**k equal elements."""
    if not t_end > t_start:
        raise ValueError(f"degenerate interval: t_end={t_end} <= t_start={t_start}")
    if k < 0:
        raise ValueError("k must be nonnegative")
    n = 2**k
    # i/n is exact for n a power of two, so dyadic endpoints give exact grids
    frac = np.arange(n + 1) / n
    bp = t_start + (t_end - t_start) * frac
    bp[0], bp[-1] = t_start, t_end
    return TimeMesh(bp)


def cell_volumes(mesh: SpatialMesh) -> np.ndarray:
    """Signed volumes under the stored vertex order (positive when valid)."""
    v = mesh.vertices[mesh.cells]
    if mesh.dimension == 1:
        return v[:, 1, 0] - v[:, 0, 0]
    if mesh.dimension == 2:
        e1 = v[:, 1] - v[:, 0]
        e2 = v[:, 2] - v[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    e = v[:, 1:] - v[:, :1]
    return np.linalg.det(e) / 6.0


def _facets(mesh: SpatialMesh) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unique facets, cell->facet map and per-facet incidence counts."""
    cells = mesh.cells
    d = mesh.dimension
    if d == 1:
        raw = cells.reshape(-1, 1)
    else:
        # facet k of a cell is the (sorted) set of vertices without local vertex k
        nloc = d + 1
        idx = [[j for j in range(nloc) if j != i] for i in range(nloc)]
        raw = np.sort(cells[:, idx].reshape(-1, d), axis=1)
    facets, inverse, counts = np.unique(
        raw, axis=0, return_inverse=True, return_counts=True
    )
    return facets, inverse.reshape(mesh.n_cells, -1), counts


def boundary_flags_from_cells(dimension: int, vertices, cells) -> np.ndarray:
    """Flag vertices lying on facets that belong to exactly one cell."""
    probe = SpatialMesh(
        dimension,
        vertices,
        cells,
        np.zeros(np.asarray(vertices).shape[0], dtype=bool),
    )
    facets, _, counts = _facets(probe)
    flags = np.zeros(probe.n_vertices, dtype=bool)
    flags[np.unique(facets[counts == 1])] = True
    return flags


def check_conforming(mesh: SpatialMesh) -> None:
    """Every facet must bound one cell (boundary) or exactly two (interior)."""
    facets, _, counts = _facets(mesh)
    bad = np.logical_or(counts < 1, counts > 2)
    if np.any(bad):
        raise ValueError(f"non-conforming mesh: facets with counts {counts[bad]}")
    flags = np.zeros(mesh.n_vertices, dtype=bool)
    flags[np.unique(facets[counts == 1])] = True
    if not np.array_equal(flags, mesh.boundary_vertex_flags):
        raise ValueError("stored boundary flags disagree with facet incidence")


def unit_square_initial() -> SpatialMesh:
    """(0,1)^2 cut along its diagonals: 4 triangles around the center vertex."""
    vertices = np.array(
        [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]]
    )
    # refinement edge first two, newest vertex (center) last
    cells = np.array([[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]])
    flags = boundary_flags_from_cells(2, vertices, cells)
    return SpatialMesh(2, vertices, cells, flags)


def unit_interval_mesh(m: int) -> SpatialMesh:
    """m equal elements on (0,1)."""
    if m < 1:
        raise ValueError("need at least one element")
    vertices = (np.arange(m + 1) / m).reshape(-1, 1)
    cells = np.stack([np.arange(m), np.arange(1, m + 1)], axis=1)
    flags = np.zeros(m + 1, dtype=bool)
    flags[[0, -1]] = True
    return SpatialMesh(1, vertices, cells, flags)


def _bisect_sweep_2d(mesh: SpatialMesh) -> SpatialMesh:
    cells = mesh.cells
    a, b, c = cells[:, 0], cells[:, 1], cells[:, 2]
    ref_edges = np.sort(np.stack([a, b], axis=1), axis=1)
    uniq, inverse = np.unique(ref_edges, axis=0, return_inverse=True)
    mids = 0.5 * (mesh.vertices[uniq[:, 0]] + mesh.vertices[uniq[:, 1]])
    m = mesh.n_vertices + inverse
    vertices = np.vstack([mesh.vertices, mids])
    # children of (a,b,c): (c,a,m) and (b,c,m); keeps positive orientation
    new_cells = np.empty((2 * mesh.n_cells, 3), dtype=np.int64)
    new_cells[0::2] = np.stack([c, a, m], axis=1)
    new_cells[1::2] = np.stack([b, c, m], axis=1)
    flags = boundary_flags_from_cells(2, vertices, new_cells)
    return SpatialMesh(2, vertices, new_cells, flags)


def _bisect_sweep_1d(mesh: SpatialMesh) -> SpatialMesh:
    left, right = mesh.cells[:, 0], mesh.cells[:, 1]
    mids = 0.5 * (mesh.vertices[left] + mesh.vertices[right])
    m = mesh.n_vertices + np.arange(mesh.n_cells)
    vertices = np.vstack([mesh.vertices, mids])
    new_cells = np.empty((2 * mesh.n_cells, 2), dtype=np.int64)
    new_cells[0::2] = np.stack([left, m], axis=1)
    new_cells[1::2] = np.stack([m, right], axis=1)
    flags = boundary_flags_from_cells(1, vertices, new_cells)
    return SpatialMesh(1, vertices, new_cells, flags)


def refine_uniform(mesh: SpatialMesh, n: int) -> SpatialMesh:
    """n sweeps of uniform bisection; returns a new mesh, input untouched."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    for _ in range(n):
        if mesh.dimension == 2:
            mesh = _bisect_sweep_2d(mesh)
        elif mesh.dimension == 1:
            mesh = _bisect_sweep_1d(mesh)
        else:
            raise NotImplementedError("3d refinement not implemented")
    return mesh


def dump_mesh(mesh: SpatialMesh) -> str:
    """Plain text dump: one 'v x [y]' line per vertex, one 'c i j [k]' per cell."""
    lines = []
    for xy in mesh.vertices:
        lines.append("v " + " ".join(repr(float(x)) for x in xy))
    for cell in mesh.cells:
        lines.append("c " + " ".join(str(int(i)) for i in cell))
    return "\n".join(lines) + "\n"
