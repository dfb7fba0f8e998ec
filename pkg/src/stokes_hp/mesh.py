"""Conforming simplicial meshes (triangles in 2d, tetrahedra in 3d).

Cells are stored as an ``(n_cells, dim + 1)`` vertex-index array with
positive orientation.  Facet topology lives in a :class:`FacetTable` of flat
arrays; :meth:`Mesh.facet` gives a per-facet :class:`Facet` view.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class MeshError(ValueError):
    """Raised for invalid or non-conforming meshes."""


@dataclass(frozen=True)
class Facet:
    """Read-only view of a single facet."""

    vertex_ids: tuple
    plus_cell: int
    minus_cell: int | None
    local_index_plus: int
    local_index_minus: int | None
    normal: np.ndarray
    measure: float
    h_F: float

    @property
    def is_boundary(self) -> bool:
        return self.minus_cell is None


@dataclass(frozen=True)
class FacetTable:
    """Facet topology and geometry as flat arrays.

    ``cells[:, 1]`` and ``local[:, 1]`` are ``-1`` on boundary facets.  The
    normal points out of the plus cell ``cells[:, 0]``.
    """

    vertices: np.ndarray   # (n_facets, dim), sorted vertex ids
    cells: np.ndarray      # (n_facets, 2)
    local: np.ndarray      # (n_facets, 2), local facet index = opposite vertex
    normals: np.ndarray    # (n_facets, dim)
    measures: np.ndarray   # (n_facets,)
    h: np.ndarray          # (n_facets,)
    cell_facets: np.ndarray  # (n_cells, dim + 1), facet opposite local vertex i

    def __len__(self):
        return len(self.measures)

    @property
    def boundary(self) -> np.ndarray:
        return np.flatnonzero(self.cells[:, 1] < 0)

    @property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(self.cells[:, 1] >= 0)


def simplex_volumes(vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """Signed volumes of the simplices ``cells``."""
    dim = vertices.shape[1]
    x = vertices[cells]
    jac = x[:, 1:, :] - x[:, :1, :]
    return np.linalg.det(jac) / math.factorial(dim)


def _orient(vertices, cells):
    cells = np.array(cells, dtype=np.int64, copy=True)
    vol = simplex_volumes(vertices, cells)
    if np.any(np.abs(vol) <= 1e-14 * np.max(np.abs(vol), initial=0.0)):
        raise MeshError("degenerate (zero-volume) cell")
    flip = vol < 0
    cells[flip, 0], cells[flip, 1] = cells[flip, 1], cells[flip, 0].copy()
    return cells


def facet_size(measures: np.ndarray, dim: int) -> np.ndarray:
    """Facet size used by penalties and the multiplier norm.

    Edge length in 2d, square root of the facet area in 3d.
    """
    return measures if dim == 2 else np.sqrt(measures)


def build_facets(cells: np.ndarray, vertices: np.ndarray) -> FacetTable:
    """Enumerate the facets of a conforming simplicial mesh.

    Every (dim-1)-subsimplex appears once.  The plus side of an interior facet
    is the adjacent cell with the lower id.

    Raises
    ------
    MeshError
        If a facet is shared by more than two cells.
    """
    cells = np.asarray(cells, dtype=np.int64)
    vertices = np.asarray(vertices, dtype=float)
    n_cells, nv = cells.shape
    dim = nv - 1
    # local facet i is the one opposite local vertex i
    local_sets = [[j for j in range(nv) if j != i] for i in range(nv)]
    keys = np.concatenate([cells[:, ls] for ls in local_sets], axis=0)
    keys = np.sort(keys, axis=1)
    owner = np.tile(np.arange(n_cells), nv)
    loc = np.repeat(np.arange(nv), n_cells)

    uniq, inverse, counts = np.unique(keys, axis=0, return_inverse=True,
                                      return_counts=True)
    inverse = inverse.ravel()
    if np.any(counts > 2):
        bad = int(np.flatnonzero(counts > 2)[0])
        raise MeshError(f"facet {tuple(uniq[bad])} shared by {counts[bad]} cells")

    n_facets = len(uniq)
    # order by (facet, cell id) so the first occurrence is the lower cell id
    order = np.lexsort((owner, inverse))
    inv_sorted = inverse[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = inv_sorted[1:] != inv_sorted[:-1]
    fcells = -np.ones((n_facets, 2), dtype=np.int64)
    flocal = -np.ones((n_facets, 2), dtype=np.int64)
    fcells[inv_sorted[first], 0] = owner[order][first]
    flocal[inv_sorted[first], 0] = loc[order][first]
    fcells[inv_sorted[~first], 1] = owner[order][~first]
    flocal[inv_sorted[~first], 1] = loc[order][~first]

    cell_facets = inverse.reshape(nv, n_cells).T.copy()

    fx = vertices[uniq]  # (n_facets, dim, dim)
    edges = fx[:, 1:, :] - fx[:, :1, :]
    if dim == 2:
        t = edges[:, 0, :]
        measures = np.linalg.norm(t, axis=1)
        normals = np.stack([t[:, 1], -t[:, 0]], axis=1) / measures[:, None]
    else:
        c = np.cross(edges[:, 0, :], edges[:, 1, :])
        nrm = np.linalg.norm(c, axis=1)
        measures = 0.5 * nrm
        normals = c / nrm[:, None]
    # flip so the normal leaves the plus cell
    plus = fcells[:, 0]
    opp = vertices[cells[plus, flocal[:, 0]]]
    sgn = np.einsum("ij,ij->i", opp - fx[:, 0, :], normals)
    normals[sgn > 0] *= -1.0

    return FacetTable(vertices=uniq, cells=fcells, local=flocal,
                      normals=normals, measures=measures,
                      h=facet_size(measures, dim), cell_facets=cell_facets)


@dataclass(frozen=True)
class Mesh:
    """Conforming simplicial mesh.

    Construct through :func:`Mesh.from_arrays`, :func:`generate_structured`
    or :func:`stokes_hp.gmsh.read_gmsh`; cells are re-oriented to positive
    volume and the facet table is built on construction.
    """

    vertices: np.ndarray
    cells: np.ndarray
    facet_table: FacetTable = field(repr=False)

    @classmethod
    def from_arrays(cls, vertices, cells) -> "Mesh":
        vertices = np.ascontiguousarray(vertices, dtype=float)
        cells = np.asarray(cells, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] not in (2, 3):
            raise MeshError("vertices must be an (n, 2) or (n, 3) array")
        if cells.ndim != 2 or cells.shape[1] != vertices.shape[1] + 1:
            raise MeshError("cells must have dim + 1 vertices each")
        if cells.size and (cells.min() < 0 or cells.max() >= len(vertices)):
            raise MeshError("cell references a missing vertex")
        cells = _orient(vertices, cells)
        vertices.setflags(write=False)
        cells.setflags(write=False)
        return cls(vertices, cells, build_facets(cells, vertices))

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_facets(self) -> int:
        return len(self.facet_table)

    @property
    def boundary_facet_ids(self) -> np.ndarray:
        return self.facet_table.boundary

    @cached_property
    def volumes(self) -> np.ndarray:
        return simplex_volumes(self.vertices, self.cells)

    @cached_property
    def jacobians(self) -> np.ndarray:
        """Affine-map Jacobians ``J[K]`` with columns ``x_i - x_0``."""
        x = self.vertices[self.cells]
        return np.transpose(x[:, 1:, :] - x[:, :1, :], (0, 2, 1))

    @cached_property
    def inverse_jacobians(self) -> np.ndarray:
        return np.linalg.inv(self.jacobians)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    @property
    def h_max(self) -> float:
        return float(self.facet_table.h.max())

    def facet(self, i: int) -> Facet:
        ft = self.facet_table
        minus = int(ft.cells[i, 1])
        return Facet(
            vertex_ids=tuple(int(v) for v in ft.vertices[i]),
            plus_cell=int(ft.cells[i, 0]),
            minus_cell=None if minus < 0 else minus,
            local_index_plus=int(ft.local[i, 0]),
            local_index_minus=None if minus < 0 else int(ft.local[i, 1]),
            normal=ft.normals[i].copy(),
            measure=float(ft.measures[i]),
            h_F=float(ft.h[i]),
        )

    @property
    def facets(self) -> list[Facet]:
        return [self.facet(i) for i in range(self.n_facets)]

    def to_reference(self, cell_ids, points) -> np.ndarray:
        """Pull physical ``points`` back to reference coordinates of ``cell_ids``.

        ``points`` has shape ``(n, ..., dim)`` matching ``cell_ids`` of shape
        ``(n,)``.
        """
        x0 = self.vertices[self.cells[cell_ids, 0]]
        jinv = self.inverse_jacobians[cell_ids]
        d = points - x0.reshape(x0.shape[0], *([1] * (points.ndim - 2)), -1)
        return np.einsum("nij,n...j->n...i", jinv, d)

    def check(self, rtol: float = 1e-12, domain_measure: float | None = None):
        """Validate the mesh invariants, raising :class:`MeshError` on failure."""
        if np.any(self.volumes <= 0):
            raise MeshError("non-positive cell volume")
        ft = self.facet_table
        counts = np.bincount(ft.cell_facets.ravel(), minlength=self.n_facets)
        expected = np.where(ft.cells[:, 1] >= 0, 2, 1)
        if not np.array_equal(counts, expected):
            raise MeshError("facet adjacency is inconsistent")
        if np.any(np.abs(np.linalg.norm(ft.normals, axis=1) - 1) > 1e-14):
            raise MeshError("facet normal is not unit length")
        if np.any(ft.h <= 0):
            raise MeshError("non-positive facet size")
        inner = ft.interior
        d = self.centroids[ft.cells[inner, 1]] - self.centroids[ft.cells[inner, 0]]
        if np.any(np.einsum("ij,ij->i", d, ft.normals[inner]) <= 0):
            raise MeshError("interior normal does not point from plus to minus")
        if domain_measure is not None:
            total = self.volumes.sum()
            if abs(total - domain_measure) > rtol * domain_measure:
                raise MeshError(f"cell volumes sum to {total}, expected {domain_measure}")
        return True


def _kuhn_tets():
    # 6 tets sharing the main diagonal of the unit cube; corner index = bx + 2 by + 4 bz
    tets = []
    for perm in itertools.permutations(range(3)):
        corner = [0, 0, 0]
        path = [0]
        for axis in perm:
            corner[axis] = 1
            path.append(corner[0] + 2 * corner[1] + 4 * corner[2])
        tets.append(path)
    return np.array(tets)


def generate_structured(dim: int, N: int, domain_box=None) -> Mesh:
    """Structured simplicial mesh of an axis-aligned box.

    Each of the ``N**dim`` grid cells is split into 2 triangles (along the
    ``(0, 0)-(1, 1)`` diagonal) or 6 Kuhn tetrahedra, so refinements nest.

    Parameters
    ----------
    dim : {2, 3}
    N : int
        Grid cells per axis, ``N >= 1``.
    domain_box : sequence of (lo, hi) pairs, optional
        Defaults to the unit square/cube.
    """
    if dim not in (2, 3):
        raise MeshError(f"dim must be 2 or 3, got {dim}")
    if int(N) != N or N < 1:
        raise MeshError(f"N must be a positive integer, got {N}")
    N = int(N)
    if domain_box is None:
        domain_box = [(0.0, 1.0)] * dim
    box = np.asarray(domain_box, dtype=float)
    if box.shape != (dim, 2) or np.any(box[:, 1] - box[:, 0] <= 0):
        raise MeshError(f"degenerate domain box {domain_box!r}")

    axes = [np.linspace(lo, hi, N + 1) for lo, hi in box]
    grid = np.meshgrid(*axes, indexing="ij")
    vertices = np.stack([g.ravel() for g in grid], axis=1)
    strides = [(N + 1) ** (dim - 1 - a) for a in range(dim)]  # ij indexing

    idx = np.stack(np.meshgrid(*[np.arange(N)] * dim, indexing="ij"), axis=-1)
    idx = idx.reshape(-1, dim)
    base = idx @ np.array(strides)
    corners = np.array([[(c >> a) & 1 for a in range(dim)] for c in range(2 ** dim)])
    corner_off = corners @ np.array(strides)
    cube = base[:, None] + corner_off[None, :]  # (n_boxes, 2**dim)

    if dim == 2:
        local = np.array([[0, 1, 3], [0, 3, 2]])
    else:
        local = _kuhn_tets()
    cells = cube[:, local].reshape(-1, dim + 1)
    return Mesh.from_arrays(vertices, cells)


def box_measure(domain_box) -> float:
    box = np.asarray(domain_box, dtype=float)
    return float(np.prod(box[:, 1] - box[:, 0]))
