"""Degree-of-freedom layout of the three-field hybridized space.

Global vector ordering is ``[u | p | lambda]``.  Inside the velocity block
the ordering is component-major, ``u[c * n_cells * nb + K * nb + i]``, which
makes the vector-Laplacian block ``A`` block-diagonal by component.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import dim_P
from .mesh import Mesh


@dataclass(frozen=True)
class DofLayout:
    dim: int
    k: int
    n_cells: int
    n_facets: int

    @property
    def nb_u(self) -> int:
        """Scalar velocity functions per cell."""
        return dim_P(self.dim, self.k)

    @property
    def nb_p(self) -> int:
        return dim_P(self.dim, self.k - 1)

    @property
    def nb_l(self) -> int:
        return dim_P(self.dim - 1, self.k)

    @property
    def n_u(self) -> int:
        return self.n_cells * self.dim * self.nb_u

    @property
    def n_p(self) -> int:
        return self.n_cells * self.nb_p

    @property
    def n_l(self) -> int:
        return self.n_facets * self.nb_l

    @property
    def n_total(self) -> int:
        return self.n_u + self.n_p + self.n_l

    @property
    def offsets(self) -> tuple[int, int, int, int]:
        return (0, self.n_u, self.n_u + self.n_p, self.n_total)

    @property
    def slices(self) -> tuple[slice, slice, slice]:
        o = self.offsets
        return slice(o[0], o[1]), slice(o[1], o[2]), slice(o[2], o[3])

    def cell_u_dofs(self) -> np.ndarray:
        """``(n_cells, dim, nb_u)`` velocity-block indices."""
        nb, nc = self.nb_u, self.n_cells
        return (np.arange(self.dim)[None, :, None] * nc * nb
                + np.arange(nc)[:, None, None] * nb
                + np.arange(nb)[None, None, :])

    def cell_p_dofs(self) -> np.ndarray:
        return np.arange(self.n_p).reshape(self.n_cells, self.nb_p)

    def facet_l_dofs(self) -> np.ndarray:
        return np.arange(self.n_l).reshape(self.n_facets, self.nb_l)

    def split(self, x):
        """View a global vector as ``(u, p, lambda)``."""
        return tuple(x[s] for s in self.slices)

    def nullspace_vector(self) -> np.ndarray:
        """``(0_u, 1_p, 1_lambda)``: constant pressure and multiplier."""
        n0 = np.zeros(self.n_total)
        n0[self.n_u:] = 1.0
        return n0

    def sizes(self) -> dict:
        return {"n_u": self.n_u, "n_p": self.n_p, "n_l": self.n_l,
                "n_total": self.n_total}


def build_layout(mesh: Mesh, k: int) -> DofLayout:
    """Layout for velocity/multiplier order ``k`` and pressure order ``k - 1``."""
    if int(k) != k or k < 1:
        raise ValueError(f"order k must be an integer >= 1, got {k}")
    return DofLayout(dim=mesh.dim, k=int(k), n_cells=mesh.n_cells,
                     n_facets=mesh.n_facets)
