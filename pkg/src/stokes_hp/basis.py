"""Polynomial bases on the unit reference simplex.

Two families share one code path:

* ``orthonormal`` -- the Dubiner (collapsed Jacobi) basis, orthonormal in
  ``L2`` of the unit simplex.
* ``nodal`` -- the Lagrange basis at the equispaced lattice points, obtained
  from the orthonormal one through its Vandermonde matrix.

Reference vertices are ``0, e_1, ..., e_dim``; local facet ``i`` is the facet
opposite vertex ``i``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations_with_replacement

import numpy as np
from scipy.special import eval_jacobi, gammaln


def dim_P(dim: int, k: int) -> int:
    """Dimension of the polynomials of total degree ``k`` in ``dim`` variables."""
    if k < 0:
        return 0
    out = 1
    for i in range(1, dim + 1):
        out = out * (k + i) // i
    return out


def _jacobi(n, a, b, x):
    """Normalized Jacobi polynomial and its derivative."""
    logg = ((a + b + 1) * np.log(2) - np.log(2 * n + a + b + 1)
            + gammaln(n + a + 1) + gammaln(n + b + 1)
            - gammaln(n + a + b + 1) - gammaln(n + 1))
    scale = np.exp(-0.5 * logg)
    p = eval_jacobi(n, a, b, x) * scale
    if n == 0:
        dp = np.zeros_like(x)
    else:
        dp = 0.5 * (n + a + b + 1) * eval_jacobi(n - 1, a + 1, b + 1, x) * scale
    return p, dp


def _indices(dim, k):
    if dim == 1:
        return [(i,) for i in range(k + 1)]
    if dim == 2:
        return [(i, j) for i in range(k + 1) for j in range(k + 1 - i)]
    return [(i, j, l) for i in range(k + 1) for j in range(k + 1 - i)
            for l in range(k + 1 - i - j)]


def _dubiner_1d(k, x):
    r = 2 * x[:, 0] - 1
    vals, grads = [], []
    for (i,) in _indices(1, k):
        p, dp = _jacobi(i, 0, 0, r)
        vals.append(np.sqrt(2) * p)
        grads.append((np.sqrt(2) * 2 * dp)[:, None])
    return np.array(vals), np.array(grads)


def _dubiner_2d(k, x):
    r, s = 2 * x[:, 0] - 1, 2 * x[:, 1] - 1
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(np.abs(1 - s) > 1e-14, 2 * (1 + r) / (1 - s) - 1, -1.0)
    b = s
    vals, grads = [], []
    for i, j in _indices(2, k):
        fa, dfa = _jacobi(i, 0, 0, a)
        gb, dgb = _jacobi(j, 2 * i + 1, 0, b)
        val = np.sqrt(2) * fa * gb * (1 - b) ** i
        dr = dfa * gb
        if i > 0:
            dr = dr * (0.5 * (1 - b)) ** (i - 1)
        ds = dfa * (gb * (0.5 * (1 + a)))
        if i > 0:
            ds = ds * (0.5 * (1 - b)) ** (i - 1)
        tmp = dgb * (0.5 * (1 - b)) ** i
        if i > 0:
            tmp = tmp - 0.5 * i * gb * (0.5 * (1 - b)) ** (i - 1)
        ds = ds + fa * tmp
        scale = 2.0 ** (i + 0.5)
        # biunit -> unit: values x2 (area ratio), derivatives x2 (chain rule)
        vals.append(2 * val)
        grads.append(np.stack([4 * scale * dr, 4 * scale * ds], axis=1))
    return np.array(vals), np.array(grads)


def _dubiner_3d(k, x):
    r, s, t = (2 * x[:, d] - 1 for d in range(3))
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(np.abs(s + t) > 1e-14, 2 * (1 + r) / (-s - t) - 1, -1.0)
        b = np.where(np.abs(1 - t) > 1e-14, 2 * (1 + s) / (1 - t) - 1, -1.0)
    c = t
    root8 = np.sqrt(8.0)
    vals, grads = [], []
    for i, j, l in _indices(3, k):
        fa, dfa = _jacobi(i, 0, 0, a)
        gb, dgb = _jacobi(j, 2 * i + 1, 0, b)
        hc, dhc = _jacobi(l, 2 * (i + j) + 2, 0, c)
        val = 2 * np.sqrt(2) * fa * gb * (1 - b) ** i * hc * (1 - c) ** (i + j)

        dr = dfa * (gb * hc)
        if i > 0:
            dr = dr * (0.5 * (1 - b)) ** (i - 1)
        if i + j > 0:
            dr = dr * (0.5 * (1 - c)) ** (i + j - 1)

        ds = 0.5 * (1 + a) * dr
        tmp = dgb * (0.5 * (1 - b)) ** i
        if i > 0:
            tmp = tmp - 0.5 * i * gb * (0.5 * (1 - b)) ** (i - 1)
        if i + j > 0:
            tmp = tmp * (0.5 * (1 - c)) ** (i + j - 1)
        tmp = fa * (tmp * hc)
        ds = ds + tmp

        dt = 0.5 * (1 + a) * dr + 0.5 * (1 + b) * tmp
        tmp = dhc * (0.5 * (1 - c)) ** (i + j)
        if i + j > 0:
            tmp = tmp - 0.5 * (i + j) * hc * (0.5 * (1 - c)) ** (i + j - 1)
        tmp = fa * (gb * tmp) * (0.5 * (1 - b)) ** i
        dt = dt + tmp

        scale = 2.0 ** (2 * i + j + 1.5)
        vals.append(root8 * val)
        grads.append(np.stack([2 * root8 * scale * g for g in (dr, ds, dt)], axis=1))
    return np.array(vals), np.array(grads)


def dubiner(dim: int, k: int, points) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal basis of ``P_k`` on the unit simplex.

    Returns values ``(n_funcs, n_points)`` and reference gradients
    ``(n_funcs, n_points, dim)``.
    """
    x = np.atleast_2d(np.asarray(points, dtype=float))
    if x.shape[1] != dim:
        raise ValueError(f"points must have {dim} coordinates")
    if dim == 0:
        return np.ones((1, len(x))), np.zeros((1, len(x), 0))
    fn = {1: _dubiner_1d, 2: _dubiner_2d, 3: _dubiner_3d}[dim]
    return fn(k, x)


def lattice_points(dim: int, k: int) -> np.ndarray:
    """Equispaced lattice of degree ``k`` on the unit simplex (centroid for k=0)."""
    if k == 0:
        return np.full((1, dim), 1.0 / (dim + 1))
    pts = [np.array(idx, dtype=float) / k for idx in _indices(dim, k)]
    return np.array(pts)


@lru_cache(maxsize=None)
def _nodal_coefficients(dim, k):
    vdm, _ = dubiner(dim, k, lattice_points(dim, k))
    return np.linalg.inv(vdm)


@dataclass(frozen=True)
class PolyBasis:
    """Basis of ``P_k`` on the unit ``dim``-simplex.

    Parameters
    ----------
    dim : int
        Reference dimension (0 to 3; 0 is the point used by 1d facets).
    degree : int
    kind : {'orthonormal', 'nodal'}
    """

    dim: int
    degree: int
    kind: str = "orthonormal"
    _coef: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("orthonormal", "nodal"):
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if self.degree < 0:
            raise ValueError("degree must be non-negative")
        if self.kind == "nodal" and self.dim > 0:
            object.__setattr__(self, "_coef", _nodal_coefficients(self.dim, self.degree))

    @property
    def n_funcs(self) -> int:
        return dim_P(self.dim, self.degree)

    @property
    def nodes(self) -> np.ndarray:
        return lattice_points(self.dim, self.degree)

    def eval(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Values ``(n_funcs, n_pts)`` and reference gradients ``(n_funcs, n_pts, dim)``."""
        vals, grads = dubiner(self.dim, self.degree, points)
        if self._coef is not None:
            vals = self._coef @ vals
            grads = np.einsum("ij,jpd->ipd", self._coef, grads)
        return vals, grads

    def values(self, points) -> np.ndarray:
        return self.eval(points)[0]


def eval_basis(basis: PolyBasis, points):
    """Tabulate ``basis`` at reference ``points``; see :meth:`PolyBasis.eval`."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lam0 = 1.0 - pts.sum(axis=1)
    if np.any(pts < -1e-12) or np.any(lam0 < -1e-12):
        raise ValueError("points lie outside the reference simplex")
    return basis.eval(pts)


def reference_vertices(dim: int) -> np.ndarray:
    return np.vstack([np.zeros(dim), np.eye(dim)])


def facet_embedding(dim: int, local_facet: int):
    """Affine map from the reference (dim-1)-simplex onto local facet ``local_facet``.

    The facet keeps the cell vertices in increasing local order, so its
    first vertex is the image of the facet-reference origin.
    """
    if not 0 <= local_facet <= dim:
        raise ValueError(f"local facet {local_facet} invalid for a {dim}-simplex")
    verts = reference_vertices(dim)[[i for i in range(dim + 1) if i != local_facet]]
    origin = verts[0]
    jac = (verts[1:] - origin).T  # (dim, dim-1)
    return origin, jac


def facet_trace_map(cell_basis: PolyBasis, local_facet: int, facet_points):
    """Values and reference gradients of ``cell_basis`` on a local facet.

    ``facet_points`` are coordinates on the reference (dim-1)-simplex.
    """
    origin, jac = facet_embedding(cell_basis.dim, local_facet)
    fp = np.atleast_2d(np.asarray(facet_points, dtype=float)).reshape(-1, cell_basis.dim - 1)
    return cell_basis.eval(origin + fp @ jac.T)


def monomial_exponents(dim: int, k: int):
    """Exponent tuples of all monomials of total degree ``<= k``."""
    out = []
    for deg in range(k + 1):
        for combo in combinations_with_replacement(range(dim), deg):
            e = [0] * dim
            for c in combo:
                e[c] += 1
            out.append(tuple(e))
    return out
