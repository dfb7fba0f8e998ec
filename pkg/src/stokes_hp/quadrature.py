"""Quadrature on the unit reference simplex.

Rules are collapsed (conical product) Gauss-Jacobi rules: tensor rules on
the unit cube mapped by the Duffy transform, with the Jacobian absorbed into
Jacobi weights.  Every weight is positive and any exactness degree up to
``MAX_DEGREE`` is available.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

MAX_DEGREE = 40


class QuadratureError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    """Points (reference coordinates, shape ``(n, dim)``) and weights."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return len(self.weights)

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


def _gauss_jacobi01(n, alpha):
    # nodes/weights on [0, 1] for the weight (1 - t)**alpha
    x, w = roots_jacobi(n, alpha, 0.0)
    return (x + 1.0) / 2.0, w / 2.0 ** (alpha + 1)


def reference_measure(dim: int) -> float:
    return 1.0 / math.factorial(dim)


@lru_cache(maxsize=None)
def quadrature(dim: int, degree: int) -> QuadratureRule:
    """Positive-weight rule on the unit ``dim``-simplex exact to ``degree``.

    ``dim`` may be 1 (segment), 2 (triangle) or 3 (tetrahedron).  Degrees 0
    and 1 give the one-point centroid rule.
    """
    if dim not in (1, 2, 3):
        raise QuadratureError(f"unsupported dimension {dim}")
    if int(degree) != degree or degree < 0 or degree > MAX_DEGREE:
        raise QuadratureError(f"unsupported exactness degree {degree}")
    if degree <= 1:
        pts = np.full((1, dim), 1.0 / (dim + 1))
        wts = np.array([reference_measure(dim)])
    else:
        n = (degree + 2) // 2
        factors = [_gauss_jacobi01(n, a) for a in range(dim)]
        grids = np.meshgrid(*[f[0] for f in factors], indexing="ij")
        wgrid = np.meshgrid(*[f[1] for f in factors], indexing="ij")
        t = [g.ravel() for g in grids]
        wts = np.prod([g.ravel() for g in wgrid], axis=0)
        # Duffy map; coordinate a carries weight (1 - t_a)**a
        if dim == 1:
            pts = t[0][:, None]
        elif dim == 2:
            v = t[1]
            pts = np.stack([t[0] * (1 - v), v], axis=1)
        else:
            v, w = t[1], t[2]
            pts = np.stack([t[0] * (1 - v) * (1 - w), v * (1 - w), w], axis=1)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, int(degree))
