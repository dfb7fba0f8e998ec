"""Manufactured Stokes solutions with closed-form body forces.

Each body force ``f = -lap(u) + grad(p)`` was derived once with sympy
(``sympy.diff`` on the fields below, then ``sympy.simplify``) and is
hard-coded here; ``tests/test_manufactured.py`` re-derives it symbolically.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from numpy import cos, pi, sin


@dataclass(frozen=True)
class ManufacturedSolution:
    """Exact velocity/pressure pair with its forcing and boundary datum.

    All callables take points of shape ``(..., dim)``; vector fields return
    ``(..., dim)``.  The boundary datum ``g`` is the trace of ``u``.
    """

    name: str
    dim: int
    domain_box: tuple
    u_exact: Callable
    p_exact: Callable
    f: Callable

    def g(self, x):
        return self.u_exact(x)


def _stack(*cols):
    return np.stack(np.broadcast_arrays(*cols), axis=-1)


def _sin3_u(x):
    X, Y = x[..., 0], x[..., 1]
    return _stack(sin(3 * X) * sin(3 * Y), cos(3 * X) * cos(3 * Y))


def _sin3_f(x):
    X, Y = x[..., 0], x[..., 1]
    return _stack(18 * sin(3 * X) * sin(3 * Y) + pi * cos(pi * X) * cos(pi * Y),
                  -pi * sin(pi * X) * sin(pi * Y) + 18 * cos(3 * X) * cos(3 * Y))


def _p2(x):
    return sin(pi * x[..., 0]) * cos(pi * x[..., 1])


def _square_u(x):
    X, Y = x[..., 0], x[..., 1]
    return _stack(sin(pi * X) * sin(pi * Y) + 2, cos(pi * X) * cos(pi * Y) - 1)


def _square_f(x):
    X, Y = x[..., 0], x[..., 1]
    return _stack(pi * (2 * pi * sin(pi * X) * sin(pi * Y) + cos(pi * X) * cos(pi * Y)),
                  pi * (-sin(pi * X) * sin(pi * Y) + 2 * pi * cos(pi * X) * cos(pi * Y)))


def _cube_u(x):
    X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
    return _stack(pi * (sin(pi * X) * cos(pi * Y) - sin(pi * X) * cos(pi * Z)),
                  pi * (sin(pi * Y) * cos(pi * Z) - cos(pi * X) * sin(pi * Y)),
                  pi * (cos(pi * X) * sin(pi * Z) - cos(pi * Y) * sin(pi * Z)))


def _cube_p(x):
    X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
    return sin(pi * X) * cos(pi * Y) * sin(2 * pi * Z)


def _cube_f(x):
    X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
    p2 = pi ** 2
    return _stack(
        pi * (2 * p2 * sin(pi * X) * cos(pi * Y) - 2 * p2 * sin(pi * X) * cos(pi * Z)
              + sin(2 * pi * Z) * cos(pi * X) * cos(pi * Y)),
        pi * (-sin(pi * X) * sin(2 * pi * Z) - 2 * p2 * cos(pi * X)
              + 2 * p2 * cos(pi * Z)) * sin(pi * Y),
        2 * pi * (sin(pi * X) * cos(pi * Y) * cos(2 * pi * Z)
                  + p2 * sin(pi * Z) * cos(pi * X) - p2 * sin(pi * Z) * cos(pi * Y)))


def _poly2_u(x):
    return _stack(x[..., 1] ** 2, x[..., 0] ** 2)


def _poly2_p(x):
    return x[..., 0] - 0.5


def _poly2_f(x):
    return _stack(-1.0 + 0 * x[..., 0], -2.0 + 0 * x[..., 0])


def _poly3_u(x):
    return _stack(x[..., 1] ** 2, x[..., 2] ** 2, x[..., 0] ** 2)


def _poly3_p(x):
    return x[..., 0] + x[..., 1] + x[..., 2] - 1.5


def _poly3_f(x):
    one = 0 * x[..., 0] - 1.0
    return _stack(one, one, one)


def _zero(dim):
    def u(x):
        return np.zeros(x.shape[:-1] + (dim,))

    def p(x):
        return np.zeros(x.shape[:-1])
    return ManufacturedSolution("zero", dim, ((0.0, 1.0),) * dim, u, p, u)


SOLUTIONS = {
    "sin3": ManufacturedSolution("sin3", 2, ((-1.0, 1.0), (-1.0, 1.0)),
                                 _sin3_u, _p2, _sin3_f),
    "square": ManufacturedSolution("square", 2, ((0.0, 1.0), (0.0, 1.0)),
                                   _square_u, _p2, _square_f),
    "cube": ManufacturedSolution("cube", 3, ((0.0, 1.0),) * 3, _cube_u, _cube_p, _cube_f),
    "poly2": ManufacturedSolution("poly2", 2, ((0.0, 1.0), (0.0, 1.0)),
                                  _poly2_u, _poly2_p, _poly2_f),
    "poly3": ManufacturedSolution("poly3", 3, ((0.0, 1.0),) * 3,
                                  _poly3_u, _poly3_p, _poly3_f),
    "zero2": _zero(2),
    "zero3": _zero(3),
}

DEFAULT_SOLUTION = {2: "square", 3: "cube"}


def get_solution(name: str) -> ManufacturedSolution:
    try:
        return SOLUTIONS[name]
    except KeyError:
        raise ValueError(f"unknown manufactured solution {name!r}; "
                         f"choose from {sorted(SOLUTIONS)}") from None
