import numpy as np
import pytest
import sympy

from stokes_hp.manufactured import DEFAULT_SOLUTION, SOLUTIONS, get_solution

x, y, z = sympy.symbols("x y z")
pi = sympy.pi

# independent symbolic statements of the fields
FIELDS = {
    "sin3": ((sympy.sin(3 * x) * sympy.sin(3 * y), sympy.cos(3 * x) * sympy.cos(3 * y)),
             sympy.sin(pi * x) * sympy.cos(pi * y)),
    "square": ((sympy.sin(pi * x) * sympy.sin(pi * y) + 2, sympy.cos(pi * x) * sympy.cos(pi * y) - 1),
               sympy.sin(pi * x) * sympy.cos(pi * y)),
    "cube": ((pi * (sympy.sin(pi * x) * sympy.cos(pi * y) - sympy.sin(pi * x) * sympy.cos(pi * z)),
              pi * (sympy.sin(pi * y) * sympy.cos(pi * z) - sympy.cos(pi * x) * sympy.sin(pi * y)),
              pi * (sympy.cos(pi * x) * sympy.sin(pi * z) - sympy.cos(pi * y) * sympy.sin(pi * z))),
             sympy.sin(pi * x) * sympy.cos(pi * y) * sympy.sin(2 * pi * z)),
    "poly2": ((y ** 2, x ** 2), x - sympy.Rational(1, 2)),
    "poly3": ((y ** 2, z ** 2, x ** 2), x + y + z - sympy.Rational(3, 2)),
}


def _vars(dim):
    return (x, y, z)[:dim]


def _points(ms, n=40, seed=3):
    rng = np.random.default_rng(seed)
    lo, hi = np.array(ms.domain_box, dtype=float).T
    return lo + (hi - lo) * rng.random((n, ms.dim))


@pytest.mark.parametrize("name", sorted(FIELDS))
def test_fields_match_symbolic(name):
    ms = get_solution(name)
    u, p = FIELDS[name]
    V = _vars(ms.dim)
    f = [sympy.simplify(-sum(sympy.diff(c, v, 2) for v in V) + sympy.diff(p, V[i]))
         for i, c in enumerate(u)]
    P = _points(ms)
    for comp, (uc, fc) in enumerate(zip(u, f)):
        ul = sympy.lambdify(V, uc, "numpy")
        fl = sympy.lambdify(V, fc, "numpy")
        np.testing.assert_allclose(ms.u_exact(P)[:, comp], np.broadcast_to(ul(*P.T), len(P)),
                                   atol=1e-13)
        np.testing.assert_allclose(ms.f(P)[:, comp], np.broadcast_to(fl(*P.T), len(P)),
                                   atol=1e-12)
    np.testing.assert_allclose(ms.p_exact(P), sympy.lambdify(V, p, "numpy")(*P.T), atol=1e-13)


@pytest.mark.parametrize("name", sorted(FIELDS))
def test_divergence_free_zero_mean(name):
    ms = get_solution(name)
    u, p = FIELDS[name]
    V = _vars(ms.dim)
    assert sympy.simplify(sum(sympy.diff(c, v) for c, v in zip(u, V))) == 0
    lims = [(v, *map(sympy.nsimplify, b)) for v, b in zip(V, ms.domain_box)]
    assert sympy.simplify(sympy.integrate(p, *lims)) == 0


def test_square_forcing_spot_value():
    # f at (0.3, 0.7) evaluated from the closed form by hand
    s, c = np.sin, np.cos
    P = np.array([[0.3, 0.7]])
    a, b = np.pi * 0.3, np.pi * 0.7
    exp = [np.pi * (2 * np.pi * s(a) * s(b) + c(a) * c(b)),
           np.pi * (-s(a) * s(b) + 2 * np.pi * c(a) * c(b))]
    np.testing.assert_allclose(get_solution("square").f(P)[0], exp, rtol=1e-14)


def test_boundary_datum_is_trace():
    ms = get_solution("square")
    P = np.array([[0.0, 0.4], [1.0, 0.2], [0.5, 0.0]])
    np.testing.assert_array_equal(ms.g(P), ms.u_exact(P))


def test_registry():
    assert DEFAULT_SOLUTION == {2: "square", 3: "cube"}
    for name, ms in SOLUTIONS.items():
        assert ms.name.startswith(name[:4])
        P = _points(ms, 5)
        assert ms.u_exact(P).shape == (5, ms.dim)
        assert ms.p_exact(P).shape == (5,)
        assert ms.f(P).shape == (5, ms.dim)
    with pytest.raises(ValueError, match="unknown manufactured"):
        get_solution("nope")
