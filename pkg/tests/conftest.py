import functools

import numpy as np
import pytest

from stokes_hp.assembly import AssemblyConfig, assemble_system
from stokes_hp.manufactured import DEFAULT_SOLUTION, get_solution
from stokes_hp.mesh import generate_structured


@functools.lru_cache(maxsize=None)
def structured_system(dim, N, k, problem=None):
    """Assembled system on a structured mesh, shared across tests."""
    mesh = generate_structured(dim, N)
    return assemble_system(mesh, AssemblyConfig(k), get_solution(problem or DEFAULT_SOLUTION[dim]))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
