import json
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from vemflow.assembly import Discretization
from vemflow.mesh import generate_distorted_quads, make_mesh

ORACLES = json.loads((Path(__file__).parent / "oracles" / "oracles.json").read_text())

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
PENTAGON = np.array(ORACLES["pentagon"])
HEXAGON = 0.5 * np.column_stack([np.cos(np.arange(6) * np.pi / 3), np.sin(np.arange(6) * np.pi / 3)])
NONCONVEX = np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [1.0, 0.6], [0.0, 2.0]])


@lru_cache(maxsize=None)
def cached_mesh(family: str, h: float, seed: int = 0):
    return make_mesh(family, h, seed)


@lru_cache(maxsize=None)
def cached_disc(family: str, h: float, seed: int = 0, k: int = 2):
    return Discretization(cached_mesh(family, h, seed), k)


@lru_cache(maxsize=None)
def quad_disc(n: int = 4, amplitude: float = 0.3, seed: int = 0, k: int = 2):
    return Discretization(generate_distorted_quads(n, amplitude, seed), k)


@pytest.fixture(scope="session")
def oracles():
    return ORACLES


def poly_field(exprs):
    """Vectorized callable for a list of sympy-parsable component strings."""
    import sympy as sp

    x, y = sp.symbols("x y")
    fns = [sp.lambdify((x, y), sp.sympify(e), "numpy") for e in exprs]

    def call(p):
        p = np.atleast_2d(p)
        return np.column_stack([np.broadcast_to(f(p[:, 0], p[:, 1]), (len(p),)) for f in fns])

    return call


ACCEPTANCE_LINES: dict = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    """Store the one-line verdict for an acceptance criterion."""
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
