import warnings

import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.special import jvp

from critnodes.discretize import assemble_neumann_laplacian, build_grid
from critnodes.geometry import unit_disk, unit_square
from critnodes.linalg import DegenerateEigenvalueWarning, second_eigenpair_oracle


def bessel_jprime_root() -> float:
    """First positive zero of J1', by bracketing and bisection."""
    return brentq(lambda x: jvp(1, x), 1.0, 3.0, xtol=1e-14)


def solve(shape, hole, h):
    grid = build_grid(shape, hole, h)
    op = assemble_neumann_laplacian(grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateEigenvalueWarning)
        pair = second_eigenpair_oracle(op)
    return grid, op, pair


@pytest.fixture(scope="session")
def square32():
    return solve(unit_square(), None, 1 / 32)


@pytest.fixture(scope="session")
def square64():
    return solve(unit_square(), None, 1 / 64)


@pytest.fixture(scope="session")
def disk64():
    return solve(unit_disk(), None, 1 / 64)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: s.split(None, 1)[1]):
            terminalreporter.write_line(line)
