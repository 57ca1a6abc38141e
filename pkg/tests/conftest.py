import time
import warnings

import pytest

from solcmc.sphere_solver import SolverConfig, solve

ACCEPTANCE_LINES = []


def _solve(H, resolution):
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m = solve(H, SolverConfig(resolution=resolution))
    m.meta["solve_seconds"] = time.perf_counter() - t0
    return m


@pytest.fixture(scope="session")
def sphere_h1():
    """H=1 sphere at 10242 vertices."""
    return _solve(1.0, 10242)


@pytest.fixture(scope="session")
def sphere_h1_coarse():
    """H=1 sphere at 2562 vertices (one refinement level below ``sphere_h1``)."""
    return _solve(1.0, 2562)


@pytest.fixture(scope="session")
def sphere_small():
    return _solve(1.0, 642)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
