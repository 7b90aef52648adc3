import numpy as np
import pytest

from degendens.core import MonteCarloConfig, ProcessSpec, SpacePoint, TransitionQuery

ACCEPTANCE_LINES = []


def query(t, x, xi):
    return TransitionQuery(t, SpacePoint.from_flat(x), SpacePoint.from_flat(xi))


@pytest.fixture
def radial2():
    return ProcessSpec("radial", 1, 2)


@pytest.fixture
def mc_million():
    return MonteCarloConfig(paths=1_000_000, seed=11)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def rel(a, b):
    return abs(a - b) / abs(b)


__all__ = ["query", "rel", "np"]
