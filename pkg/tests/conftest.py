import numpy as np
import pytest

from flowroute.selftest import random_connected_sc, random_fc


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def triangle(weight=1.0):
    return weight * (np.ones((3, 3)) - np.eye(3))


def path_graph(n, weight=1.0):
    sc = np.zeros((n, n))
    for i in range(n - 1):
        sc[i, i + 1] = sc[i + 1, i] = weight
    return sc


__all__ = ["random_connected_sc", "random_fc", "triangle", "path_graph"]


# One summary line per acceptance criterion, printed after the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
