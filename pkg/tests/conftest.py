import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ohmgrad.graph import CircuitGraph
from ohmgrad.topology import grid_graph, random_connected_graph

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def triangle():
    return CircuitGraph(3, ((0, 1), (1, 2), (2, 0)))


@pytest.fixture
def grid3():
    return grid_graph(3, 3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def incidence(graph):
    """Node-edge incidence with +1 at the tail and -1 at the head."""
    B = np.zeros((graph.n_nodes, graph.n_edges))
    for e, (t, h) in enumerate(graph.edges):
        B[t, e] = 1.0
        B[h, e] = -1.0
    return B


def laplacian_solve(graph, r, s):
    """Node-potential oracle: v such that KCL holds and s + v is a potential difference."""
    B = incidence(graph)
    G = np.diag(1.0 / np.asarray(r, dtype=float))
    L = B @ G @ B.T
    phi = np.linalg.lstsq(L, B @ G @ s, rcond=None)[0]
    return B.T @ phi - s


def random_graph(seed, max_nodes=20, max_chords=15):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, max_nodes + 1))
    return random_connected_graph(n, int(rng.integers(0, max_chords + 1)), rng), rng


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
