"""Shared fixtures: small graphs and matrices reused across test modules."""

import numpy as np
import pytest

from rrglab.graphs import sample_regular_graph
from rrglab.matrices import center_rescale, sample_constrained_goe
from rrglab.streams import rng_stream


@pytest.fixture(scope="session")
def graph_24_4():
    return sample_regular_graph(24, 4, rng=rng_stream(101))


@pytest.fixture(scope="session")
def graph_16_3():
    return sample_regular_graph(16, 3, rng=rng_stream(102))


@pytest.fixture(scope="session")
def h_24_4(graph_24_4):
    return center_rescale(graph_24_4)


@pytest.fixture()
def constrained_matrix_10():
    return sample_constrained_goe(10, rng=rng_stream(103))


@pytest.fixture()
def rng():
    return rng_stream(104)


def cycle_adjacency(n):
    adj = np.zeros((n, n), dtype=np.uint8)
    for u in range(n):
        adj[u, (u + 1) % n] = adj[(u + 1) % n, u] = 1
    return adj
