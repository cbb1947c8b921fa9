from __future__ import annotations

import numpy as np
import pytest
from hypothesis import strategies as st

from msconsensus import graph
from msconsensus.dynamics import DynamicsModel
from msconsensus.scenario import example_scenario
from msconsensus.synthesis import synthesize


@pytest.fixture(scope="session")
def example_file():
    return example_scenario()


@pytest.fixture(scope="session")
def double_integrator():
    return DynamicsModel([[1.0, 1.0], [0.0, 1.0]], [[0.0], [1.0]])


@pytest.fixture(scope="session")
def example_gain(example_file):
    sf = example_file
    return synthesize(sf.model, sf.topology, sf.Q, sf.alpha, sf.delta_sq)


@pytest.fixture(scope="session")
def example_run(example_file, example_gain):
    return example_file.scenario(example_gain)


def random_connected_pairs(rng, n, p=0.4):
    """Random spanning tree plus extra edges, as unordered pairs."""
    perm = rng.permutation(n)
    pairs = set()
    for k in range(1, n):
        a, b = perm[k], perm[rng.integers(0, k)]
        pairs.add((min(a, b), max(a, b)))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                pairs.add((i, j))
    return sorted((int(a), int(b)) for a, b in pairs)


def random_undirected(rng, n, max_var=1.0, mode=graph.UNDIRECTED):
    pairs = random_connected_pairs(rng, n)
    var = {pr: (float(rng.uniform(0, max_var)), float(rng.uniform(0, max_var))) for pr in pairs}
    iv = None
    if mode == graph.INPUT_CHANNEL:
        iv = [float(v) for v in rng.uniform(0, max_var, n)]
    return graph.undirected(n, pairs, var, mode, iv)


def random_leader_follower(rng, n, max_var=1.0):
    """Leader 0 plus a connected follower subgraph with at least one leader link."""
    followers = random_connected_pairs(rng, n - 1) if n > 2 else []
    pairs = {(i + 1, j + 1): (float(rng.uniform(0, max_var)), float(rng.uniform(0, max_var)))
             for i, j in followers}
    linked = [f for f in range(1, n) if rng.random() < 0.4] or [int(rng.integers(1, n))]
    links = {f: float(rng.uniform(0, max_var)) for f in linked}
    return graph.leader_follower(n, links, pairs)


seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)


def rng_from(seed):
    return np.random.default_rng(seed)
