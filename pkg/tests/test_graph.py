from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings

from conftest import random_leader_follower, random_undirected, rng_from, seeds
from msconsensus import graph
from msconsensus.errors import AssumptionViolated, DisconnectedGraph, ValidationError


def test_path3_adjacency_and_laplacian():
    t = graph.undirected(3, [(0, 1), (1, 2)])
    assert np.array_equal(graph.adjacency_matrix(t), [[0, 1, 0], [1, 0, 1], [0, 1, 0]])
    assert np.array_equal(graph.laplacian_matrix(t), [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])


def test_edge_direction_convention():
    # edge (src, dst): dst listens to src, variance is that of dst's channel from src
    t = graph.leader_follower(3, {1: 0.3}, {(1, 2): (0.1, 0.2)})
    a = graph.adjacency_matrix(t)
    assert a[1, 0] == 1 and a[0, 1] == 0
    assert t.variance(1, 0) == 0.3
    assert t.variance(1, 2) == 0.1 and t.variance(2, 1) == 0.2


@pytest.mark.parametrize("n", [3, 4, 5, 6, 7, 10])
def test_cycle_spectrum_closed_form(n):
    spec = graph.laplacian_spectrum(graph.cycle(n))
    expected = np.sort(2 - 2 * np.cos(2 * np.pi * np.arange(n) / n))
    assert np.allclose(spec.eigenvalues, expected, atol=1e-12)


def test_cycle6_extremes():
    spec = graph.laplacian_spectrum(graph.cycle(6))
    assert np.allclose(spec.eigenvalues, [0, 1, 1, 3, 3, 4], atol=1e-12)
    assert abs(spec.lambda2 - 1) <= 1e-9 and abs(spec.lambdaN - 4) <= 1e-9
    assert spec.eigenratio == pytest.approx(0.25)


def test_complete_graph_spectrum():
    spec = graph.laplacian_spectrum(graph.complete(4))
    assert np.allclose(spec.eigenvalues, [0, 4, 4, 4], atol=1e-12)


def test_disconnected_raises():
    t = graph.undirected(4, [(0, 1), (2, 3)])
    assert not graph.is_connected(t)
    with pytest.raises(DisconnectedGraph):
        graph.laplacian_spectrum(t)
    with pytest.raises(AssumptionViolated):
        graph.check_assumptions(t)


def test_validation():
    with pytest.raises(ValidationError):
        graph.NetworkTopology(2, {(0, 1): 0.0})  # missing reverse edge
    with pytest.raises(ValidationError):
        graph.NetworkTopology(2, {(0, 0): 0.0})
    with pytest.raises(ValidationError):
        graph.undirected(2, [(0, 1)], -1.0)
    with pytest.raises(ValidationError):
        graph.NetworkTopology(2, {(1, 0): 0.0, (0, 1): 0.0}, graph.LEADER_FOLLOWER)
    with pytest.raises(ValidationError):
        graph.undirected(2, [(0, 1)], 0.0, graph.INPUT_CHANNEL)


def test_incidence_matches_laplacian_example():
    t = graph.cycle(4)
    d = graph.incidence_matrix(t)
    assert d.shape == (4, 4)
    assert np.allclose(d @ d.T, graph.laplacian_matrix(t))
    assert np.allclose(d.sum(axis=0), 0)


def test_follower_laplacian_chain():
    # leader -> 1, followers 1-2: L1 = [[2, -1], [-1, 1]], L2 = [-1, 0]
    t = graph.leader_follower(3, {1: 0.0}, {(1, 2): (0.0, 0.0)})
    l1, l2 = graph.follower_laplacian(t)
    assert np.array_equal(l1, [[2, -1], [-1, 1]])
    assert np.array_equal(l2.reshape(-1), [-1, 0])
    assert graph.has_leader_spanning_tree(t)


def test_no_spanning_tree():
    t = graph.leader_follower(4, {1: 0.0}, {(2, 3): (0.0, 0.0)})
    assert not graph.has_leader_spanning_tree(t)
    with pytest.raises(AssumptionViolated):
        graph.follower_laplacian(t)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_laplacian_properties(seed):
    rng = rng_from(seed)
    t = random_undirected(rng, int(rng.integers(2, 11)))
    lap = graph.laplacian_matrix(t)
    assert np.allclose(lap.sum(axis=1), 0)
    assert np.allclose(lap, lap.T)
    spec = graph.laplacian_spectrum(t)
    assert spec.eigenvalues[0] == pytest.approx(0, abs=1e-9)
    assert spec.lambda2 > 0
    d = graph.incidence_matrix(t)
    w = rng.uniform(0.1, 2, d.shape[1])
    weights = {}
    for (i, j), wk in zip(t.undirected_pairs, w):
        weights[(i, j)] = weights[(j, i)] = wk
    assert np.allclose(d @ np.diag(w) @ d.T, graph.laplacian_matrix(t, weights), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_spectrum_relabel_invariant(seed):
    rng = rng_from(seed)
    n = int(rng.integers(2, 11))
    t = random_undirected(rng, n)
    perm = rng.permutation(n)
    a = graph.laplacian_spectrum(t).eigenvalues
    b = graph.laplacian_spectrum(t.relabel(perm)).eigenvalues
    assert np.allclose(a, b, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_follower_block_positive_definite(seed):
    rng = rng_from(seed)
    t = random_leader_follower(rng, int(rng.integers(2, 11)))
    l1, l2 = graph.follower_laplacian(t)
    full = graph.laplacian_matrix(t)
    assert np.array_equal(l1, full[1:, 1:])
    assert np.array_equal(l2.reshape(-1), full[1:, 0])
    assert np.linalg.eigvalsh(l1)[0] > 0
