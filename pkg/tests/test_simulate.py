from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_leader_follower, random_undirected, rng_from, seeds
from msconsensus import graph, noise, simulate
from msconsensus.dynamics import DynamicsModel
from msconsensus.errors import ValidationError
from msconsensus.noise import NoiseDraw, NoiseSpec
from msconsensus.simulate import Scenario
from msconsensus.synthesis import ProtocolGain


def make_gain(alpha, K):
    K = np.atleast_2d(K)
    n = K.shape[1]
    return ProtocolGain(alpha, K, 0.0, np.eye(n), np.eye(n))


def random_scenario(rng, mode, n_nodes=None, n=None):
    N = int(rng.integers(2, 7)) if n_nodes is None else n_nodes
    n = int(rng.integers(1, 4)) if n is None else n
    if mode == graph.LEADER_FOLLOWER:
        t = random_leader_follower(rng, N)
    else:
        t = random_undirected(rng, N, 1.0, mode)
    m = DynamicsModel(rng.normal(size=(n, n)), rng.normal(size=(n, 1)))
    g = make_gain(float(rng.uniform(0.05, 0.5)), rng.normal(size=(1, n)))
    return Scenario(m, t, g, NoiseSpec("gaussian", int(rng.integers(0, 2 ** 32))),
                    rng.normal(size=(N, n)), horizon=5, trials=3)


def random_draw(rng, t):
    src = noise.noise_sources(t)
    return NoiseDraw(tuple(src), rng.normal(size=len(src)))


def test_two_agent_hand_step():
    m = DynamicsModel([[1.0]], [[1.0]])
    t = graph.undirected(2, [(0, 1)], 1.0)
    s = Scenario(m, t, make_gain(0.5, [[-1.0]]), initial_states=[[1.0], [0.0]])
    d = NoiseDraw(((0, 1), (1, 0)), np.array([0.2, -0.4]))
    # agent 0 hears 1 with D=-0.4: u0 = 0.5*0.6*(-(1-0)) = -0.3
    # agent 1 hears 0 with D=0.2:  u1 = 0.5*1.2*(-(0-1)) = 0.6
    x = simulate.step_undirected(s, [[1.0], [0.0]], d)
    assert np.allclose(x, [0.7, 0.6])


def test_input_channel_hand_step():
    m = DynamicsModel([[1.0]], [[1.0]])
    t = graph.undirected(3, [(0, 1), (1, 2)], 0.0, graph.INPUT_CHANNEL, [0.1, 0.1, 0.1])
    s = Scenario(m, t, make_gain(0.5, [[-1.0]]))
    d = NoiseDraw((0, 1, 2), np.array([0.5, 0.0, -1.0]))
    x0 = np.array([[2.0], [0.0], [1.0]])
    # u_i = alpha (1 + D_i) K sum_j (x_i - x_j)
    u = [0.5 * 1.5 * -2.0, 0.5 * 1.0 * -(-2.0 - 1.0), 0.5 * 0.0 * -1.0]
    assert np.allclose(simulate.step_input_channel(s, x0, d), x0[:, 0] + u)


def test_leader_keeps_its_own_dynamics():
    m = DynamicsModel([[1.0, 1.0], [0.0, 1.0]], [[0.0], [1.0]])
    t = graph.leader_follower(3, {1: 0.5}, {(1, 2): (0.5, 0.5)})
    s = Scenario(m, t, make_gain(0.3, [[-0.2, -1.0]]), initial_states=np.arange(6.0).reshape(3, 2))
    d = NoiseDraw(tuple(noise.noise_sources(t)), np.array([0.3, -0.7, 0.9]))
    x = simulate.step_leader_follower(s, s.initial_states, d).reshape(3, 2)
    assert np.allclose(x[0], m.A @ s.initial_states[0])


def test_step_mode_mismatch(example_run):
    d = noise.draw(example_run.noise, example_run.topology, 0, 0)
    with pytest.raises(ValidationError):
        simulate.step_leader_follower(example_run, example_run.initial_states, d)


@settings(max_examples=60, deadline=None)
@given(seeds, st.sampled_from(graph.MODES))
def test_matrix_form_agrees_with_agent_form(seed, mode):
    rng = rng_from(seed)
    s = random_scenario(rng, mode)
    d = random_draw(rng, s.topology)
    x = rng.normal(size=s.initial_states.shape)
    agent = simulate.STEPPERS[mode](s, x, d)
    matrix = simulate.step_matrix_form(s, x, d)
    assert np.allclose(agent, matrix, atol=1e-12 * max(1.0, np.abs(matrix).max()))


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_error_form_agrees_with_agent_form(seed):
    rng = rng_from(seed)
    s = random_scenario(rng, graph.LEADER_FOLLOWER)
    d = random_draw(rng, s.topology)
    x = rng.normal(size=s.initial_states.shape)
    N, n = x.shape
    e_next = simulate.relative_error(simulate.step_leader_follower(s, x, d), N, n)
    e_form = simulate.step_error_form(s, simulate.relative_error(x, N, n), d)
    assert np.allclose(e_next, e_form, atol=1e-11 * max(1.0, np.abs(e_form).max()))


@settings(max_examples=60, deadline=None)
@given(seeds, st.sampled_from([graph.UNDIRECTED, graph.INPUT_CHANNEL]))
def test_consensus_is_invariant(seed, mode):
    # agents in agreement exchange zero differences, so noise has no effect
    rng = rng_from(seed)
    s = random_scenario(rng, mode)
    common = rng.normal(size=s.model.n)
    x = np.tile(common, (s.topology.n_nodes, 1))
    out = simulate.STEPPERS[mode](s, x, random_draw(rng, s.topology)).reshape(x.shape)
    assert np.allclose(out, np.tile(s.model.A @ common, (s.topology.n_nodes, 1)))


@settings(max_examples=60, deadline=None)
@given(seeds, st.sampled_from(graph.MODES))
def test_shift_equivariance(seed, mode):
    rng = rng_from(seed)
    s = random_scenario(rng, mode)
    d = random_draw(rng, s.topology)
    x = rng.normal(size=s.initial_states.shape)
    c = rng.normal(size=s.model.n)
    a = simulate.STEPPERS[mode](s, x + c, d).reshape(x.shape)
    b = simulate.STEPPERS[mode](s, x, d).reshape(x.shape)
    assert np.allclose(a, b + s.model.A @ c, atol=1e-10)


def test_consensus_error_projection():
    x = np.array([[1.0, 2.0], [3.0, 0.0], [2.0, 1.0]])
    xi = simulate.consensus_error(x, 3, 2)
    assert np.allclose(xi.reshape(3, 2).sum(axis=0), 0)
    assert np.allclose(simulate.consensus_error(xi, 3, 2), xi)


def test_deterministic_path_shape(example_run):
    path = simulate.simulate_deterministic(example_run, 10)
    assert path.shape == (11, 6, 2)
    assert np.array_equal(path[0], example_run.initial_states)


def test_ensemble_independent_of_parallelism(example_run):
    s = example_run.replace(trials=37, horizon=15)
    ref = simulate.run_ensemble(s)
    for workers, chunk in [(1, 5), (3, 7), (4, 37)]:
        other = simulate.run_ensemble(s, workers=workers, chunk_size=chunk)
        assert np.array_equal(ref.states, other.states)
        assert np.array_equal(ref.msd, other.msd)
        assert np.array_equal(ref.msd_stderr, other.msd_stderr)
        assert np.array_equal(ref.mean_relative, other.mean_relative)


def test_ensemble_prefix_stable(example_run):
    # trial i is identical whatever the total number of trials
    small = simulate.run_ensemble(example_run.replace(trials=4, horizon=8))
    big = simulate.run_ensemble(example_run.replace(trials=9, horizon=8))
    assert np.array_equal(small.states, big.states[:4])


def test_ensemble_statistics(example_run):
    ens = simulate.run_ensemble(example_run.replace(trials=20, horizon=5))
    x = ens.states
    xi = x - x.mean(axis=2, keepdims=True)
    sq = (xi ** 2).sum(axis=(2, 3))
    assert np.allclose(ens.msd, sq.mean(axis=0), rtol=1e-12)
    assert np.allclose(ens.msd_stderr, sq.std(axis=0, ddof=1) / np.sqrt(20), rtol=1e-10)
    assert np.allclose(ens.mean_relative, (x[:, :, 1:] - x[:, :, :1]).mean(axis=0), atol=1e-12)


def test_scenario_validation(example_run):
    with pytest.raises(ValidationError):
        example_run.replace(initial_states=np.zeros((5, 2)))
    with pytest.raises(ValidationError):
        example_run.replace(horizon=0)
    with pytest.raises(ValidationError):
        example_run.replace(gain=make_gain(0.25, [[1.0, 2.0, 3.0]]))
