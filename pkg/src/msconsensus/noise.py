"""Multiplicative channel uncertainties and their second-moment matrices.

Samples are a pure function of ``(seed, source index, trial, k)``: a Philox
counter-based generator is keyed by the seed, and the 256-bit counter is set
to ``[k * blocks + b, trial, 0, 0]``, where ``blocks`` is the number of
4-word Philox blocks needed for one time step. No generator state is shared
between trials, so trials can be produced in any order or in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.special import ndtri

from .errors import ValidationError
from .graph import INPUT_CHANNEL, LEADER_FOLLOWER, NetworkTopology, incidence_matrix

GAUSSIAN = "gaussian"
UNIFORM = "uniform"
DISTRIBUTIONS = (GAUSSIAN, UNIFORM)

_WORDS_PER_BLOCK = 4


@dataclass(frozen=True)
class NoiseSpec:
    distribution: str = GAUSSIAN
    seed: int = 0

    def __post_init__(self):
        if self.distribution not in DISTRIBUTIONS:
            raise ValidationError(f"unknown distribution {self.distribution!r}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2 ** 64:
            raise ValidationError("seed must be a 64-bit unsigned integer")


def noise_sources(t: NetworkTopology) -> list:
    """Independent noise sources in canonical order.

    Directed edges ``(src, dst)`` for channel modes; agent indices for the
    input-channel mode.
    """
    if t.mode == INPUT_CHANNEL:
        return list(range(t.n_nodes))
    return list(t.edges)


def source_variances(t: NetworkTopology) -> np.ndarray:
    if t.mode == INPUT_CHANNEL:
        return np.array(t.input_variances, dtype=float)
    return np.array(list(t.edges.values()), dtype=float)


@dataclass(frozen=True, eq=False)
class NoiseDraw:
    sources: tuple
    values: np.ndarray

    def as_dict(self) -> dict:
        return dict(zip(self.sources, self.values.tolist()))

    def __getitem__(self, source) -> float:
        return float(self.values[self.sources.index(source)])


def _key(seed: int) -> np.ndarray:
    return np.random.SeedSequence(int(seed)).generate_state(2, np.uint64)


def _unit_uniforms(seed: int, trial: int, start_block: int, count: int) -> np.ndarray:
    """``count`` doubles strictly inside (0, 1), starting at a given counter block."""
    if count == 0:
        return np.empty(0)
    bitgen = np.random.Philox(key=_key(seed), counter=[start_block, trial, 0, 0])
    raw = bitgen.random_raw(count)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def _shape(spec: NoiseSpec, u: np.ndarray, variances: np.ndarray) -> np.ndarray:
    if spec.distribution == GAUSSIAN:
        return ndtri(u) * np.sqrt(variances)
    return (2.0 * u - 1.0) * np.sqrt(3.0 * variances)


def _blocks_per_step(n_sources: int) -> int:
    return -(-n_sources // _WORDS_PER_BLOCK)


def draw(spec: NoiseSpec, t: NetworkTopology, trial: int, k: int) -> NoiseDraw:
    """One time-step sample for every noise source."""
    sources = noise_sources(t)
    var = source_variances(t)
    blocks = _blocks_per_step(len(sources))
    u = _unit_uniforms(spec.seed, trial, k * blocks, len(sources))
    return NoiseDraw(tuple(sources), _shape(spec, u, var))


def draw_trial(spec: NoiseSpec, t: NetworkTopology, trial: int, horizon: int) -> np.ndarray:
    """Samples for steps ``0..horizon-1`` of one trial, shape ``(horizon, n_sources)``.

    Row ``k`` equals ``draw(spec, t, trial, k).values`` exactly.
    """
    n_src = len(noise_sources(t))
    var = source_variances(t)
    blocks = _blocks_per_step(n_src)
    width = blocks * _WORDS_PER_BLOCK
    u = _unit_uniforms(spec.seed, trial, 0, horizon * width).reshape(horizon, width)[:, :n_src]
    return _shape(spec, u, var)


def pi_matrix(t: NetworkTopology, values: Mapping | NoiseDraw) -> np.ndarray:
    """Random coupling matrix with ``Pi_ij = -a_ij D_ij`` and ``Pi_ii = sum_j a_ij D_ij``."""
    if isinstance(values, NoiseDraw):
        values = values.as_dict()
    pi = np.zeros((t.n_nodes, t.n_nodes))
    for (src, dst), d in values.items():
        pi[dst, src] -= d
        pi[dst, dst] += d
    return pi


def theta_matrix(t: NetworkTopology) -> np.ndarray:
    """Expected ``Pi' Pi`` for an undirected graph."""
    if t.mode == LEADER_FOLLOWER or t.mode == INPUT_CHANNEL:
        raise ValidationError("theta_matrix needs undirected mode")
    theta = np.zeros((t.n_nodes, t.n_nodes))
    for i, j in t.undirected_pairs:
        s = t.edges[(j, i)] + t.edges[(i, j)]
        theta[i, j] = theta[j, i] = -s
        theta[i, i] += s
        theta[j, j] += s
    return theta


def theta_hat_matrix(t: NetworkTopology) -> np.ndarray:
    """Expected ``Pi_hat' Pi_hat`` on the follower error space (size ``N-1``)."""
    if t.mode != LEADER_FOLLOWER:
        raise ValidationError("theta_hat_matrix needs leader-follower mode")
    m = t.n_nodes - 1
    theta = np.zeros((m, m))
    for i, j in t.undirected_pairs:
        s = t.edges[(j, i)] + t.edges[(i, j)]
        theta[i - 1, j - 1] = theta[j - 1, i - 1] = -s
        theta[i - 1, i - 1] += s
        theta[j - 1, j - 1] += s
    for f, v in t.leader_edges:
        theta[f - 1, f - 1] += v
    return theta


def edge_variance_diag(t: NetworkTopology) -> np.ndarray:
    """Per-undirected-edge summed variances, aligned with :func:`incidence_matrix` columns."""
    return np.diag([t.edges[(j, i)] + t.edges[(i, j)] for i, j in t.undirected_pairs])


def leader_incidence(t: NetworkTopology) -> tuple[np.ndarray, np.ndarray]:
    """``(D_bar, Delta_hat)`` with ``D_bar = [leader selector | follower incidence]``."""
    if t.mode != LEADER_FOLLOWER:
        raise ValidationError("leader_incidence needs leader-follower mode")
    links = t.leader_edges
    selector = np.zeros((t.n_nodes - 1, len(links)))
    for col, (f, _) in enumerate(links):
        selector[f - 1, col] = 1.0
    d_bar = np.hstack([selector, incidence_matrix(t)])
    delta = np.concatenate([[v for _, v in links], np.diag(edge_variance_diag(t))])
    return d_bar, np.diag(delta)
