"""Closed-loop stochastic network simulation and Monte Carlo ensembles.

States are stacked agent-major: ``x = [x_1; ...; x_N]`` with each block of
length ``n``. The batched kernels below use only elementwise arithmetic with
explicit small loops, so a trial's path is bitwise identical whatever batch
it is computed in.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import noise as noise_mod
from .dynamics import DynamicsModel
from .errors import ValidationError
from .graph import (INPUT_CHANNEL, LEADER_FOLLOWER, UNDIRECTED, NetworkTopology,
                    follower_laplacian, laplacian_matrix)
from .noise import NoiseDraw, NoiseSpec
from .synthesis import ProtocolGain


@dataclass(frozen=True, eq=False)
class Scenario:
    model: DynamicsModel
    topology: NetworkTopology
    gain: ProtocolGain
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    initial_states: np.ndarray | None = None
    horizon: int = 60
    trials: int = 1000

    def __post_init__(self):
        N, n = self.topology.n_nodes, self.model.n
        if self.gain.K.shape != (1, n):
            raise ValidationError(f"K must be 1x{n}, got {self.gain.K.shape}")
        x0 = np.zeros((N, n)) if self.initial_states is None else np.array(self.initial_states, dtype=float)
        if x0.shape != (N, n):
            raise ValidationError(f"initial_states must be {N}x{n}, got {x0.shape}")
        object.__setattr__(self, "initial_states", x0)
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValidationError("horizon must be an integer >= 1")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValidationError("trials must be an integer >= 1")

    @property
    def mode(self) -> str:
        return self.topology.mode

    def replace(self, **changes) -> "Scenario":
        kw = dict(model=self.model, topology=self.topology, gain=self.gain, noise=self.noise,
                  initial_states=self.initial_states, horizon=self.horizon, trials=self.trials)
        kw.update(changes)
        return Scenario(**kw)


def consensus_error(x, N: int, n: int) -> np.ndarray:
    """Subtract the network-average state from every agent."""
    x = np.asarray(x, dtype=float).reshape(N, n)
    return (x - x.mean(axis=0)).reshape(-1)


def relative_error(x, N: int, n: int) -> np.ndarray:
    """Follower errors ``x_i - x_1``, ``i = 2..N``, stacked."""
    x = np.asarray(x, dtype=float).reshape(N, n)
    return (x[1:] - x[0]).reshape(-1)


def disagreement(s: Scenario, x) -> np.ndarray:
    """Mode-appropriate error vector: consensus error, or leader-relative error."""
    N, n = s.topology.n_nodes, s.model.n
    if s.mode == LEADER_FOLLOWER:
        return relative_error(x, N, n)
    return consensus_error(x, N, n)


# -- batched kernels ---------------------------------------------------------

def _edge_arrays(t: NetworkTopology):
    src = np.array([e[0] for e in t.edges], dtype=int)
    dst = np.array([e[1] for e in t.edges], dtype=int)
    return src, dst


def _batched_step(model: DynamicsModel, t: NetworkTopology, gain: ProtocolGain,
                  x: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """One synchronous update for a batch; ``x`` is (T, N, n), ``delta`` (T, n_sources)."""
    A, b, K = model.A, model.B[:, 0], gain.K[0]
    n = model.n
    kx = x[:, :, 0] * K[0]
    for c in range(1, n):
        kx = kx + x[:, :, c] * K[c]
    u = np.zeros(x.shape[:2])
    if t.mode == INPUT_CHANNEL:
        for e, (src, dst) in enumerate(t.edges):
            u[:, dst] += kx[:, dst] - kx[:, src]
        u = gain.alpha * (1.0 + delta) * u
    else:
        for e, (src, dst) in enumerate(t.edges):
            u[:, dst] += gain.alpha * (1.0 + delta[:, e]) * (kx[:, dst] - kx[:, src])
    out = np.empty_like(x)
    for r in range(n):
        acc = x[:, :, 0] * A[r, 0]
        for c in range(1, n):
            acc = acc + x[:, :, c] * A[r, c]
        out[:, :, r] = acc + b[r] * u
    return out


def _batched_sq_disagreement(mode: str, x: np.ndarray) -> np.ndarray:
    """Squared error norm per trial for a (T, N, n) batch."""
    N = x.shape[1]
    if mode == LEADER_FOLLOWER:
        err = x[:, 1:, :] - x[:, :1, :]
    else:
        total = x[:, 0, :]
        for i in range(1, N):
            total = total + x[:, i, :]
        err = x - (total / N)[:, None, :]
    sq = err * err
    acc = sq[:, 0, 0] * 0.0
    for i in range(sq.shape[1]):
        for c in range(sq.shape[2]):
            acc = acc + sq[:, i, c]
    return acc


# -- single-step forms -------------------------------------------------------

def _single(s: Scenario, x, d: NoiseDraw) -> np.ndarray:
    N, n = s.topology.n_nodes, s.model.n
    x = np.asarray(x, dtype=float).reshape(1, N, n)
    return _batched_step(s.model, s.topology, s.gain, x, d.values[None, :]).reshape(-1)


def step_undirected(s: Scenario, x, d: NoiseDraw) -> np.ndarray:
    """Agent-wise update with per-edge uncertainty (undirected graph)."""
    if s.mode != UNDIRECTED:
        raise ValidationError("step_undirected needs undirected mode")
    return _single(s, x, d)


def step_leader_follower(s: Scenario, x, d: NoiseDraw) -> np.ndarray:
    """Agent-wise update; the leader has no neighbours so its input is zero."""
    if s.mode != LEADER_FOLLOWER:
        raise ValidationError("step_leader_follower needs leader-follower mode")
    return _single(s, x, d)


def step_input_channel(s: Scenario, x, d: NoiseDraw) -> np.ndarray:
    """Agent-wise update with one uncertainty multiplying each agent's whole input."""
    if s.mode != INPUT_CHANNEL:
        raise ValidationError("step_input_channel needs input-channel mode")
    return _single(s, x, d)


STEPPERS = {UNDIRECTED: step_undirected, LEADER_FOLLOWER: step_leader_follower,
            INPUT_CHANNEL: step_input_channel}


def closed_loop_matrix(s: Scenario) -> np.ndarray:
    """Deterministic part ``I (x) A + alpha L (x) BK`` on the stacked state."""
    N = s.topology.n_nodes
    BK = s.model.B @ s.gain.K
    return np.kron(np.eye(N), s.model.A) + s.gain.alpha * np.kron(laplacian_matrix(s.topology), BK)


def noise_term_matrix(s: Scenario, d: NoiseDraw) -> np.ndarray:
    """Random part of the closed-loop map for one draw."""
    N = s.topology.n_nodes
    B, K, alpha = s.model.B, s.gain.K, s.gain.alpha
    if s.mode == INPUT_CHANNEL:
        lap = laplacian_matrix(s.topology)
        return alpha * np.kron(np.eye(N), B) @ np.kron(np.diag(d.values), np.eye(1)) @ np.kron(lap, K)
    pi = noise_mod.pi_matrix(s.topology, d)
    return alpha * np.kron(np.eye(N), B) @ np.kron(pi, np.eye(1)) @ np.kron(np.eye(N), K)


def step_matrix_form(s: Scenario, x, d: NoiseDraw) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    return closed_loop_matrix(s) @ x + noise_term_matrix(s, d) @ x


def step_error_form(s: Scenario, e, d: NoiseDraw) -> np.ndarray:
    """Leader-follower error recursion on ``e = (x_2 - x_1, ..., x_N - x_1)``."""
    if s.mode != LEADER_FOLLOWER:
        raise ValidationError("step_error_form needs leader-follower mode")
    N = s.topology.n_nodes
    B, K, A, alpha = s.model.B, s.gain.K, s.model.A, s.gain.alpha
    l1, _ = follower_laplacian(s.topology)
    pi_hat = noise_mod.pi_matrix(s.topology, d)[1:, 1:]
    I = np.eye(N - 1)
    mat = (np.kron(I, A) + alpha * np.kron(l1, B @ K)
           + alpha * np.kron(I, B) @ np.kron(pi_hat, np.eye(1)) @ np.kron(I, K))
    return mat @ np.asarray(e, dtype=float).reshape(-1)


def simulate_deterministic(s: Scenario, horizon: int | None = None) -> np.ndarray:
    """Noise-free path, shape ``(horizon + 1, N, n)``."""
    horizon = s.horizon if horizon is None else horizon
    n_src = len(noise_mod.noise_sources(s.topology))
    x = s.initial_states[None].copy()
    out = [x[0]]
    zero = np.zeros((1, n_src))
    for _ in range(horizon):
        x = _batched_step(s.model, s.topology, s.gain, x, zero)
        out.append(x[0])
    return np.array(out)


# -- ensembles ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TrajectoryEnsemble:
    states: np.ndarray          # (trials, horizon + 1, N, n)
    msd: np.ndarray             # (horizon + 1,)
    msd_stderr: np.ndarray      # (horizon + 1,)
    mean_relative: np.ndarray   # (horizon + 1, N - 1, n), mean of x_i - x_1
    sq_disagreement: np.ndarray  # (trials, horizon + 1)

    @property
    def trials(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1] - 1


def _run_chunk(s: Scenario, trials: range) -> tuple[np.ndarray, np.ndarray]:
    T = len(trials)
    noise = np.stack([noise_mod.draw_trial(s.noise, s.topology, tr, s.horizon) for tr in trials])
    x = np.broadcast_to(s.initial_states, (T,) + s.initial_states.shape).copy()
    path = [x]
    sq = [_batched_sq_disagreement(s.mode, x)]
    for k in range(s.horizon):
        x = _batched_step(s.model, s.topology, s.gain, x, noise[:, k, :])
        path.append(x)
        sq.append(_batched_sq_disagreement(s.mode, x))
    return np.stack(path, axis=1), np.stack(sq, axis=1)


def _fsum_mean(values: np.ndarray) -> float:
    return math.fsum(values.tolist()) / len(values)


def run_ensemble(s: Scenario, workers: int = 1, chunk_size: int = 250) -> TrajectoryEnsemble:
    """Seeded Monte Carlo ensemble.

    Results are bitwise independent of ``workers`` and ``chunk_size``:
    per-trial noise is keyed by trial index and statistics use correctly
    rounded summation.
    """
    chunks = [range(a, min(a + chunk_size, s.trials)) for a in range(0, s.trials, chunk_size)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda r: _run_chunk(s, r), chunks))
    else:
        parts = [_run_chunk(s, r) for r in chunks]
    states = np.concatenate([p[0] for p in parts])
    sq = np.concatenate([p[1] for p in parts])

    T = s.trials
    msd = np.array([_fsum_mean(sq[:, k]) for k in range(s.horizon + 1)])
    stderr = np.zeros_like(msd)
    if T > 1:
        for k in range(s.horizon + 1):
            dev = sq[:, k] - msd[k]
            stderr[k] = math.sqrt(math.fsum((dev * dev).tolist()) / (T - 1) / T)
    rel = states[:, :, 1:, :] - states[:, :, :1, :]
    mean_rel = np.empty(rel.shape[1:])
    for k in range(rel.shape[1]):
        for i in range(rel.shape[2]):
            for c in range(rel.shape[3]):
                mean_rel[k, i, c] = _fsum_mean(rel[:, k, i, c])
    return TrajectoryEnsemble(states, msd, stderr, mean_rel, sq)
