"""Communication graphs: adjacency, Laplacian, incidence and spectra.

Nodes are 0-indexed internally. An edge ``(src, dst)`` means ``dst`` receives
information from ``src``, so ``adjacency[dst, src] == 1``. The variance stored
on that edge belongs to the channel uncertainty used by ``dst`` when listening
to ``src``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import AssumptionViolated, DisconnectedGraph, ValidationError

UNDIRECTED = "undirected"
LEADER_FOLLOWER = "leader-follower"
INPUT_CHANNEL = "input-channel"
MODES = (UNDIRECTED, LEADER_FOLLOWER, INPUT_CHANNEL)

CONNECTIVITY_TOL = 1e-8
PD_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class NetworkTopology:
    n_nodes: int
    edges: Mapping[tuple[int, int], float]
    mode: str = UNDIRECTED
    input_variances: tuple[float, ...] | None = None

    def __post_init__(self):
        if int(self.n_nodes) != self.n_nodes or self.n_nodes < 1:
            raise ValidationError(f"n_nodes must be a positive integer, got {self.n_nodes!r}")
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        clean = {}
        for (src, dst), var in self.edges.items():
            src, dst = int(src), int(dst)
            if not (0 <= src < self.n_nodes and 0 <= dst < self.n_nodes):
                raise ValidationError(f"edge {(src, dst)} references a node outside 0..{self.n_nodes - 1}")
            if src == dst:
                raise ValidationError(f"self-loop at node {src}")
            var = float(var)
            if not np.isfinite(var) or var < 0:
                raise ValidationError(f"edge {(src, dst)} has invalid variance {var}")
            clean[(src, dst)] = var
        object.__setattr__(self, "edges", dict(sorted(clean.items())))

        if self.mode in (UNDIRECTED, INPUT_CHANNEL):
            for src, dst in self.edges:
                if (dst, src) not in self.edges:
                    raise ValidationError(f"undirected graph is missing reverse edge of {(src, dst)}")
        else:
            for src, dst in self.edges:
                if dst == 0:
                    raise ValidationError("the leader (node 0) must not receive information")
                if src != 0 and (dst, src) not in self.edges:
                    raise ValidationError(f"follower subgraph is missing reverse edge of {(src, dst)}")

        if self.mode == INPUT_CHANNEL:
            if self.input_variances is None:
                raise ValidationError("input-channel mode needs one variance per agent")
            iv = tuple(float(v) for v in self.input_variances)
            if len(iv) != self.n_nodes or any(not np.isfinite(v) or v < 0 for v in iv):
                raise ValidationError("input_variances must be n_nodes nonnegative reals")
            object.__setattr__(self, "input_variances", iv)
        elif self.input_variances is not None:
            raise ValidationError("input_variances only apply to input-channel mode")

    def __eq__(self, other):
        if not isinstance(other, NetworkTopology):
            return NotImplemented
        return (self.n_nodes, self.mode, self.edges, self.input_variances) == (
            other.n_nodes, other.mode, other.edges, other.input_variances)

    @property
    def undirected_pairs(self) -> list[tuple[int, int]]:
        """Unordered neighbour pairs ``(i, j)`` with ``i < j`` (followers only in leader-follower mode)."""
        pairs = {(min(s, d), max(s, d)) for s, d in self.edges}
        if self.mode == LEADER_FOLLOWER:
            pairs = {p for p in pairs if p[0] != 0}
        return sorted(pairs)

    @property
    def leader_edges(self) -> list[tuple[int, float]]:
        """``(follower, variance)`` for each follower that hears the leader."""
        if self.mode != LEADER_FOLLOWER:
            return []
        return [(dst, var) for (src, dst), var in self.edges.items() if src == 0]

    def variance(self, receiver: int, sender: int) -> float:
        return self.edges[(sender, receiver)]

    def relabel(self, perm: Iterable[int]) -> "NetworkTopology":
        """Return the topology with node ``i`` renamed to ``perm[i]``."""
        perm = list(perm)
        edges = {(perm[s], perm[d]): v for (s, d), v in self.edges.items()}
        iv = None
        if self.input_variances is not None:
            iv = [0.0] * self.n_nodes
            for i, v in enumerate(self.input_variances):
                iv[perm[i]] = v
            iv = tuple(iv)
        return NetworkTopology(self.n_nodes, edges, self.mode, iv)


def undirected(n_nodes: int, pairs, variance=0.0, mode: str = UNDIRECTED,
               input_variances=None) -> NetworkTopology:
    """Build a symmetric topology from unordered pairs.

    ``variance`` may be a scalar (same on both directions of every pair) or a
    mapping ``{(i, j): (var_ij, var_ji)}``.
    """
    edges = {}
    for i, j in pairs:
        if isinstance(variance, Mapping):
            v_ij, v_ji = variance[(i, j)]
        else:
            v_ij = v_ji = variance
        # var_ij belongs to agent i listening to j, i.e. edge j -> i.
        edges[(j, i)] = v_ij
        edges[(i, j)] = v_ji
    return NetworkTopology(n_nodes, edges, mode, input_variances)


def cycle(n_nodes: int, variance: float = 0.0) -> NetworkTopology:
    return undirected(n_nodes, [(i, (i + 1) % n_nodes) for i in range(n_nodes)], variance)


def complete(n_nodes: int, variance: float = 0.0) -> NetworkTopology:
    pairs = [(i, j) for i in range(n_nodes) for j in range(i + 1, n_nodes)]
    return undirected(n_nodes, pairs, variance)


def leader_follower(n_nodes: int, leader_links: Mapping[int, float],
                    follower_pairs: Mapping[tuple[int, int], tuple[float, float]] | None = None
                    ) -> NetworkTopology:
    """Leader is node 0; ``leader_links`` maps follower -> variance of its leader channel."""
    edges = {(0, f): v for f, v in leader_links.items()}
    for (i, j), (v_ij, v_ji) in (follower_pairs or {}).items():
        edges[(j, i)] = v_ij
        edges[(i, j)] = v_ji
    return NetworkTopology(n_nodes, edges, LEADER_FOLLOWER)


def adjacency_matrix(t: NetworkTopology) -> np.ndarray:
    a = np.zeros((t.n_nodes, t.n_nodes))
    for src, dst in t.edges:
        a[dst, src] = 1.0
    return a


def laplacian_matrix(t: NetworkTopology, weights: Mapping[tuple[int, int], float] | None = None
                     ) -> np.ndarray:
    """Degree-minus-adjacency. ``weights`` optionally replaces the 0/1 entries per edge."""
    if weights is None:
        a = adjacency_matrix(t)
    else:
        a = np.zeros((t.n_nodes, t.n_nodes))
        for (src, dst) in t.edges:
            a[dst, src] = weights[(src, dst)]
    return np.diag(a.sum(axis=1)) - a


def incidence_matrix(t: NetworkTopology) -> np.ndarray:
    """Oriented incidence matrix, head = smaller node index (+1), tail = larger (-1).

    In leader-follower mode this is the incidence matrix of the follower
    subgraph, with rows for followers ``1..N-1`` only.
    """
    if t.mode == INPUT_CHANNEL:
        raise ValidationError("incidence matrix is not defined for input-channel mode")
    offset = 1 if t.mode == LEADER_FOLLOWER else 0
    pairs = t.undirected_pairs
    d = np.zeros((t.n_nodes - offset, len(pairs)))
    for col, (i, j) in enumerate(pairs):
        d[i - offset, col] = 1.0
        d[j - offset, col] = -1.0
    return d


@dataclass(frozen=True)
class SpectralSummary:
    eigenvalues: tuple[float, ...]
    lambda2: float
    lambdaN: float
    eigenratio: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "eigenratio", self.lambda2 / self.lambdaN)


def _require_symmetric(t: NetworkTopology) -> None:
    if t.mode == LEADER_FOLLOWER:
        raise ValidationError("operation needs an undirected graph; use follower_laplacian for leader-follower")


def laplacian_spectrum(t: NetworkTopology) -> SpectralSummary:
    _require_symmetric(t)
    if t.n_nodes < 2:
        raise DisconnectedGraph("a single node has no nonzero Laplacian eigenvalue (Assumption 3)")
    eig = np.linalg.eigvalsh(laplacian_matrix(t))
    eig = np.sort(eig)
    if eig[1] < CONNECTIVITY_TOL:
        raise DisconnectedGraph(
            f"zero Laplacian eigenvalue is not simple (lambda2={eig[1]:.3g}); "
            "Assumption 3 requires a connected undirected graph")
    return SpectralSummary(tuple(float(v) for v in eig), float(eig[1]), float(eig[-1]))


def _reachable(n: int, adj_out: dict[int, list[int]], start: int) -> set[int]:
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj_out.get(u, ()):
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def is_connected(t: NetworkTopology) -> bool:
    _require_symmetric(t)
    out: dict[int, list[int]] = {}
    for src, dst in t.edges:
        out.setdefault(src, []).append(dst)
    return len(_reachable(t.n_nodes, out, 0)) == t.n_nodes


def has_leader_spanning_tree(t: NetworkTopology) -> bool:
    if t.mode != LEADER_FOLLOWER:
        raise ValidationError("has_leader_spanning_tree needs leader-follower mode")
    out: dict[int, list[int]] = {}
    for src, dst in t.edges:
        out.setdefault(src, []).append(dst)
    return len(_reachable(t.n_nodes, out, 0)) == t.n_nodes


def follower_laplacian(t: NetworkTopology) -> tuple[np.ndarray, np.ndarray]:
    """Partition ``L = [[0, 0], [L2, L1]]``; returns ``(L1, L2)``."""
    if t.mode != LEADER_FOLLOWER:
        raise ValidationError("follower_laplacian needs leader-follower mode")
    if not has_leader_spanning_tree(t):
        raise AssumptionViolated("Assumption 4: no directed spanning tree rooted at the leader")
    lap = laplacian_matrix(t)
    l1 = lap[1:, 1:].copy()
    l2 = lap[1:, :1].copy()
    if np.linalg.eigvalsh(l1)[0] < PD_TOL:
        raise AssumptionViolated("Assumption 4: follower block L1 is not positive definite")
    return l1, l2


def check_assumptions(t: NetworkTopology) -> None:
    """Raise :class:`AssumptionViolated` if the mode's graph assumption fails."""
    if t.mode == LEADER_FOLLOWER:
        follower_laplacian(t)
    else:
        if t.n_nodes < 2 or not is_connected(t):
            raise DisconnectedGraph("Assumption 3: the graph must be undirected and connected")
