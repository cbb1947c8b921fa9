"""Exact second-moment propagation and mean-square stability.

With independent zero-mean noise sources of variance ``s_k`` entering as
``x' = (Abar + sum_k D_k G_k) x``, the covariance evolves linearly,

    X' = Abar X Abar' + sum_k s_k G_k X G_k',

so mean-square stability is equivalent to this lifted operator having
spectral radius below one. For the undirected and input-channel modes the
operator acts on consensus errors and is restricted to the complement of the
agreement directions; in leader-follower mode it acts on the leader-relative
error directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigs

from .dynamics import DynamicsModel
from .errors import NonConvergence
from .graph import (INPUT_CHANNEL, LEADER_FOLLOWER, NetworkTopology, complete,
                    follower_laplacian, laplacian_matrix)
from .noise import NoiseDraw, noise_sources, source_variances
from .simulate import Scenario, disagreement
from .synthesis import ProtocolGain

STABILITY_MARGIN = 1e-9


@dataclass(frozen=True, eq=False)
class NoiseGeneratorSet:
    base: np.ndarray
    generators: tuple[tuple[float, np.ndarray], ...]
    sources: tuple
    basis: np.ndarray  # orthonormal columns spanning the invariant subspace
    mode: str

    @property
    def dim(self) -> int:
        return self.base.shape[0]

    def noise_term(self, d: NoiseDraw, y) -> np.ndarray:
        """``sum_k D_k G_k y`` for one draw."""
        y = np.asarray(y, dtype=float).reshape(-1)
        out = np.zeros(self.dim)
        for src, (_, G) in zip(self.sources, self.generators):
            out += d[src] * (G @ y)
        return out


def _agreement_complement(N: int, n: int) -> np.ndarray:
    """Orthonormal basis of ``range((I - 11'/N) (x) I_n)``."""
    if N == 1:
        return np.zeros((n, 0))
    # Helmert-style basis: orthonormal and orthogonal to the all-ones vector.
    Y = np.zeros((N, N - 1))
    for j in range(1, N):
        Y[:j, j - 1] = 1.0
        Y[j, j - 1] = -j
        Y[:, j - 1] /= np.sqrt(j * (j + 1))
    return np.kron(Y, np.eye(n))


def build_generators(s: Scenario) -> NoiseGeneratorSet:
    t, m, g = s.topology, s.model, s.gain
    N, n = t.n_nodes, m.n
    BK = m.B @ g.K
    variances = source_variances(t)
    sources = noise_sources(t)
    gens = []
    if t.mode == LEADER_FOLLOWER:
        l1, _ = follower_laplacian(t)
        I = np.eye(N - 1)
        base = np.kron(I, m.A) + g.alpha * np.kron(l1, BK)
        for var, (src, dst) in zip(variances, sources):
            if var == 0:
                continue
            E = np.zeros((N - 1, N - 1))
            E[dst - 1, dst - 1] = 1.0
            if src != 0:
                E[dst - 1, src - 1] = -1.0
            gens.append((float(var), g.alpha * np.kron(E, BK)))
        basis = np.eye((N - 1) * n)
    else:
        lap = laplacian_matrix(t)
        M = np.eye(N) - np.ones((N, N)) / N
        base = np.kron(np.eye(N), m.A) + g.alpha * np.kron(lap, BK)
        for var, src_id in zip(variances, sources):
            if var == 0:
                continue
            E = np.zeros((N, N))
            if t.mode == INPUT_CHANNEL:
                E[src_id, :] = lap[src_id, :]
            else:
                src, dst = src_id
                E[dst, dst] = 1.0
                E[dst, src] = -1.0
            gens.append((float(var), g.alpha * np.kron(M @ E, BK)))
        basis = _agreement_complement(N, n)
    kept = tuple(src for var, src in zip(variances, sources) if var != 0)
    return NoiseGeneratorSet(base, tuple(gens), kept, basis, t.mode)


def moment_step(gs: NoiseGeneratorSet, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    out = gs.base @ X @ gs.base.T
    for var, G in gs.generators:
        out += var * (G @ X @ G.T)
    return 0.5 * (out + out.T)


def lifted_operator(gs: NoiseGeneratorSet) -> np.ndarray:
    """Matrix of the moment map on ``vec`` of the reduced covariance."""
    V = gs.basis
    a = V.T @ gs.base @ V
    T = np.kron(a, a)
    for var, G in gs.generators:
        g = V.T @ G @ V
        T += var * np.kron(g, g)
    return T


def _reduced_map(gs: NoiseGeneratorSet):
    """Moment map restricted to the invariant subspace, plus its dimension."""
    V = gs.basis
    a = V.T @ gs.base @ V
    reduced = [(var, V.T @ G @ V) for var, G in gs.generators]

    def apply(X):
        out = a @ X @ a.T
        for var, g in reduced:
            out += var * (g @ X @ g.T)
        return out

    return apply, a.shape[0]


def _power_radius(gs: NoiseGeneratorSet, tol: float, max_iter: int, window: int = 25) -> float:
    # Convergence is geometric in the ratio of the two largest eigenvalue
    # moduli; with a ratio near one the estimate settles before it is accurate.
    apply, d = _reduced_map(gs)
    if d == 0:
        return 0.0
    # Starting inside the PSD cone targets the Perron eigenvalue of the cone-preserving map.
    X = np.eye(d) / np.sqrt(d)
    log_growth = [0.0]
    prev = None
    for it in range(1, max_iter + 1):
        Y = apply(X)
        Y = 0.5 * (Y + Y.T)
        nrm = np.linalg.norm(Y)
        if nrm == 0.0:
            return 0.0
        log_growth.append(log_growth[-1] + np.log(nrm))
        X = Y / nrm
        if it >= 2 * window and it % window == 0:
            # Window-averaged growth rate smooths oscillation from equal-modulus eigenvalues.
            est = np.exp((log_growth[-1] - log_growth[-1 - window]) / window)
            if prev is not None and abs(est - prev) <= tol * max(est, 1e-300):
                return float(est)
            prev = est
    raise NonConvergence(f"power iteration did not settle within {max_iter} iterations")


def _arnoldi_radius(gs: NoiseGeneratorSet, tol: float, max_iter: int) -> float:
    apply, d = _reduced_map(gs)
    size = d * d
    if size == 0:
        return 0.0
    if size <= 16:
        return float(np.max(np.abs(np.linalg.eigvals(lifted_operator(gs)))))
    op = LinearOperator((size, size), dtype=float,
                        matvec=lambda v: apply(np.reshape(v, (d, d))).reshape(-1))
    try:
        vals = eigs(op, k=min(6, size - 2), which="LM", tol=tol * 1e-2, maxiter=max_iter,
                    return_eigenvectors=False, v0=np.eye(d).reshape(-1))
    except ArpackNoConvergence as exc:
        raise NonConvergence(f"Arnoldi iteration did not converge: {exc}") from exc
    return float(np.max(np.abs(vals)))


def ms_spectral_radius(gs: NoiseGeneratorSet, method: str = "eig", tol: float = 1e-8,
                       max_iter: int = 200_000) -> float:
    """Spectral radius of the moment operator on the invariant subspace.

    ``method="eig"`` eigensolves the explicit lifted matrix. ``"arnoldi"``
    runs implicitly restarted Arnoldi on the operator without forming it and
    copes with close or complex competing eigenvalues. ``"power"`` iterates
    the operator on symmetric matrices; it reaches ``tol`` only when the
    second-largest eigenvalue modulus is well separated from the first.
    """
    if method == "power":
        return _power_radius(gs, tol, max_iter)
    if method == "arnoldi":
        return _arnoldi_radius(gs, tol, max_iter)
    if method != "eig":
        raise ValueError(f"unknown method {method!r}")
    T = lifted_operator(gs)
    if T.size == 0:
        return 0.0
    try:
        return float(np.max(np.abs(np.linalg.eigvals(T))))
    except np.linalg.LinAlgError as exc:
        raise NonConvergence(str(exc)) from exc


def initial_moment(s: Scenario) -> np.ndarray:
    y0 = disagreement(s, s.initial_states)
    return np.outer(y0, y0)


def exact_msd_trajectory(s: Scenario, horizon: int | None = None) -> np.ndarray:
    """Exact ``E ||error(k)||^2`` for ``k = 0..horizon``."""
    horizon = s.horizon if horizon is None else horizon
    gs = build_generators(s)
    X = initial_moment(s)
    out = [np.trace(X)]
    for _ in range(horizon):
        X = moment_step(gs, X)
        out.append(np.trace(X))
    return np.array(out)


def is_ms_stable(s: Scenario, method: str = "eig") -> bool:
    return ms_spectral_radius(build_generators(s), method) < 1.0 - STABILITY_MARGIN


def scaled_variances(t: NetworkTopology, c: float) -> NetworkTopology:
    edges = {e: c * v for e, v in t.edges.items()}
    iv = None if t.input_variances is None else tuple(c * v for v in t.input_variances)
    return NetworkTopology(t.n_nodes, edges, t.mode, iv)


def critical_scale(s: Scenario, hi: float = 1e3, rtol: float = 1e-10) -> float:
    """Largest common multiplier of all variances keeping the loop mean-square stable.

    Bisection on the monotone map ``c -> rho(c)``; returns ``inf`` when even
    ``hi`` is stable and ``0`` when the noise-free loop is already unstable.
    """
    def rho(c):
        return ms_spectral_radius(build_generators(s.replace(topology=scaled_variances(s.topology, c))))

    if rho(0.0) >= 1.0:
        return 0.0
    if rho(hi) < 1.0:
        return float("inf")
    lo = 0.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if rho(mid) < 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# Thresholds quoted for complete graphs of single integrators; these come from
# an external frequency-domain result and are only reported alongside ours.
PUBLISHED_COMPLETE_GRAPH_THRESHOLDS = {2: 1.0, 3: 1.5, 4: 16.0 / 7.0}


def complete_graph_thresholds(sizes=(2, 3, 4)) -> list[dict]:
    """Oracle-measured critical equal variance for single-integrator complete graphs.

    Uses the variance-agnostic design ``alpha = 2 / (lambda2 + lambdaN)`` with
    ``K = -1``. Reports the condition-implied bound ``N / 2`` and the
    published values for comparison.
    """
    rows = []
    model = DynamicsModel(np.eye(1), np.eye(1))
    for N in sizes:
        alpha = 2.0 / (N + N)
        gain = ProtocolGain(alpha, -np.eye(1), 0.0, np.eye(1), np.eye(1))
        s = Scenario(model, complete(N, 1.0), gain, initial_states=np.zeros((N, 1)), trials=1)
        rows.append({"N": N, "oracle_threshold": critical_scale(s, hi=100.0),
                     "condition_threshold": N / 2.0,
                     "published_threshold": PUBLISHED_COMPLETE_GRAPH_THRESHOLDS.get(N)})
    return rows
