"""Consensus conditions and protocol gain synthesis.

The channel-noise modes share one scalar test,

    (alpha * lam - 1)**2 + alpha**2 * s * lam < 1 / M(A)**2,

evaluated at the extreme eigenvalues of the relevant Laplacian, with ``s``
the mode's effective channel variance. For input-channel noise the variance
term scales with ``lam**2`` instead (``INPUT_FORM_PROOF``); the ``lam`` form
(``INPUT_FORM_PRINTED``) admits gains that are not mean-square stabilising
and is kept only for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import graph
from .dynamics import DynamicsModel, is_stabilizable, mahler_measure
from .errors import ConditionFails, NotStabilizable, ValidationError
from .graph import INPUT_CHANNEL, LEADER_FOLLOWER, UNDIRECTED, NetworkTopology
from .mare import admissible_delta_bound, riccati_gain, solve_mare

INPUT_FORM_PROOF = "proof"
INPUT_FORM_PRINTED = "printed"


@dataclass(frozen=True, eq=False)
class ProtocolGain:
    alpha: float
    K: np.ndarray
    delta_sq: float
    P: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValidationError(f"alpha must be positive, got {self.alpha}")
        object.__setattr__(self, "K", np.atleast_2d(np.asarray(self.K, dtype=float)))

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "delta_sq": self.delta_sq,
                "K": self.K.tolist(), "P": np.asarray(self.P).tolist(),
                "Q": np.asarray(self.Q).tolist()}


@dataclass(frozen=True)
class ConditionReport:
    mode: str
    lhs_values: tuple[tuple[float, float], ...]
    rhs: float
    holds: bool
    sigma_effective: float
    alpha: float
    spectrum: str = "L"
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def max_lhs(self) -> float:
        return max(v for _, v in self.lhs_values)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "alpha": self.alpha, "spectrum": self.spectrum,
                "lhs_values": [{"lambda": lam, "lhs": v} for lam, v in self.lhs_values],
                "max_lhs": self.max_lhs, "rhs": self.rhs, "holds": self.holds,
                "sigma_effective": self.sigma_effective, "notes": list(self.notes)}


def sigma_max_undirected(t: NetworkTopology) -> float:
    sums = [t.edges[(j, i)] + t.edges[(i, j)] for i, j in t.undirected_pairs]
    return max(sums, default=0.0)


def sigma_max_leader_follower(t: NetworkTopology) -> float:
    vals = [v for _, v in t.leader_edges]
    vals += [t.edges[(j, i)] + t.edges[(i, j)] for i, j in t.undirected_pairs]
    return max(vals, default=0.0)


def sigma_effective(t: NetworkTopology) -> float:
    """Mode-appropriate worst-case channel variance."""
    if t.mode == UNDIRECTED:
        return sigma_max_undirected(t)
    if t.mode == LEADER_FOLLOWER:
        return sigma_max_leader_follower(t)
    return max(t.input_variances, default=0.0)


def condition_lhs(alpha: float, lam: float, sigma_sq: float) -> float:
    return (alpha * lam - 1.0) ** 2 + alpha ** 2 * sigma_sq * lam


def condition_lhs_input(alpha: float, lam: float, rho_sq: float) -> float:
    """Input-channel left side, variance term quadratic in ``lam``."""
    return (alpha * lam - 1.0) ** 2 + alpha ** 2 * rho_sq * lam ** 2


def optimal_alpha(lambda2: float, lambdaN: float, sigma_max_sq: float) -> float:
    """Minimiser of the larger of the two extreme-eigenvalue condition values."""
    return 2.0 / (lambda2 + lambdaN + sigma_max_sq)


def optimal_alpha_input(lambda2: float, lambdaN: float, rho_sq: float) -> float:
    # Both extremes give alpha^2 (1 + r) lam^2 - 2 alpha lam + 1; they cross here,
    # between the two individual minimisers.
    return 2.0 / ((1.0 + rho_sq) * (lambda2 + lambdaN))


def noise_free_condition(lambda2: float, lambdaN: float, mahler: float) -> bool:
    ratio = lambda2 / lambdaN
    return (1.0 - ratio) / (1.0 + ratio) < 1.0 / mahler


def extreme_eigenvalues(t: NetworkTopology) -> tuple[float, float]:
    """Smallest and largest eigenvalue entering the condition (``L`` or ``L1``)."""
    graph.check_assumptions(t)
    if t.mode == LEADER_FOLLOWER:
        l1, _ = graph.follower_laplacian(t)
        eig = np.linalg.eigvalsh(l1)
        return float(eig[0]), float(eig[-1])
    spec = graph.laplacian_spectrum(t)
    return spec.lambda2, spec.lambdaN


def evaluate_condition(alpha: float, lambda2: float, lambdaN: float, sigma_sq: float,
                       mahler: float, mode: str = UNDIRECTED,
                       input_form: str = INPUT_FORM_PROOF) -> ConditionReport:
    """Condition at the two extreme eigenvalues; the left side is convex in lambda."""
    lams = (lambda2, lambdaN)
    rhs = 1.0 / mahler ** 2
    notes = ()
    spectrum = "L"
    if mode == INPUT_CHANNEL:
        printed = tuple(condition_lhs(alpha, lam, sigma_sq) for lam in lams)
        if input_form == INPUT_FORM_PRINTED:
            values = printed
        elif input_form == INPUT_FORM_PROOF:
            values = tuple(condition_lhs_input(alpha, lam, sigma_sq) for lam in lams)
        else:
            raise ValidationError(f"unknown input_form {input_form!r}")
        notes = (f"input-channel condition uses the {input_form} form; "
                 f"printed-form max lhs = {max(printed):.6g}",)
    else:
        values = tuple(condition_lhs(alpha, lam, sigma_sq) for lam in lams)
    if mode == LEADER_FOLLOWER:
        spectrum = "L1"
        notes = ("leader-follower condition evaluated at the extreme eigenvalues of the "
                 "follower block L1",)
    lhs = tuple(zip(lams, values))
    holds = max(values) < rhs
    return ConditionReport(mode, lhs, rhs, holds, sigma_sq, alpha, spectrum, notes)


def check_condition(m: DynamicsModel, t: NetworkTopology, alpha: float,
                    input_form: str = INPUT_FORM_PROOF) -> ConditionReport:
    if not is_stabilizable(m):
        raise NotStabilizable("Assumption 1: (A, B) is not stabilizable")
    lam_lo, lam_hi = extreme_eigenvalues(t)
    return evaluate_condition(alpha, lam_lo, lam_hi, sigma_effective(t), mahler_measure(m),
                              t.mode, input_form)


def default_alpha(t: NetworkTopology, input_form: str = INPUT_FORM_PROOF) -> float:
    lam_lo, lam_hi = extreme_eigenvalues(t)
    if t.mode == INPUT_CHANNEL and input_form == INPUT_FORM_PROOF:
        return optimal_alpha_input(lam_lo, lam_hi, sigma_effective(t))
    return optimal_alpha(lam_lo, lam_hi, sigma_effective(t))


def synthesize(m: DynamicsModel, t: NetworkTopology, Q=None, alpha_override: float | None = None,
               delta_sq_override: float | None = None, require_condition: bool = True,
               input_form: str = INPUT_FORM_PROOF) -> ProtocolGain:
    """Pick ``alpha`` and ``delta_sq``, solve the Riccati equation and form ``K``.

    ``delta_sq`` defaults to the midpoint of ``[max lhs, 1/M(A)^2)``. With
    ``require_condition=False`` a failing condition is tolerated (useful for
    verifying deliberately bad designs); if the interval is then empty,
    ``delta_sq`` falls back to half the admissible bound.
    """
    if not is_stabilizable(m):
        raise NotStabilizable("Assumption 1: (A, B) is not stabilizable")
    Q = np.eye(m.n) if Q is None else np.atleast_2d(np.asarray(Q, dtype=float))
    alpha = default_alpha(t, input_form) if alpha_override is None else float(alpha_override)
    report = check_condition(m, t, alpha, input_form)
    if require_condition and not report.holds:
        raise ConditionFails(
            f"consensus condition fails: max lhs {report.max_lhs:.6g} >= {report.rhs:.6g}", report)
    if delta_sq_override is not None:
        delta_sq = float(delta_sq_override)
    elif report.holds:
        delta_sq = 0.5 * (report.max_lhs + report.rhs)
    else:
        delta_sq = 0.5 * admissible_delta_bound(m)
    sol = solve_mare(m, Q, delta_sq)
    return ProtocolGain(alpha, riccati_gain(m, sol.P), delta_sq, sol.P, Q)
