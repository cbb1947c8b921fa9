"""Modified algebraic Riccati equation

    P = A'PA - (1 - d) A'PB (B'PB)^{-1} B'PA + Q,    d = delta_sq,

solved by plain fixed-point iteration from ``P0 = Q``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dynamics import DynamicsModel, is_stabilizable, mahler_measure
from .errors import (DeltaOutOfRange, Diverged, NotStabilizable, SingularInnerTerm,
                     ValidationError)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000
DIVERGENCE_NORM = 1e12
INNER_TERM_FLOOR = 1e-14


@dataclass(frozen=True, eq=False)
class MareSolution:
    P: np.ndarray
    residual: float
    iterations: int


def admissible_delta_bound(m: DynamicsModel) -> float:
    """Supremum of ``delta_sq`` for which a unique positive-definite solution is guaranteed."""
    return 1.0 / mahler_measure(m) ** 2


def _validate_q(Q, n: int) -> np.ndarray:
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.shape != (n, n):
        raise ValidationError(f"Q must be {n}x{n}, got {Q.shape}")
    if np.max(np.abs(Q - Q.T)) > 1e-12 * max(1.0, np.max(np.abs(Q))):
        raise ValidationError("Q must be symmetric")
    if np.linalg.eigvalsh(Q)[0] <= 0:
        raise ValidationError("Q must be positive definite")
    return Q


def _riccati_map(A, B, Q, P, delta_sq):
    inner = float((B.T @ P @ B)[0, 0])
    if inner <= INNER_TERM_FLOOR:
        raise SingularInnerTerm(f"B'PB = {inner:.3g} is not invertible")
    bpa = B.T @ P @ A
    out = A.T @ P @ A - (1.0 - delta_sq) * (bpa.T @ bpa) / inner + Q
    return 0.5 * (out + out.T)


def mare_residual(m: DynamicsModel, Q, delta_sq: float, P) -> float:
    """Frobenius norm of the equation mismatch at ``P``."""
    P = np.asarray(P, dtype=float)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    return float(np.linalg.norm(P - _riccati_map(m.A, m.B, Q, P, delta_sq), "fro"))


def solve_mare(m: DynamicsModel, Q, delta_sq: float, tol: float = DEFAULT_TOL,
               max_iter: int = DEFAULT_MAX_ITER, P0=None) -> MareSolution:
    """Iterate the Riccati map until successive iterates agree.

    Convergence is declared when ``||P_{k+1} - P_k||_F <= tol * max(1, ||P_{k+1}||_F)``.
    Outside the guaranteed range a :class:`DeltaOutOfRange` warning is issued
    and the iteration still runs; growth past 1e12 or an exhausted budget
    raises :class:`Diverged`.
    """
    Q = _validate_q(Q, m.n)
    delta_sq = float(delta_sq)
    if not np.isfinite(delta_sq) or delta_sq < 0:
        raise ValidationError(f"delta_sq must be a nonnegative real, got {delta_sq}")
    if not is_stabilizable(m):
        raise NotStabilizable("Assumption 1: (A, B) is not stabilizable")
    bound = admissible_delta_bound(m)
    if delta_sq >= bound:
        warnings.warn(f"delta_sq={delta_sq} is outside the solvable range [0, {bound:.6g})",
                      DeltaOutOfRange, stacklevel=2)

    P = Q.copy() if P0 is None else np.asarray(P0, dtype=float).copy()
    for it in range(1, max_iter + 1):
        P_next = _riccati_map(m.A, m.B, Q, P, delta_sq)
        norm = np.linalg.norm(P_next, "fro")
        if not np.isfinite(norm) or norm > DIVERGENCE_NORM:
            raise Diverged(f"iterates exceeded {DIVERGENCE_NORM:g} after {it} iterations "
                           f"(delta_sq={delta_sq}, bound={bound:.6g})")
        change = np.linalg.norm(P_next - P, "fro")
        P = P_next
        if change <= tol * max(1.0, norm):
            residual = mare_residual(m, Q, delta_sq, P)
            return MareSolution(P, residual, it)
    raise Diverged(f"no convergence within {max_iter} iterations "
                   f"(delta_sq={delta_sq}, bound={bound:.6g})")


def riccati_gain(m: DynamicsModel, P) -> np.ndarray:
    """``K = -(B'PB)^{-1} B'PA`` as a 1 x n row."""
    P = np.asarray(P, dtype=float)
    inner = float((m.B.T @ P @ m.B)[0, 0])
    if inner <= INNER_TERM_FLOOR:
        raise SingularInnerTerm(f"B'PB = {inner:.3g} is not invertible")
    return -(m.B.T @ P @ m.A) / inner
