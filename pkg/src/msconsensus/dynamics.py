"""Single-agent linear model ``x(k+1) = A x(k) + B u(k)`` with scalar input."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonConvergence, ValidationError

UNIT_CIRCLE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DynamicsModel:
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.ndim == 0:
            A = A.reshape(1, 1)
        B = np.array(self.B, dtype=float)
        if B.ndim == 0:
            B = B.reshape(1, 1)
        elif B.ndim == 1:
            B = B.reshape(-1, 1)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
            raise ValidationError(f"A must be square, got shape {A.shape}")
        if B.shape != (A.shape[0], 1):
            raise ValidationError(f"B must be a column of length {A.shape[0]}, got shape {B.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise ValidationError("A and B must have finite entries")
        A.flags.writeable = False
        B.flags.writeable = False
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def __eq__(self, other):
        if not isinstance(other, DynamicsModel):
            return NotImplemented
        return np.array_equal(self.A, other.A) and np.array_equal(self.B, other.B)


def step(m: DynamicsModel, x, u: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (m.n,):
        raise ValidationError(f"state must have shape ({m.n},), got {x.shape}")
    return m.A @ x + m.B[:, 0] * float(u)


def eigenvalues(m: DynamicsModel) -> np.ndarray:
    try:
        return np.linalg.eigvals(m.A)
    except np.linalg.LinAlgError as exc:
        raise NonConvergence(f"eigenvalue iteration failed: {exc}") from exc


def eigenvalue_moduli(m: DynamicsModel) -> list[float]:
    return sorted(float(abs(v)) for v in eigenvalues(m))


def mahler_measure(m: DynamicsModel) -> float:
    """Product of ``max(1, |lambda|)``; moduli within 1e-9 of 1 count as exactly 1."""
    out = 1.0
    for r in eigenvalue_moduli(m):
        if r > 1.0 + UNIT_CIRCLE_TOL:
            out *= r
    return out


def is_stabilizable(m: DynamicsModel) -> bool:
    """PBH test over every eigenvalue on or outside the unit circle."""
    n = m.n
    scale = max(np.linalg.norm(m.A, 2), 1.0)
    for lam in eigenvalues(m):
        if abs(lam) < 1.0 - UNIT_CIRCLE_TOL:
            continue
        pencil = np.hstack([m.A - lam * np.eye(n), m.B])
        sv = np.linalg.svd(pencil, compute_uv=False)
        if np.sum(sv > 1e-9 * scale) < n:
            return False
    return True
