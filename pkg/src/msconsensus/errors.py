"""Exception hierarchy shared across the package."""

from __future__ import annotations


class ConsensusError(Exception):
    """Base class for all package errors."""


class ValidationError(ConsensusError, ValueError):
    """Malformed input: bad dimensions, schema violations, invalid topology."""


class AssumptionViolated(ConsensusError):
    """A standing modelling assumption (connectivity, spanning tree, ...) fails."""


class DisconnectedGraph(AssumptionViolated):
    pass


class NotStabilizable(AssumptionViolated):
    pass


class ConditionFails(ConsensusError):
    """The sufficient consensus condition does not hold; carries the report."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class NumericalError(ConsensusError):
    pass


class NonConvergence(NumericalError):
    pass


class Diverged(NumericalError):
    pass


class SingularInnerTerm(NumericalError):
    pass


class DeltaOutOfRange(UserWarning):
    """Emitted when the Riccati noise level exceeds the guaranteed-solvable range."""
