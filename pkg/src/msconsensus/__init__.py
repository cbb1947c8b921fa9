"""Mean-square consensus of discrete-time linear agents over channels with
multiplicative stochastic uncertainty: gain synthesis via a modified Riccati
equation, sufficient-condition checks, Monte Carlo simulation and an exact
second-moment oracle."""

from .dynamics import DynamicsModel
from .errors import (AssumptionViolated, ConditionFails, ConsensusError, DeltaOutOfRange,
                     Diverged, DisconnectedGraph, NonConvergence, NotStabilizable,
                     SingularInnerTerm, ValidationError)
from .graph import NetworkTopology
from .mare import MareSolution, solve_mare
from .noise import NoiseSpec
from .oracle import build_generators, exact_msd_trajectory, is_ms_stable, ms_spectral_radius
from .simulate import Scenario, TrajectoryEnsemble, run_ensemble
from .synthesis import ConditionReport, ProtocolGain, check_condition, synthesize

__version__ = "0.1.0"
