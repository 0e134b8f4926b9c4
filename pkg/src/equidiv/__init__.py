"""Equilibrium dividend thresholds under a ruin-time penalty with distinct discount rates."""

from .model import CharRoots, ModelParams, ParameterError, characteristic_roots, validate
from .closed_form import DomainError
from .equilibrium import (
    ConstraintMatch,
    EquilibriumSolution,
    InfeasibleConstraintError,
    Regime,
    RootFindingError,
    classify_regime,
    match_constraint,
    solve_threshold,
)

__all__ = [
    "CharRoots",
    "ConstraintMatch",
    "DomainError",
    "EquilibriumSolution",
    "InfeasibleConstraintError",
    "ModelParams",
    "ParameterError",
    "Regime",
    "RootFindingError",
    "characteristic_roots",
    "classify_regime",
    "match_constraint",
    "solve_threshold",
    "validate",
]
__version__ = "0.1.0"
