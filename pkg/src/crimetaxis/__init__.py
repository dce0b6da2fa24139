"""Finite-volume simulator and bound checker for an urban-crime chemotaxis model."""
from __future__ import annotations

from .errors import (ConfigError, CrimeTaxisError, DegeneracyError, DomainError, NumericalFailure,
                     SingularityError, StepFailure, UsageError)
from .grid import Grid
from .model import BoundConstants, Parameters, bound_constants, homogeneous_fixed_point
from .stepper import State, StepControl, Thresholds, run, step_imex

__version__ = "0.1.0"

__all__ = [
    "BoundConstants", "ConfigError", "CrimeTaxisError", "DegeneracyError", "DomainError", "Grid",
    "NumericalFailure", "Parameters", "SingularityError", "State", "StepControl", "StepFailure",
    "Thresholds", "UsageError", "bound_constants", "homogeneous_fixed_point", "run", "step_imex",
]
