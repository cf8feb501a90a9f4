"""Periodic orbits of a seasonally forced lagoon plankton model.

The package locates 12-periodic solutions of a predator-prey system with
seasonal forcing through a regularized family, a non-return rectangle, a
Brouwer degree computation and Newton shooting with continuation in the
regularization parameter.
"""

from .degree import DegreeOptions, DegreeResult, displacement_degree, frozen_field_degree, winding_degree
from .errors import NumericalError, ParameterError
from .guards import (
    GuardConstants,
    Rect,
    build_rect,
    f_lower,
    f_upper,
    find_p,
    find_q,
    g_curve,
    hypothesis_threshold,
    log_g_curve,
    verify_signs,
)
from .model import ModelParams, PerturbedField, forcing_value, load_params
from .ode import IntegratorOptions, Trajectory, integrate, poincare, poincare_jacobian
from .periodic import (
    BoundReport,
    PeriodicOrbit,
    ShootingOptions,
    comparison_solution,
    continue_to_zero,
    eta_margins,
    shoot,
    verify_bounds,
)

__version__ = "0.1.0"

__all__ = [
    "BoundReport", "DegreeOptions", "DegreeResult", "GuardConstants", "IntegratorOptions", "ModelParams",
    "NumericalError", "ParameterError", "PeriodicOrbit", "PerturbedField", "Rect", "ShootingOptions",
    "Trajectory", "build_rect", "comparison_solution", "continue_to_zero", "displacement_degree", "eta_margins",
    "f_lower", "f_upper", "find_p", "find_q", "forcing_value", "frozen_field_degree", "g_curve",
    "hypothesis_threshold", "integrate", "load_params", "log_g_curve", "poincare", "poincare_jacobian",
    "shoot", "verify_bounds", "verify_signs", "winding_degree",
]
