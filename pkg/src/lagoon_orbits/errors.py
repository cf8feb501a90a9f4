"""Exception hierarchy.

Two families, mirrored by the CLI exit codes: :class:`ParameterError` for
inputs that fail validation (exit 1) and :class:`NumericalError` for
computations that could not be completed (exit 2).
"""

from __future__ import annotations


class ParameterError(ValueError):
    """Invalid model parameters or run configuration."""


class DomainError(ParameterError):
    """A state outside the closed positive quadrant was passed to the field."""


class NumericalError(RuntimeError):
    """Base class for numerical failures."""


class RootBracketError(NumericalError):
    """A sign-changing bracket could not be established."""


class NoIntersectionError(NumericalError):
    """The upper guard curve and the Q-nullcline do not cross exactly once."""

    def __init__(self, message: str, gap_samples=None):
        super().__init__(message)
        self.gap_samples = gap_samples


class RectConstructionError(NumericalError):
    """No admissible non-return rectangle at working precision."""


class StepUnderflowError(NumericalError):
    """Adaptive step size fell below what floating point can resolve."""


class LeftDomainError(NumericalError):
    """An integrated state left the positive quadrant."""


class NearZeroOnBoundaryError(NumericalError):
    """The field is (numerically) zero on the boundary; degree undefined."""


class RefinementExhaustedError(NumericalError):
    """Boundary refinement ran out of sample budget."""


class NoConvergenceError(NumericalError):
    """Newton shooting did not converge."""


class LeftRegionError(NumericalError):
    """A shooting iterate left the open positive quadrant."""


class SingularJacobianError(NumericalError):
    """I - DΩ is numerically singular (a Floquet multiplier equals one)."""


class ContinuationStallError(NumericalError):
    """Continuation in epsilon could not proceed past a stage."""

    def __init__(self, message: str, eps: float, last_eps: float | None = None):
        super().__init__(message)
        self.eps = eps
        self.last_eps = last_eps
