"""Exception hierarchy.  Numerical failures map to CLI exit code 3."""


class SolitonQMError(Exception):
    """Base class for all package errors."""


class NumericalError(SolitonQMError):
    """A computation could not be carried out numerically."""


class InvalidFrequencyError(SolitonQMError, ValueError):
    """Frequency outside the existence window ``0 < omega < c / ell0``."""


class BracketError(SolitonQMError, ValueError):
    """Shooting bracket endpoints do not straddle the target solution."""


class ConvergenceError(NumericalError):
    """Iteration limit reached before the tolerance was met."""


class IntegrationError(NumericalError):
    """The ODE integrator failed (e.g. step size underflow)."""


class NormalizationError(SolitonQMError, ValueError):
    """Profile is zero or not normalized where normalization is required."""


class RejectionOverflowError(NumericalError):
    """Rejection sampling could not place disjoint solitons in the box."""


class GridMismatchError(SolitonQMError, ValueError):
    """Two sampled objects do not share the same grid."""


class CostGuardError(SolitonQMError, MemoryError):
    """A request exceeds the configured memory or quadratic-cost limit."""
