"""Exception types shared across the package."""


class ConesphereError(Exception):
    """Base class for all package errors."""


class ValidationError(ConesphereError, ValueError):
    """Invalid orders, configurations or run parameters."""


class DomainError(ConesphereError, ValueError):
    """Evaluation requested at (or numerically on top of) a pole."""


class PathError(ConesphereError, RuntimeError):
    """Path planning or transport failure (clearance violation, step underflow)."""


class SeriesError(ConesphereError, RuntimeError):
    """Local series failed to converge at the requested radius."""


class UnsupportedOrderError(ConesphereError, ValueError):
    """Orders with resonant local exponents (integer exponent difference)."""


class SolverError(ConesphereError, RuntimeError):
    """Accessory solver did not converge."""


class WrongBranchError(SolverError):
    """Solver converged, but the invariant form is definite (spherical branch)."""


class ReducibleError(ConesphereError, RuntimeError):
    """Invariant-form solution space is not one-dimensional."""


class BranchError(ConesphereError, RuntimeError):
    """Developing map left the unit disk: wrong unitarization sheet."""


class BudgetError(ConesphereError, RuntimeError):
    """Numerical budget exhausted before reaching the requested accuracy."""


class ExtrapolationError(ConesphereError, RuntimeError):
    """Limit extrapolation failed to stabilize."""
