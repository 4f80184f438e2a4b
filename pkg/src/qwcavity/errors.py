"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, solver failures -> 3,
validation/grid failures -> 4.
"""


class ConfigError(ValueError):
    """Malformed or physically invalid configuration input."""


class ValidationError(ValueError):
    """A contract precondition or invariant does not hold."""


class GridError(ValidationError):
    """Time/frequency grid is unusable (mismatch, aliasing, too coarse)."""


class SolverError(RuntimeError):
    """Numerical integration failed (step-size underflow, positivity loss)."""


class TruncationError(SolverError):
    """Hilbert-space truncation is inadequate for the requested drive."""
