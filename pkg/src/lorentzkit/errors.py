"""Exception hierarchy shared across the toolkit.

The CLI maps these onto process exit codes: validation problems exit 1,
numeric/convergence failures exit 2, and I/O problems exit 3.
"""


class LorentzkitError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(LorentzkitError):
    """Invalid arguments, shapes, or configuration (exit code 1)."""


class DimensionError(ValidationError):
    """Operands with incompatible dimensions."""


class ConstraintError(ValidationError):
    """Input violates a manifold constraint beyond tolerance."""


class NumericError(LorentzkitError):
    """Numerical guard tripped or computation left the valid regime (exit code 2)."""


class ConvergenceError(NumericError):
    """Iterative solver did not converge; carries the last iterate."""

    def __init__(self, message, last_iterate=None, iterations=None, grad_norm=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.iterations = iterations
        self.grad_norm = grad_norm


class DataFormatError(LorentzkitError):
    """Unreadable or malformed on-disk data (exit code 3)."""
