"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


class NotPsdError(ValidationError):
    """Raised when a matrix required to be PSD has a significantly negative eigenvalue."""


class NumericalError(RuntimeError):
    """Raised when an iterative routine fails to converge.

    Carries a ``diagnostics`` dict with the offending iterate so callers can
    inspect what went wrong.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class InfeasibleError(NumericalError):
    """Raised when a subproblem has an empty feasible set (usually a config bug)."""


class ConfigError(ValueError):
    """Raised for malformed experiment configuration files."""
