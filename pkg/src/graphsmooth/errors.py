"""Exception hierarchy.

Validation problems subclass :class:`ValueError`; numerical breakdowns
subclass :class:`ArithmeticError`. The CLI maps the former to exit code 1
and the latter to exit code 2.
"""


class GraphSmoothError(Exception):
    """Base class for all package errors."""


class ValidationError(GraphSmoothError, ValueError):
    """Input failed a precondition."""


class InvalidGraphError(ValidationError):
    pass


class DimensionMismatchError(ValidationError):
    pass


class InsufficientDataError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class NumericalError(GraphSmoothError, ArithmeticError):
    """A computation failed to converge or produced non-finite values."""


class DegenerateSpectrumError(NumericalError):
    pass


class GenerationError(NumericalError):
    """Random graph generation could not satisfy its constraints."""
