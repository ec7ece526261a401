"""Exception hierarchy.

Everything raised on numerical grounds derives from :class:`NumericalError`
so the command line can map it to a single exit code.
"""


class NumericalError(Exception):
    """Base class for failures of a numerical precondition."""


class PositivityViolation(NumericalError):
    """psi'' <= 0 somewhere: the potential leaves the space of positive metrics."""


class ConvexityViolation(NumericalError):
    """A Legendre root-find could not be bracketed."""


class NonPositiveEntry(NumericalError):
    """A Gram diagonal entry came out <= 0."""


class NotPositiveDefinite(NumericalError):
    pass


class EigenFailure(NumericalError):
    pass


class ConditioningError(NumericalError):
    """Scaled Gram condition number above the refusal threshold."""


class DegenerateMetric(NumericalError):
    pass


class NotSummable(NumericalError):
    pass


class GridMismatch(NumericalError):
    pass


class OutOfDomain(NumericalError):
    pass


class ConfigError(ValueError):
    """Invalid experiment configuration (exit code 1)."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
