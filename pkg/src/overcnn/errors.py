"""Exception types shared across the package."""


class DomainError(ValueError):
    """A numeric argument violates its documented domain."""


class DimensionError(ValueError):
    """Image dimensions do not match the network topology."""


class TopologyError(ValueError):
    """A topology is structurally unusable for the requested operation."""


class EmptyDatasetError(ValueError):
    """An operation that averages over samples received zero samples."""


class NonFiniteError(ArithmeticError):
    """A computed quantity left the finite float64 range.

    Carries the gradient-descent step index when raised inside training.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class SingularityError(ArithmeticError):
    """A linear solve met a singular system (not expected for ridge systems)."""


class ConfigError(ValueError):
    """A CLI configuration document is missing or malformed; names the field."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
