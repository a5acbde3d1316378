"""Exception types shared across the package."""


class TrajRssError(Exception):
    """Base class for all package errors."""


class DegenerateGeometryError(TrajRssError, ValueError):
    """A UAV-to-BS distance fell below the configured minimum distance."""


class SingularFisherError(TrajRssError, ArithmeticError):
    """The Fisher information matrix is numerically singular."""

    def __init__(self, message: str, condition_number: float):
        super().__init__(message)
        self.condition_number = condition_number


class ScenarioSchemaError(TrajRssError, ValueError):
    """A scenario file or override failed validation.

    ``field`` names the offending key so callers can report it.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
