"""Exception hierarchy shared across the toolkit."""


class DrivemcError(Exception):
    """Base class for all toolkit errors."""


class DomainError(DrivemcError, ValueError):
    """A value lies outside its documented domain."""


class ValidationError(DrivemcError, ValueError):
    """A record failed schema or invariant validation.

    Carries the offending field path when one is known, so callers can
    surface field-level errors (per-line ingestion reports, HTTP 422 bodies).
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class InconsistencyError(DrivemcError):
    """Printed figures admit no exact integer reconstruction."""


class AmbiguityError(DrivemcError):
    """More than one reconstruction matches.

    The candidate list is attached so callers can report all of them.
    """

    def __init__(self, message: str, candidates=()):
        super().__init__(message)
        self.candidates = tuple(candidates)


class UndefinedRowError(DrivemcError):
    """A transition row with no observations was reached."""


class InapplicableTestError(DrivemcError):
    """The requested statistical test degenerates on this input."""


class PrismParseError(DrivemcError):
    """Model text could not be re-parsed."""
