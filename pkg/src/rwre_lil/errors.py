"""Exception types shared across the package."""


class RwreError(Exception):
    """Base class for every error raised by rwre_lil."""


class NotStochastic(RwreError, ValueError):
    pass


class EllipticityViolation(RwreError, ValueError):
    pass


class NotUnitVector(RwreError, ValueError):
    pass


class DomainError(RwreError, ValueError):
    pass


class NonpositiveVariance(RwreError, ValueError):
    pass


class DegenerateSample(RwreError, ValueError):
    pass


class IndexOutOfRange(RwreError, IndexError):
    pass


class Censored(RwreError):
    """No regeneration could be confirmed before the horizon.

    `candidate` is the unconfirmed candidate time, or None when no candidate
    was reached at all.
    """

    def __init__(self, message, candidate=None):
        self.candidate = candidate
        super().__init__(message)


class Undetermined(RwreError):
    """The requested quantity depends on the censored tail of the path."""


class InsufficientRegenerations(RwreError):
    pass


class ConfigError(RwreError, ValueError):
    pass


class ParseError(RwreError, ValueError):
    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
