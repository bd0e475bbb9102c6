"""Exception hierarchy.

Each family maps onto one CLI exit code (see :mod:`tvpfx.cli`).
"""


class TvpfxError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(TvpfxError):
    exit_code = 2


class DataError(TvpfxError):
    exit_code = 3


class SchemaError(DataError):
    """A required column or file is missing."""


class AlignmentError(DataError):
    """Series do not share a gap-free quarterly axis."""

    def __init__(self, message, country=None, quarter=None):
        super().__init__(message)
        self.country = country
        self.quarter = quarter


class InsufficientDataError(DataError):
    pass


class CapabilityError(DataError):
    """A requested variant needs a series that a country does not have."""

    def __init__(self, message, country=None):
        super().__init__(message)
        self.country = country


class NumericalError(TvpfxError):
    exit_code = 4

    def __init__(self, message, t=None, iteration=None):
        super().__init__(message)
        self.t = t
        self.iteration = iteration


class SingularDesignError(NumericalError):
    pass


class DegenerateTrainingError(NumericalError):
    pass


class UndefinedDiagnosticError(NumericalError):
    pass


class AggregationError(TvpfxError):
    pass
