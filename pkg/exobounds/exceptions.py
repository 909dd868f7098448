class ExoboundsError(Exception):
    """Base class for all library errors"""


class DomainError(ExoboundsError, ValueError):
    """An argument lies outside the domain an operation is defined on"""


class OverlapError(DomainError):
    """Treatment share is 0 or 1, so one arm is never observed"""


class UnsupportedRepresentationError(ExoboundsError, TypeError):
    """The operation needs a cdf representation this object does not have"""


class DataError(ExoboundsError):
    """Input data could not be read or does not match its configuration"""


class OracleError(ExoboundsError, RuntimeError):
    """The discretized extremal problem could not be solved"""
