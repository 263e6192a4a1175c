"""Exception hierarchy shared by every hivetrack module."""


class HiveTrackError(Exception):
    """Base class for all errors raised by hivetrack."""


class InvalidInputError(HiveTrackError, ValueError):
    """An argument violates the documented invariants of an operation."""


class FormatError(InvalidInputError):
    """A file or stream could not be parsed.

    ``line`` is the 1-based line number of the offending record, when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        self.reason = message
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UndefinedMetricError(HiveTrackError, ZeroDivisionError):
    """A metric has a zero denominator.  ``metric`` names which one."""

    def __init__(self, metric, message=None):
        self.metric = metric
        super().__init__(message or f"{metric} is undefined (zero denominator)")


class AssociationError(HiveTrackError, KeyError):
    """A secondary detection references a snapshot that does not exist."""

    def __str__(self):
        return str(self.args[0]) if self.args else "association error"


class TelemetryError(HiveTrackError):
    """Base class for telemetry store failures."""


class AuthorizationError(TelemetryError):
    pass


class OrderingError(TelemetryError):
    """Sample timestamp is not strictly after the last stored one."""


class SampleValidationError(TelemetryError, ValueError):
    def __init__(self, fields):
        # fields: mapping of field name -> problem description
        self.fields = dict(fields)
        detail = ", ".join(f"{k}: {v}" for k, v in self.fields.items())
        super().__init__(f"invalid sample fields: {detail}")


class HiveNotFoundError(TelemetryError, LookupError):
    pass
