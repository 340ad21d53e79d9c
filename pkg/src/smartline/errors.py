"""Exception hierarchy shared by every smartline module.

Everything raised on purpose derives from SmartlineError so callers can
catch one base type at service boundaries and map it to a transport error.
"""

from __future__ import annotations


class SmartlineError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(SmartlineError):
    """Input violates a documented precondition (bad range, bad shape, bad value)."""


class UnknownMachineError(ValidationError):
    """A machine name is not in the canonical registry."""

    def __init__(self, machine: str):
        super().__init__(f"unknown machine: {machine!r}")
        self.machine = machine


class OrderingError(ValidationError):
    """A reading arrived with a tick not strictly greater than the last one."""


class SchemaMismatchError(SmartlineError):
    """Data does not match the feature schema a model was trained with."""


class IntegrityError(SmartlineError):
    """An event log violated its structural guarantees (sequence gap or reorder)."""


class ReplayError(SmartlineError):
    """An event log record could not be decoded during replay."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)
        self.line = line


class InsufficientDataError(SmartlineError):
    """Too few readings to compute the requested statistic or model."""


class TrainingError(SmartlineError):
    """A model could not be fitted from the data provided."""


class ExhaustedError(SmartlineError):
    """The simulator was stepped past its configured horizon."""


class ParseError(SmartlineError):
    """A persisted artifact (model file, config, log) could not be parsed."""


class VersionError(ParseError):
    """A persisted artifact declares a format version this build does not support."""


class RemoteAdapterError(SmartlineError):
    """The remote completion endpoint failed, timed out, or answered garbage."""


class StartupError(SmartlineError):
    """The service could not start (port busy, missing model, bad config)."""
