"""Exception taxonomy shared across the package.

CLI exit codes: UsageError -> 1, data errors (ParseError, LogValidationError,
SchemaError, DegenerateDataError) -> 2, InvariantError -> 3.
"""

from __future__ import annotations


class AnnoAuditError(Exception):
    """Base class for all package errors."""


class UsageError(AnnoAuditError):
    """Bad command-line arguments or configuration."""


class ParseError(AnnoAuditError):
    """A file could not be parsed; message carries file name and line number."""


class LogValidationError(AnnoAuditError):
    """An event or log violates a stated invariant; carries the offending task_id."""

    def __init__(self, message: str, task_id: str | None = None):
        super().__init__(message)
        self.task_id = task_id


class SchemaError(AnnoAuditError):
    """Feature matrix, preprocessor, or model schemas do not line up."""


class DegenerateDataError(AnnoAuditError):
    """Input lacks the variation an operation needs (e.g. a single-class label set)."""


class CalibrationError(AnnoAuditError):
    """Generator intercept calibration failed within its iteration budget."""


class InvariantError(AnnoAuditError):
    """An internal invariant failed; indicates a bug, not bad input."""
