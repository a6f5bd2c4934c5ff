"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit 1, data
problems exit 2, anything else exits 3.
"""

from __future__ import annotations


class CompatSweepError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CompatSweepError):
    """Invalid configuration value or unusable combination of options."""


class DataError(CompatSweepError):
    """Dataset-level problem: empty input, no eligible users, bad shapes."""


class SchemaError(DataError):
    """Input file header does not match the declared schema."""


class IngestionError(DataError):
    """A cell could not be parsed; carries row/column context."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        if row is not None or column is not None:
            where = ", ".join(
                part
                for part in (
                    f"row {row}" if row is not None else None,
                    f"column {column!r}" if column is not None else None,
                )
                if part
            )
            message = f"{message} ({where})"
        super().__init__(message)
        self.row = row
        self.column = column


class LabelError(IngestionError):
    """Label value is not binary."""
