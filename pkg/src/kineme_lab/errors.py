"""Exception hierarchy shared by all kineme-lab modules."""

from __future__ import annotations


class KinemeLabError(Exception):
    """Base class for all library errors."""


class SchemaError(KinemeLabError):
    """A required column or field is missing from an input file."""


class ParseError(KinemeLabError):
    """A cell or record could not be parsed. Carries the offending row."""

    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"{message} (row {row})"
        super().__init__(message)
        self.row = row


class UnusableStreamError(KinemeLabError):
    """Every frame of a stream failed validation (e.g. all tracking lost)."""


class UnsupportedFormatError(KinemeLabError):
    """Container or encoding the reader does not handle."""


class TooShortError(KinemeLabError):
    """Stream shorter than a single analysis window or frame."""


class ShapeError(KinemeLabError):
    """Array dimensions inconsistent with the operation's contract."""


class ConfigurationError(KinemeLabError):
    """Parameter combination outside the valid range."""


class InsufficientDataError(KinemeLabError):
    """Not enough samples to run the requested estimation."""


class TrainingDivergedError(KinemeLabError):
    """Loss became non-finite during optimization."""

    def __init__(self, message: str, lr: float, batch_index: int):
        super().__init__(f"{message} (lr={lr}, batch={batch_index})")
        self.lr = lr
        self.batch_index = batch_index
