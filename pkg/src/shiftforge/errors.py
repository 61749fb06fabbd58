"""Exception hierarchy shared across the package."""

from __future__ import annotations


class ShiftForgeError(Exception):
    """Base class for all errors raised by this package."""


class ManifestParseError(ShiftForgeError):
    """A manifest line is not valid JSON."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class ManifestSchemaError(ShiftForgeError):
    """A record is missing a field or carries an unknown enum value."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class ManifestIntegrityError(ShiftForgeError):
    """Cross-record invariant broken (duplicate id, inconsistent grouping)."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class SplitError(ShiftForgeError):
    """Split construction failed."""


class TooFewGroupsError(SplitError):
    """Fewer distinct grouping units than requested folds."""


class MissingMetadataError(SplitError):
    """A record lacks the grouping field the strategy needs."""


class TrainingError(ShiftForgeError):
    """Training could not proceed."""


class SingleClassError(TrainingError):
    """A fold's training set contains only one class."""


class ReviewError(ShiftForgeError):
    """A review queue or decision references something that does not exist."""
