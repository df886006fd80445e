"""Exception hierarchy shared across the package.

File-format problems, data-invariant violations, and numeric failures are
kept as distinct classes so the CLI can map them to stable exit codes.
"""


class GatehashError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(GatehashError):
    """A data structure violates one of its declared invariants."""


class NonFiniteError(ValidationError):
    """A value that must be finite is NaN or infinite."""


class DimensionMismatchError(ValidationError):
    """Shapes or dimensions of two related objects do not agree."""


class FormatError(GatehashError):
    """Base class for binary file-format errors."""


class BadMagicError(FormatError):
    """The file does not start with the expected magic bytes."""


class VersionError(FormatError):
    """The file declares an unsupported format version."""


class TruncatedFileError(FormatError):
    """The file ends before its declared payload is complete."""


class SchemaError(FormatError):
    """Header fields of the file are internally inconsistent."""


class EmptyRelevantSetError(ValidationError):
    """A query has no relevant items, so its Average Precision is undefined."""


class NumericError(GatehashError):
    """A numeric failure during training (non-finite loss or gradient)."""
