"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ValidationError -> 1, CodecError and
OS-level errors -> 2.
"""


class ParcelTraceError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(ParcelTraceError):
    """Invalid arguments, shapes, or configuration."""


class CodecError(ParcelTraceError):
    """Malformed or unsupported file content."""


class UnsupportedImageError(CodecError):
    """PNG exists but its mode/bit depth is not supported."""


class CorruptImageError(CodecError):
    """PNG stream could not be decoded."""


class CbtError(CodecError):
    """CBT tensor file violates the format contract."""
