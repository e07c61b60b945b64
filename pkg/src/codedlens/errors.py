"""Exception taxonomy shared across the package."""


class CodedLensError(Exception):
    """Base class for categorized package errors."""


class SizingError(CodedLensError, ValueError):
    """Extent/shape constraint violated (non-power-of-two, mismatch, ...)."""


class ConfigError(CodedLensError, ValueError):
    """Invalid argument or configuration value."""


class DegenerateMaskError(CodedLensError, ValueError):
    """Mask has no open entries, so no PSF can be derived."""


class DivergenceError(CodedLensError, RuntimeError):
    """Iterative solver diverged (objective blew up)."""


class ParseError(CodedLensError, ValueError):
    """Malformed input file; carries the byte offset where parsing failed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
