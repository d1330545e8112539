"""Exception types shared across the package."""


class MetamorphError(Exception):
    pass


class InvalidInputError(MetamorphError, ValueError):
    """Bad shapes, non-finite values or out-of-range arguments."""


class BlowUpError(MetamorphError, FloatingPointError):
    """A time step produced non-finite values.

    ``step`` is the zero-based index of the step that failed.
    """

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite state after step {step}")


class ConfigError(MetamorphError):
    """Configuration failed validation. ``path`` points at the offending field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
