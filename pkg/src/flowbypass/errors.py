"""Exception types raised across the package."""


class ConfigError(ValueError):
    """Invalid configuration value or document."""


class FieldError(ValueError):
    """Bad input to a velocity field (unknown condition, non-finite state)."""


class NumericalError(FloatingPointError):
    """A trajectory or accumulator produced non-finite values.

    ``step`` is the grid index at which the failure was detected, when known.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class EditError(RuntimeError):
    """An edit failed; ``stage`` names the pipeline stage."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage} failed: {cause}")
        self.stage = stage
        self.cause = cause
