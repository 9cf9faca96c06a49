"""Shared exception types."""


class DivergenceError(RuntimeError):
    """A trajectory or iterate sequence left the finite floating-point range."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class ConfigError(ValueError):
    """An experiment configuration failed validation; maps to exit code 2."""
