"""Exception types shared across the package.

The CLI maps these onto exit codes (config 2, numeric 3, I/O 4), so new
error conditions should reuse one of the classes below instead of raising
bare ValueError/RuntimeError.
"""


class ConfigError(ValueError):
    """Invalid configuration value (bad dimensions, CFL violation, ...)."""


class ShapeError(ValueError):
    """Tensor or frame shapes do not satisfy an operation's contract."""


class NumericError(RuntimeError):
    """A numeric operation produced NaN or Inf."""


class TapeError(RuntimeError):
    """Misuse of the gradient tape (e.g. backward on an unrecorded value)."""
