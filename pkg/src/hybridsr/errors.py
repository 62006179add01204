"""Exception types shared across the package.

The CLI maps these onto process exit codes: UsageError/ConfigError -> 1,
NumericError -> 2, I/O and parse failures -> 3.
"""


class ConfigError(ValueError):
    """A configuration value is out of range or inconsistent."""


class UsageError(ValueError):
    """An API or CLI call violates its contract (bad flags, bad call order)."""


class DimensionError(ValueError):
    """Tensor shapes do not satisfy an operation's requirements."""


class NumericError(ArithmeticError):
    """A numeric invariant failed: non-finite values, failed gradient check."""


class PpmError(ValueError):
    """Malformed PPM stream; carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset
