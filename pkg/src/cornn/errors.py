"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand dimensions are inconsistent."""


class NumericalError(ArithmeticError):
    """A state or gradient became non-finite.

    ``index`` is the failing time step (or optimizer step) when known, ``time``
    the continuous time stamp for ODE integrations.
    """

    def __init__(self, message, index=None, time=None):
        super().__init__(message)
        self.index = index
        self.time = time


class FormatError(ValueError):
    """A data file does not follow its binary or text format."""


class ConfigError(ValueError):
    """A training config is malformed or misses required fields."""
