"""Exception hierarchy shared by every module of the package."""

import numpy as np


class DDKFError(Exception):
    """Base class for all errors raised by ``ddkalman``."""


class DimensionError(DDKFError, ValueError):
    """Operand shapes or index sets are incompatible."""


class ShapeError(DimensionError):
    """A matrix violates a structural requirement (square, symmetric, banded)."""


class NotPositiveDefiniteError(DDKFError, np.linalg.LinAlgError):
    """A factorization met a non-positive pivot."""


class ConfigurationError(DDKFError, ValueError):
    """A decomposition or experiment configuration is inconsistent."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class StateError(DDKFError, ValueError):
    """A physical state is outside the admissible set (e.g. non-positive height)."""


class InstabilityError(DDKFError, FloatingPointError):
    """A time integration produced non-finite values."""
