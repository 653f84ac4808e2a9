"""Exception hierarchy for the fitting pipeline."""
import numpy as np


class NetcoxError(Exception):
    """Base class for all domain errors raised by the engine."""


class ConfigError(NetcoxError):
    """Invalid run configuration; the message names the offending key path."""


class DegenerateKernelError(NetcoxError, ValueError):
    pass


class IntensityOverflowError(NetcoxError, FloatingPointError):
    """A linear predictor θᵀX exceeded the overflow guard."""


class NoExposureError(NetcoxError):
    """Every pair is censored (or has zero kernel weight) throughout the window."""


class InsufficientHistoryError(NetcoxError):
    def __init__(self, message, first_usable=None):
        super().__init__(message)
        self.first_usable = first_usable


class _DirectionalError(NetcoxError):
    def __init__(self, message, direction):
        direction = np.asarray(direction, dtype=float)
        super().__init__(f"{message} (direction {np.array2string(direction, precision=4)})")
        self.direction = direction


class UnboundedMLEError(_DirectionalError):
    """The local likelihood keeps increasing along `direction`; no finite maximiser."""


class SingularCovarianceError(_DirectionalError):
    """The curvature matrix is singular along `direction` (collinear covariates)."""


class ConvergenceWarning(RuntimeWarning):
    pass
