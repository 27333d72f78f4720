import numbers

import numpy as np
from sklearn.utils.validation import check_array, column_or_1d

from .exceptions import ConfigError, DimensionError
from .linop import LinearOp
from .prox import ProxOracle


def check_observation(y, d=None):
    """Return ``y`` as a finite float vector, checking its length against ``d``."""
    y = np.asarray(y)
    if y.ndim == 2 and 1 not in y.shape:
        y = y.ravel()
    y = column_or_1d(check_array(y, ensure_2d=False, dtype=float), warn=False)
    if d is not None and y.shape[0] != d:
        raise DimensionError(f"observation has length {y.shape[0]}, expected {d}")
    return y


def check_design(X, y):
    X = check_array(X, dtype=float)
    y = check_observation(y, X.shape[0])
    return X, y


def check_positive(value, name, allow_auto=False):
    if allow_auto and value == "auto":
        return value
    if not isinstance(value, numbers.Real) or not value > 0:
        raise ConfigError(f"{name} must be a positive number, got {value!r}")
    return float(value)


def check_problem(operator, regularizer):
    if not isinstance(operator, LinearOp):
        raise ConfigError(f"operator must be a LinearOp, got {type(operator).__name__}")
    if not isinstance(regularizer, ProxOracle):
        raise ConfigError(f"regularizer must be a ProxOracle, got {type(regularizer).__name__}")
