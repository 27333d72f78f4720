"""Exception and warning types raised by steinrisk."""


class DimensionError(ValueError):
    """An array does not conform to the shape an operator expects."""


class ConfigError(ValueError):
    """Invalid configuration (bad keys, values or incompatible options)."""


class NumericalError(RuntimeError):
    """A numerical routine failed (SVD failure, non-finite values, ...)."""


class ConvergenceError(NumericalError):
    """An inner iterative solve did not reach its residual target.

    Attributes
    ----------
    residual : float
        Relative residual norm reached at the last iteration.
    """

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class TapeMismatchError(ValueError):
    """A tape was replayed against the wrong algorithm or problem."""


class ConvergenceWarning(UserWarning):
    """An iterative estimate stopped at ``max_iter`` before reaching ``tol``."""
