"""Matrix-free SURE evaluation for convex regularized regression."""

from .estimator import LassoSURE, SUREDenoiser
from .exceptions import (ConfigError, ConvergenceError, ConvergenceWarning, DimensionError,
                         NumericalError, TapeMismatchError)
from .harness import ExperimentConfig, monte_carlo_risk, run_single, run_sweep, write_csv
from .linop import (DenseOp, IdentityOp, LinearOp, SelectionOp, Shape, SumPairOp, apply,
                    apply_adjoint, op_norm, solve_spd)
from .prox import (L1, ElasticNet, Nuclear, ProxOracle, SeparablePair, Zero, prox_eval,
                   prox_vjp)
from .sure import (EstimatorSpec, SureReport, analytic_sure, card, divergence_oracle,
                   evaluate_sure, lambda_max, variance_bound)
from .trace import TraceConfig, VecMatOracle, estimate_trace, exact_trace, hutchinson, hutchpp
from .unroll import SolveConfig, Solution, Tape, solve, vjp_solution

__version__ = "0.1.0"

__all__ = [
    "LassoSURE", "SUREDenoiser",
    "ConfigError", "ConvergenceError", "ConvergenceWarning", "DimensionError",
    "NumericalError", "TapeMismatchError",
    "ExperimentConfig", "monte_carlo_risk", "run_single", "run_sweep", "write_csv",
    "DenseOp", "IdentityOp", "LinearOp", "SelectionOp", "Shape", "SumPairOp", "apply",
    "apply_adjoint", "op_norm", "solve_spd",
    "L1", "ElasticNet", "Nuclear", "ProxOracle", "SeparablePair", "Zero", "prox_eval",
    "prox_vjp",
    "EstimatorSpec", "SureReport", "analytic_sure", "card", "divergence_oracle",
    "evaluate_sure", "lambda_max", "variance_bound",
    "TraceConfig", "VecMatOracle", "estimate_trace", "exact_trace", "hutchinson", "hutchpp",
    "SolveConfig", "Solution", "Tape", "solve", "vjp_solution",
]
