"""Synthetic instances, Monte Carlo risk, hyperparameter sweeps and CSV output."""

from __future__ import annotations

import copy
import csv
import json
import time
import zlib
from dataclasses import dataclass, fields

import numpy as np

from .exceptions import ConfigError
from .linop import DenseOp, SelectionOp, SumPairOp
from .prox import L1, Nuclear, SeparablePair
from .sure import EstimatorSpec, evaluate_sure, lambda_max
from .trace import TraceConfig
from .unroll import SolveConfig, solve

PROBLEMS = ("lasso", "matrix_completion", "robust_pca")

CSV_COLUMNS = (
    "problem", "d", "p", "lambda", "gamma", "sure", "sure_per_coord", "divergence",
    "residual_sq", "mc_risk", "mc_stderr", "iterations", "converged", "wall_time_s",
    "data_seed", "noise_seed", "trace_seed",
)

DEFAULTS = {
    "lasso": {"dims": [250, 500], "lambda_frac": 0.1, "algorithm": "fista"},
    "matrix_completion": {"dims": [40, 20], "lambda_frac": 0.25, "algorithm": "fista"},
    "robust_pca": {"dims": [40], "lambda_frac": 0.16, "gamma_frac": 0.057, "algorithm": "admm"},
}


def make_rng(purpose, seed):
    """Independent generator per ``(purpose, seed)`` pair."""
    return np.random.default_rng([int(seed), zlib.crc32(purpose.encode())])


def derive_seed(seed, index):
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


# -- instance generators ------------------------------------------------------

def gen_lasso(d, p, seed, sigma2=2.0):
    """Gaussian design with ``d // 20`` equal nonzero coefficients.

    The coefficient value is set so that ``||mu||^2 / (||mu||^2 + d sigma^2) = 0.8``.
    Returns ``(X, beta, mu, sigma2)``.
    """
    if d < 20:
        raise ConfigError("gen_lasso needs d >= 20")
    rng = make_rng("lasso", seed)
    X = rng.standard_normal((d, p))
    support = rng.choice(p, size=d // 20, replace=False)
    direction = X[:, support].sum(axis=1)
    # ||mu||^2 = 4 d sigma^2 gives the 0.8 signal fraction
    value = np.sqrt(4.0 * d * sigma2) / np.linalg.norm(direction)
    beta = np.zeros(p)
    beta[support] = value
    return X, beta, X @ beta, sigma2


def _low_rank(rng, m, n, rank):
    W = rng.uniform(0.0, 1.0, size=(m, n))
    U, _, Vt = np.linalg.svd(W, full_matrices=False)
    s = np.sort(rng.uniform(0.0, n, size=rank))[::-1]
    return (U[:, :rank] * s) @ Vt[:rank]


def gen_matrix_completion(m, n, seed, sigma2=2.0):
    """Rank ``max(5, floor(0.02 n))`` matrix with ``floor(0.1 m n)`` observed entries.

    Returns ``(A, beta, mu, sigma2)`` with ``A`` a selection operator.
    """
    if m < n:
        raise ConfigError("gen_matrix_completion needs m >= n")
    rng = make_rng("matrix_completion", seed)
    rank = max(5, n // 50)
    beta = _low_rank(rng, m, n, rank)
    d = m * n // 10
    observed = np.sort(rng.choice(m * n, size=d, replace=False))
    A = SelectionOp((m, n), observed)
    return A, beta, A.matvec(beta.ravel()), sigma2


def gen_robust_pca(n, seed, sigma2=2.0):
    """Low-rank ``L`` plus sparse ``S`` (values uniform on [0, 100]), square ``n x n``.

    Returns ``(A, (L, S), mu, sigma2)`` with ``A(L, S) = L + S``.
    """
    rng = make_rng("robust_pca", seed)
    rank = max(5, n // 50)
    L = _low_rank(rng, n, n, rank)
    k = max(10, n * n // 10_000)
    S = np.zeros(n * n)
    S[rng.choice(n * n, size=k, replace=False)] = rng.uniform(0.0, 100.0, size=k)
    S = S.reshape(n, n)
    A = SumPairOp((n, n))
    return A, (L, S), (L + S).ravel(), sigma2


# -- configuration --------------------------------------------------------------

@dataclass
class ExperimentConfig:
    problem: str = "lasso"
    dims: tuple = (250, 500)
    sigma2: float = 2.0
    lambda_frac: float = 0.1
    gamma_frac: float | None = None
    solver: SolveConfig = SolveConfig(algorithm="fista", tol=1e-10, max_iter=10000)
    trace: TraceConfig = TraceConfig()
    data_seed: int = 0
    noise_seed: int = 1
    mc_samples: int = 0
    sweep_points: int = 10
    sweep_lo_frac: float = 0.01
    sweep_hi_frac: float = 2.0

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        known = {"problem", "dims", "sigma2", "reg", "solver", "trace", "seeds",
                 "mc_samples", "sweep"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        problem = doc.get("problem", "lasso")
        if problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {problem!r}; expected one of {PROBLEMS}")
        base = DEFAULTS[problem]
        reg = _section(doc, "reg", {"lambda_frac", "gamma_frac"})
        solver = _section(doc, "solver", {"algorithm", "eta", "tol", "max_iter", "cg_tol"})
        trace = _section(doc, "trace", {"queries", "estimator", "seed"})
        seeds = _section(doc, "seeds", {"data", "noise"})
        sweep = _section(doc, "sweep", {"points", "lo_frac", "hi_frac"})
        try:
            dims = tuple(int(n) for n in doc.get("dims", base["dims"]))
            solver_cfg = SolveConfig(
                algorithm=solver.get("algorithm", base["algorithm"]),
                eta=solver.get("eta", "auto"),
                tol=float(solver.get("tol", 1e-10)),
                max_iter=int(solver.get("max_iter", 10000)),
                cg_tol=float(solver.get("cg_tol", 1e-10)),
            )
            trace_cfg = TraceConfig(
                queries=int(trace.get("queries", 102)),
                estimator=trace.get("estimator", "auto"),
                seed=int(trace.get("seed", 0)),
            )
            cfg = cls(
                problem=problem,
                dims=dims,
                sigma2=float(doc.get("sigma2", 2.0)),
                lambda_frac=float(reg.get("lambda_frac", base["lambda_frac"])),
                gamma_frac=(None if problem != "robust_pca"
                            else float(reg.get("gamma_frac", base["gamma_frac"]))),
                solver=solver_cfg,
                trace=trace_cfg,
                data_seed=int(seeds.get("data", 0)),
                noise_seed=int(seeds.get("noise", 1)),
                mc_samples=int(doc.get("mc_samples", 0)),
                sweep_points=int(sweep.get("points", 10)),
                sweep_lo_frac=float(sweep.get("lo_frac", 0.01)),
                sweep_hi_frac=float(sweep.get("hi_frac", 2.0)),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid config value: {exc}") from exc
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc)

    def validate(self):
        if self.sigma2 <= 0:
            raise ConfigError("sigma2 must be positive")
        if self.lambda_frac <= 0 or (self.gamma_frac is not None and self.gamma_frac <= 0):
            raise ConfigError("regularization fractions must be positive")
        expected = {"lasso": 2, "matrix_completion": 2, "robust_pca": (1, 2)}[self.problem]
        if len(self.dims) not in np.atleast_1d(expected):
            raise ConfigError(f"dims {self.dims} invalid for {self.problem}")
        if self.problem == "robust_pca" and len(self.dims) == 2 and self.dims[0] != self.dims[1]:
            raise ConfigError("robust_pca instances are square")
        if self.mc_samples < 0 or self.mc_samples == 1:
            raise ConfigError("mc_samples must be 0 or >= 2")
        if self.sweep_points < 2 or not 0 < self.sweep_lo_frac < self.sweep_hi_frac:
            raise ConfigError("sweep needs >= 2 points and 0 < lo_frac < hi_frac")

    def to_dict(self):
        doc = {
            "problem": self.problem,
            "dims": list(self.dims),
            "sigma2": self.sigma2,
            "reg": {"lambda_frac": self.lambda_frac},
            "solver": {
                "algorithm": self.solver.algorithm, "eta": self.solver.eta,
                "tol": self.solver.tol, "max_iter": self.solver.max_iter,
                "cg_tol": self.solver.cg_tol,
            },
            "trace": {"queries": self.trace.queries, "estimator": self.trace.estimator,
                      "seed": self.trace.seed},
            "seeds": {"data": self.data_seed, "noise": self.noise_seed},
            "mc_samples": self.mc_samples,
            "sweep": {"points": self.sweep_points, "lo_frac": self.sweep_lo_frac,
                      "hi_frac": self.sweep_hi_frac},
        }
        if self.gamma_frac is not None:
            doc["reg"]["gamma_frac"] = self.gamma_frac
        return doc


def _section(doc, key, allowed):
    sec = doc.get(key, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {key!r} must be an object")
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {key!r}: {sorted(unknown)}")
    return sec


def override(doc, assignments):
    """Apply ``"a.b=value"`` overrides to a config document (values parsed as JSON)."""
    doc = copy.deepcopy(doc)
    for item in assignments:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        path, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = doc
        keys = path.split(".")
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override {path!r}")
        node[keys[-1]] = value
    return doc


# -- problems -------------------------------------------------------------------

@dataclass
class Problem:
    kind: str
    A: object
    beta_true: object
    mu: np.ndarray
    sigma2: float


def build_problem(cfg):
    if cfg.problem == "lasso":
        d, p = cfg.dims
        X, beta, mu, s2 = gen_lasso(d, p, cfg.data_seed, cfg.sigma2)
        return Problem("lasso", DenseOp(X), beta, mu, s2)
    if cfg.problem == "matrix_completion":
        m, n = cfg.dims
        A, beta, mu, s2 = gen_matrix_completion(m, n, cfg.data_seed, cfg.sigma2)
        return Problem("matrix_completion", A, beta, mu, s2)
    A, beta, mu, s2 = gen_robust_pca(cfg.dims[0], cfg.data_seed, cfg.sigma2)
    return Problem("robust_pca", A, beta, mu, s2)


def draw_y(problem, rng):
    return problem.mu + np.sqrt(problem.sigma2) * rng.standard_normal(problem.mu.shape)


def penalty_scale(problem, y):
    """``lambda_max`` (and ``gamma_max`` for robust PCA) at the drawn ``y``."""
    if problem.kind == "lasso":
        return lambda_max(problem.A, y, "l1"), None
    if problem.kind == "matrix_completion":
        return lambda_max(problem.A, y, "nuclear"), None
    return lambda_max(problem.A, y, "robust_pca")


def make_regularizer(problem, lam, gamma=None):
    if problem.kind == "lasso":
        return L1(lam)
    if problem.kind == "matrix_completion":
        (shape,) = problem.A.shape.domain_dims
        return Nuclear(lam, shape)
    shape = problem.A.shape.domain_dims[0]
    return SeparablePair(Nuclear(lam, shape), L1(gamma))


def make_spec(problem, cfg, lam, gamma=None, trace=None):
    return EstimatorSpec(
        A=problem.A,
        regularizer=make_regularizer(problem, lam, gamma),
        sigma2=problem.sigma2,
        solver=cfg.solver,
        trace=cfg.trace if trace is None else trace,
    )


def monte_carlo_risk(spec, mu, num_samples, seed):
    """Average of ``||mu_hat(y_i) - mu||^2`` over ``y_i ~ N(mu, sigma^2 I)``.

    Returns ``(estimate, stderr)`` with ``stderr = sample std / sqrt(n)``.
    """
    if num_samples < 2:
        raise ConfigError("monte_carlo_risk needs at least 2 samples")
    mu = np.asarray(mu, dtype=float).ravel()
    rng = make_rng("mc_risk", seed)
    cfg = spec.solver
    cfg = SolveConfig(cfg.algorithm, cfg.eta, cfg.tol, cfg.max_iter, False, cfg.cg_tol)
    if cfg.eta == "auto":
        cfg = SolveConfig(cfg.algorithm, cfg.resolve_eta(spec.A), cfg.tol, cfg.max_iter,
                          False, cfg.cg_tol)
    sigma = np.sqrt(spec.sigma2)
    losses = np.empty(num_samples)
    for i in range(num_samples):
        y = mu + sigma * rng.standard_normal(mu.shape)
        mu_hat = solve(spec.A, spec.regularizer, y, cfg).mu_hat
        losses[i] = np.sum((mu_hat - mu) ** 2)
    return float(losses.mean()), float(losses.std(ddof=1) / np.sqrt(num_samples))


# -- result rows ----------------------------------------------------------------

@dataclass
class ResultRow:
    problem: str
    d: int
    p: int
    lam: float
    gamma: float | None
    sure: float
    sure_per_coord: float
    divergence: float
    residual_sq: float
    mc_risk: float | None
    mc_stderr: float | None
    iterations: int
    converged: bool
    wall_time_s: float
    data_seed: int
    noise_seed: int
    trace_seed: int
    error: str | None = None

    def as_csv_dict(self):
        def num(x):
            return "" if x is None else repr(float(x))

        return {
            "problem": self.problem,
            "d": str(self.d),
            "p": str(self.p),
            "lambda": num(self.lam),
            "gamma": num(self.gamma),
            "sure": num(self.sure),
            "sure_per_coord": num(self.sure_per_coord),
            "divergence": num(self.divergence),
            "residual_sq": num(self.residual_sq),
            "mc_risk": num(self.mc_risk),
            "mc_stderr": num(self.mc_stderr),
            "iterations": str(self.iterations),
            "converged": str(bool(self.converged)).lower(),
            "wall_time_s": f"{self.wall_time_s:.3g}",
            "data_seed": str(self.data_seed),
            "noise_seed": str(self.noise_seed),
            "trace_seed": str(self.trace_seed),
        }


def _row(problem, cfg, lam, gamma, report, mc, wall, trace_seed, error=None):
    nan = float("nan")
    return ResultRow(
        problem=problem.kind, d=problem.A.shape.d, p=problem.A.shape.p, lam=lam, gamma=gamma,
        sure=report.sure_value if report else nan,
        sure_per_coord=report.coordinatewise if report else nan,
        divergence=report.divergence_estimate if report else nan,
        residual_sq=report.residual_sq if report else nan,
        mc_risk=mc[0] if mc else None, mc_stderr=mc[1] if mc else None,
        iterations=report.iterations if report else 0,
        converged=report.converged if report else False,
        wall_time_s=wall, data_seed=cfg.data_seed, noise_seed=cfg.noise_seed,
        trace_seed=trace_seed, error=error,
    )


def observed_y(problem, cfg):
    return draw_y(problem, make_rng("observation", cfg.noise_seed))


def run_single(cfg, mc_samples=None):
    """Evaluate SURE at the configured penalty fractions. Returns ``(row, report)``."""
    problem = build_problem(cfg)
    y = observed_y(problem, cfg)
    lam_max, gamma_max = penalty_scale(problem, y)
    lam = cfg.lambda_frac * lam_max
    gamma = None if gamma_max is None else cfg.gamma_frac * gamma_max
    spec = make_spec(problem, cfg, lam, gamma)
    start = time.monotonic()
    report = evaluate_sure(spec, y)
    wall = time.monotonic() - start
    n_mc = cfg.mc_samples if mc_samples is None else mc_samples
    mc = monte_carlo_risk(spec, problem.mu, n_mc, cfg.noise_seed) if n_mc else None
    return _row(problem, cfg, lam, gamma, report, mc, wall, cfg.trace.seed), report


def sweep_grid(cfg, lam_max):
    return np.geomspace(cfg.sweep_lo_frac * lam_max, cfg.sweep_hi_frac * lam_max,
                        cfg.sweep_points)


def run_sweep(cfg, out_path=None):
    """SURE (and optionally Monte Carlo risk) over a log-spaced penalty grid.

    A single ``y`` is drawn; grid point ``i`` uses the trace seed derived from
    ``(trace.seed, i)``. For robust PCA ``lambda`` is swept with ``gamma`` held
    at ``gamma_frac * gamma_max``. Failures are recorded per row.
    """
    problem = build_problem(cfg)
    y = observed_y(problem, cfg)
    lam_max, gamma_max = penalty_scale(problem, y)
    gamma = None if gamma_max is None else cfg.gamma_frac * gamma_max
    rows = []
    for i, lam in enumerate(sweep_grid(cfg, lam_max)):
        lam = float(lam)
        seed = derive_seed(cfg.trace.seed, i)
        trace = TraceConfig(cfg.trace.queries, cfg.trace.estimator, seed)
        spec = make_spec(problem, cfg, lam, gamma, trace)
        start = time.monotonic()
        try:
            report = evaluate_sure(spec, y)
            mc = (monte_carlo_risk(spec, problem.mu, cfg.mc_samples, cfg.noise_seed)
                  if cfg.mc_samples else None)
            error = None
        except (ArithmeticError, RuntimeError, ValueError) as exc:
            report, mc, error = None, None, f"{type(exc).__name__}: {exc}"
        rows.append(_row(problem, cfg, lam, gamma, report, mc, time.monotonic() - start,
                         seed, error))
    if out_path is not None:
        write_csv(rows, out_path)
    return rows


def write_csv(rows, path_or_file):
    def _write(fh):
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row.as_csv_dict())

    if hasattr(path_or_file, "write"):
        _write(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            _write(fh)


def row_fields():
    return [f.name for f in fields(ResultRow)]
