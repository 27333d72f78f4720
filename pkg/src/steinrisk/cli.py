"""Command line interface: ``steinrisk {sure,sweep,mc-risk,selfcheck}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import json
import logging
import sys

import numpy as np

from .exceptions import ConfigError, NumericalError
from .harness import (ExperimentConfig, build_problem, make_spec, monte_carlo_risk,
                      observed_y, override, penalty_scale, run_single, run_sweep, write_csv)
from .selfcheck import run_selfcheck

log = logging.getLogger("steinrisk")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

# convenience flag -> dotted config key
FLAG_KEYS = {
    "problem": "problem",
    "sigma2": "sigma2",
    "lambda_frac": "reg.lambda_frac",
    "gamma_frac": "reg.gamma_frac",
    "algorithm": "solver.algorithm",
    "tol": "solver.tol",
    "max_iter": "solver.max_iter",
    "queries": "trace.queries",
    "estimator": "trace.estimator",
    "trace_seed": "trace.seed",
    "data_seed": "seeds.data",
    "noise_seed": "seeds.noise",
    "mc_samples": "mc_samples",
    "points": "sweep.points",
}


def _add_config_args(p):
    p.add_argument("-c", "--config", required=True, help="JSON experiment config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key, e.g. solver.tol=1e-8 (repeatable)")
    p.add_argument("--problem")
    p.add_argument("--sigma2", type=float)
    p.add_argument("--lambda-frac", type=float)
    p.add_argument("--gamma-frac", type=float)
    p.add_argument("--algorithm")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--queries", type=int)
    p.add_argument("--estimator")
    p.add_argument("--trace-seed", type=int)
    p.add_argument("--data-seed", type=int)
    p.add_argument("--noise-seed", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="steinrisk", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sure", help="evaluate SURE for one configured instance")
    _add_config_args(p)
    p.add_argument("--mc-samples", type=int)
    p.add_argument("-o", "--output", help="also write the result row as CSV")

    p = sub.add_parser("sweep", help="SURE over a log-spaced penalty grid")
    _add_config_args(p)
    p.add_argument("--mc-samples", type=int)
    p.add_argument("--points", type=int)
    p.add_argument("-o", "--output", required=True, help="CSV output path")

    p = sub.add_parser("mc-risk", help="Monte Carlo risk at the configured penalty")
    _add_config_args(p)
    p.add_argument("-n", "--samples", type=int, required=True)

    sub.add_parser("selfcheck", help="run invariant checks on tiny instances")
    return parser


def load_config(args):
    try:
        with open(args.config) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    assignments = list(args.set)
    for flag, key in FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            assignments.append(f"{key}={json.dumps(value)}")
    return ExperimentConfig.from_dict(override(doc, assignments))


def _cmd_sure(args):
    cfg = load_config(args)
    row, report = run_single(cfg, args.mc_samples)
    out = {"config": cfg.to_dict(), **report.as_dict(),
           "lambda": row.lam, "gamma": row.gamma, "mc_risk": row.mc_risk,
           "mc_stderr": row.mc_stderr, "wall_time_s": row.wall_time_s}
    print(json.dumps(out, indent=2))
    if args.output:
        write_csv([row], args.output)


def _cmd_sweep(args):
    cfg = load_config(args)
    rows = run_sweep(cfg, args.output)
    for row in rows:
        status = row.error or ("ok" if row.converged else "not converged")
        log.info("lambda=%.4g sure=%.4g (%s)", row.lam, row.sure, status)
    print(f"wrote {len(rows)} rows to {args.output}")


def _cmd_mc_risk(args):
    cfg = load_config(args)
    problem = build_problem(cfg)
    y = observed_y(problem, cfg)
    lam_max, gamma_max = penalty_scale(problem, y)
    lam = cfg.lambda_frac * lam_max
    gamma = None if gamma_max is None else cfg.gamma_frac * gamma_max
    spec = make_spec(problem, cfg, lam, gamma)
    risk, stderr = monte_carlo_risk(spec, problem.mu, args.samples, cfg.noise_seed)
    d = problem.A.shape.d
    print(json.dumps({"problem": cfg.problem, "d": d, "lambda": lam, "gamma": gamma,
                      "mc_risk": risk, "mc_stderr": stderr, "mc_risk_per_coord": risk / d,
                      "samples": args.samples}, indent=2))


def _cmd_selfcheck(args):
    results = run_selfcheck()
    for name, passed, detail in results:
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    if not all(passed for _, passed, _ in results):
        raise NumericalError("selfcheck failed")


COMMANDS = {"sure": _cmd_sure, "sweep": _cmd_sweep, "mc-risk": _cmd_mc_risk,
            "selfcheck": _cmd_selfcheck}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
