"""Command line surface: optimization, criterion evaluation, sweeps, rounding,
verification, simulation, and prediction.

Output is CSV by default (JSON behind --format json) with 10 significant
digits, so identical invocations produce byte-identical output.  Exit codes:
0 success, 2 validation error, 1 internal failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import design, moments, oracle
from .criteria import CriterionSpec, criterion_value
from .estimation import blue, blup, read_observations_csv, write_predictions_csv
from .model import (
    ExactDesign, ModelConfig, build_system, config_from_json, config_from_rho,
)

THREADS_ENV = "RCR_DESIGN_THREADS"


def _fmt(x) -> str:
    return f"{x:.10g}"


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if value < 1:
        raise ValueError(f"{THREADS_ENV} must be at least 1, got {value}")
    return value


def _add_config_args(parser, with_config_file=True):
    parser.add_argument("--J", type=int, help="number of groups (treatments + control)")
    parser.add_argument("--N", type=int, help="total number of individuals")
    parser.add_argument("--K", type=int, help="observations per individual")
    parser.add_argument("--u", type=float, help="intercept variance ratio")
    parser.add_argument("--v", type=float, help="treatment-effect variance ratio")
    parser.add_argument("--sigma2", type=float, default=1.0, help="error variance (default 1)")
    parser.add_argument("--rho", type=float, help="effect variance as rho = v/(1+v); needs --b")
    parser.add_argument("--b", type=float, help="variance ratio b = v/u")
    if with_config_file:
        parser.add_argument("--config", type=Path,
                            help="JSON config file with keys J,N,K,u,v,sigma2")


def _add_criterion_args(parser):
    parser.add_argument("--criterion", required=True, choices=["A", "D", "E"])
    parser.add_argument("--target", required=True, choices=["estimation", "prediction"])


def _resolve_config(args) -> ModelConfig:
    if getattr(args, "config", None) is not None:
        given = [name for name in ("J", "N", "K", "u", "v", "rho", "b")
                 if getattr(args, name, None) is not None]
        if given:
            raise ValueError(
                f"--config cannot be combined with --{' --'.join(given)}"
            )
        return config_from_json(args.config.read_text())
    for name in ("J", "N", "K"):
        if getattr(args, name) is None:
            raise ValueError(f"missing required flag --{name}")
    if args.rho is not None:
        if args.u is not None or args.v is not None:
            raise ValueError("give either --u/--v or --rho/--b, not both")
        if args.b is None:
            raise ValueError("--rho needs --b to fix the variance ratio")
        return config_from_rho(args.J, args.N, args.K, args.rho, args.b, args.sigma2)
    if args.u is None or args.v is None:
        raise ValueError("model needs --u and --v (or --rho with --b)")
    if args.b is not None:
        raise ValueError("--b only combines with --rho here")
    return ModelConfig(J=args.J, N=args.N, K=args.K, u=args.u, v=args.v,
                       sigma2=args.sigma2)


def _design_from_weight(config: ModelConfig, w: float) -> ExactDesign:
    # nearest integer allocation; the group sizes stay feasible by clamping
    n_max = (config.N - 1) // (config.J - 1)
    n = min(max(int(round(config.N * w)), 1), n_max)
    return ExactDesign(n=n, m=config.N - (config.J - 1) * n, J=config.J)


def _emit(args, fields: dict, out=None):
    stream = out or sys.stdout
    if getattr(args, "format", "csv") == "json":
        stream.write(json.dumps(fields, sort_keys=True) + "\n")
    else:
        stream.write(",".join(fields) + "\n")
        stream.write(",".join(
            _fmt(v) if isinstance(v, float) else str(v) for v in fields.values()
        ) + "\n")


def _write_matrix_csv(matrix: np.ndarray, path: Path):
    with open(path, "w") as fh:
        for row in np.atleast_2d(matrix):
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def cmd_optimal(args) -> int:
    config = _resolve_config(args)
    spec = CriterionSpec(args.criterion, args.target)
    best = design.optimal_weight(config, spec)
    rounded = design.round_to_exact(config, spec, best.w_star)
    _emit(args, {
        "w_star": best.w_star,
        "n": rounded.n,
        "m": rounded.m,
        "criterion_value": best.criterion_value,
        "criterion_value_exact": design.exact_criterion_value(
            config, spec, rounded.n, rounded.m),
        "method": best.method,
    })
    return 0


def cmd_criterion(args) -> int:
    config = _resolve_config(args)
    spec = CriterionSpec(args.criterion, args.target)
    _emit(args, {"w": float(args.w), "value": criterion_value(config, spec, args.w)})
    return 0


def cmd_round(args) -> int:
    config = _resolve_config(args)
    spec = CriterionSpec(args.criterion, args.target)
    rounded = design.round_to_exact(config, spec, args.w)
    _emit(args, {
        "n": rounded.n,
        "m": rounded.m,
        "w_exact": rounded.n / config.N,
        "criterion_value": design.exact_criterion_value(
            config, spec, rounded.n, rounded.m),
    })
    return 0


def cmd_sweep(args) -> int:
    for name in ("J", "N", "K"):
        if getattr(args, name) is None:
            raise ValueError(f"missing required flag --{name}")
    if args.b is None:
        raise ValueError("sweep needs --b, the variance ratio of the curve")
    if args.u is not None or args.v is not None or args.rho is not None:
        raise ValueError("sweep varies u and v internally; give --b only")
    template = ModelConfig(J=args.J, N=args.N, K=args.K, u=1.0, v=1.0,
                           sigma2=args.sigma2)
    spec = CriterionSpec(args.criterion, args.target)
    rows = design.sweep(template, spec, args.b,
                        design.default_rho_grid(args.grid), threads=_threads())
    if args.out is None:
        design.write_sweep_csv(rows, sys.stdout)
    else:
        with open(args.out, "w") as fh:
            design.write_sweep_csv(rows, fh)
    if args.plot is not None:
        from . import figures  # keep matplotlib off the fast path

        figures.plot_sweep(rows, args.plot)
    return 0


def cmd_verify(args) -> int:
    checks = oracle.run_oracle_checks() + oracle.run_eigen_checks()
    width = max(len(c.name) for c in checks)
    print(f"{'check':<{width}}  cases  tolerance  worst rel err  status")
    for c in checks:
        status = "pass" if c.passed else "FAIL"
        print(f"{c.name:<{width}}  {c.cases:>5}  {c.tolerance:>9.0e}  "
              f"{c.worst_error:>13.3e}  {status}")
    if args.dump is not None:
        _dump_matrices(args)
    return 0 if all(c.passed for c in checks) else 1


def _dump_matrices(args):
    config = ModelConfig(J=args.J, N=args.N, K=args.K, u=args.u, v=args.v,
                         sigma2=args.sigma2)
    dumped = _design_from_weight(config, args.w)
    outdir = Path(args.dump)
    outdir.mkdir(parents=True, exist_ok=True)
    parts = oracle.henderson_mse(build_system(config, dumped))
    _write_matrix_csv(moments.cov_blue(config, dumped.n, dumped.m).entries,
                      outdir / "cov_blue.csv")
    _write_matrix_csv(moments.mse_blup(config, dumped.n, dumped.m).entries,
                      outdir / "mse_blup.csv")
    _write_matrix_csv(oracle.blue_covariance_from_partition(parts, config.J),
                      outdir / "oracle_cov_blue.csv")
    _write_matrix_csv(oracle.prediction_mse_from_partition(parts, config.J, config.N),
                      outdir / "oracle_mse_blup.csv")
    print(f"matrices written to {outdir}")


def cmd_simulate(args) -> int:
    config = _resolve_config(args)
    if args.w is None:
        raise ValueError("simulate needs --w to fix the allocation")
    sim_design = _design_from_weight(config, args.w)
    result = oracle.simulate_mse(config, sim_design, args.reps, args.seed)
    theory = moments.mse_blup(config, sim_design.n, sim_design.m)
    if args.reps > 1:
        max_bias_z = float(np.max(np.abs(result.mean_error) / result.mean_se))
    else:
        max_bias_z = float("nan")
    _emit(args, {
        "n": sim_design.n,
        "m": sim_design.m,
        "reps": args.reps,
        "seed": args.seed,
        "frobenius_rel": oracle.frobenius_distance(result.second_moment, theory),
        "max_bias_z": max_bias_z,
    })
    if args.out is not None:
        _write_matrix_csv(result.second_moment.entries, Path(args.out))
    return 0


def cmd_predict(args) -> int:
    obs = read_observations_csv(args.input)
    config = ModelConfig(J=obs.design.J, N=obs.design.N, K=obs.K,
                         u=args.u, v=args.v, sigma2=args.sigma2)
    prediction = blup(obs, config)
    if args.out is None:
        write_predictions_csv(prediction, obs.design, sys.stdout)
        return 0
    with open(args.out, "w") as fh:
        write_predictions_csv(prediction, obs.design, fh)
    estimate = blue(obs)
    fields = {"mu_hat": estimate.mu_hat}
    fields.update({f"alpha_{j + 1}": float(a) for j, a in enumerate(estimate.alpha_hat)})
    _emit(args, fields)
    return 0


def cmd_report(args) -> int:
    from . import figures

    written = figures.render_report(args.out, N=args.N, K=args.K,
                                    sigma2=args.sigma2, points=args.grid,
                                    threads=_threads())
    for path in written:
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rcr-design",
        description="Optimal treatment/control allocation in multi-group "
                    "random coefficient regression",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimal", help="optimal weight, rounded design, criterion value")
    _add_config_args(p)
    _add_criterion_args(p)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_optimal)

    p = sub.add_parser("criterion", help="evaluate a criterion at a given weight")
    _add_config_args(p)
    _add_criterion_args(p)
    p.add_argument("--w", type=float, required=True, help="treatment-group weight")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_criterion)

    p = sub.add_parser("round", help="round a weight to the better integer design")
    _add_config_args(p)
    _add_criterion_args(p)
    p.add_argument("--w", type=float, required=True, help="treatment-group weight")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_round)

    p = sub.add_parser("sweep", help="optimal weight and efficiency over a rho grid")
    _add_config_args(p, with_config_file=False)
    _add_criterion_args(p)
    p.add_argument("--grid", type=int, default=50, help="number of rho points")
    p.add_argument("--out", type=Path, help="CSV output path (default stdout)")
    p.add_argument("--plot", type=Path, help="also render the weight curve to this file")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run the oracle and eigenvalue suites")
    p.add_argument("--dump", type=Path, help="directory for moment-matrix CSV dumps")
    p.add_argument("--J", type=int, default=2)
    p.add_argument("--N", type=int, default=4)
    p.add_argument("--K", type=int, default=1)
    p.add_argument("--u", type=float, default=1.0)
    p.add_argument("--v", type=float, default=1.0)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--w", type=float, default=0.5)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="Monte Carlo check of the prediction MSE")
    _add_config_args(p)
    p.add_argument("--w", type=float, help="treatment-group weight; n = round(N w)")
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, help="CSV path for the empirical matrix")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("predict", help="estimate and predict from an observation CSV")
    p.add_argument("input", type=Path, help="long-form CSV: group,individual,replicate,value")
    p.add_argument("--u", type=float, required=True)
    p.add_argument("--v", type=float, required=True)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--out", type=Path,
                   help="predictions CSV path; population estimates then go to stdout")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("report", help="render the sweep report (CSV plus figures)")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--N", type=int, default=100)
    p.add_argument("--K", type=int, default=10)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--grid", type=int, default=60)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001  internal failures get exit code 1
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


def entry_point():
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
