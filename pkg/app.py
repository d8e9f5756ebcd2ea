"""
Perturbed Ornstein-Uhlenbeck Verifier - Main Application
Command-line entry point for checks, evaluations, solves and convergence studies
"""
import argparse
import logging
import sys
import os

# Add the current directory to Python path for imports
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import numpy as np

from db.connection import ReportArchive
from models.errors import VerificationError
from models.fields import SupSampler
from utils.data_import import (REFERENCE_CONFIG, RunConfig, build_run_config, load_config,
                               read_config)
from utils.flow import check_flow_estimates, check_flow_semigroup
from utils.harness import STUDIES, convergence_study, run_suite, solver_grid
from utils.ou_semigroup import estimate_rt, resolvent_l
from utils.perturbation import check_solution, solve_resolvent_neps
from utils.report_export import emit_json, emit_report, emit_table, plot_convergence
from utils.sde import apply_pt, resolvent_n_mc

logger = logging.getLogger("ou_verify")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_ERROR = 2


def configure_logging(verbose: int, quiet: bool) -> None:
    """-v for INFO, -vv for DEBUG, --quiet for warnings only"""
    if quiet:
        level = logging.WARNING
    elif verbose >= 2:
        level = logging.DEBUG
    elif verbose == 1:
        level = logging.INFO
    else:
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def load_run(args) -> RunConfig:
    """Config file (or the 1-D reference) with command-line overrides"""
    config = read_config(args.config) if getattr(args, "config", None) else dict(REFERENCE_CONFIG)
    config = {k: dict(v) for k, v in config.items()}
    if getattr(args, "f", None):
        config["phi"] = {"kind": args.f}
    if getattr(args, "drift", None):
        config["drift"] = {"name": args.drift, "scale": config["drift"].get("scale", 1.0)}
    if getattr(args, "times", None):
        config["flow"] = {**config.get("flow", {}), "times": args.times}
    if getattr(args, "quad", None):
        config["quadrature"] = {**config.get("quadrature", {}), "mode": args.quad}
    return build_run_config(config)


def _point(run: RunConfig, values) -> np.ndarray:
    x = np.zeros(run.model.dim)
    if values:
        given = np.asarray(values, dtype=float)
        x[: len(given)] = given[: run.model.dim]
    return x


def _finish(reports, args) -> int:
    if args.out:
        emit_report(reports, args.format, args.out)
    failed = [r for r in reports if r.blocking_failure]
    print(f"{len(reports)} checks, {len(failed)} failed")
    for report in failed:
        print(f"FAILED {report.check_id}: lhs={report.lhs:.6g} rhs={report.rhs:.6g} "
              f"margin={report.margin:.3g}")
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def cmd_flow_check(args) -> int:
    run = load_run(args)
    section = run.section("flow")
    reports = (check_flow_estimates(run.drift, run.sampler, section["times"], section["tol"],
                                    args.per_sample)
               + check_flow_semigroup(run.drift, run.sampler, section["tol"], run.seed))
    return _finish(reports, args)


def cmd_ou_eval(args) -> int:
    run = load_run(args)
    x = _point(run, args.x)
    estimate = estimate_rt(run.model, run.phi, args.t, x, run.quad)
    result = {"t": args.t, "x": x.tolist(), "phi": run.phi.describe(),
              "value": estimate.value, "std_error": estimate.std_error,
              "quadrature": run.quad.describe()}
    if args.lam is not None:
        result["resolvent"] = resolvent_l(run.model, run.phi, args.lam, x, run.quad)
        result["lambda"] = args.lam
    print(f"R_{args.t:g} {run.phi.name}({x.tolist()}) = {estimate.value:.12g} "
          f"+- {estimate.std_error:.2e}")
    if args.out:
        emit_json(result, args.out)
    return EXIT_OK


def cmd_resolvent(args) -> int:
    run = load_run(args)
    solution = solve_resolvent_neps(run.model, run.drift, args.lam, args.eps, run.phi, run.quad,
                                    args.tol, solver_grid(run))
    section = run.section("perturbation")
    sampler = SupSampler(run.model.dim, run.sampler.radius,
                         min(int(section["check_points"]), run.sampler.count), run.sampler.seed)
    reports = check_solution(run.model, solution, sampler, int(section["check_points"]))
    print(f"R({args.lam:g}, N_{args.eps:g}) {run.phi.name}: {solution.iterations} iterations, "
          f"residual {solution.residual_sup:.3e}, ratio {solution.contraction_ratio_observed:.6f}")
    if args.out:
        emit_json({**solution.to_dict(), "checks": [r.to_dict() for r in reports]}, args.out)
    failed = [r for r in reports if r.blocking_failure]
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def cmd_sde_mc(args) -> int:
    run = load_run(args)
    x = _point(run, args.x)
    estimate = apply_pt(run.model, run.drift, run.phi, args.t, x, args.dt, args.paths, args.seed)
    result = {"transition": estimate.to_dict(), "phi": run.phi.describe(),
              "drift": run.drift.describe()}
    print(f"P_{args.t:g} {run.phi.name} = {estimate.phi_mean:.8g} +- {estimate.std_error:.2e}")
    if args.lam is not None:
        laplace = resolvent_n_mc(run.model, run.drift, run.phi, args.lam, x, args.dt, args.paths,
                                 args.seed)
        result["resolvent"] = {"lambda": args.lam, "value": laplace.value,
                               "std_error": laplace.std_error, "tail_bound": laplace.tail_bound,
                               "error_bar": laplace.error_bar}
        print(f"R({args.lam:g}, N) {run.phi.name} = {laplace.value:.8g} +- {laplace.error_bar:.2e}")
    if args.out:
        emit_json(result, args.out)
    return EXIT_OK


def cmd_verify_all(args) -> int:
    run = load_config(args.config) if args.config else build_run_config(REFERENCE_CONFIG)
    reports = run_suite(run, args.groups)
    if args.archive:
        with ReportArchive(args.archive) as archive:
            archive.archive_run("verify-all", run.sections, reports)
    return _finish(reports, args)


def cmd_convergence(args) -> int:
    run = load_run(args)
    table = convergence_study(run, args.study, args.values)
    rate = "undefined" if table.fitted_rate is None else f"{table.fitted_rate:.4f}"
    print(table.to_frame().to_string(index=False))
    print(f"fitted rate: {rate}" + (f" ({table.notes})" if table.notes else ""))
    if args.out:
        emit_table(table, args.out)
    if args.plot:
        plot_convergence(table, args.plot)
    return EXIT_OK


def float_list(text: str) -> list:
    """Parse '0.1,0.5,1.0' into floats"""
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("expected at least one number")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ou-verify",
        description="Numerical verification of perturbed Ornstein-Uhlenbeck operators")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, fmt=False):
        p.add_argument("--config", help="TOML config (default: 1-D reference)")
        p.add_argument("--f", help="override the test function kind")
        p.add_argument("--drift", help="override the drift name")
        p.add_argument("--out", help="output path")
        if fmt:
            p.add_argument("--format", choices=["json", "csv"], default="json")

    p = sub.add_parser("flow-check", help="flow estimates and semigroup law")
    common(p, fmt=True)
    p.add_argument("--times", type=float_list, help="comma separated flow times, e.g. 0.1,0.5,1.0")
    p.add_argument("--per-sample", action="store_true", help="one report per sampled point")
    p.set_defaults(func=cmd_flow_check)

    p = sub.add_parser("ou-eval", help="evaluate R_t phi(x) and optionally R(lambda, L) phi(x)")
    common(p)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--x", type=float, nargs="*")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--quad", choices=["tensor", "mc"], help="override the quadrature mode")
    p.set_defaults(func=cmd_ou_eval)

    p = sub.add_parser("resolvent", help="solve phi_eps = R(lambda, N_eps) f")
    common(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_resolvent)

    p = sub.add_parser("sde-mc", help="Monte Carlo P_t phi(x) and R(lambda, N) phi(x)")
    common(p)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--x", type=float, nargs="*")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_sde_mc)

    p = sub.add_parser("verify-all", help="run the full check suite")
    p.add_argument("--config", help="TOML config (default: 1-D reference)")
    p.add_argument("--out", help="report path")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--groups", nargs="*", help="subset of check groups")
    p.add_argument("--archive", help="SQLite archive to append the run to")
    p.set_defaults(func=cmd_verify_all)

    p = sub.add_parser("convergence", help="convergence study with log-log rate")
    common(p)
    p.add_argument("--study", choices=STUDIES, required=True)
    p.add_argument("--values", type=float, nargs="+", required=True)
    p.add_argument("--plot", help="write a log-log plot (png)")
    p.set_defaults(func=cmd_convergence)
    return parser


def main(argv=None) -> int:
    """Main application function"""
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        return args.func(args)
    except VerificationError as e:
        logger.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
