"""
Verification harness - runs every registered check group and the convergence studies
"""
import logging
from typing import Any, Callable, Dict, List, Sequence, Union

import numpy as np

from models.errors import ModelValidationError
from models.fields import SupSampler, check_field_invariants
from models.operator_model import check_model_invariants
from models.reports import CheckReport, ConvergenceTable, worst_case
from utils.collocation import TensorGrid
from utils.data_import import RunConfig, build_run_config
from utils.flow import check_flow_estimates, check_flow_semigroup
from utils.ou_semigroup import apply_rt, check_ou_estimates, resolvent_l
from utils.parallel import map_batches
from utils.perturbation import (apply_fcal, apply_feps, check_feps_convergence, check_solution,
                                check_tlambda_contraction, solve_resolvent_neps)
from utils.sde import apply_pt, check_sde_properties, closure_consistency

logger = logging.getLogger(__name__)

STUDIES = ("feps", "resolvent-eps", "sde-dt")


def _as_run(config: Union[RunConfig, Dict[str, Any]]) -> RunConfig:
    return config if isinstance(config, RunConfig) else build_run_config(config)


def _small_sampler(run: RunConfig, count: int) -> SupSampler:
    return SupSampler(run.model.dim, run.sampler.radius, min(count, run.sampler.count),
                      run.sampler.seed)


def solver_grid(run: RunConfig) -> TensorGrid:
    section = run.section("perturbation")
    return TensorGrid(run.model.dim, float(section["grid_radius"]), float(section["grid_step"]))


def evaluation_points(run: RunConfig, count: int) -> np.ndarray:
    """count points on [-2, 2] along the first axis"""
    points = np.zeros((count, run.model.dim))
    points[:, 0] = np.linspace(-2.0, 2.0, count)
    return points


def _model_checks(run: RunConfig) -> List[CheckReport]:
    return check_model_invariants(run.model, seed=run.seed)


def _field_checks(run: RunConfig) -> List[CheckReport]:
    return check_field_invariants(run.phi, run.sampler) + check_field_invariants(run.drift, run.sampler)


def _flow_checks(run: RunConfig) -> List[CheckReport]:
    section = run.section("flow")
    tol = float(section["tol"])
    return (check_flow_estimates(run.drift, run.sampler, section["times"], tol,
                                 bool(section.get("per_sample", False)))
            + check_flow_semigroup(run.drift, run.sampler, tol, run.seed))


def _ou_checks(run: RunConfig) -> List[CheckReport]:
    section = run.section("ou")
    sampler = _small_sampler(run, 256)
    return check_ou_estimates(run.model, run.phi, sampler, run.quad, section["times"],
                              section["lambdas"], run.seed)


def _feps_checks(run: RunConfig) -> List[CheckReport]:
    return check_feps_convergence(run.phi, run.drift, run.section("perturbation")["eps_list"],
                                  run.sampler)


def _contraction_checks(run: RunConfig) -> List[CheckReport]:
    section = run.section("perturbation")
    sampler = _small_sampler(run, int(section["check_points"]))
    return check_tlambda_contraction(run.model, run.drift, section["lambdas"],
                                     section["contraction_eps"], sampler, run.quad,
                                     int(section["contraction_pairs"]), run.seed)


def _solver_checks(run: RunConfig) -> List[CheckReport]:
    section = run.section("perturbation")
    sampler = _small_sampler(run, int(section["check_points"]))
    grid = solver_grid(run)
    tol = float(section["tol"])
    eps_values = sorted((float(e) for e in section["solver_eps"]), reverse=True)
    reports = []
    for lam in section["solver_lambdas"]:
        lam = float(lam)
        residuals = []
        for eps in eps_values:
            solution = solve_resolvent_neps(run.model, run.drift, lam, eps, run.phi, run.quad,
                                            tol, grid)
            found = check_solution(run.model, solution, sampler, int(section["check_points"]))
            reports.extend(found)
            residuals.extend(r for r in found
                             if r.check_id.startswith("perturbation.n0_residual.")
                             and not r.informational)
            if run.drift.is_zero:
                reports.append(_zero_drift_identity(run, solution, sampler, tol))
        if len(residuals) > 1:
            values = [r.lhs for r in residuals]
            reports.append(CheckReport.evaluate(
                f"perturbation.n0_residual_decay.lambda={lam:g}",
                "limit residual decreases as eps -> 0",
                float(np.max(np.diff(values))), 0.0, max(r.error_budget for r in residuals),
                params={"lambda": lam, "eps": eps_values, "residuals": values},
                seed=run.seed))
    return reports


def _zero_drift_identity(run: RunConfig, solution, sampler: SupSampler, tol: float) -> CheckReport:
    """With F = 0 the fixed point is the Ornstein-Uhlenbeck resolvent"""
    x = sampler.points()
    x = x * min(1.0, 0.5 * solution.grid.radius / max(float(np.max(np.abs(x))), 1e-300))
    exact = resolvent_l(run.model, run.phi, solution.lam, x, run.quad)
    gap = np.abs(solution.phi_eps.value(x) - exact)
    amplification = (1.0 + solution.lam * solution.eps) / (solution.lam * solution.eps)
    budget = 10.0 * tol + amplification * 4.0 * solution.interpolation_error
    return worst_case(
        f"perturbation.zero_drift_identity.lambda={solution.lam:g},eps={solution.eps:g}",
        "with F = 0, R(lambda, N_eps) f = R(lambda, L) f",
        gap, 0.0, budget, params={"lambda": solution.lam, "eps": solution.eps},
        seed=run.seed, sampler=sampler.describe())


def _sde_checks(run: RunConfig) -> List[CheckReport]:
    section = run.section("sde")
    if not section.get("enabled", False):
        return []
    x = np.zeros(run.model.dim)
    reports = check_sde_properties(run.model, run.drift, run.phi, x, float(section["t"]),
                                   max(float(section["dt"]), 1e-2),
                                   min(int(section["paths"]), 20_000), int(section["seed"]),
                                   int(section["nested_paths"]))
    if section.get("closure", False):
        closure_reports, _ = closure_consistency(
            run.model, run.drift, run.phi, float(section["lambda"]), section["eps_list"],
            evaluation_points(run, int(section["grid"])), run.quad,
            float(run.section("perturbation")["tol"]), float(section["dt"]),
            int(section["paths"]), int(section["seed"]), solver_grid(run))
        reports.extend(closure_reports)
    return reports


CHECK_GROUPS: Dict[str, Callable[[RunConfig], List[CheckReport]]] = {
    "model": _model_checks,
    "fields": _field_checks,
    "flow": _flow_checks,
    "ou": _ou_checks,
    "feps": _feps_checks,
    "contraction": _contraction_checks,
    "solver": _solver_checks,
    "sde": _sde_checks,
}


def run_suite(config: Union[RunConfig, Dict[str, Any]],
              groups: Sequence[str] = None) -> List[CheckReport]:
    """Run the registered check groups; reports come back sorted by check_id"""
    run = _as_run(config)
    names = list(CHECK_GROUPS) if groups is None else list(groups)
    unknown = [n for n in names if n not in CHECK_GROUPS]
    if unknown:
        raise ModelValidationError(f"unknown check groups: {', '.join(unknown)}")

    def run_group(name):
        logger.info("running check group '%s'", name)
        return CHECK_GROUPS[name](run)

    reports = [r for found in map_batches(run_group, names) for r in found]
    reports.sort(key=lambda r: r.check_id)
    failed = [r.check_id for r in reports if r.blocking_failure]
    logger.info("%d checks, %d failed", len(reports), len(failed))
    for check_id in failed:
        logger.warning("check failed: %s", check_id)
    return reports


def _feps_study(run: RunConfig, values: List[float]) -> ConvergenceTable:
    x = run.sampler.points()
    exact = apply_fcal(run.phi, run.drift, x)
    errors = [float(np.max(np.abs(apply_feps(run.phi, run.drift, eps, x) - exact)))
              for eps in values]
    return ConvergenceTable.fit("eps", values, errors, notes=f"drift={run.drift.name}")


def _resolvent_study(run: RunConfig, values: List[float]) -> ConvergenceTable:
    section = run.section("sde")
    _, table = closure_consistency(
        run.model, run.drift, run.phi, float(section["lambda"]), values,
        evaluation_points(run, int(section["grid"])), run.quad,
        float(run.section("perturbation")["tol"]), float(section["dt"]), int(section["paths"]),
        int(section["seed"]), solver_grid(run))
    return table


def _sde_dt_study(run: RunConfig, values: List[float]) -> ConvergenceTable:
    section = run.section("sde")
    t, seed, paths = float(section["t"]), int(section["seed"]), int(section["paths"])
    x = np.zeros(run.model.dim)
    if run.drift.is_zero:
        reference, note = apply_rt(run.model, run.phi, t, x, run.quad), "exact OU reference"
    else:
        fine = apply_pt(run.model, run.drift, run.phi, t, x, min(values) / 4.0, paths, seed)
        reference, note = fine.phi_mean, f"reference dt={min(values) / 4.0:g}"
    errors, noise = [], []
    for dt in values:
        estimate = apply_pt(run.model, run.drift, run.phi, t, x, dt, paths, seed)
        errors.append(abs(estimate.phi_mean - reference))
        noise.append(estimate.std_error)
    return ConvergenceTable.fit("dt", values, errors,
                                notes=f"{note}; max std_error {max(noise):.3e}")


def convergence_study(config: Union[RunConfig, Dict[str, Any]], study: str,
                      values: Sequence[float]) -> ConvergenceTable:
    """Error table of one study against a parameter sweep, with the log-log rate"""
    run = _as_run(config)
    values = [float(v) for v in values]
    if len(values) < 3:
        raise ModelValidationError("a convergence study needs at least 3 parameter values")
    if study == "feps":
        table = _feps_study(run, values)
    elif study == "resolvent-eps":
        table = _resolvent_study(run, sorted(values, reverse=True))
    elif study == "sde-dt":
        table = _sde_dt_study(run, values)
    else:
        raise ModelValidationError(f"unknown study '{study}', expected one of {STUDIES}")
    logger.info("study %s: rate %s", study, table.fitted_rate)
    return table
