"""
Perturbation - drift operator F, its flow quotient F_eps, N_eps = L + F_eps,
the operator T_lambda and the fixed point phi_eps = R(lambda, N_eps) f

T_lambda psi(x) = (1/eps) int_0^inf e^{-(lambda + 1/eps) t} E psi(eta(eps, e^{tA}x + Y_t)) dt
is evaluated on an "endpoint cloud": Laplace nodes times Gaussian nodes, pushed
through the drift flow. The fixed point is solved on a TensorGrid, where
T_lambda becomes a sparse nonnegative matrix with row sums 1/(1 + lambda eps).
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from models.errors import ModelValidationError, SolverConvergenceError
from models.fields import ScalarField, SupSampler, VectorField
from models.operator_model import OperatorModel, covariance_at, semigroup_apply
from models.reports import CheckReport, worst_case
from utils.collocation import TensorGrid, default_grid
from utils.flow import flow_map, integrate_flow
from utils.ou_semigroup import DEFAULT_QUAD, apply_l, fd_generator, resolvent_estimate
from utils.parallel import map_batches
from utils.quadrature import QuadratureSpec, laplace_rule, psd_factor, standard_normal_rule

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-6
FLOW_TOL_FACTOR = 1e-8
MIN_FLOW_TOL = 1e-12
FD_STEP = 1e-4
INEQUALITY_SLACK = 1e-3
DISSIPATIVITY_SLACK = 1e-4
CLOUD_CHUNK = 400_000
RESIDUAL_FD_STEP = 0.04
RESIDUAL_FLOOR = 2e-4


def _flow_tol(eps: float) -> float:
    return max(eps * FLOW_TOL_FACTOR, MIN_FLOW_TOL)


def _check_lambda_eps(lam: float, eps: float) -> None:
    if lam <= 0:
        raise ModelValidationError(f"lambda must be positive, got {lam}")
    if eps <= 0:
        raise ModelValidationError(f"eps must be positive, got {eps}")


def _as_batch(x) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    return np.atleast_2d(x), x.ndim == 1


def _chunks(n: int, per_row: int) -> List[slice]:
    size = max(1, CLOUD_CHUNK // max(per_row, 1))
    return [slice(start, min(start + size, n)) for start in range(0, n, size)]


def gradient_threshold(model: OperatorModel, drift: VectorField, eps: float) -> float:
    """omega + (e^{K eps} - 1)/eps, above which the gradient estimates hold"""
    return model.omega + math.expm1(drift.k_const * eps) / eps


def gradient_constant(model: OperatorModel, drift: VectorField, lam: float,
                      eps: float) -> Optional[float]:
    """c1 = 1/(lambda - omega - (e^{K eps} - 1)/eps), None below the threshold"""
    gap = lam - gradient_threshold(model, drift, eps)
    return 1.0 / gap if gap > 0 else None


def max_iterations(tol: float, f_norm: float, lam: float, eps: float) -> int:
    """Geometric iteration budget ceil(ln(tol/||f||)/ln(1/(1+lambda eps))) + 5"""
    if f_norm <= tol:
        return 5
    return int(math.ceil(math.log(f_norm / tol) / math.log1p(lam * eps))) + 5


def apply_fcal(phi: ScalarField, drift: VectorField, x):
    """F phi(x) = <Dphi(x), F(x)>"""
    if phi.gradient is None:
        raise ModelValidationError(f"{phi.name} has no gradient oracle")
    batch, single = _as_batch(x)
    values = np.sum(phi.gradient(batch) * drift.value(batch), axis=-1)
    return float(values[0]) if single else values


def apply_feps(phi: ScalarField, drift: VectorField, eps: float, x):
    """F_eps phi(x) = (phi(eta(eps, x)) - phi(x))/eps"""
    if eps <= 0:
        raise ModelValidationError(f"eps must be positive, got {eps}")
    batch, single = _as_batch(x)
    if drift.is_zero:
        values = np.zeros(batch.shape[0])
    else:
        moved = flow_map(drift, batch, eps, _flow_tol(eps))
        values = (phi.value(moved) - phi.value(batch)) / eps
    return float(values[0]) if single else values


def feps_bound(phi: ScalarField, drift: VectorField, eps: float) -> float:
    """(theta_Dphi(||F||_0 eps) + ||Dphi||_0 K eps) ||F||_0"""
    if phi.grad_modulus is None or phi.grad_sup_norm is None:
        raise ModelValidationError(f"{phi.name} needs a gradient bound and modulus")
    reach = drift.f_sup_norm * eps
    return float((phi.grad_modulus(reach) + phi.grad_sup_norm * drift.k_const * eps)
                 * drift.f_sup_norm)


def check_feps_convergence(phi: ScalarField, drift: VectorField, eps_list: Sequence[float],
                           sampler: SupSampler) -> List[CheckReport]:
    """sup |F_eps phi - F phi| against its bound for each eps, plus monotone decay"""
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ModelValidationError("eps_list must be strictly decreasing")
    x = sampler.points()
    exact = apply_fcal(phi, drift, x)
    info = {"phi": phi.name, "drift": drift.name}
    reports, sups = [], []
    for eps in eps_list:
        gap = np.abs(apply_feps(phi, drift, eps, x) - exact)
        sups.append(float(np.max(gap)))
        budget = 1e-12 + 2.0 * _flow_tol(eps) * (phi.grad_sup_norm or 0.0) / eps
        reports.append(worst_case(
            f"perturbation.feps.eps={eps:g}",
            "flow quotient |F_eps phi - F phi| <= (theta_Dphi(||F||eps) + ||Dphi|| K eps)||F||",
            gap, feps_bound(phi, drift, eps), budget,
            params={**info, "eps": eps}, seed=sampler.seed, sampler=sampler.describe()))
    if len(sups) > 1:
        growth = np.diff(sups)
        reports.append(CheckReport.evaluate(
            "perturbation.feps_monotone", "flow quotient error nonincreasing as eps decreases",
            float(np.max(growth)), 0.0, 1e-9 + 1e-6 * max(sups),
            params={**info, "eps_list": eps_list, "sups": sups},
            seed=sampler.seed, sampler=sampler.describe()))
    return reports


def apply_neps(model: OperatorModel, phi: ScalarField, drift: VectorField, eps: float, x,
               fd_hessian: bool = False):
    """N_eps phi(x) = L phi(x) + F_eps phi(x)"""
    batch, single = _as_batch(x)
    values = apply_l(model, phi, batch, fd_hessian) + apply_feps(phi, drift, eps, batch)
    return float(values[0]) if single else values


@dataclass(frozen=True)
class TLambdaRule:
    """Laplace times, Gaussian offsets per time and flattened weights of T_lambda"""
    times: np.ndarray
    offsets: Tuple[np.ndarray, ...]
    weights: np.ndarray
    lam: float
    eps: float

    @property
    def size(self) -> int:
        return int(self.weights.size)


def tlambda_rule(model: OperatorModel, lam: float, eps: float,
                 quad: QuadratureSpec = DEFAULT_QUAD) -> TLambdaRule:
    _check_lambda_eps(lam, eps)
    laplace = laplace_rule(lam + 1.0 / eps, quad)
    nodes, gauss = standard_normal_rule(model.dim, quad)
    offsets = tuple(nodes @ psd_factor(covariance_at(model, float(t)).covariance).T
                    for t in laplace.times)
    weights = np.concatenate([w * gauss / eps for w in laplace.weights])
    return TLambdaRule(laplace.times, offsets, weights, lam, eps)


@dataclass(frozen=True)
class EndpointCloud:
    """eta(eps, e^{tA}x + y) for every rule node, and optionally d/dx of it"""
    points: np.ndarray
    weights: np.ndarray
    jacobians: Optional[np.ndarray] = None


def endpoint_cloud(model: OperatorModel, drift: VectorField, rule: TLambdaRule, x: np.ndarray,
                   with_jacobian: bool = False) -> EndpointCloud:
    starts = np.concatenate(
        [semigroup_apply(model, float(t), x)[:, None, :] + offsets
         for t, offsets in zip(rule.times, rule.offsets)], axis=1)
    flow = integrate_flow(drift, starts, rule.eps, _flow_tol(rule.eps), with_jacobian)
    jacobians = None
    if with_jacobian:
        per_time = len(rule.offsets[0])
        mats = np.repeat(np.stack([model.semigroup_matrix(float(t)) for t in rule.times]),
                         per_time, axis=0)
        jacobians = np.einsum("nmij,mjk->nmik", flow.eta_x, mats)
    return EndpointCloud(flow.eta, rule.weights, jacobians)


def apply_tlambda(model: OperatorModel, drift: VectorField, lam: float, eps: float,
                  psi: ScalarField, x, quad: QuadratureSpec = DEFAULT_QUAD):
    """T_lambda psi(x) = R(lambda + 1/eps, L)[psi(eta(eps, .))/eps](x)"""
    batch, single = _as_batch(x)
    rule = tlambda_rule(model, lam, eps, quad)

    def run(rows):
        cloud = endpoint_cloud(model, drift, rule, batch[rows])
        return psi.value(cloud.points) @ cloud.weights

    values = np.concatenate(map_batches(run, _chunks(batch.shape[0], rule.size)))
    return float(values[0]) if single else values


def tlambda_gradient(model: OperatorModel, drift: VectorField, lam: float, eps: float,
                     psi: ScalarField, x, quad: QuadratureSpec = DEFAULT_QUAD) -> np.ndarray:
    """D T_lambda psi(x) through the chain rule on the endpoint cloud"""
    if psi.gradient is None:
        raise ModelValidationError(f"{psi.name} has no gradient oracle")
    batch, single = _as_batch(x)
    rule = tlambda_rule(model, lam, eps, quad)

    def run(rows):
        cloud = endpoint_cloud(model, drift, rule, batch[rows], with_jacobian=True)
        return np.einsum("nmi,nmij,m->nj", psi.gradient(cloud.points), cloud.jacobians,
                         cloud.weights)

    values = np.concatenate(map_batches(run, _chunks(batch.shape[0], rule.size * model.dim)))
    return values[0] if single else values


@dataclass(frozen=True)
class ResolventSolution:
    """phi_eps = R(lambda, N_eps) f on a collocation grid with an off-grid oracle"""
    phi_eps: ScalarField
    lam: float
    eps: float
    iterations: int
    residual_sup: float
    contraction_ratio_observed: float
    tol: float
    grid: TensorGrid
    grid_values: np.ndarray
    trace: Tuple[float, ...]
    interpolation_error: float
    f: ScalarField
    drift: VectorField
    params: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lambda": self.lam,
            "eps": self.eps,
            "iterations": self.iterations,
            "residual_sup": self.residual_sup,
            "contraction_ratio_observed": self.contraction_ratio_observed,
            "tol": self.tol,
            "interpolation_error": self.interpolation_error,
            "grid": self.grid.describe(),
            "nodes": self.grid.nodes().tolist(),
            "values": self.grid_values.tolist(),
            "trace": list(self.trace),
            "f": self.f.describe(),
            "drift": self.drift.describe(),
            **self.params,
        }


def _assemble_tlambda(model: OperatorModel, drift: VectorField, rule: TLambdaRule,
                      grid: TensorGrid) -> sparse.csr_matrix:
    nodes = grid.nodes()

    def block(rows):
        cloud = endpoint_cloud(model, drift, rule, nodes[rows])
        return grid.operator_rows(cloud.points, cloud.weights)

    blocks = map_batches(block, _chunks(grid.size, rule.size))
    matrix = sparse.vstack(blocks).tocsr()
    logger.debug("T_lambda matrix: %d rows, %d nonzeros", matrix.shape[0], matrix.nnz)
    return matrix


def solve_resolvent_neps(model: OperatorModel, drift: VectorField, lam: float, eps: float,
                         f: ScalarField, quad: QuadratureSpec = DEFAULT_QUAD,
                         tol: float = DEFAULT_TOL, grid: TensorGrid = None) -> ResolventSolution:
    """Picard iteration phi <- R(lambda + 1/eps, L) f + T_lambda phi from phi = R(lambda + 1/eps, L) f"""
    _check_lambda_eps(lam, eps)
    if tol <= 0:
        raise ModelValidationError(f"tol must be positive, got {tol}")
    grid = grid or default_grid(model.dim)
    if grid.dim != model.dim:
        raise ModelValidationError(f"grid dimension {grid.dim} differs from model dimension {model.dim}")

    lam_shift = lam + 1.0 / eps
    nodes = grid.nodes()
    rhs, _ = resolvent_estimate(model, f, lam_shift, nodes, quad)
    rule = tlambda_rule(model, lam, eps, quad)
    t_matrix = _assemble_tlambda(model, drift, rule, grid)

    cap = max_iterations(tol, f.sup_norm, lam, eps)
    floor = 1e-13 * max(1.0, f.sup_norm)
    phi = rhs.copy()
    trace, ratio, previous = [], 0.0, None
    for iteration in range(1, cap + 1):
        updated = rhs + t_matrix @ phi
        change = float(np.max(np.abs(updated - phi)))
        trace.append(change)
        if previous is not None and previous > floor:
            ratio = max(ratio, change / previous)
        previous = change
        phi = updated
        logger.debug("fixed point iteration %d: update %.3e", iteration, change)
        if change < tol:
            break
    else:
        raise SolverConvergenceError(
            f"fixed point did not reach tol {tol:.1e} in {cap} iterations (last update {trace[-1]:.2e})")

    residual = float(np.max(np.abs(phi - rhs - t_matrix @ phi)))
    interp_error = grid.interpolation_error(phi)
    logger.info("R(%.3g, N_eps) f with eps=%.3g: %d iterations, residual %.2e, ratio %.4f",
                lam, eps, iteration, residual, ratio)

    grid_values = phi.copy()
    grid_values.setflags(write=False)

    def value(x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, model.dim)
        base, _ = resolvent_estimate(model, f, lam_shift, flat, quad)

        def run(rows):
            cloud = endpoint_cloud(model, drift, rule, flat[rows])
            return grid.interpolate(grid_values, cloud.points) @ cloud.weights

        extra = np.concatenate(map_batches(run, _chunks(flat.shape[0], rule.size)))
        return (base + extra).reshape(x.shape[:-1])

    def gradient(x):
        x = np.asarray(x, dtype=float)
        eye = np.eye(model.dim)
        return np.stack([(value(x + FD_STEP * eye[i]) - value(x - FD_STEP * eye[i])) / (2 * FD_STEP)
                         for i in range(model.dim)], axis=-1)

    c1 = gradient_constant(model, drift, lam, eps)
    grad_bound = c1 * f.grad_sup_norm if c1 is not None and f.grad_sup_norm is not None else None
    phi_eps = ScalarField(
        value=value, sup_norm=f.sup_norm / lam, gradient=gradient, grad_sup_norm=grad_bound,
        name=f"R({lam:g},N_{eps:g})[{f.name}]",
        params={"lambda": lam, "eps": eps})
    return ResolventSolution(
        phi_eps=phi_eps, lam=lam, eps=eps, iterations=iteration, residual_sup=residual,
        contraction_ratio_observed=ratio, tol=tol, grid=grid, grid_values=grid_values,
        trace=tuple(trace), interpolation_error=interp_error, f=f, drift=drift,
        params={"quadrature": quad.describe()})


def _cos_pair(rng: np.random.Generator, dim: int):
    """Two waves c_i cos(<k,x> + b_i) along one direction; returns fields and sup |psi1 - psi2|"""
    k = rng.standard_normal(dim)
    k *= rng.uniform(0.3, 2.0) / np.linalg.norm(k)
    c = rng.uniform(0.2, 1.0, size=2) * rng.choice([-1.0, 1.0], size=2)
    b = rng.uniform(0.0, 2.0 * math.pi, size=2)
    amplitude = float(abs(c[0] * np.exp(1j * b[0]) - c[1] * np.exp(1j * b[1])))

    def wave(ci, bi):
        return ScalarField(
            value=lambda x: ci * np.cos(np.asarray(x) @ k + bi),
            sup_norm=abs(ci),
            gradient=lambda x: (-ci * np.sin(np.asarray(x) @ k + bi))[..., None] * k,
            grad_sup_norm=abs(ci) * float(np.linalg.norm(k)),
            name="wave", params={"k": k.tolist(), "c": float(ci), "b": float(bi)})

    return wave(c[0], b[0]), wave(c[1], b[1]), amplitude


def check_tlambda_contraction(model: OperatorModel, drift: VectorField,
                              lambdas: Sequence[float], eps_list: Sequence[float],
                              sampler: SupSampler, quad: QuadratureSpec = DEFAULT_QUAD,
                              pairs: int = 20, seed: int = 0) -> List[CheckReport]:
    """Observed Lipschitz ratio of T_lambda on wave pairs, and the gradient bounds of T_lambda"""
    x = sampler.points()
    head = x[: min(32, len(x))]
    reports = []
    for lam in lambdas:
        for eps in eps_list:
            rule = tlambda_rule(model, lam, eps, quad)
            rng = np.random.default_rng(seed)
            waves = [_cos_pair(rng, model.dim) for _ in range(pairs)]

            def run(rows):
                cloud = endpoint_cloud(model, drift, rule, x[rows])
                return np.stack([(p1.value(cloud.points) - p2.value(cloud.points)) @ cloud.weights
                                 for p1, p2, _ in waves], axis=1)

            diffs = np.concatenate(map_batches(run, _chunks(len(x), rule.size)), axis=0)
            ratios = np.max(np.abs(diffs), axis=0) / np.array([amp for _, _, amp in waves])
            q = 1.0 / (1.0 + lam * eps)
            info = {"lambda": lam, "eps": eps, "pairs": pairs, "drift": drift.name,
                    **quad.describe()}
            reports.append(worst_case(
                f"perturbation.tlambda_contraction.lambda={lam:g},eps={eps:g}",
                "contraction |T_lambda psi1 - T_lambda psi2| <= ||psi1 - psi2||/(1 + lambda eps)",
                ratios, q, INEQUALITY_SLACK * q, params=info, seed=seed,
                sampler=sampler.describe()))

            psi = waves[0][0]
            c1_ratio = math.exp(eps * drift.k_const) / (1.0 + eps * (lam - model.omega))
            grads = tlambda_gradient(model, drift, lam, eps, psi, head, quad)
            reports.append(worst_case(
                f"perturbation.tlambda_gradient.lambda={lam:g},eps={eps:g}",
                "gradient |D T_lambda psi| <= e^{eps K}/(1 + eps(lambda - omega)) ||Dpsi||_0",
                np.linalg.norm(grads, axis=1), c1_ratio * psi.grad_sup_norm,
                INEQUALITY_SLACK * c1_ratio * psi.grad_sup_norm, params=info, seed=seed,
                sampler=sampler.describe(), informational=True))
            reports.append(CheckReport.evaluate(
                f"perturbation.tlambda_c1_ratio.lambda={lam:g},eps={eps:g}",
                "C1 contraction e^{eps K}/(1 + eps(lambda - omega)) < 1",
                c1_ratio, 1.0, 0.0, params=info, seed=seed, informational=True))
    return reports


def residual_fd_step(grid: TensorGrid) -> float:
    """Difference step for L phi_eps, at least two grid cells so kinks of the interpolant average out"""
    return max(RESIDUAL_FD_STEP, 2.0 * grid.spacing)


def _interior_points(sampler: SupSampler, grid: TensorGrid, count: int) -> np.ndarray:
    x = sampler.points()[:count]
    reach = np.max(np.abs(x)) if x.size else 0.0
    limit = 0.5 * grid.radius
    return x * (limit / reach) if reach > limit else x


def theorem_bound(model: OperatorModel, drift: VectorField, f: ScalarField, lam: float,
                  eps: float, c1: float) -> float:
    """c1 ||F||_0 theta_Df(||F||_0 eps) + c1 ||Df||_0 K ||F||_0 eps"""
    reach = drift.f_sup_norm * eps
    return float(c1 * drift.f_sup_norm * f.grad_modulus(reach)
                 + c1 * f.grad_sup_norm * drift.k_const * drift.f_sup_norm * eps)


def check_solution(model: OperatorModel, solution: ResolventSolution, sampler: SupSampler,
                   count: int = 64) -> List[CheckReport]:
    """Solver invariants, dissipativity, gradient bound and the residual identities of phi_eps"""
    phi, f, drift = solution.phi_eps, solution.f, solution.drift
    lam, eps = solution.lam, solution.eps
    x = _interior_points(sampler, solution.grid, count)
    tag = f"lambda={lam:g},eps={eps:g}"
    info = {"lambda": lam, "eps": eps, "f": f.name, "drift": drift.name,
            **solution.grid.describe()}
    common = {"params": info, "seed": sampler.seed, "sampler": sampler.describe()}
    q = 1.0 / (1.0 + lam * eps)
    reports = [
        CheckReport.evaluate(f"perturbation.solution.residual.{tag}",
                             "fixed point residual |phi - R(lambda+1/eps,L)f - T_lambda phi| <= tol",
                             solution.residual_sup, solution.tol, 0.0, **common),
        CheckReport.evaluate(f"perturbation.solution.contraction_ratio.{tag}",
                             "observed contraction ratio <= 1/(1 + lambda eps)",
                             solution.contraction_ratio_observed, q + INEQUALITY_SLACK, 0.0,
                             **common),
    ]

    values = phi.value(x)
    f_values = f.value(x)
    reports.append(CheckReport.evaluate(
        f"perturbation.solution.sup_bound.{tag}", "resolvent bound ||phi_eps|| <= ||f||/lambda",
        float(np.max(np.abs(values))), f.sup_norm / lam * (1.0 + DISSIPATIVITY_SLACK), 0.0,
        **common))
    reports.append(CheckReport.evaluate(
        f"perturbation.dissipativity.{tag}", "dissipativity lambda ||R(lambda,N_eps) f|| <= ||f||",
        lam * float(np.max(np.abs(values))),
        float(np.max(np.abs(f_values))) * (1.0 + DISSIPATIVITY_SLACK), 0.0, **common))

    # L phi_eps from differences of the off-grid values only; the grid gap
    # phi_grid - phi_eps enters N_eps through F_eps, hence the 1/eps on it
    l_values, fd_error = fd_generator(model, phi, x, residual_fd_step(solution.grid))
    budget = fd_error + 4.0 * solution.interpolation_error / eps + RESIDUAL_FLOOR
    n_eps = l_values + apply_feps(phi, drift, eps, x)
    identity = np.abs(lam * values - n_eps - f_values)
    reports.append(worst_case(
        f"perturbation.residual_identity.{tag}", "resolvent identity lambda phi - N_eps phi = f",
        identity, 0.0, budget, **common))

    c1 = gradient_constant(model, drift, lam, eps)
    if c1 is None:
        logger.warning("lambda=%g is below the gradient threshold %.4g at eps=%g; "
                       "gradient checks skipped", lam, gradient_threshold(model, drift, eps), eps)
        return reports
    if f.gradient is None or f.grad_sup_norm is None:
        return reports

    grads = phi.gradient(x)
    bound = c1 * f.grad_sup_norm
    spacing_error = 2.0 * solution.interpolation_error / solution.grid.spacing
    reports.append(worst_case(
        f"perturbation.gradient_bound.{tag}",
        "gradient bound ||D phi_eps|| <= ||Df||/(lambda - omega - (e^{K eps}-1)/eps)",
        np.linalg.norm(grads, axis=1), bound * (1.0 + INEQUALITY_SLACK), spacing_error + 1e-9,
        **common))
    if f.grad_modulus is None:
        return reports

    fcal = np.sum(grads * drift.value(x), axis=-1)
    n0_residual = lam * values - l_values - fcal - f_values
    rhs = theorem_bound(model, drift, f, lam, eps, c1)
    residual_budget = budget + 1e-6 * drift.f_sup_norm + spacing_error * drift.f_sup_norm
    reports.append(worst_case(
        f"perturbation.n0_residual.{tag}",
        "limit residual |lambda phi_eps - N_0 phi_eps - f| <= c1 ||F|| theta_Df(||F|| eps) "
        "+ c1 ||Df|| K ||F|| eps",
        np.abs(n0_residual), rhs, residual_budget, **common))
    reports.append(CheckReport.evaluate(
        f"perturbation.n0_dissipative.{tag}",
        "dissipativity of N_0: ||lambda phi - L phi - F phi|| >= lambda ||phi|| - bound",
        lam * float(np.max(np.abs(values))) - rhs,
        float(np.max(np.abs(lam * values - l_values - fcal))), residual_budget, **common))

    printed_gap = lam - model.omega - drift.k_const * math.exp(drift.k_const)
    if printed_gap <= 0:
        logger.warning("printed constant 1/(lambda - omega - K e^K) undefined at lambda=%g", lam)
    else:
        reports.append(worst_case(
            f"perturbation.n0_residual_printed_constant.{tag}",
            "limit residual with c1 = 1/(lambda - omega - K e^K)",
            np.abs(n0_residual), theorem_bound(model, drift, f, lam, eps, 1.0 / printed_gap),
            residual_budget, informational=True, **common))
    return reports
