"""
SDE simulation - mild solution X(t, x) of dX = (AX + F(X))dt + dW_Q by exponential Euler

X_{k+1} = e^{hA} X_k + (int_0^h e^{sA} ds) F(X_k) + G_k,  G_k ~ N(0, Q_h)

The scheme is exact when F = 0. Paths are simulated in fixed-size batches,
each seeded from the master seed by its batch counter.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from models.errors import ModelValidationError
from models.fields import ScalarField, VectorField
from models.operator_model import OperatorModel, covariance_at, integrated_semigroup
from models.reports import CheckReport, ConvergenceTable
from utils.parallel import batch_rng, map_batches
from utils.perturbation import solve_resolvent_neps
from utils.quadrature import QuadratureSpec, psd_factor

logger = logging.getLogger(__name__)

BATCH_PATHS = 4096
DEFAULT_DT = 1e-3
DEFAULT_PATHS = 100_000
MC_TAIL_TOL = 1e-6
STEP_TOL = 1e-9


@dataclass(frozen=True)
class PathEstimate:
    """Monte Carlo estimate of P_t phi(x)"""
    t: float
    x: Tuple[float, ...]
    phi_mean: float
    std_error: float
    mc_count: int
    dt: float
    seed: int

    def to_dict(self) -> Dict:
        return {"t": self.t, "x": list(self.x), "phi_mean": self.phi_mean,
                "std_error": self.std_error, "mc_count": self.mc_count, "dt": self.dt,
                "seed": self.seed}


@dataclass(frozen=True)
class LaplaceEstimate:
    """Monte Carlo estimate of R(lambda, N) phi(x) = int e^{-lambda t} P_t phi(x) dt"""
    value: float
    std_error: float
    tail_bound: float
    mc_count: int
    dt: float
    seed: int

    @property
    def error_bar(self) -> float:
        return 3.0 * self.std_error + self.tail_bound


@dataclass(frozen=True)
class ExponentialEuler:
    """One-step matrices of the scheme for a fixed step h"""
    step: float
    e_h: np.ndarray
    s_h: np.ndarray
    noise: np.ndarray

    @staticmethod
    def build(model: OperatorModel, step: float) -> "ExponentialEuler":
        return ExponentialEuler(step, model.semigroup_matrix(step),
                                integrated_semigroup(model, step),
                                psd_factor(covariance_at(model, step).covariance))

    def advance(self, state: np.ndarray, drift: VectorField, rng: np.random.Generator) -> np.ndarray:
        out = state @ self.e_h.T + rng.standard_normal(state.shape) @ self.noise.T
        if not drift.is_zero:
            out += drift.value(state) @ self.s_h.T
        return out


def _validate(t: float, dt: float, n_paths: int) -> None:
    errors = []
    if t < 0:
        errors.append(f"t must be nonnegative, got {t}")
    if dt <= 0:
        errors.append(f"dt must be positive, got {dt}")
    if n_paths < 1:
        errors.append(f"n_paths must be at least 1, got {n_paths}")
    if errors:
        raise ModelValidationError("; ".join(errors))


def _starts(x, dim: int, n_paths: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.shape[0] != dim:
            raise ModelValidationError(f"starting point must have length {dim}")
        return np.broadcast_to(x, (n_paths, dim))
    if x.shape != (n_paths, dim):
        raise ModelValidationError(f"starting points must have shape ({n_paths}, {dim})")
    return x


def _batches(n_paths: int) -> List[Tuple[int, slice]]:
    count = int(math.ceil(n_paths / BATCH_PATHS))
    return [(b, slice(b * BATCH_PATHS, min((b + 1) * BATCH_PATHS, n_paths))) for b in range(count)]


def simulate_states(model: OperatorModel, drift: VectorField, x, record_steps: Sequence[int],
                    step: float, n_paths: int, seed: int) -> np.ndarray:
    """States after each of record_steps steps of size step, shape (len(record_steps), n_paths, d)"""
    record_steps = [int(k) for k in record_steps]
    if any(b < a for a, b in zip(record_steps, record_steps[1:])) or min(record_steps) < 0:
        raise ModelValidationError("record steps must be nonnegative and nondecreasing")
    starts = _starts(x, model.dim, n_paths)
    scheme = ExponentialEuler.build(model, step)

    def run(batch):
        index, rows = batch
        rng = batch_rng(seed, index)
        state = np.array(starts[rows], dtype=float)
        out, done = [], 0
        for target in record_steps:
            for _ in range(target - done):
                state = scheme.advance(state, drift, rng)
            done = target
            out.append(state.copy())
        return np.stack(out)

    return np.concatenate(map_batches(run, _batches(n_paths)), axis=1)


def _uniform_steps(t: float, dt: float) -> Tuple[int, float]:
    steps = max(1, int(math.ceil(t / dt - STEP_TOL)))
    return steps, t / steps


def simulate_mild(model: OperatorModel, drift: VectorField, x, t: float,
                  dt: float = DEFAULT_DT, n_paths: int = DEFAULT_PATHS, seed: int = 0) -> np.ndarray:
    """Samples of X(t, x), shape (n_paths, d); deterministic given seed"""
    _validate(t, dt, n_paths)
    if t == 0:
        return np.array(_starts(x, model.dim, n_paths), dtype=float)
    steps, step = _uniform_steps(t, dt)
    return simulate_states(model, drift, x, [steps], step, n_paths, seed)[0]


def _mean_and_error(values: np.ndarray) -> Tuple[float, float]:
    if values.size < 2:
        return float(np.mean(values)), 0.0
    return float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(values.size))


def apply_pt(model: OperatorModel, drift: VectorField, phi: ScalarField, t: float, x,
             dt: float = DEFAULT_DT, n_paths: int = DEFAULT_PATHS, seed: int = 0) -> PathEstimate:
    """P_t phi(x) = E phi(X(t, x)) with its standard error"""
    _validate(t, dt, n_paths)
    x = np.asarray(x, dtype=float)
    if t == 0:
        return PathEstimate(0.0, tuple(x.tolist()), float(phi.value(x)), 0.0, n_paths, dt, seed)
    mean, error = _mean_and_error(phi.value(simulate_mild(model, drift, x, t, dt, n_paths, seed)))
    logger.debug("P_%g phi = %.6f +- %.2e (%d paths)", t, mean, error, n_paths)
    return PathEstimate(float(t), tuple(x.tolist()), mean, error, n_paths, dt, seed)


def _laplace_step_weights(lam: float, step: float, steps: int) -> np.ndarray:
    """Exact e^{-lambda t} weights of piecewise-linear interpolation on the step grid"""
    decay = math.exp(-lam * step)
    first = -math.expm1(-lam * step) / lam
    moment = (first - step * decay) / lam
    left = first - moment / step
    right = moment / step
    starts = np.exp(-lam * step * np.arange(steps))
    weights = np.zeros(steps + 1)
    weights[:-1] += starts * left
    weights[1:] += starts * right
    return weights


def resolvent_n_mc(model: OperatorModel, drift: VectorField, phi: ScalarField, lam: float, x,
                   dt: float = DEFAULT_DT, n_paths: int = DEFAULT_PATHS, seed: int = 0,
                   tail_tol: float = MC_TAIL_TOL) -> LaplaceEstimate:
    """R(lambda, N) phi(x) by per-path Laplace integrals of phi(X(t, x))

    Each path contributes int_0^T e^{-lambda t} phi(X_t) dt on its own step grid
    plus e^{-lambda T}/lambda phi(X_T); the weights integrate constants exactly.
    """
    if lam <= 0:
        raise ModelValidationError(f"lambda must be positive, got {lam}")
    _validate(0.0, dt, n_paths)
    t_max = -math.log(tail_tol * lam) / lam if tail_tol * lam < 1.0 else 1.0 / lam
    steps, step = _uniform_steps(t_max, dt)
    weights = _laplace_step_weights(lam, step, steps)
    tail = math.exp(-lam * t_max) / lam
    weights[-1] += tail
    starts = _starts(x, model.dim, n_paths)
    scheme = ExponentialEuler.build(model, step)

    def run(batch):
        index, rows = batch
        rng = batch_rng(seed, index)
        state = np.array(starts[rows], dtype=float)
        total = weights[0] * phi.value(state)
        for k in range(1, steps + 1):
            state = scheme.advance(state, drift, rng)
            total = total + weights[k] * phi.value(state)
        return total

    per_path = np.concatenate(map_batches(run, _batches(n_paths)))
    mean, error = _mean_and_error(per_path)
    logger.debug("R(%g, N) phi = %.6f +- %.2e (T=%.3g, %d steps)", lam, mean, error, t_max, steps)
    return LaplaceEstimate(mean, error, 2.0 * tail * phi.sup_norm, n_paths, step, seed)


def check_sde_properties(model: OperatorModel, drift: VectorField, phi: ScalarField, x,
                         t: float = 0.5, dt: float = 0.01, n_paths: int = 20_000,
                         seed: int = 0, nested_paths: int = 200) -> List[CheckReport]:
    """Mean-square continuity and the Markov property of the simulated process"""
    x = np.asarray(x, dtype=float)
    base = max(1, int(round(t / dt)))
    lags = [4, 16, 64]
    states = simulate_states(model, drift, x, [base] + [base + lag for lag in lags],
                             dt, n_paths, seed)
    info = {"t": base * dt, "dt": dt, "paths": n_paths, "drift": drift.name}
    reports = []
    second_moment = float(np.mean(np.sum(states[0] ** 2, axis=1)))
    growth = math.exp(max(model.omega, 0.0) * lags[-1] * dt)
    for lag, later in zip(lags, states[1:]):
        delta = lag * dt
        sq = np.sum((later - states[0]) ** 2, axis=1)
        msq, msq_error = _mean_and_error(sq)
        linear = np.linalg.norm(model.semigroup_matrix(delta) - np.eye(model.dim), ord=2)
        bound = 3.0 * (linear ** 2 * second_moment + (delta * growth * drift.f_sup_norm) ** 2
                       + float(np.trace(covariance_at(model, delta).covariance)))
        reports.append(CheckReport.evaluate(
            f"sde.mean_square.delta={delta:g}",
            "mean-square continuity E|X(t+delta) - X(t)|^2 = O(delta)",
            msq, bound, 3.0 * msq_error, params={**info, "delta": delta}, seed=seed))

    outer = max(1, nested_paths)
    mid = simulate_states(model, drift, x, [base], dt, outer, seed + 1)[0]
    inner = simulate_states(model, drift, np.repeat(mid, nested_paths, axis=0), [base], dt,
                            outer * nested_paths, seed + 2)[0]
    inner_means = phi.value(inner).reshape(outer, nested_paths).mean(axis=1)
    nested, nested_error = _mean_and_error(inner_means)
    direct = apply_pt(model, drift, phi, 2 * base * dt, x, dt, n_paths, seed + 3)
    combined = 3.0 * math.hypot(direct.std_error, nested_error)
    reports.append(CheckReport.evaluate(
        "sde.markov", "Markov property P_(t+s) phi = P_t P_s phi",
        abs(direct.phi_mean - nested), 0.0, combined,
        params={**info, "phi": phi.name, "nested_paths": nested_paths}, seed=seed))
    return reports


def scheme_bias(drift: VectorField, f: ScalarField, lam: float, dt: float) -> float:
    """First-order weak error allowance of the exponential Euler oracle; zero when F = 0"""
    if drift.is_zero:
        return 0.0
    norm = f.grad_sup_norm if f.grad_sup_norm is not None else f.sup_norm
    return dt * drift.f_sup_norm * max(1.0, drift.k_const) * norm / lam


def extrapolated_limit(eps_list: Sequence[float], distances: Sequence[float]) -> float:
    """Distance at eps -> 0 from the last two entries, assuming a first-order remainder"""
    if len(distances) < 2:
        return distances[-1]
    ratio = eps_list[-2] / eps_list[-1]
    return max(distances[-1] - (distances[-2] - distances[-1]) / (ratio - 1.0), 0.0)


def closure_consistency(model: OperatorModel, drift: VectorField, f: ScalarField, lam: float,
                        eps_list: Sequence[float], points: np.ndarray, quad: QuadratureSpec,
                        tol: float = 1e-6, dt: float = DEFAULT_DT, n_paths: int = DEFAULT_PATHS,
                        seed: int = 0, grid=None) -> Tuple[List[CheckReport], ConvergenceTable]:
    """Distance between R(lambda, N_eps) f and the SDE Laplace oracle over decreasing eps

    The limit check extrapolates the O(eps) remainder out of the last two
    distances; the noise of both enters, hence the (r + 1)/(r - 1) factor on
    the error bar for an eps ratio r.
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ModelValidationError("eps_list must be strictly decreasing")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    oracle = [resolvent_n_mc(model, drift, f, lam, p, dt, n_paths, seed + i)
              for i, p in enumerate(points)]
    oracle_values = np.array([o.value for o in oracle])
    error_bar = max(o.error_bar for o in oracle)

    distances, solver_slack = [], 0.0
    for eps in eps_list:
        solution = solve_resolvent_neps(model, drift, lam, eps, f, quad, tol, grid)
        approx = solution.phi_eps.value(points)
        distances.append(float(np.max(np.abs(approx - oracle_values))))
        solver_slack = max(solver_slack, (solution.residual_sup + solution.interpolation_error)
                           * (1.0 + lam * eps) / (lam * eps))
        logger.info("closure eps=%g: grid distance %.3e (error bar %.2e)", eps, distances[-1],
                    error_bar)

    bias = scheme_bias(drift, f, lam, dt)
    limit = extrapolated_limit(eps_list, distances)
    amplification = 1.0
    if len(eps_list) > 1:
        ratio = eps_list[-2] / eps_list[-1]
        amplification = (ratio + 1.0) / (ratio - 1.0)
    info = {"lambda": lam, "f": f.name, "drift": drift.name, "eps_list": eps_list,
            "distances": distances, "dt": dt, "paths": n_paths, "scheme_bias": bias,
            "last_distance": distances[-1]}
    budget = error_bar + solver_slack
    reports = [
        CheckReport.evaluate(
            "sde.closure_monotone", "closure: distance to the SDE resolvent nonincreasing in eps",
            float(np.max(np.diff(distances))) if len(distances) > 1 else 0.0, 0.0, budget,
            params=info, seed=seed),
        CheckReport.evaluate(
            "sde.closure_limit", "closure: R(lambda, N_eps) f -> R(lambda, N) f",
            limit, 0.0, amplification * budget + bias, params=info, seed=seed),
    ]
    table = ConvergenceTable.fit("eps", eps_list, distances,
                                 notes=f"oracle error bar {error_bar:.3e}")
    return reports, table
