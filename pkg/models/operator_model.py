"""
Operator Model - the linear part of the problem on a d-dimensional truncation of H

Holds the generator A, the covariance Q, the growth type omega, the semigroup
e^{tA}, the covariance Q_t = int_0^t e^{sA} Q e^{sA^T} ds and its Gaussian law.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
from scipy.linalg import expm

from models.errors import ModelValidationError, raise_if_invalid
from models.reports import CheckReport

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-12
EIGEN_TOL = 1e-12
GROWTH_SLACK = 1e-9
QUAD_NODES_PER_UNIT = 32
QUAD_TOL = 1e-10
GROWTH_GRID = np.linspace(0.0, 5.0, 51)[1:]


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class OperatorModel:
    """Truncated (A, Q, omega) on R^dim"""
    dim: int
    a_matrix: np.ndarray
    q_matrix: np.ndarray
    omega: float
    diagonal: bool

    @property
    def a_diag(self) -> np.ndarray:
        return np.diag(self.a_matrix)

    def semigroup_matrix(self, t: float) -> np.ndarray:
        """e^{tA} as a dense matrix"""
        if self.diagonal:
            return np.diag(np.exp(self.a_diag * t))
        return expm(t * self.a_matrix)

    @staticmethod
    def validate_model_data(dim: int, a_matrix: np.ndarray, q_matrix: np.ndarray) -> tuple:
        """Validate shapes and the symmetric positive semidefinite Q"""
        errors = []

        if not isinstance(dim, (int, np.integer)) or dim < 1:
            errors.append("dim must be a positive integer")
            return False, errors

        if a_matrix.shape != (dim, dim):
            errors.append(f"A must be {dim}x{dim}, got {a_matrix.shape}")
        if q_matrix.shape != (dim, dim):
            errors.append(f"Q must be {dim}x{dim}, got {q_matrix.shape}")
        if errors:
            return False, errors

        if not (np.all(np.isfinite(a_matrix)) and np.all(np.isfinite(q_matrix))):
            errors.append("A and Q must be finite")
        elif np.max(np.abs(q_matrix - q_matrix.T)) > SYMMETRY_TOL:
            errors.append("Q is not symmetric")
        else:
            min_eig = float(np.min(np.linalg.eigvalsh(q_matrix)))
            if min_eig < -EIGEN_TOL:
                errors.append(f"Q is not positive semidefinite (eigenvalue {min_eig:.3e})")

        return len(errors) == 0, errors


@dataclass(frozen=True)
class GaussianLaw:
    """Centered Gaussian N(mean, covariance) with a cached symmetric square root"""
    mean: np.ndarray
    covariance: np.ndarray
    factor: np.ndarray

    @staticmethod
    def from_covariance(covariance: np.ndarray, mean: np.ndarray = None) -> "GaussianLaw":
        cov = 0.5 * (covariance + covariance.T)
        eigvals, eigvecs = np.linalg.eigh(cov)
        scale = max(1.0, float(np.max(np.abs(eigvals)))) if eigvals.size else 1.0
        if eigvals.size and eigvals.min() < -EIGEN_TOL * scale:
            raise ModelValidationError(f"covariance is indefinite (eigenvalue {eigvals.min():.3e})")
        eigvals = np.clip(eigvals, 0.0, None)
        factor = (eigvecs * np.sqrt(eigvals)) @ eigvecs.T
        if mean is None:
            mean = np.zeros(cov.shape[0])
        return GaussianLaw(_frozen(mean), _frozen(cov), _frozen(factor))

    @property
    def dim(self) -> int:
        return self.covariance.shape[0]


def _log_norm(a_matrix: np.ndarray) -> float:
    """Logarithmic 2-norm: the smallest omega with ||e^{tA}|| <= e^{omega t}"""
    return float(np.max(np.linalg.eigvalsh(0.5 * (a_matrix + a_matrix.T))))


def verified_growth_rate(a_matrix: np.ndarray, times: np.ndarray = GROWTH_GRID) -> float:
    """max_t log||e^{tA}||/t on a time grid"""
    norms = np.array([np.linalg.norm(expm(t * a_matrix), 2) for t in times])
    return float(np.max(np.log(norms) / times))


def build_model(params: Dict) -> OperatorModel:
    """Build and validate an OperatorModel from a configuration mapping

    Keys: dim, a_diag or a_matrix, q_diag or q_matrix, optional omega.
    """
    dim = params.get("dim")
    if "a_matrix" in params:
        a_matrix = np.asarray(params["a_matrix"], dtype=float)
    elif "a_diag" in params:
        a_matrix = np.diag(np.asarray(params["a_diag"], dtype=float).reshape(-1))
    else:
        raise ModelValidationError("model needs a_diag or a_matrix")

    if "q_matrix" in params:
        q_matrix = np.asarray(params["q_matrix"], dtype=float)
    elif "q_diag" in params:
        q_matrix = np.diag(np.asarray(params["q_diag"], dtype=float).reshape(-1))
    else:
        raise ModelValidationError("model needs q_diag or q_matrix")

    if dim is None:
        dim = a_matrix.shape[0]
    a_matrix = np.atleast_2d(a_matrix)
    q_matrix = np.atleast_2d(q_matrix)
    is_valid, errors = OperatorModel.validate_model_data(dim, a_matrix, q_matrix)
    raise_if_invalid(is_valid, errors)

    diagonal = bool(np.count_nonzero(a_matrix - np.diag(np.diag(a_matrix))) == 0)
    if diagonal:
        growth = float(np.max(np.diag(a_matrix)))
    else:
        growth = verified_growth_rate(a_matrix)

    omega = params.get("omega")
    if omega is None:
        omega = growth if diagonal else max(growth, _log_norm(a_matrix))
    omega = float(omega)

    if diagonal and omega < growth:
        raise ModelValidationError(
            f"omega={omega} is below the largest eigenvalue {growth} of diagonal A")
    if not diagonal:
        bounds = np.exp(omega * GROWTH_GRID) * (1.0 + GROWTH_SLACK)
        norms = np.array([np.linalg.norm(expm(t * a_matrix), 2) for t in GROWTH_GRID])
        if np.any(norms > bounds):
            raise ModelValidationError(
                f"omega={omega} is below the verified growth rate {growth:.6g} of e^(tA)")

    q_matrix = 0.5 * (q_matrix + q_matrix.T)
    logger.debug("built model dim=%d diagonal=%s omega=%.6g", dim, diagonal, omega)
    return OperatorModel(int(dim), _frozen(a_matrix), _frozen(q_matrix), omega, diagonal)


def integrate_matrix(integrand, t: float, nodes_per_unit: int = QUAD_NODES_PER_UNIT,
                     tol: float = QUAD_TOL, max_doublings: int = 12) -> np.ndarray:
    """Composite Gauss-Legendre integral of a matrix-valued s -> integrand(s) over [0, t]

    Panels of width <= 1 with nodes_per_unit nodes each; the panel count doubles
    until the Frobenius change drops below tol.
    """
    nodes, weights = np.polynomial.legendre.leggauss(nodes_per_unit)

    def composite(panels: int) -> np.ndarray:
        edges = np.linspace(0.0, t, panels + 1)
        total = None
        for left, right in zip(edges[:-1], edges[1:]):
            half = 0.5 * (right - left)
            for node, weight in zip(nodes, weights):
                term = half * weight * integrand(left + half * (node + 1.0))
                total = term if total is None else total + term
        return total

    panels = max(1, int(math.ceil(t)))
    current = composite(panels)
    for _ in range(max_doublings):
        panels *= 2
        refined = composite(panels)
        change = np.linalg.norm(refined - current)
        current = refined
        if change < tol:
            return current
    logger.warning("matrix quadrature stopped at %d panels without reaching tol %.1e", panels, tol)
    return current


def _phi1(rates: np.ndarray, t: float) -> np.ndarray:
    """(e^{rate t} - 1)/rate with the rate -> 0 limit t"""
    rates = np.asarray(rates, dtype=float)
    out = np.full(rates.shape, float(t))
    nonzero = np.abs(rates) > 1e-14
    out[nonzero] = np.expm1(rates[nonzero] * t) / rates[nonzero]
    return out


def covariance_at(model: OperatorModel, t: float) -> GaussianLaw:
    """N(0, Q_t) with Q_t = int_0^t e^{sA} Q e^{sA^T} ds"""
    if t < 0:
        raise ModelValidationError(f"time must be nonnegative, got {t}")
    if t == 0:
        return GaussianLaw.from_covariance(np.zeros((model.dim, model.dim)))

    if model.diagonal:
        a = model.a_diag
        cov = model.q_matrix * _phi1(a[:, None] + a[None, :], t)
    else:
        a_matrix, q_matrix = model.a_matrix, model.q_matrix

        def integrand(s):
            e_sa = expm(s * a_matrix)
            return e_sa @ q_matrix @ e_sa.T

        cov = integrate_matrix(integrand, t)
    return GaussianLaw.from_covariance(cov)


def integrated_semigroup(model: OperatorModel, t: float) -> np.ndarray:
    """int_0^t e^{sA} ds (closed form for diagonal A)"""
    if model.diagonal:
        return np.diag(_phi1(model.a_diag, t))
    a_matrix = model.a_matrix
    return integrate_matrix(lambda s: expm(s * a_matrix), t)


def semigroup_apply(model: OperatorModel, t: float, x: np.ndarray) -> np.ndarray:
    """e^{tA} x for a single point (d,) or a batch (n, d)"""
    if t < 0:
        raise ModelValidationError(f"time must be nonnegative, got {t}")
    x = np.asarray(x, dtype=float)
    if model.diagonal:
        return x * np.exp(model.a_diag * t)
    return x @ model.semigroup_matrix(t).T


def sample_gaussian(law: GaussianLaw, n: int, seed: int) -> np.ndarray:
    """n draws of N(mean, covariance); identical output for identical seed"""
    if n < 1:
        raise ModelValidationError("sample count must be at least 1")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, law.dim))
    return z @ law.factor.T + law.mean


def check_model_invariants(model: OperatorModel, times: List[float] = None,
                           seed: int = 0) -> List[CheckReport]:
    """Growth bound, semigroup law, covariance flow identity and monotone trace"""
    times = list(times) if times is not None else [0.1, 0.5, 1.0, 2.0]
    rng = np.random.default_rng(seed)
    reports = []
    params = {"dim": model.dim, "omega": model.omega}

    for t in times:
        norm = np.linalg.norm(model.semigroup_matrix(t), 2)
        bound = math.exp(model.omega * t)
        reports.append(CheckReport.evaluate(
            f"model.growth.t={t:g}", "growth bound ||e^(tA)|| <= e^(omega t)",
            norm, bound, GROWTH_SLACK * bound, params={**params, "t": t}, seed=seed))

    law_error = 0.0
    flow_error = 0.0
    for _ in range(8):
        t, s = rng.uniform(0.0, 2.0, size=2)
        x = rng.standard_normal(model.dim)
        lhs = semigroup_apply(model, t + s, x)
        rhs = semigroup_apply(model, t, semigroup_apply(model, s, x))
        law_error = max(law_error, np.linalg.norm(lhs - rhs) / max(np.linalg.norm(x), 1e-300))
        e_s = model.semigroup_matrix(s)
        combined = covariance_at(model, s).covariance + e_s @ covariance_at(model, t).covariance @ e_s.T
        flow_error = max(flow_error, np.linalg.norm(covariance_at(model, t + s).covariance - combined))

    reports.append(CheckReport.evaluate(
        "model.semigroup_law", "semigroup law e^((t+s)A) = e^(tA) e^(sA)",
        law_error, 0.0, 1e-9, params=params, seed=seed))
    reports.append(CheckReport.evaluate(
        "model.covariance_flow", "covariance flow Q_(t+s) = Q_s + e^(sA) Q_t e^(sA^T)",
        flow_error, 0.0, 1e-8, params=params, seed=seed))

    grid = np.linspace(0.0, max(times), 21)
    traces = np.array([np.trace(covariance_at(model, t).covariance) for t in grid])
    drop = float(np.max(np.clip(traces[:-1] - traces[1:], 0.0, None)))
    reports.append(CheckReport.evaluate(
        "model.trace_monotone", "trace of Q_t nondecreasing in t",
        drop, 0.0, 1e-12, params=params, seed=seed))
    return reports
