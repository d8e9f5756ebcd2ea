"""
Ornstein-Uhlenbeck semigroup - R_t phi(x) = E phi(e^{tA}x + Y), Y ~ N(0, Q_t)

Cylindrical test functions phi = g(Dx) are integrated on the m-dimensional
Gaussian N(D e^{tA} x, D Q_t D^T); anything else uses the full d-dimensional
law. Resolvents are Laplace integrals of R_t.
"""
import logging
import math
from dataclasses import replace
from typing import List, Sequence, Tuple

import numpy as np

from models.errors import ModelValidationError, QuadratureError
from models.fields import ScalarField, SupSampler
from models.operator_model import OperatorModel, covariance_at, semigroup_apply
from models.reports import CheckReport, Estimate, worst_case
from utils.quadrature import QuadratureSpec, gaussian_expectation, laplace_rule

logger = logging.getLogger(__name__)

DEFAULT_QUAD = QuadratureSpec()
FD_STEP_GRADIENT = 1e-4
FD_STEP_VALUE = 1e-3


def _rt_at(model: OperatorModel, phi: ScalarField, t: float, x: np.ndarray,
           quad: QuadratureSpec, gradient: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """R_t phi (or D R_t phi) on a batch x (n, d); returns (values, standard errors)"""
    if t < 0:
        raise ModelValidationError(f"time must be nonnegative, got {t}")
    if gradient and phi.gradient is None:
        raise ModelValidationError(f"{phi.name} has no gradient oracle")
    e_ta = model.semigroup_matrix(t)
    q_t = covariance_at(model, t).covariance
    shifted = semigroup_apply(model, t, x)

    if phi.is_cylindrical and not (gradient and phi.profile_grad is None):
        dirs = phi.cylinder_dirs
        means = shifted @ dirs.T
        cov = dirs @ q_t @ dirs.T
        if not gradient:
            return gaussian_expectation(phi.profile, means, cov, quad)
        values, errors = gaussian_expectation(phi.profile_grad, means, cov, quad)
        return values @ dirs @ e_ta, errors @ np.abs(dirs @ e_ta)

    if not gradient:
        return gaussian_expectation(phi.value, shifted, q_t, quad)
    values, errors = gaussian_expectation(phi.gradient, shifted, q_t, quad)
    return values @ e_ta, errors @ np.abs(e_ta)


def _as_batch(x) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    return np.atleast_2d(x), x.ndim == 1


def estimate_rt(model: OperatorModel, phi: ScalarField, t: float, x,
                quad: QuadratureSpec = DEFAULT_QUAD) -> Estimate:
    """R_t phi(x) at one point together with its standard error"""
    values, errors = _rt_at(model, phi, t, np.atleast_2d(np.asarray(x, dtype=float)), quad)
    return Estimate(float(values[0]), float(errors[0]))


def apply_rt(model: OperatorModel, phi: ScalarField, t: float, x,
             quad: QuadratureSpec = DEFAULT_QUAD):
    """R_t phi(x) for one point (float) or a batch (n,)"""
    batch, single = _as_batch(x)
    values, _ = _rt_at(model, phi, t, batch, quad)
    return float(values[0]) if single else values


def apply_drt(model: OperatorModel, phi: ScalarField, t: float, x,
              quad: QuadratureSpec = DEFAULT_QUAD) -> np.ndarray:
    """D R_t phi(x) = e^{tA^T} E Dphi(e^{tA}x + Y)"""
    batch, single = _as_batch(x)
    values, _ = _rt_at(model, phi, t, batch, quad, gradient=True)
    return values[0] if single else values


def rt_field(model: OperatorModel, phi: ScalarField, t: float,
             quad: QuadratureSpec = DEFAULT_QUAD) -> ScalarField:
    """R_t phi as a ScalarField oracle"""
    gradient = None
    if phi.gradient is not None:
        gradient = lambda x: apply_drt(model, phi, t, x, quad)
    return ScalarField(
        value=lambda x: _rt_at(model, phi, t, np.asarray(x, dtype=float).reshape(-1, model.dim),
                               quad)[0].reshape(np.shape(x)[:-1]),
        sup_norm=phi.sup_norm, gradient=gradient, name=f"R_{t:g}[{phi.name}]")


def _value_hessian(value, x: np.ndarray, h: float) -> np.ndarray:
    """Central second differences of a value oracle"""
    dim = x.shape[-1]
    out = np.empty(x.shape + (dim,))
    eye = np.eye(dim)
    center = value(x)
    for i in range(dim):
        for j in range(i, dim):
            if i == j:
                out[..., i, i] = (value(x + h * eye[i]) - 2 * center
                                  + value(x - h * eye[i])) / h ** 2
            else:
                out[..., i, j] = out[..., j, i] = (
                    value(x + h * (eye[i] + eye[j])) - value(x + h * (eye[i] - eye[j]))
                    - value(x - h * (eye[i] - eye[j])) + value(x - h * (eye[i] + eye[j]))
                ) / (4 * h ** 2)
    return out


def _value_gradient(value, x: np.ndarray, h: float) -> np.ndarray:
    eye = np.eye(x.shape[-1])
    return np.stack([(value(x + h * eye[i]) - value(x - h * eye[i])) / (2 * h)
                     for i in range(x.shape[-1])], axis=-1)


def _hessian(phi: ScalarField, x: np.ndarray, fd_hessian: bool) -> np.ndarray:
    if phi.hessian is not None:
        return phi.hessian(x)
    if not fd_hessian:
        raise ModelValidationError(
            f"{phi.name} has no Hessian oracle; request fd_hessian=True for finite differences")
    if phi.gradient is not None:
        dim = x.shape[-1]
        out = np.empty(x.shape + (dim,))
        eye = np.eye(dim)
        h = FD_STEP_GRADIENT
        for i in range(dim):
            out[..., i, :] = (phi.gradient(x + h * eye[i]) - phi.gradient(x - h * eye[i])) / (2 * h)
        return 0.5 * (out + np.swapaxes(out, -1, -2))
    return _value_hessian(phi.value, x, FD_STEP_VALUE)


def _gradient(phi: ScalarField, x: np.ndarray) -> np.ndarray:
    if phi.gradient is not None:
        return phi.gradient(x)
    return _value_gradient(phi.value, x, FD_STEP_GRADIENT)


def _kolmogorov(model: OperatorModel, x: np.ndarray, hess: np.ndarray,
                grad: np.ndarray) -> np.ndarray:
    diffusion = 0.5 * np.einsum("ij,nji->n", model.q_matrix, hess)
    return diffusion + np.einsum("ni,ni->n", x @ model.a_matrix.T, grad)


def apply_l(model: OperatorModel, phi: ScalarField, x, fd_hessian: bool = False):
    """Kolmogorov form L phi(x) = 1/2 tr(Q D^2 phi(x)) + <Ax, Dphi(x)>

    A known generator oracle on phi takes precedence.
    """
    batch, single = _as_batch(x)
    if phi.generator is not None:
        values = np.asarray(phi.generator(batch), dtype=float)
    else:
        values = _kolmogorov(model, batch, _hessian(phi, batch, fd_hessian), _gradient(phi, batch))
    return float(values[0]) if single else values


def fd_generator(model: OperatorModel, phi: ScalarField, x,
                 h: float) -> Tuple[np.ndarray, np.ndarray]:
    """Kolmogorov form from central differences of phi's values alone, with an error estimate

    Any gradient, Hessian or generator oracle on phi is ignored. The estimate is
    |L_h - L_2h| / 3, the Richardson estimate of the O(h^2) truncation at step h.
    """
    if h <= 0:
        raise ModelValidationError("finite difference step must be positive")
    batch = np.atleast_2d(np.asarray(x, dtype=float))
    fine = _kolmogorov(model, batch, _value_hessian(phi.value, batch, h),
                       _value_gradient(phi.value, batch, h))
    coarse = _kolmogorov(model, batch, _value_hessian(phi.value, batch, 2 * h),
                         _value_gradient(phi.value, batch, 2 * h))
    return fine, np.abs(fine - coarse) / 3.0


def generator_difference_quotient(model: OperatorModel, phi: ScalarField, x, h: float = 1e-3,
                                  quad: QuadratureSpec = DEFAULT_QUAD):
    """Richardson-extrapolated (R_h phi - phi)/h: 2 D(h/2) - D(h)"""
    if h <= 0:
        raise ModelValidationError("difference quotient step must be positive")
    batch, single = _as_batch(x)
    base = phi.value(batch)
    coarse = (_rt_at(model, phi, h, batch, quad)[0] - base) / h
    fine = (_rt_at(model, phi, 0.5 * h, batch, quad)[0] - base) / (0.5 * h)
    values = 2.0 * fine - coarse
    return float(values[0]) if single else values


def _check_lambda(model: OperatorModel, lam: float) -> None:
    if lam <= 0 or lam <= model.omega:
        raise ModelValidationError(
            f"resolvent needs lambda > max(omega, 0); got lambda={lam}, omega={model.omega}")


def resolvent_estimate(model: OperatorModel, phi: ScalarField, lam: float, x,
                       quad: QuadratureSpec = DEFAULT_QUAD, gradient: bool = False):
    """R(lam, L) phi (or its gradient) on a batch with an error budget per point

    The budget adds the Laplace tail bound ||phi|| * tail and the MC standard error.
    """
    _check_lambda(model, lam)
    batch = np.atleast_2d(np.asarray(x, dtype=float))
    rule = laplace_rule(lam, quad)
    total, spread = 0.0, 0.0
    for t, w in zip(rule.times, rule.weights):
        values, errors = _rt_at(model, phi, float(t), batch, quad, gradient=gradient)
        total = total + w * values
        spread = spread + w * errors
    if gradient and phi.grad_sup_norm is not None:
        # |D R_t phi| <= e^{omega t} ||Dphi||, so the tail decays at lam - omega
        gap = lam - model.omega
        tail = (math.exp(-gap * rule.t_max) / gap
                + math.exp(-gap * rule.t_max) / lam) * phi.grad_sup_norm
    else:
        tail = rule.tail_bound * phi.sup_norm
    return total, tail + spread


def resolvent_l(model: OperatorModel, phi: ScalarField, lam: float, x,
                quad: QuadratureSpec = DEFAULT_QUAD):
    """R(lam, L) phi(x) = int_0^inf e^{-lam t} R_t phi(x) dt"""
    values, _ = resolvent_estimate(model, phi, lam, x, quad)
    return float(values[0]) if np.asarray(x).ndim == 1 else values


def resolvent_gradient_l(model: OperatorModel, phi: ScalarField, lam: float, x,
                         quad: QuadratureSpec = DEFAULT_QUAD) -> np.ndarray:
    """D R(lam, L) phi(x) = int_0^inf e^{-lam t} D R_t phi(x) dt"""
    values, _ = resolvent_estimate(model, phi, lam, x, quad, gradient=True)
    return values[0] if np.asarray(x).ndim == 1 else values


def check_ou_estimates(model: OperatorModel, phi: ScalarField, sampler: SupSampler,
                       quad: QuadratureSpec = DEFAULT_QUAD, times: Sequence[float] = (0.1, 0.5, 1.0),
                       lambdas: Sequence[float] = (1.0, 2.0, 5.0), seed: int = 0) -> List[CheckReport]:
    """Contraction, semigroup law, resolvent gradient bound and generator consistency"""
    x = sampler.points()
    info = {**phi.describe(), "omega": model.omega, **quad.describe()}
    sampler_info = sampler.describe()
    reports = []

    for t in times:
        values, errors = _rt_at(model, phi, t, x, quad)
        reports.append(worst_case(
            f"ou.contraction.t={t:g}", "contraction |R_t phi| <= ||phi||",
            np.abs(values), phi.sup_norm, 1e-12 + 3.0 * errors,
            params={**info, "t": t}, seed=seed, sampler=sampler_info))

    rng = np.random.default_rng(seed)
    head = x[: min(32, len(x))]
    t, s = (float(v) for v in rng.uniform(0.05, 1.0, size=2))
    # the nested oracle squares the node count, so it gets a coarser rule
    nested_quad = replace(quad, nodes_per_dim=min(quad.nodes_per_dim, 24))
    direct, err_direct = _rt_at(model, phi, t + s, head, quad)
    try:
        if model.dim > 2 and quad.mode == "tensor":
            raise QuadratureError(f"nested tensor rule too large for dim {model.dim}")
        nested, err_nested = _rt_at(model, rt_field(model, phi, s, nested_quad), t, head,
                                    nested_quad)
        budget = 1e-8 + 3.0 * (err_direct + err_nested)
        reports.append(worst_case(
            "ou.semigroup_law", "semigroup law R_(t+s) phi = R_t R_s phi",
            np.abs(direct - nested), 0.0, budget,
            params={**info, "t": t, "s": s}, seed=seed, sampler=sampler_info))
    except QuadratureError as exc:
        logger.warning("semigroup law check skipped: %s", exc)

    if phi.gradient is not None and phi.grad_sup_norm is not None:
        for lam in lambdas:
            if lam <= max(model.omega, 0.0):
                continue
            grads, budget = resolvent_estimate(model, phi, lam, x, quad, gradient=True)
            bound = phi.grad_sup_norm / (lam - model.omega)
            reports.append(worst_case(
                f"ou.resolvent_gradient.lambda={lam:g}",
                "resolvent gradient |D R(lam,L) phi| <= ||Dphi||_0/(lam - omega)",
                np.linalg.norm(grads, axis=1), bound, 1e-4 * bound + budget,
                params={**info, "lambda": lam}, seed=seed, sampler=sampler_info))

    if phi.hessian is not None or phi.generator is not None:
        near = x[: min(16, len(x))] * (2.0 / sampler.radius)
        kolmogorov = apply_l(model, phi, near)
        quotient = generator_difference_quotient(model, phi, near, 1e-3, quad)
        reports.append(worst_case(
            "ou.generator", "generator (R_h phi - phi)/h -> L phi",
            np.abs(kolmogorov - quotient), 0.0, 1e-5 * np.maximum(1.0, np.abs(kolmogorov)),
            params={**info, "h": 1e-3}, seed=seed, sampler=sampler_info))
    return reports
