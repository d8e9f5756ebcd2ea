"""
Fields - test functions phi and drift fields F with value/derivative oracles

Oracles act on the last axis: a point has shape (d,), a batch (..., d).
Norm and modulus metadata are certified upper bounds supplied with each
family, never estimated from data.
"""
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from models.errors import ModelValidationError, raise_if_invalid
from models.reports import CheckReport, worst_case

logger = logging.getLogger(__name__)

# max |d/dz sech^2(z)| = max |2 sech^2 tanh|
SECH2_LIPSCHITZ = 4.0 / (3.0 * math.sqrt(3.0))
ORTHONORMAL_TOL = 1e-10

DEFAULT_RADIUS = 8.0
DEFAULT_COUNT = 4096
DEFAULT_SEED = 0


@dataclass(frozen=True)
class LinearModulus:
    """Modulus of continuity r -> min(cap, slope * r)"""
    slope: float
    cap: float = math.inf

    def __call__(self, r):
        return np.minimum(self.cap, self.slope * np.asarray(r, dtype=float))

    def describe(self) -> Dict[str, float]:
        return {"slope": self.slope, "cap": self.cap}


@dataclass(frozen=True)
class ScalarField:
    """Test function phi with optional gradient/Hessian oracles and bounds"""
    value: Callable[[np.ndarray], np.ndarray]
    sup_norm: float
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    grad_sup_norm: Optional[float] = None
    grad_modulus: Optional[Callable] = None
    cylinder_dirs: Optional[np.ndarray] = None
    profile: Optional[Callable[[np.ndarray], np.ndarray]] = None
    profile_grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    # known L phi for functions in the range of a resolvent of L
    generator: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "phi"
    params: Dict[str, Any] = field(default_factory=dict)

    def __call__(self, x):
        return self.value(np.asarray(x, dtype=float))

    @property
    def is_cylindrical(self) -> bool:
        return self.cylinder_dirs is not None and self.profile is not None

    def describe(self) -> Dict[str, Any]:
        info = {"name": self.name, "sup_norm": self.sup_norm, **self.params}
        if self.grad_sup_norm is not None:
            info["grad_sup_norm"] = self.grad_sup_norm
        return info


@dataclass(frozen=True)
class VectorField:
    """Drift F with Jacobian oracle and the constants ||F||_0, K, theta_DF"""
    value: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    f_sup_norm: float
    k_const: float
    df_modulus: Callable
    name: str = "drift"
    params: Dict[str, Any] = field(default_factory=dict)

    @property
    def is_zero(self) -> bool:
        return self.name == "zero"

    def describe(self) -> Dict[str, Any]:
        return {"name": self.name, "f_sup_norm": self.f_sup_norm, "k_const": self.k_const,
                **self.params}

    def with_constants(self, k_const: float = None, f_sup_norm: float = None) -> "VectorField":
        """Copy with overridden declared constants (used to test check sensitivity)"""
        return VectorField(
            self.value, self.jacobian,
            self.f_sup_norm if f_sup_norm is None else float(f_sup_norm),
            self.k_const if k_const is None else float(k_const),
            self.df_modulus, self.name, dict(self.params))


def _orthonormal_dirs(dirs, dim: int) -> np.ndarray:
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    if dirs.shape[1] != dim:
        raise ModelValidationError(f"directions must have length {dim}, got {dirs.shape[1]}")
    if dirs.shape[0] > dim:
        raise ModelValidationError("more directions than the dimension")
    gram = dirs @ dirs.T
    if np.max(np.abs(gram - np.eye(dirs.shape[0]))) > ORTHONORMAL_TOL:
        raise ModelValidationError("cylinder directions are not orthonormal")
    dirs = dirs.copy()
    dirs.setflags(write=False)
    return dirs


def make_cylindrical(g: Callable, dirs, g_grad: Callable = None, g_hess: Callable = None,
                     sup_norm: float = 1.0, grad_sup_norm: float = None,
                     grad_modulus: Callable = None, name: str = "cylindrical",
                     params: Dict[str, Any] = None) -> ScalarField:
    """phi(x) = g(<a_1,x>, ..., <a_m,x>) for orthonormal directions a_i

    g acts on arrays of shape (..., m); g_grad returns (..., m); g_hess (..., m, m).
    """
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    dirs = _orthonormal_dirs(dirs, dirs.shape[1])

    def value(x):
        return g(np.asarray(x) @ dirs.T)

    gradient = None
    if g_grad is not None:
        def gradient(x):
            return g_grad(np.asarray(x) @ dirs.T) @ dirs

    hessian = None
    if g_hess is not None:
        def hessian(x):
            inner = g_hess(np.asarray(x) @ dirs.T)
            return np.einsum("...ij,ia,jb->...ab", inner, dirs, dirs)

    return ScalarField(
        value=value, sup_norm=float(sup_norm), gradient=gradient, hessian=hessian,
        grad_sup_norm=grad_sup_norm, grad_modulus=grad_modulus, cylinder_dirs=dirs,
        profile=g, profile_grad=g_grad, name=name, params=dict(params or {}))


def _first(z):
    return z[..., 0]


def _as_grad(values, z):
    out = np.zeros_like(z, dtype=float)
    out[..., 0] = values
    return out


def _as_hess(values, z):
    out = np.zeros(z.shape + (z.shape[-1],), dtype=float)
    out[..., 0, 0] = values
    return out


SCALAR_KINDS = ("constant", "cos", "sin", "gauss_bump", "soft_linear", "cos_mean")


def builtin_scalar(kind: str, dim: int, dirs=None, value: float = 1.0,
                   radius: float = 10.0, shift: float = 0.0, amplitude: float = 1.0) -> ScalarField:
    """Builtin cylindrical test functions with exact norms, Hessians and moduli

    constant     phi = value
    cos, sin     amplitude * cos/sin(<a,x> + shift)
    gauss_bump   exp(-<a,x>^2 / 2)
    soft_linear  radius * tanh(<a,x> / radius), linear for |x| << radius
    cos_mean     mean_i cos(<a_i,x>)
    """
    if kind not in SCALAR_KINDS:
        raise ModelValidationError(f"unknown scalar field kind '{kind}', expected one of {SCALAR_KINDS}")
    if dirs is None:
        dirs = np.eye(dim) if kind == "cos_mean" else np.eye(dim)[:1]
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    params = {"kind": kind, "dirs": dirs.tolist()}

    if kind == "constant":
        c = float(value)
        params["value"] = c
        dirs = _orthonormal_dirs(dirs, dim)
        return ScalarField(
            value=lambda x: np.full(np.shape(x)[:-1], c),
            sup_norm=abs(c),
            gradient=lambda x: np.zeros(np.shape(x)),
            hessian=lambda x: np.zeros(np.shape(x) + (np.shape(x)[-1],)),
            grad_sup_norm=0.0, grad_modulus=LinearModulus(0.0, 0.0),
            cylinder_dirs=dirs, profile=lambda z: np.full(np.shape(z)[:-1], c),
            profile_grad=lambda z: np.zeros(np.shape(z)),
            name=kind, params=params)

    if kind in ("cos", "sin"):
        amp = float(amplitude)
        b = float(shift)
        params.update({"amplitude": amp, "shift": b})
        if kind == "cos":
            g = lambda z: amp * np.cos(_first(z) + b)
            g_grad = lambda z: _as_grad(-amp * np.sin(_first(z) + b), z)
            g_hess = lambda z: _as_hess(-amp * np.cos(_first(z) + b), z)
        else:
            g = lambda z: amp * np.sin(_first(z) + b)
            g_grad = lambda z: _as_grad(amp * np.cos(_first(z) + b), z)
            g_hess = lambda z: _as_hess(-amp * np.sin(_first(z) + b), z)
        return make_cylindrical(g, dirs[:1], g_grad, g_hess, sup_norm=abs(amp),
                                grad_sup_norm=abs(amp),
                                grad_modulus=LinearModulus(abs(amp), 2.0 * abs(amp)),
                                name=kind, params=params)

    if kind == "gauss_bump":
        g = lambda z: np.exp(-0.5 * _first(z) ** 2)
        g_grad = lambda z: _as_grad(-_first(z) * np.exp(-0.5 * _first(z) ** 2), z)
        g_hess = lambda z: _as_hess((_first(z) ** 2 - 1.0) * np.exp(-0.5 * _first(z) ** 2), z)
        peak = math.exp(-0.5)
        return make_cylindrical(g, dirs[:1], g_grad, g_hess, sup_norm=1.0, grad_sup_norm=peak,
                                grad_modulus=LinearModulus(1.0, 2.0 * peak),
                                name=kind, params=params)

    if kind == "soft_linear":
        r = float(radius)
        if r <= 0:
            raise ModelValidationError("soft_linear radius must be positive")
        params["radius"] = r

        def g_grad(z):
            return _as_grad(1.0 / np.cosh(_first(z) / r) ** 2, z)

        def g_hess(z):
            u = _first(z) / r
            return _as_hess(-2.0 / r * np.tanh(u) / np.cosh(u) ** 2, z)

        return make_cylindrical(lambda z: r * np.tanh(_first(z) / r), dirs[:1], g_grad, g_hess,
                                sup_norm=r, grad_sup_norm=1.0,
                                grad_modulus=LinearModulus(SECH2_LIPSCHITZ / r, 1.0),
                                name=kind, params=params)

    m = dirs.shape[0]
    g = lambda z: np.mean(np.cos(z), axis=-1)
    g_grad = lambda z: -np.sin(z) / m
    g_hess = lambda z: np.einsum("...i,ij->...ij", -np.cos(z) / m, np.eye(m))
    return make_cylindrical(g, dirs, g_grad, g_hess, sup_norm=1.0,
                            grad_sup_norm=1.0 / math.sqrt(m),
                            grad_modulus=LinearModulus(1.0 / m, 2.0 / math.sqrt(m)),
                            name=kind, params=params)


def _unit(vector, dim: int) -> np.ndarray:
    vector = np.ones(dim) if vector is None else np.asarray(vector, dtype=float).reshape(-1)
    if vector.shape != (dim,):
        raise ModelValidationError(f"vector parameter must have length {dim}")
    norm = np.linalg.norm(vector)
    if norm == 0:
        raise ModelValidationError("vector parameter must be nonzero")
    return vector / norm


DRIFT_NAMES = ("zero", "tanh_componentwise", "scaled_sigmoid_rank_one", "smooth_bump")


def builtin_field(name: str, dim: int, scale: float = 1.0, v=None, w=None) -> VectorField:
    """Builtin drifts F in C_b^1 with exact ||F||_0, K and Lipschitz modulus of DF

    zero                      F = 0
    tanh_componentwise        F(x)_i = c tanh(x_i)           ||F||_0 = c sqrt(d), K = c
    scaled_sigmoid_rank_one   F(x) = c v tanh(<w,x>)         ||F||_0 = c,         K = c
    smooth_bump               F(x) = c v exp(-|x|^2/2)       ||F||_0 = c,         K = c e^(-1/2)
    """
    if name not in DRIFT_NAMES:
        raise ModelValidationError(f"unknown drift '{name}', expected one of {DRIFT_NAMES}")
    if dim < 1:
        raise ModelValidationError("dim must be positive")
    c = float(scale)
    if c < 0:
        raise ModelValidationError("drift scale must be nonnegative")

    if name == "zero":
        return VectorField(
            value=lambda x: np.zeros(np.shape(x)),
            jacobian=lambda x: np.zeros(np.shape(x) + (np.shape(x)[-1],)),
            f_sup_norm=0.0, k_const=0.0, df_modulus=LinearModulus(0.0, 0.0), name=name)

    params = {"scale": c}
    if name == "tanh_componentwise":
        def jacobian(x):
            sech2 = 1.0 / np.cosh(x) ** 2
            return c * np.einsum("...i,ij->...ij", sech2, np.eye(np.shape(x)[-1]))

        return VectorField(
            value=lambda x: c * np.tanh(x), jacobian=jacobian,
            f_sup_norm=c * math.sqrt(dim), k_const=c,
            df_modulus=LinearModulus(c * SECH2_LIPSCHITZ, c), name=name, params=params)

    v = _unit(v, dim)
    params["v"] = v.tolist()
    if name == "scaled_sigmoid_rank_one":
        w = _unit(w, dim)
        params["w"] = w.tolist()
        outer = np.outer(v, w)
        return VectorField(
            value=lambda x: c * np.tanh(np.asarray(x) @ w)[..., None] * v,
            jacobian=lambda x: c * (1.0 / np.cosh(np.asarray(x) @ w) ** 2)[..., None, None] * outer,
            f_sup_norm=c, k_const=c,
            df_modulus=LinearModulus(c * SECH2_LIPSCHITZ, c), name=name, params=params)

    def bump(x):
        return np.exp(-0.5 * np.sum(np.asarray(x) ** 2, axis=-1))

    peak = math.exp(-0.5)
    return VectorField(
        value=lambda x: c * bump(x)[..., None] * v,
        jacobian=lambda x: -c * (bump(x)[..., None, None]
                                 * np.einsum("i,...j->...ij", v, np.asarray(x))),
        f_sup_norm=c, k_const=c * peak,
        df_modulus=LinearModulus(c, 2.0 * c * peak), name=name, params=params)


@lru_cache(maxsize=64)
def _ball_points(dim: int, radius: float, count: int, seed: int) -> np.ndarray:
    """Scrambled Halton points mapped into the radius ball; prefixes are nested"""
    raw = qmc.Halton(d=dim + 1, scramble=True, seed=seed).random(count)
    raw = np.clip(raw, 1e-12, 1.0 - 1e-12)
    normal = ndtri(raw[:, :dim])
    norms = np.linalg.norm(normal, axis=1, keepdims=True)
    directions = normal / np.maximum(norms, 1e-300)
    radii = radius * raw[:, dim:] ** (1.0 / dim)
    points = directions * radii
    points.setflags(write=False)
    return points


@dataclass(frozen=True)
class SupSampler:
    """Low-discrepancy surrogate for sup norms over H: count points in a radius ball"""
    dim: int
    radius: float = DEFAULT_RADIUS
    count: int = DEFAULT_COUNT
    seed: int = DEFAULT_SEED

    @staticmethod
    def validate_sampler_data(dim: int, radius: float, count: int) -> tuple:
        errors = []
        if dim < 1:
            errors.append("sampler dimension must be positive")
        if radius <= 0:
            errors.append("sampler radius must be positive")
        if count < 1:
            errors.append("sampler count must be at least 1")
        return len(errors) == 0, errors

    def __post_init__(self):
        is_valid, errors = SupSampler.validate_sampler_data(self.dim, self.radius, self.count)
        raise_if_invalid(is_valid, errors)

    def points(self) -> np.ndarray:
        return _ball_points(self.dim, float(self.radius), int(self.count), int(self.seed))

    def pairs(self) -> tuple:
        """(x, y) pairs: half far apart, half at distances 1e-3..1"""
        x = self.points()
        rng = np.random.default_rng(self.seed + 1)
        far = np.roll(x, 1, axis=0)
        steps = rng.standard_normal(x.shape)
        steps /= np.maximum(np.linalg.norm(steps, axis=1, keepdims=True), 1e-300)
        steps *= 10.0 ** rng.uniform(-3.0, 0.0, size=(x.shape[0], 1))
        near = x + steps
        half = x.shape[0] // 2
        y = np.concatenate([far[:half], near[half:]], axis=0)
        return x, y

    def describe(self) -> Dict[str, Any]:
        return {"radius": float(self.radius), "count": int(self.count), "seed": int(self.seed)}


def estimate_sup_distance(f1: ScalarField, f2: ScalarField, sampler: SupSampler) -> float:
    """max over sampler points of |f1(x) - f2(x)|"""
    x = sampler.points()
    return float(np.max(np.abs(f1.value(x) - f2.value(x))))


def _operator_norms(matrices: np.ndarray) -> np.ndarray:
    return np.linalg.norm(matrices, ord=2, axis=(-2, -1))


def check_field_invariants(target, sampler: SupSampler) -> List[CheckReport]:
    """Invariant suite of a ScalarField or VectorField on the sampler ball"""
    x, y = sampler.pairs()
    dist = np.linalg.norm(x - y, axis=1)
    sampler_info = sampler.describe()
    reports = []

    if isinstance(target, VectorField):
        info = target.describe()
        values = np.linalg.norm(target.value(x), axis=1)
        reports.append(worst_case(
            f"field.{target.name}.sup", "drift bound |F(x)| <= ||F||_0",
            values, target.f_sup_norm, 1e-12 + 1e-9 * target.f_sup_norm,
            params=info, seed=sampler.seed, sampler=sampler_info))
        jac_x = target.jacobian(x)
        reports.append(worst_case(
            f"field.{target.name}.k_const", "derivative bound ||DF(x)|| <= K",
            _operator_norms(jac_x), target.k_const, 1e-12 + 1e-9 * target.k_const,
            params=info, seed=sampler.seed, sampler=sampler_info))
        diff = _operator_norms(jac_x - target.jacobian(y))
        bound = target.df_modulus(dist)
        reports.append(worst_case(
            f"field.{target.name}.modulus", "modulus ||DF(x)-DF(y)|| <= theta_DF(|x-y|)",
            diff, bound, 1e-12 + 1e-6 * bound,
            params=info, seed=sampler.seed, sampler=sampler_info))
        return reports

    info = target.describe()
    reports.append(worst_case(
        f"field.{target.name}.sup", "function bound |phi(x)| <= ||phi||",
        np.abs(target.value(x)), target.sup_norm, 1e-12,
        params=info, seed=sampler.seed, sampler=sampler_info))
    if target.gradient is None:
        return reports

    grad = target.gradient(x)
    step = 1e-5
    fd = np.empty_like(grad)
    for i in range(sampler.dim):
        e = np.zeros(sampler.dim)
        e[i] = step
        fd[:, i] = (target.value(x + e) - target.value(x - e)) / (2.0 * step)
    scale = np.maximum(1.0, np.linalg.norm(grad, axis=1))
    reports.append(worst_case(
        f"field.{target.name}.gradient_fd", "gradient matches central differences",
        np.linalg.norm(grad - fd, axis=1) / scale, 1e-6, 0.0,
        params=info, seed=sampler.seed, sampler=sampler_info))
    if target.grad_modulus is not None:
        diff = np.linalg.norm(grad - target.gradient(y), axis=1)
        bound = target.grad_modulus(dist)
        reports.append(worst_case(
            f"field.{target.name}.modulus", "modulus |Dphi(x)-Dphi(y)| <= theta_Dphi(|x-y|)",
            diff, bound, 1e-12 + 1e-6 * bound,
            params=info, seed=sampler.seed, sampler=sampler_info))
    return reports
