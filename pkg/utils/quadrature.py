"""
Quadrature rules - Gaussian expectations and Laplace integrals
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from models.errors import ModelValidationError, QuadratureError, raise_if_invalid

logger = logging.getLogger(__name__)

MAX_TENSOR_DIM = 6
LAPLACE_TAIL_TOL = 1e-10


@dataclass(frozen=True)
class QuadratureSpec:
    """How Gaussian and Laplace integrals are discretized"""
    mode: str = "tensor"
    nodes_per_dim: int = 64
    mc_count: int = 100_000
    seed: int = 0
    laplace_tmax: Optional[float] = None
    laplace_nodes: int = 128
    laplace_panels: int = 8
    max_tensor_nodes: int = 65_536

    @staticmethod
    def validate_quadrature_data(mode: str, nodes_per_dim: int, mc_count: int,
                                 laplace_tmax: Optional[float], laplace_nodes: int,
                                 laplace_panels: int) -> tuple:
        errors = []
        if mode not in ("tensor", "mc"):
            errors.append(f"quadrature mode must be 'tensor' or 'mc', got '{mode}'")
        if nodes_per_dim < 2:
            errors.append("nodes_per_dim must be at least 2")
        if mc_count < 100:
            errors.append("mc_count must be at least 100")
        if laplace_tmax is not None and laplace_tmax <= 0:
            errors.append("laplace_tmax must be positive")
        if laplace_panels < 1 or laplace_nodes < laplace_panels:
            errors.append("laplace_nodes must be at least laplace_panels >= 1")
        return len(errors) == 0, errors

    def __post_init__(self):
        is_valid, errors = QuadratureSpec.validate_quadrature_data(
            self.mode, self.nodes_per_dim, self.mc_count, self.laplace_tmax,
            self.laplace_nodes, self.laplace_panels)
        raise_if_invalid(is_valid, errors)

    def describe(self) -> Dict:
        return {"mode": self.mode, "nodes_per_dim": self.nodes_per_dim,
                "mc_count": self.mc_count, "seed": self.seed,
                "laplace_tmax": self.laplace_tmax, "laplace_nodes": self.laplace_nodes}


@lru_cache(maxsize=32)
def _tensor_rule(dim: int, nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    z, w = np.polynomial.hermite.hermgauss(nodes)
    z = math.sqrt(2.0) * z
    w = w / math.sqrt(math.pi)
    grids = np.meshgrid(*([z] * dim), indexing="ij")
    points = np.stack([g.reshape(-1) for g in grids], axis=-1)
    weights = np.ones(points.shape[0])
    for wg in np.meshgrid(*([w] * dim), indexing="ij"):
        weights = weights * wg.reshape(-1)
    points.setflags(write=False)
    weights.setflags(write=False)
    return points, weights


@lru_cache(maxsize=32)
def _mc_rule(dim: int, count: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    points = np.random.default_rng(seed).standard_normal((count, dim))
    weights = np.full(count, 1.0 / count)
    points.setflags(write=False)
    weights.setflags(write=False)
    return points, weights


def standard_normal_rule(dim: int, quad: QuadratureSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for E f(Z), Z ~ N(0, I_dim)"""
    if dim == 0:
        return np.zeros((1, 0)), np.ones(1)
    if quad.mode == "mc":
        return _mc_rule(dim, quad.mc_count, quad.seed)
    if dim > MAX_TENSOR_DIM:
        raise QuadratureError(
            f"tensor Gauss-Hermite refuses effective dimension {dim} > {MAX_TENSOR_DIM}; use mode='mc'")
    nodes = min(quad.nodes_per_dim, int(math.floor(quad.max_tensor_nodes ** (1.0 / dim) + 1e-9)))
    nodes = max(nodes, 2)
    if nodes < quad.nodes_per_dim:
        logger.debug("tensor rule in %d dims capped at %d nodes per dim", dim, nodes)
    return _tensor_rule(dim, nodes)


def psd_factor(covariance: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix, clipping round-off negatives"""
    eigvals, eigvecs = np.linalg.eigh(0.5 * (covariance + covariance.T))
    return (eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))) @ eigvecs.T


def gaussian_expectation(func: Callable[[np.ndarray], np.ndarray], means: np.ndarray,
                         covariance: np.ndarray, quad: QuadratureSpec,
                         chunk_points: int = 2_000_000) -> Tuple[np.ndarray, np.ndarray]:
    """E func(m + Y), Y ~ N(0, covariance), for every mean in a batch (n, m)

    func maps (..., m) to (...) or (..., k). Returns (values, standard errors);
    standard errors vanish in tensor mode.
    """
    means = np.atleast_2d(np.asarray(means, dtype=float))
    dim = means.shape[-1]
    nodes, weights = standard_normal_rule(dim, quad)
    offsets = nodes @ psd_factor(covariance).T
    chunk = max(1, chunk_points // len(weights))
    estimates, errors = [], []
    for start in range(0, means.shape[0], chunk):
        values = func(means[start:start + chunk, None, :] + offsets)
        estimate = np.einsum("in...,n->i...", values, weights)
        estimates.append(estimate)
        if quad.mode == "mc":
            second = np.einsum("in...,n->i...", values ** 2, weights)
            errors.append(np.sqrt(np.maximum(second - estimate ** 2, 0.0) / len(weights)))
        else:
            errors.append(np.zeros_like(estimate))
    return np.concatenate(estimates, axis=0), np.concatenate(errors, axis=0)


@dataclass(frozen=True)
class LaplaceRule:
    """Nodes/weights for int_0^inf e^{-lam t} g(t) dt with the tail lumped on the last node"""
    times: np.ndarray
    weights: np.ndarray
    t_max: float
    tail_bound: float


def laplace_rule(lam: float, quad: QuadratureSpec, nodes: int = None,
                 tail_tol: float = LAPLACE_TAIL_TOL) -> LaplaceRule:
    """Map t = -ln(u)/lam with composite Gauss-Legendre in u over [e^{-lam T}, 1]

    Panels are uniform in t so every panel sees a smooth integrand; the mass
    e^{-lam T}/lam beyond T is put on the last node, so sum(weights) = 1/lam.
    tail_bound = 2 e^{-lam T}/lam bounds the lumping error per unit sup norm.
    """
    if lam <= 0:
        raise QuadratureError(f"Laplace rule needs lam > 0, got {lam}")
    total = nodes or quad.laplace_nodes
    panels = min(quad.laplace_panels, total)
    per_panel = max(2, total // panels)
    if quad.laplace_tmax is not None:
        t_max = float(quad.laplace_tmax)
    else:
        t_max = -math.log(tail_tol * lam) / lam if tail_tol * lam < 1.0 else 1.0 / lam

    z, w = np.polynomial.legendre.leggauss(per_panel)
    edges = np.linspace(0.0, t_max, panels + 1)
    times, weights = [], []
    for t0, t1 in zip(edges[:-1], edges[1:]):
        u_lo, u_hi = math.exp(-lam * t1), math.exp(-lam * t0)
        half = 0.5 * (u_hi - u_lo)
        u = u_lo + half * (z + 1.0)
        times.append(-np.log(u) / lam)
        weights.append(half * w / lam)
    times = np.concatenate(times)
    weights = np.concatenate(weights)
    order = np.argsort(times)
    times, weights = times[order], weights[order]
    tail = math.exp(-lam * t_max) / lam
    weights[-1] += tail
    return LaplaceRule(times, weights, t_max, 2.0 * tail)
