"""
Collocation grid - tensor grid on [-radius, radius]^d with multilinear interpolation

Interpolation weights are nonnegative and sum to one (points outside the box
are clamped to it), so interpolated operators keep their sup-norm bounds.
"""
import itertools
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import sparse

from models.errors import ModelValidationError, raise_if_invalid

logger = logging.getLogger(__name__)

MAX_GRID_NODES = 400_000
DEFAULT_GRID_NODES = 20_000


@dataclass(frozen=True)
class TensorGrid:
    dim: int
    radius: float = 8.0
    step: float = 0.01

    @staticmethod
    def validate_grid_data(dim: int, radius: float, step: float) -> tuple:
        errors = []
        if dim < 1:
            errors.append("grid dimension must be positive")
        if radius <= 0:
            errors.append("grid radius must be positive")
        if step <= 0 or step > radius:
            errors.append("grid step must lie in (0, radius]")
        elif (int(round(2 * radius / step)) + 1) ** dim > MAX_GRID_NODES:
            errors.append(f"grid would exceed {MAX_GRID_NODES} nodes; enlarge the step")
        return len(errors) == 0, errors

    def __post_init__(self):
        is_valid, errors = TensorGrid.validate_grid_data(self.dim, self.radius, self.step)
        raise_if_invalid(is_valid, errors)

    @property
    def per_axis(self) -> int:
        return int(round(2 * self.radius / self.step)) + 1

    @property
    def size(self) -> int:
        return self.per_axis ** self.dim

    @property
    def spacing(self) -> float:
        return 2 * self.radius / (self.per_axis - 1)

    def axis(self) -> np.ndarray:
        return np.linspace(-self.radius, self.radius, self.per_axis)

    def nodes(self) -> np.ndarray:
        """All nodes (size, dim), C order"""
        mesh = np.meshgrid(*([self.axis()] * self.dim), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def weights(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Corner indices and weights, each (..., 2^dim), for points (..., dim)"""
        points = np.asarray(points, dtype=float)
        m = self.per_axis
        rel = (np.clip(points, -self.radius, self.radius) + self.radius) / self.spacing
        base = np.clip(np.floor(rel), 0, m - 2).astype(np.int64)
        frac = rel - base
        shape = (m,) * self.dim
        indices, weights = [], []
        for corner in itertools.product((0, 1), repeat=self.dim):
            corner = np.asarray(corner)
            idx = np.ravel_multi_index(tuple(np.moveaxis(base + corner, -1, 0)), shape)
            w = np.prod(np.where(corner == 1, frac, 1.0 - frac), axis=-1)
            indices.append(idx)
            weights.append(w)
        return np.stack(indices, axis=-1), np.stack(weights, axis=-1)

    def interpolate(self, values: np.ndarray, points: np.ndarray) -> np.ndarray:
        idx, w = self.weights(points)
        return np.sum(w * values[idx], axis=-1)

    def operator_rows(self, points: np.ndarray, point_weights: np.ndarray) -> sparse.csr_matrix:
        """Rows v -> sum_j point_weights[j] * interp(v)(points[i, j]) for points (n, M, dim)"""
        n = points.shape[0]
        idx, w = self.weights(points)
        data = w * point_weights[None, :, None]
        rows = np.broadcast_to(np.arange(n)[:, None, None], idx.shape)
        return sparse.csr_matrix((data.ravel(), (rows.ravel(), idx.ravel())),
                                 shape=(n, self.size))

    def interpolation_error(self, values: np.ndarray) -> float:
        """Estimate of the interpolation error, max |second difference| / 8 summed over axes"""
        grid = np.asarray(values, dtype=float).reshape((self.per_axis,) * self.dim)
        total = 0.0
        for ax in range(self.dim):
            second = np.diff(grid, n=2, axis=ax)
            total += float(np.max(np.abs(second))) / 8.0 if second.size else 0.0
        return total

    def describe(self) -> dict:
        return {"grid_radius": float(self.radius), "grid_step": float(self.spacing),
                "grid_nodes": int(self.size)}


def default_grid(dim: int) -> TensorGrid:
    """Grid sized for desk-scale solves: fine in 1-D, coarse above"""
    if dim == 1:
        return TensorGrid(1, 8.0, 0.01)
    per_axis = int(DEFAULT_GRID_NODES ** (1.0 / dim))
    radius = 4.0
    return TensorGrid(dim, radius, 2 * radius / max(per_axis - 1, 2))
