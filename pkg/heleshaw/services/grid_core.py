# File: heleshaw/services/grid_core.py

"""Uniform cell-centred lattices, scalar fields and the stencils shared by every solver.

Box closure is homogeneous Neumann everywhere: ghost cells mirror the edge cell, so no
flux enters through the box. Off-lattice queries go through scipy interpolators.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import structlog
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import cg

from heleshaw.core.config import settings
from heleshaw.core.exceptions import (
    DomainError,
    FieldError,
    GridTooSmallError,
    OutOfDomainError,
    SolverDivergenceError,
    UnsupportedDimensionError,
)

logger = structlog.get_logger(__name__)

SUPPORT_WARNING_CELLS = 5


@dataclass(frozen=True)
class Grid:
    dim: int
    cells_per_axis: int
    extent: float
    origin: Tuple[float, ...]

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise UnsupportedDimensionError(self.dim)
        if self.cells_per_axis < 1:
            raise FieldError(f"cells_per_axis must be positive, got {self.cells_per_axis}")
        if not self.extent > 0:
            raise FieldError(f"extent must be positive, got {self.extent}")
        origin = tuple(float(o) for o in self.origin)
        if len(origin) != self.dim:
            raise FieldError(f"origin has {len(origin)} coordinates for a {self.dim}-D grid")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "extent", float(self.extent))

    @classmethod
    def centered(cls, dim: int, cells_per_axis: int, extent: float) -> "Grid":
        return cls(dim, cells_per_axis, extent, (-0.5 * extent,) * dim)

    @property
    def spacing(self) -> float:
        return self.extent / self.cells_per_axis

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.cells_per_axis,) * self.dim

    @property
    def cell_count(self) -> int:
        return self.cells_per_axis ** self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    def axis(self, k: int = 0) -> np.ndarray:
        return self.origin[k] + (np.arange(self.cells_per_axis) + 0.5) * self.spacing

    def axes(self) -> Tuple[np.ndarray, ...]:
        return tuple(self.axis(k) for k in range(self.dim))

    def coordinates(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def distance_from(self, center: Sequence[float]) -> np.ndarray:
        center = self.point(center)
        squared = sum((c - x0) ** 2 for c, x0 in zip(self.coordinates(), center))
        return np.sqrt(squared)

    def point(self, center: Sequence[float]) -> Tuple[float, ...]:
        point = tuple(float(c) for c in np.atleast_1d(center))
        if len(point) != self.dim:
            raise DomainError(f"point {point} does not have {self.dim} coordinates")
        return point

    def contains_ball(self, center: Sequence[float], radius: float) -> bool:
        center = self.point(center)
        return all(
            c - radius >= lo - 1e-12 and c + radius <= lo + self.extent + 1e-12
            for c, lo in zip(center, self.origin)
        )

    def cell_index(self, point: Sequence[float]) -> Tuple[int, ...]:
        point = self.point(point)
        index = []
        for c, lo in zip(point, self.origin):
            i = int(math.floor((c - lo) / self.spacing))
            index.append(min(max(i, 0), self.cells_per_axis - 1))
        return tuple(index)

    def cell_center(self, index: Sequence[int]) -> Tuple[float, ...]:
        return tuple(lo + (i + 0.5) * self.spacing for i, lo in zip(index, self.origin))


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            if values.size != self.grid.cell_count:
                raise FieldError(
                    f"field has {values.size} values, grid has {self.grid.cell_count} cells"
                )
            values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise FieldError("field contains NaN or Inf values")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls.constant(grid, 0.0)

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[..., np.ndarray]) -> "ScalarField":
        return cls(grid, np.broadcast_to(fn(*grid.coordinates()), grid.shape))

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values)

    def max(self) -> float:
        return float(self.values.max())

    def min(self) -> float:
        return float(self.values.min())

    def integral(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)


def _require_stencil(grid: Grid):
    if grid.cells_per_axis < 3:
        raise GridTooSmallError(grid.cells_per_axis)


def _shifted(padded: np.ndarray, axis: int, offset: int) -> np.ndarray:
    index = []
    for k in range(padded.ndim):
        if k == axis:
            index.append(slice(1 + offset, padded.shape[k] - 1 + offset))
        else:
            index.append(slice(1, -1))
    return padded[tuple(index)]


def laplacian(f: ScalarField) -> ScalarField:
    grid = f.grid
    _require_stencil(grid)
    padded = np.pad(f.values, 1, mode="edge")
    out = np.zeros(grid.shape)
    for axis in range(grid.dim):
        out += _shifted(padded, axis, 1) - 2.0 * f.values + _shifted(padded, axis, -1)
    return ScalarField(grid, out / grid.spacing ** 2)


def grad_sq(f: ScalarField) -> ScalarField:
    grid = f.grid
    _require_stencil(grid)
    padded = np.pad(f.values, 1, mode="edge")
    out = np.zeros(grid.shape)
    for axis in range(grid.dim):
        derivative = (_shifted(padded, axis, 1) - _shifted(padded, axis, -1)) / (2.0 * grid.spacing)
        out += derivative ** 2
    return ScalarField(grid, out)


def gradient(f: ScalarField) -> Tuple[np.ndarray, ...]:
    grid = f.grid
    _require_stencil(grid)
    padded = np.pad(f.values, 1, mode="edge")
    return tuple(
        (_shifted(padded, axis, 1) - _shifted(padded, axis, -1)) / (2.0 * grid.spacing)
        for axis in range(grid.dim)
    )


@lru_cache(maxsize=16)
def laplacian_matrix(grid: Grid) -> sp.csr_matrix:
    """Sparse Neumann Laplacian acting on values.ravel(); matches `laplacian` exactly."""
    _require_stencil(grid)
    n = grid.cells_per_axis
    main = np.full(n, -2.0)
    main[0] = main[-1] = -1.0
    off = np.ones(n - 1)
    one_d = sp.diags([off, main, off], [-1, 0, 1]) / grid.spacing ** 2
    if grid.dim == 1:
        return sp.csr_matrix(one_d)
    identity = sp.identity(n)
    return sp.csr_matrix(sp.kron(one_d, identity) + sp.kron(identity, one_d))


def solve_spd(matrix: sp.spmatrix, rhs: np.ndarray, x0: np.ndarray, label: str) -> np.ndarray:
    """Conjugate gradients to relative residual CG_RTOL; raises instead of returning a bad iterate."""
    solution, info = cg(
        matrix, rhs, x0=x0, rtol=settings.CG_RTOL, atol=0.0, maxiter=settings.CG_MAXITER
    )
    if info != 0:
        residual = float(np.linalg.norm(matrix @ solution - rhs))
        logger.error("CG failed", solve=label, info=info, residual=residual)
        raise SolverDivergenceError(f"conjugate gradient ({label})", settings.CG_MAXITER, residual)
    return solution


def interpolator(f: ScalarField, method: str = "linear") -> RegularGridInterpolator:
    return RegularGridInterpolator(
        f.grid.axes(), f.values, method=method, bounds_error=False, fill_value=None
    )


def sample(f: ScalarField, points: np.ndarray, method: str = "linear") -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != f.grid.dim:
        points = points.reshape(-1, f.grid.dim)
    return interpolator(f, method)(points)


def sphere_points(dim: int, center: Sequence[float], radius: float, n_angles: int) -> np.ndarray:
    center = np.asarray(center, dtype=float)
    if dim == 1:
        return np.array([[center[0] - radius], [center[0] + radius]])
    theta = 2.0 * np.pi * np.arange(n_angles) / n_angles
    return np.column_stack([center[0] + radius * np.cos(theta), center[1] + radius * np.sin(theta)])


def radial_sample(
    f: ScalarField,
    center: Sequence[float],
    radius: float,
    n_angles: int = 64,
    method: str = "linear",
) -> np.ndarray:
    grid = f.grid
    if n_angles < 8:
        raise DomainError(f"n_angles must be at least 8, got {n_angles}")
    center = grid.point(center)
    if not grid.contains_ball(center, radius):
        raise OutOfDomainError(f"sphere of radius {radius:.4g} about {center} leaves the box")
    return sample(f, sphere_points(grid.dim, center, radius, n_angles), method)


def ball_mask(grid: Grid, center: Sequence[float], radius: float) -> np.ndarray:
    return grid.distance_from(center) <= radius * (1.0 + 1e-12) + 1e-15


def ball_max(f: ScalarField, center: Sequence[float], radius: float) -> float:
    """Max over cells whose centres lie in the closed ball (nearest cell if none do)."""
    mask = ball_mask(f.grid, center, radius)
    if not mask.any():
        return float(f.values[f.grid.cell_index(center)])
    return float(f.values[mask].max())


def support_margin(f: ScalarField, threshold: float = 0.0) -> int:
    """Distance, in cells, between the set {f > threshold} and the nearest box edge."""
    support = f.values > threshold
    if not support.any():
        return f.grid.cells_per_axis
    n = f.grid.cells_per_axis
    index = np.argwhere(support)
    return int(np.minimum(index, n - 1 - index).min())


def warn_if_support_near_edge(f: ScalarField, label: str, threshold: float = 0.0) -> int:
    margin = support_margin(f, threshold)
    if margin < SUPPORT_WARNING_CELLS:
        logger.warning("Support approaching box edge", field=label, margin_cells=margin)
    return margin
