# File: heleshaw/services/initial_data.py

from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog
from scipy import ndimage

from heleshaw.core.exceptions import ConfigError
from heleshaw.models.experiment_models import GridSpec, InitialDataKind, InitialDataSpec
from heleshaw.services.grid_core import Grid, ScalarField, warn_if_support_near_edge
from heleshaw.services.pme import SimState, barenblatt_profile

logger = structlog.get_logger(__name__)


def build_grid(spec: GridSpec, cells: Optional[int] = None) -> Grid:
    return Grid.centered(spec.dim, cells or spec.cells, spec.extent)


def density_level(gamma: float, initial_pressure: float) -> float:
    """Patch density whose pressure equals `initial_pressure`; keeps u_+ bounded at t = 0."""
    return min(1.0, initial_pressure ** (1.0 / gamma))


def mollify(indicator: np.ndarray, radius_cells: int) -> np.ndarray:
    if radius_cells <= 0:
        return indicator.astype(float)
    offsets = np.arange(-radius_cells, radius_cells + 1)
    mesh = np.meshgrid(*([offsets] * indicator.ndim), indexing="ij")
    kernel = (sum(m ** 2 for m in mesh) <= radius_cells ** 2).astype(float)
    kernel /= kernel.sum()
    return ndimage.convolve(indicator.astype(float), kernel, mode="constant", cval=0.0)


def _center(spec: InitialDataSpec, dim: int) -> Tuple[float, ...]:
    return tuple(spec.center) if spec.center is not None else (0.0,) * dim


def indicator(grid: Grid, spec: InitialDataSpec) -> np.ndarray:
    center = _center(spec, grid.dim)
    distance = grid.distance_from(center)
    if spec.kind == InitialDataKind.DISK:
        return distance <= spec.radius
    if spec.kind == InitialDataKind.TWO_DISKS:
        return (distance <= spec.radius) | (grid.distance_from(spec.center2) <= spec.radius)
    if spec.kind == InitialDataKind.ANNULUS:
        return (distance <= spec.radius) & (distance >= spec.inner_radius)
    raise ConfigError(f"no indicator for initial data kind '{spec.kind.value}'", key="initial.kind")


def read_field_csv(path: str, grid: Grid, column: str) -> np.ndarray:
    frame = pd.read_csv(path)
    axes = ["x", "y"][: grid.dim]
    missing = [c for c in axes + [column] if c not in frame.columns]
    if missing:
        raise ConfigError(f"CSV {path} lacks columns {missing}", key="initial.path")
    frame = frame.sort_values(axes, kind="mergesort")
    if len(frame) != grid.cell_count:
        raise ConfigError(
            f"CSV {path} has {len(frame)} rows, grid has {grid.cell_count} cells", key="initial.path"
        )
    return frame[column].to_numpy(dtype=float).reshape(grid.shape)


def initial_state(grid: Grid, spec: InitialDataSpec, gamma: float) -> SimState:
    if spec.kind == InitialDataKind.BARENBLATT:
        distance = grid.distance_from(_center(spec, grid.dim))
        rho = barenblatt_profile(distance, spec.barenblatt_time, gamma, spec.barenblatt_constant, grid.dim)
        nutrient = np.zeros(grid.shape)
    elif spec.kind == InitialDataKind.CUSTOM_CSV:
        rho = read_field_csv(spec.path, grid, "rho")
        nutrient = np.full(grid.shape, spec.nutrient)
    else:
        level = density_level(gamma, spec.pressure)
        rho = level * mollify(indicator(grid, spec), spec.mollify_cells)
        nutrient = np.full(grid.shape, spec.nutrient)

    state = SimState.from_density(0.0, ScalarField(grid, rho), ScalarField(grid, nutrient), gamma)
    warn_if_support_near_edge(state.rho, "rho")
    logger.debug("Initial state built", kind=spec.kind.value, gamma=gamma, mass=state.rho.integral())
    return state


def disk_state(
    grid: Grid,
    gamma: float,
    radius: float,
    center: Optional[Sequence[float]] = None,
    nutrient: float = 1.0,
    pressure: float = 0.01,
) -> SimState:
    spec = InitialDataSpec(
        kind=InitialDataKind.DISK,
        center=list(center) if center is not None else None,
        radius=radius,
        nutrient=nutrient,
        pressure=pressure,
    )
    return initial_state(grid, spec, gamma)
