# File: heleshaw/services/pme.py

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import structlog

from heleshaw.core.exceptions import (
    CflViolationError,
    DomainError,
    EmptySaturatedSetError,
    NegativeDensityError,
)
from heleshaw.models.report_models import CheckName, ReportEntry
from heleshaw.models.solver_models import FluxLimiter, PmeParams
from heleshaw.services.grid_core import ScalarField, laplacian, laplacian_matrix, solve_spd
from heleshaw.services.nutrient import step_nutrient

logger = structlog.get_logger(__name__)

CFL_EPSILON = 1e-12
NEGATIVE_DENSITY_SLACK = 1e-12
DEFAULT_CONSISTENCY_TOL = 0.05
DEFAULT_MASS_BALANCE_TOL = 1e-8
SATURATION_MARGIN = 2.0


@dataclass(frozen=True, eq=False)
class SimState:
    time: float
    rho: ScalarField
    p: ScalarField
    n: ScalarField

    @classmethod
    def from_density(cls, time: float, rho: ScalarField, n: ScalarField, gamma: float) -> "SimState":
        return cls(time, rho, pressure_of(rho, gamma), n)

    @property
    def grid(self):
        return self.rho.grid


def pressure_of(rho: ScalarField, gamma: float) -> ScalarField:
    return rho.with_values(np.power(rho.values, gamma))


def saturation_threshold(gamma: float, margin: float = SATURATION_MARGIN) -> float:
    """Saturated-set level 1 - margin/gamma: the relaxation smears the patch over an O(1/gamma) layer.

    Inside a developed patch rho = p^(1/gamma) sits near 1 - log(1/p)/gamma, so runs whose pressure
    stays well below e^-2 need a margin of about log(1/p_rim) to see any saturated cell.
    """
    if not 0 < margin < gamma:
        raise DomainError(f"saturation margin must lie in (0, gamma={gamma:g}), got {margin:g}")
    return 1.0 - margin / gamma


def cfl_limit(state: SimState, gamma: float) -> float:
    grid = state.grid
    diffusivity = gamma * float(state.p.values.max())
    return grid.spacing ** 2 / (2.0 * grid.dim * diffusivity + CFL_EPSILON)


def _minmod(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.where(a * b > 0.0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def _face_values(rho: np.ndarray, p: np.ndarray, axis: int, limiter: FluxLimiter) -> Tuple[np.ndarray, np.ndarray]:
    """Upwinded density and pressure drop on the interior faces normal to `axis`."""
    n = rho.shape[axis]
    left = [slice(None)] * rho.ndim
    right = [slice(None)] * rho.ndim
    left[axis] = slice(0, n - 1)
    right[axis] = slice(1, n)
    left, right = tuple(left), tuple(right)

    drop = p[left] - p[right]
    if limiter == FluxLimiter.MINMOD:
        diffs = np.diff(rho, axis=axis)
        pad = [(0, 0)] * rho.ndim
        pad[axis] = (1, 1)
        diffs = np.pad(diffs, pad)
        lower = [slice(None)] * rho.ndim
        upper = [slice(None)] * rho.ndim
        lower[axis] = slice(0, n)
        upper[axis] = slice(1, n + 1)
        slope = _minmod(diffs[tuple(lower)], diffs[tuple(upper)])
        from_left = rho[left] + 0.5 * slope[left]
        from_right = rho[right] - 0.5 * slope[right]
    else:
        from_left = rho[left]
        from_right = rho[right]
    return np.where(drop > 0.0, from_left, from_right), drop


def transport(state: SimState, params: PmeParams) -> np.ndarray:
    """Conservative finite-volume update of div(rho grad p) with zero flux through the box."""
    grid = state.grid
    rho = state.rho.values
    p = state.p.values
    h = grid.spacing
    change = np.zeros(grid.shape)
    for axis in range(grid.dim):
        rho_face, drop = _face_values(rho, p, axis, params.flux_limiter)
        flux = rho_face * drop / h
        pad = [(0, 0)] * grid.dim
        pad[axis] = (1, 1)
        flux = np.pad(flux, pad)
        change -= np.diff(flux, axis=axis) / h
    return rho + params.dt * change


def step_density(state: SimState, params: PmeParams) -> SimState:
    dt_max = cfl_limit(state, params.gamma)
    if params.dt > dt_max:
        raise CflViolationError(params.dt, dt_max)

    transported = transport(state, params)
    lowest = float(transported.min())
    if lowest < -NEGATIVE_DENSITY_SLACK * max(1.0, float(transported.max())):
        logger.error("Negative density after flux update", min_density=lowest, t=state.time)
        raise NegativeDensityError(lowest)
    transported = np.maximum(transported, 0.0)

    # Exact exponential growth keeps the mass balance free of splitting error
    grown = transported * np.exp(params.dt * state.n.values)
    rho = state.rho.with_values(grown)
    n = step_nutrient(state.n, rho, params.nutrient())
    return SimState.from_density(state.time + params.dt, rho, n, params.gamma)


def compute_u_gamma(state: SimState, gamma: float) -> ScalarField:
    return state.p.with_values(-gamma * (laplacian(state.p).values + state.n.values))


def mass_balance(state: SimState, params: PmeParams, tol: float = DEFAULT_MASS_BALANCE_TOL) -> ReportEntry:
    """Relative defect of int rho(t+dt) against int rho* exp(dt n) after one step."""
    grid = state.grid
    transported = np.maximum(transport(state, params), 0.0)
    after = step_density(state, params)
    transport_mass = float(transported.sum() * grid.cell_volume)
    before_mass = state.rho.integral()
    expected = float((transported * np.exp(params.dt * state.n.values)).sum() * grid.cell_volume)
    actual = after.rho.integral()
    scale = max(abs(expected), 1e-300)
    defect = max(abs(actual - expected), abs(transport_mass - before_mass)) / scale
    return ReportEntry.compare(
        CheckName.MASS_BALANCE,
        defect,
        tol,
        details={"mass_before": before_mass, "mass_after": actual, "growth": actual - before_mass},
    )


def solve_saturated_pressure(state: SimState, threshold: float) -> Tuple[np.ndarray, np.ndarray]:
    """q solving -Delta q = n on {rho > threshold}, q = 0 elsewhere."""
    saturated = state.rho.values > threshold
    if not saturated.any():
        raise EmptySaturatedSetError(threshold)
    if saturated.all():
        raise DomainError("saturated set fills the box; the restricted problem is singular")
    mask = saturated.ravel()
    lap = laplacian_matrix(state.grid)
    restricted = sp.csr_matrix(-lap[mask][:, mask])
    rhs = state.n.values.ravel()[mask]
    solution = solve_spd(restricted, rhs, np.zeros_like(rhs), "saturated pressure")
    q = np.zeros(state.grid.cell_count)
    q[mask] = solution
    return q.reshape(state.grid.shape), saturated


def pressure_consistency(
    state: SimState,
    threshold: float,
    tol: float = DEFAULT_CONSISTENCY_TOL,
) -> ReportEntry:
    q, saturated = solve_saturated_pressure(state, threshold)
    q_norm = float(np.abs(q[saturated]).max())
    error = float(np.abs(state.p.values[saturated] - q[saturated]).max())
    relative = error / q_norm if q_norm > 0 else error
    return ReportEntry.compare(
        CheckName.PRESSURE_CONSISTENCY,
        relative,
        tol,
        details={"threshold": threshold, "saturated_cells": float(saturated.sum()), "q_max": q_norm},
    )


def barenblatt_profile(radius: np.ndarray, t: float, gamma: float, mass_constant: float, dim: int) -> np.ndarray:
    """Self-similar solution of d_t rho = (gamma/(gamma+1)) Delta rho^(gamma+1)."""
    m = gamma + 1.0
    s = gamma / (gamma + 1.0) * t
    alpha = dim / (dim * (m - 1.0) + 2.0)
    beta = alpha / dim
    k = alpha * (m - 1.0) / (2.0 * m * dim)
    core = mass_constant - k * np.asarray(radius) ** 2 * s ** (-2.0 * beta)
    return s ** (-alpha) * np.maximum(core, 0.0) ** (1.0 / (m - 1.0))


def barenblatt_front(t: float, gamma: float, mass_constant: float, dim: int) -> float:
    m = gamma + 1.0
    s = gamma / (gamma + 1.0) * t
    alpha = dim / (dim * (m - 1.0) + 2.0)
    k = alpha * (m - 1.0) / (2.0 * m * dim)
    return math.sqrt(mass_constant / k) * s ** (alpha / dim)


def radial_reference(
    profile: Callable[[np.ndarray], np.ndarray],
    gamma: float,
    r_max: float,
    cells: int,
    horizon: float,
    dim: int = 2,
    cfl_safety: float = 0.45,
) -> Tuple[np.ndarray, np.ndarray]:
    """Radially symmetric PME without nutrient on [0, r_max], faces weighted by r^(d-1)."""
    dr = r_max / cells
    faces = np.arange(cells + 1) * dr
    centers = 0.5 * (faces[:-1] + faces[1:])
    volumes = (faces[1:] ** dim - faces[:-1] ** dim) / dim
    areas = faces[1:-1] ** (dim - 1)
    rho = np.asarray(profile(centers), dtype=float).copy()
    t = 0.0
    while t < horizon - 1e-15:
        p = rho ** gamma
        dt_max = cfl_safety * dr ** 2 / (2.0 * dim * gamma * p.max() + CFL_EPSILON)
        dt = min(dt_max, horizon - t)
        drop = p[:-1] - p[1:]
        rho_face = np.where(drop > 0.0, rho[:-1], rho[1:])
        flux = np.pad(areas * rho_face * drop / dr, (1, 1))
        rho = np.maximum(rho - dt * np.diff(flux) / volumes, 0.0)
        t += dt
    return centers, rho


def front_radius(values: np.ndarray, radius: np.ndarray, level: float) -> float:
    """Largest radius at which values exceed `level`."""
    inside = values > level
    if not inside.any():
        return 0.0
    return float(np.asarray(radius)[inside].max())


def radial_front_gap(state: SimState, center: Sequence[float], centers: np.ndarray, rho_radial: np.ndarray, level: float) -> float:
    distance = state.grid.distance_from(center)
    return abs(front_radius(state.rho.values, distance, level) - front_radius(rho_radial, centers, level))
