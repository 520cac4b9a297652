# File: heleshaw/services/nutrient.py

import math
from typing import List, Tuple

import numpy as np
import scipy.sparse as sp
import structlog

from heleshaw.core.exceptions import StabilityError
from heleshaw.models.report_models import CheckName, ReportEntry
from heleshaw.models.solver_models import NutrientParams, SplittingOrder
from heleshaw.services.grid_core import ScalarField, laplacian_matrix, solve_spd

logger = structlog.get_logger(__name__)

DEFAULT_LOWER_BOUND_TOL = 1e-3


def explicit_dt_limit(n: ScalarField) -> float:
    return n.grid.spacing ** 2 / (2.0 * n.grid.dim)


def _diffuse(values: np.ndarray, lap: sp.csr_matrix, params: NutrientParams) -> np.ndarray:
    theta, dt = params.theta_scheme, params.dt
    rhs = values + (1.0 - theta) * dt * (lap @ values)
    operator = sp.identity(values.size, format="csr") - theta * dt * lap
    return solve_spd(operator, rhs, values, "nutrient diffusion")


def _absorb(values: np.ndarray, rho: np.ndarray, params: NutrientParams) -> np.ndarray:
    # Reduces to 1/(1 + dt*rho) at theta = 1 and to the Pade factor at theta = 1/2
    theta, dt = params.theta_scheme, params.dt
    explicit_part = (1.0 - theta) * dt * rho
    if explicit_part.max(initial=0.0) > 1.0:
        raise StabilityError(dt, 1.0 / ((1.0 - theta) * rho.max()))
    return values * (1.0 - explicit_part) / (1.0 + theta * dt * rho)


def step_nutrient(n: ScalarField, rho: ScalarField, params: NutrientParams) -> ScalarField:
    """One theta-scheme step of d_t n = Delta n - rho n (Neumann box)."""
    grid = n.grid
    lap = laplacian_matrix(grid)
    values = n.values.ravel()
    density = rho.values.ravel()
    theta, dt = params.theta_scheme, params.dt

    if theta >= 0.5:
        if params.splitting == SplittingOrder.DIFFUSE_THEN_ABSORB:
            updated = _absorb(_diffuse(values, lap, params), density, params)
        else:
            updated = _diffuse(_absorb(values, density, params), lap, params)
        return ScalarField(grid, updated)

    dt_max = explicit_dt_limit(n)
    if dt > dt_max:
        raise StabilityError(dt, dt_max)
    operator_values = lap @ values - density * values
    if theta == 0.0:
        return ScalarField(grid, values + dt * operator_values)
    full = lap - sp.diags(density)
    rhs = values + (1.0 - theta) * dt * operator_values
    operator = sp.identity(values.size, format="csr") - theta * dt * full
    return ScalarField(grid, solve_spd(sp.csr_matrix(operator), rhs, values, "nutrient theta-scheme"))


def check_lower_bound(
    n_history: List[Tuple[float, ScalarField]],
    n0_min: float,
    tol_lb: float = DEFAULT_LOWER_BOUND_TOL,
) -> ReportEntry:
    """Worst (e^{-t} min n(0) - min n(t))_+ over the stored times."""
    t_start = n_history[0][0] if n_history else 0.0
    violation = 0.0
    worst_time = t_start
    for t, n in n_history:
        gap = math.exp(-(t - t_start)) * n0_min - n.min()
        if gap > violation:
            violation, worst_time = gap, t
    if violation > tol_lb:
        logger.warning("Nutrient lower bound violated", violation=violation, t=worst_time)
    return ReportEntry.compare(
        CheckName.NUTRIENT_LOWER_BOUND,
        violation,
        tol_lb,
        details={"n0_min": n0_min, "worst_time": worst_time, "snapshots": float(len(n_history))},
    )
