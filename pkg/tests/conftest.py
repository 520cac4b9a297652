from typing import Callable, Sequence

import numpy as np
import pytest

from heleshaw.models.solver_models import PmeParams
from heleshaw.services.baiocchi import BaiocchiAccumulator
from heleshaw.services.grid_core import Grid, ScalarField
from heleshaw.services.initial_data import disk_state
from heleshaw.services.pme import SimState
from heleshaw.services.simulation import RunResult, simulate


@pytest.fixture
def grid_1d() -> Grid:
    return Grid.centered(1, 64, 2.0)


@pytest.fixture
def grid_2d() -> Grid:
    return Grid.centered(2, 32, 2.0)


@pytest.fixture
def odd_grid_2d() -> Grid:
    # The origin is a cell centre
    return Grid.centered(2, 101, 2.0)


def make_run(
    grid: Grid,
    densities: Sequence[np.ndarray],
    times: Sequence[float],
    gamma: float = 10.0,
    nutrient: float = 1.0,
) -> RunResult:
    """RunResult assembled from given density snapshots (no time stepping)."""
    n = ScalarField.constant(grid, nutrient)
    snapshots = [SimState.from_density(t, ScalarField(grid, rho), n, gamma) for t, rho in zip(times, densities)]
    return RunResult(gamma=gamma, params=PmeParams(gamma=gamma, dt=1e-3), snapshots=snapshots)


def make_pressure_run(
    grid: Grid,
    pressure: Callable[[float], np.ndarray],
    times: Sequence[float],
    gamma: float = 10.0,
) -> RunResult:
    """RunResult whose pressure snapshots are prescribed directly."""
    n = ScalarField.zeros(grid)
    snapshots = []
    for t in times:
        p = ScalarField(grid, pressure(t))
        rho = p.with_values(np.power(p.values, 1.0 / gamma))
        snapshots.append(SimState(t, rho, p, n))
    return RunResult(gamma=gamma, params=PmeParams(gamma=gamma, dt=1e-3), snapshots=snapshots)


@pytest.fixture(scope="session")
def disk_run() -> RunResult:
    """Short 2-D disk run with w and eta accumulated."""
    grid = Grid.centered(2, 32, 2.0)
    initial = disk_state(grid, 20.0, radius=0.3)
    params = PmeParams(gamma=20.0, dt=1e-3)
    return simulate(initial, params, horizon=0.05, snapshot_interval=0.01, observers=[BaiocchiAccumulator()])
