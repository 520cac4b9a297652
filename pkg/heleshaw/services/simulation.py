# File: heleshaw/services/simulation.py

import dataclasses
import math
from dataclasses import dataclass, field
from typing import List, Optional, Protocol, Sequence, Tuple

import pandas as pd
import structlog

from heleshaw.core.config import settings
from heleshaw.models.solver_models import PmeParams
from heleshaw.services.grid_core import Grid, ScalarField, warn_if_support_near_edge
from heleshaw.services.nutrient import explicit_dt_limit
from heleshaw.services.pme import SimState, cfl_limit, step_density

logger = structlog.get_logger(__name__)

TIME_EPSILON = 1e-12


class StateObserver(Protocol):
    def push(self, state: SimState, keep: bool) -> None:
        ...


@dataclass
class RunResult:
    """Completed run: snapshots at the configured cadence, t = 0 included."""

    gamma: float
    params: PmeParams
    snapshots: List[SimState]
    steps: int = 0
    observers: Sequence[StateObserver] = field(default_factory=tuple)

    @property
    def grid(self) -> Grid:
        return self.snapshots[0].grid

    @property
    def times(self) -> List[float]:
        return [s.time for s in self.snapshots]

    @property
    def initial(self) -> SimState:
        return self.snapshots[0]

    @property
    def final(self) -> SimState:
        return self.snapshots[-1]

    @property
    def n0_min(self) -> float:
        return self.initial.n.min()

    def nutrient_history(self) -> List[Tuple[float, ScalarField]]:
        return [(s.time, s.n) for s in self.snapshots]


def stable_dt(state: SimState, params: PmeParams, dt_max: float) -> float:
    dt = min(dt_max, settings.CFL_SAFETY * cfl_limit(state, params.gamma))
    if params.theta_scheme < 0.5:
        dt = min(dt, settings.CFL_SAFETY * explicit_dt_limit(state.n))
    return dt


def simulate(
    initial: SimState,
    params: PmeParams,
    horizon: float,
    snapshot_interval: float,
    observers: Sequence[StateObserver] = (),
) -> RunResult:
    """Advance `initial` to `horizon`; params.dt is the largest step ever taken."""
    snapshot_count = max(1, int(math.ceil(horizon / snapshot_interval - 1e-9)))
    targets = [min(horizon, k * snapshot_interval) for k in range(1, snapshot_count + 1)]

    state = initial
    snapshots = [initial]
    for observer in observers:
        observer.push(initial, True)

    steps = 0
    for target in targets:
        while state.time < target - TIME_EPSILON * max(1.0, target):
            dt = min(stable_dt(state, params, params.dt), target - state.time)
            state = step_density(state, params.with_dt(dt))
            steps += 1
            landed = abs(state.time - target) <= TIME_EPSILON * max(1.0, target)
            if landed:
                state = dataclasses.replace(state, time=target)
            for observer in observers:
                observer.push(state, landed)
        snapshots.append(state)
        warn_if_support_near_edge(state.rho, "rho")

    logger.info(
        "Run completed",
        gamma=params.gamma,
        steps=steps,
        snapshots=len(snapshots),
        mass=state.rho.integral(),
        max_density=state.rho.max(),
    )
    return RunResult(gamma=params.gamma, params=params, snapshots=snapshots, steps=steps, observers=tuple(observers))


def first_observer(run: RunResult, kind: type) -> Optional[StateObserver]:
    for observer in run.observers:
        if isinstance(observer, kind):
            return observer
    return None


def run_rows(run: RunResult) -> pd.DataFrame:
    """Per-snapshot totals for plotting."""
    return pd.DataFrame(
        {
            "t": run.times,
            "mass": [s.rho.integral() for s in run.snapshots],
            "max_density": [s.rho.max() for s in run.snapshots],
            "max_pressure": [s.p.max() for s in run.snapshots],
            "min_nutrient": [s.n.min() for s in run.snapshots],
        }
    )
