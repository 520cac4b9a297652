# File: heleshaw/services/baiocchi.py

"""Baiocchi transform w = int_0^t p ds, source history eta = int_0^t rho n ds, hitting times.

The accumulator is a sequential fold over the state stream; everything else works on a
finished history and is pure.
"""

from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy import ndimage
from scipy.integrate import cumulative_trapezoid

from heleshaw.core.exceptions import (
    CoverageError,
    DegenerateFitError,
    DomainError,
    ResolutionError,
    TimeOrderingError,
)
from heleshaw.models.report_models import CheckName, ReportEntry
from heleshaw.services.grid_core import Grid, ScalarField, ball_mask, gradient, laplacian
from heleshaw.services.pme import SATURATION_MARGIN, SimState, saturation_threshold

logger = structlog.get_logger(__name__)

INTERFACE_CELLS = 2
DEFAULT_RADII_CELLS = (4, 8, 16, 32)
MIN_RADIUS_CELLS = 3
W_MIN_FACTOR = 10.0 * np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class BaiocchiField:
    grid: Grid
    w: ScalarField
    eta: ScalarField
    t: float

    def positive_set(self, w_min: float) -> np.ndarray:
        return self.w.values > w_min


class BaiocchiAccumulator:
    """Trapezoidal accumulation of w and eta; keeps a BaiocchiField whenever `keep` is set."""

    def __init__(self):
        self.history: List[BaiocchiField] = []
        self._time: Optional[float] = None
        self._p: Optional[np.ndarray] = None
        self._source: Optional[np.ndarray] = None
        self._w: Optional[np.ndarray] = None
        self._eta: Optional[np.ndarray] = None
        self._grid: Optional[Grid] = None

    def push(self, state: SimState, keep: bool = True) -> None:
        p = state.p.values
        source = state.rho.values * state.n.values
        if self._time is None:
            self._grid = state.grid
            self._w = np.zeros(state.grid.shape)
            self._eta = np.zeros(state.grid.shape)
        else:
            if not state.time > self._time:
                raise TimeOrderingError(self._time, state.time)
            dt = state.time - self._time
            self._w = self._w + 0.5 * dt * (self._p + p)
            self._eta = self._eta + 0.5 * dt * (self._source + source)
        self._time, self._p, self._source = state.time, p, source
        if keep:
            self.history.append(self.current())

    def current(self) -> BaiocchiField:
        if self._time is None:
            raise CoverageError("no state has been accumulated yet")
        return BaiocchiField(self._grid, ScalarField(self._grid, self._w), ScalarField(self._grid, self._eta), self._time)

    @property
    def started(self) -> bool:
        return self._time is not None

    @property
    def time(self) -> Optional[float]:
        return self._time

    @property
    def times(self) -> List[float]:
        return [bf.t for bf in self.history]


def accumulate(states: Iterable[SimState], keep_every: int = 1) -> List[BaiocchiField]:
    accumulator = BaiocchiAccumulator()
    for index, state in enumerate(states):
        accumulator.push(state, keep=index % keep_every == 0)
    if accumulator.started and (not accumulator.history or accumulator.history[-1].t != accumulator.time):
        accumulator.history.append(accumulator.current())
    return accumulator.history


def default_w_min(history: Sequence[BaiocchiField]) -> float:
    peak = max((bf.w.max() for bf in history), default=0.0)
    return max(W_MIN_FACTOR * peak, np.finfo(float).tiny)


def interface_mask(positive: np.ndarray, cells: float = INTERFACE_CELLS) -> np.ndarray:
    """Cells farther than `cells` lattice steps from the boundary of `positive`."""
    if positive.all() or not positive.any():
        return np.ones_like(positive, dtype=bool)
    inside = ndimage.distance_transform_edt(positive)
    outside = ndimage.distance_transform_edt(~positive)
    return np.where(positive, inside, outside) > cells


def obstacle_residual(
    bf: BaiocchiField,
    rho0: ScalarField,
    rho_t: ScalarField,
    tol: float = 0.05,
    w_min: Optional[float] = None,
) -> ReportEntry:
    """|Delta w - (rho_t - rho_0 - eta)| away from the interface and over all cells."""
    residual = np.abs(laplacian(bf.w).values - (rho_t.values - rho0.values - bf.eta.values))
    w_min = w_min if w_min is not None else max(W_MIN_FACTOR * bf.w.max(), np.finfo(float).tiny)
    away = interface_mask(bf.positive_set(w_min))
    interior = float(residual[away].max()) if away.any() else 0.0
    return ReportEntry.compare(
        CheckName.OBSTACLE_RESIDUAL,
        interior,
        tol,
        details={"all_cells": float(residual.max()), "t": bf.t, "cells_checked": float(away.sum())},
    )


@dataclass(frozen=True, eq=False)
class HittingField:
    grid: Grid
    T: np.ndarray
    w_min: float

    @property
    def reached(self) -> np.ndarray:
        return np.isfinite(self.T)

    def at(self, point: Sequence[float]) -> float:
        return float(self.T[self.grid.cell_index(point)])


def hitting_time(history: Sequence[BaiocchiField], w_min: Optional[float] = None) -> HittingField:
    """First crossing of w above w_min, linearly interpolated between stored times."""
    if not history:
        raise CoverageError("empty Baiocchi history")
    grid = history[0].grid
    w_min = w_min if w_min is not None else default_w_min(history)
    if not w_min > 0:
        raise DomainError(f"w_min must be positive, got {w_min}")

    times = np.array([bf.t for bf in history])
    stack = np.stack([bf.w.values for bf in history])
    above = stack > w_min
    reached = above.any(axis=0)
    first = np.argmax(above, axis=0)

    T = np.full(grid.shape, np.inf)
    at_start = reached & (first == 0)
    T[at_start] = times[0]

    later = reached & (first > 0)
    k = first[later]
    w_before = np.take_along_axis(stack, (first - 1).clip(0)[None], axis=0)[0][later]
    w_after = np.take_along_axis(stack, first[None], axis=0)[0][later]
    fraction = (w_min - w_before) / (w_after - w_before)
    T[later] = times[k - 1] + fraction * (times[k] - times[k - 1])
    return HittingField(grid, T, w_min)


def eta_from_T(hitting: HittingField, n_history: Sequence[Tuple[float, ScalarField]], t: float) -> ScalarField:
    """eta(x, t) = int_{T(x)}^t n(x, s) ds where T(x) < t, else 0."""
    grid = hitting.grid
    active = hitting.reached & (hitting.T < t)
    if not active.any():
        return ScalarField.zeros(grid)

    times = np.array([time for time, _ in n_history])
    if times.size < 2 or times[0] > hitting.T[active].min() + 1e-12 or times[-1] < t - 1e-12:
        raise CoverageError(
            f"nutrient history [{times[0] if times.size else float('nan'):.4g}, "
            f"{times[-1] if times.size else float('nan'):.4g}] does not cover [min T, {t:.4g}]"
        )
    values = np.stack([n.values for _, n in n_history])
    cumulative = cumulative_trapezoid(values, times, axis=0, initial=0.0)

    def integral_to(s: np.ndarray, cells: Tuple[np.ndarray, ...]) -> np.ndarray:
        j = np.clip(np.searchsorted(times, s, side="right") - 1, 0, times.size - 2)
        span = times[j + 1] - times[j]
        frac = (s - times[j]) / span
        n_j = values[(j,) + cells]
        n_s = n_j + frac * (values[(j + 1,) + cells] - n_j)
        return cumulative[(j,) + cells] + 0.5 * (s - times[j]) * (n_j + n_s)

    cells = np.nonzero(active)
    eta = np.zeros(grid.shape)
    upper = integral_to(np.full(cells[0].shape, t), cells)
    lower = integral_to(hitting.T[active], cells)
    eta[active] = np.maximum(upper - lower, 0.0)
    return ScalarField(grid, eta)


def eta_consistency(recomputed: ScalarField, accumulated: ScalarField, tol: float = 0.05) -> ReportEntry:
    gap = float(np.abs(recomputed.values - accumulated.values).max())
    return ReportEntry.compare(CheckName.ETA_CONSISTENCY, gap, tol, details={"eta_max": accumulated.max()})


def containment_check(history: Sequence[BaiocchiField], w_min: Optional[float] = None) -> ReportEntry:
    """Cells that leave the positivity set of w between consecutive stored times."""
    w_min = w_min if w_min is not None else default_w_min(history)
    escaped = 0
    for earlier, later in zip(history, history[1:]):
        escaped += int((earlier.positive_set(w_min) & ~later.positive_set(w_min)).sum())
    return ReportEntry.compare(
        CheckName.POSITIVITY_CONTAINMENT, float(escaped), 0.0, details={"stored_times": float(len(history))}
    )


def boundary_cell_count(mask: np.ndarray) -> int:
    if not mask.any():
        return 0
    interior = ndimage.binary_erosion(mask, border_value=1)
    return int((mask & ~interior).sum())


def patch_agreement(
    bf: BaiocchiField,
    rho: ScalarField,
    gamma: float,
    tol: float = 4.0,
    w_min: Optional[float] = None,
    margin: float = SATURATION_MARGIN,
) -> ReportEntry:
    """|{rho > 1 - margin/gamma} sym-diff {w > w_min}| measured in units of the patch perimeter."""
    w_min = w_min if w_min is not None else max(W_MIN_FACTOR * bf.w.max(), np.finfo(float).tiny)
    saturated = rho.values > saturation_threshold(gamma, margin)
    positive = bf.positive_set(w_min)
    mismatch = int((saturated ^ positive).sum())
    perimeter = max(boundary_cell_count(positive), 1)
    return ReportEntry.compare(
        CheckName.PATCH_AGREEMENT,
        mismatch / perimeter,
        tol,
        details={"mismatch_cells": float(mismatch), "perimeter_cells": float(perimeter), "t": bf.t},
    )


def front_speed_check(hitting: HittingField, snapshots: Sequence[SimState]) -> ReportEntry:
    """Median of ||grad T| |grad p| - 1| over cells reached after the first snapshot.

    |grad p| is read from the first snapshot after the crossing; informational only.
    """
    grid = hitting.grid
    T = hitting.T
    finite = hitting.reached
    neighbours_reached = ndimage.binary_erosion(finite, border_value=0)
    candidates = neighbours_reached & (T > snapshots[0].time)
    if not candidates.any():
        return ReportEntry.skipped(CheckName.FRONT_SPEED)

    T_filled = np.where(finite, T, 0.0)
    grad_T = gradient(ScalarField(grid, T_filled))
    speed_T = np.sqrt(sum(g ** 2 for g in grad_T))

    times = np.array([s.time for s in snapshots])
    p_speed = np.stack([np.sqrt(sum(g ** 2 for g in gradient(s.p))) for s in snapshots])
    index = np.clip(np.searchsorted(times, T, side="right"), 0, len(snapshots) - 1)
    grad_p = np.take_along_axis(p_speed, index[None], axis=0)[0]

    product = speed_T[candidates] * grad_p[candidates]
    usable = product > 0
    if not usable.any():
        return ReportEntry.skipped(CheckName.FRONT_SPEED)
    defect = float(np.median(np.abs(product[usable] - 1.0)))
    return ReportEntry.info(CheckName.FRONT_SPEED, defect, details={"cells": float(usable.sum())})


@dataclass(frozen=True)
class HolderFit:
    point: Tuple[float, ...]
    alpha: float
    residual: float
    radii: Tuple[float, ...]
    sups: Tuple[float, ...]


def holder_exponent(hitting: HittingField, x1: Sequence[float], radii: Optional[Sequence[float]] = None) -> HolderFit:
    """Least-squares slope of log S(R) against log R, S(R) = max_{B_R(x1)} (T(x1) - T(y))_+.

    Radii with S(R) = 0 carry no slope information and are left out of the fit; fewer than
    two radii with a positive drop raise DegenerateFitError.
    """
    grid = hitting.grid
    x1 = grid.point(x1)
    h = grid.spacing
    T1 = hitting.at(x1)
    if not np.isfinite(T1):
        raise DomainError(f"T is infinite at {x1}")
    radii = tuple(radii) if radii is not None else tuple(k * h for k in DEFAULT_RADII_CELLS)
    for radius in radii:
        if radius < MIN_RADIUS_CELLS * h - 1e-12:
            raise ResolutionError(radius, MIN_RADIUS_CELLS * h)
        if not grid.contains_ball(x1, radius):
            raise DomainError(f"ball of radius {radius:.4g} about {x1} leaves the box")

    drops = np.where(hitting.reached, np.maximum(T1 - hitting.T, 0.0), 0.0)
    sups = tuple(float(drops[ball_mask(grid, x1, radius)].max()) for radius in radii)
    positive = [(r, s) for r, s in zip(radii, sups) if s > 0]
    if len(positive) < 2:
        raise DegenerateFitError(f"S(R) vanishes on all but {len(positive)} radii at {x1}")

    log_r = np.log([r for r, _ in positive])
    log_s = np.log([s for _, s in positive])
    slope, intercept = np.polyfit(log_r, log_s, 1)
    residual = float(np.sqrt(np.mean((log_s - (slope * log_r + intercept)) ** 2)))
    return HolderFit(x1, float(slope), residual, radii, sups)


def holder_report(fits: Sequence[HolderFit], alpha_d: float, slack: float = 0.1) -> ReportEntry:
    if not fits:
        return ReportEntry.skipped(CheckName.HOLDER_EXPONENT)
    worst = min(fits, key=lambda fit: fit.alpha)
    return ReportEntry.compare(
        CheckName.HOLDER_EXPONENT,
        worst.alpha,
        alpha_d - slack,
        at_least=True,
        details={
            "alpha_d": alpha_d,
            "points": float(len(fits)),
            "median_alpha": float(np.median([fit.alpha for fit in fits])),
            "worst_residual": worst.residual,
        },
    )


def holder_points(hitting: HittingField, radius: float, max_points: int) -> List[Tuple[float, ...]]:
    """Late-reached cells whose ball of `radius` stays in the box, evenly subsampled."""
    grid = hitting.grid
    reached = hitting.reached
    if not reached.any():
        return []
    T = hitting.T
    late = reached & (T >= 0.5 * T[reached].max()) & (T > T[reached].min())
    candidates = [
        grid.cell_center(index) for index in np.argwhere(late)
        if grid.contains_ball(grid.cell_center(index), radius)
    ]
    if len(candidates) <= max_points:
        return candidates
    picks = np.unique(np.linspace(0, len(candidates) - 1, max_points).round().astype(int))
    return [candidates[i] for i in picks]
