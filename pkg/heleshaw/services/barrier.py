# File: heleshaw/services/barrier.py

"""Radial supersolution on a shrinking annulus and the scalar radius ODE that drives it.

psi(t, x) = h(t) G(|x - x0|) - nbar0 |x - x0|^2 / (2d) + g(t), with G the radial
fundamental solution, psi = 0 on the inner sphere and psi = pbar on the outer one.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog
from scipy.integrate import cumulative_trapezoid

from heleshaw.core.exceptions import (
    DomainError,
    HypothesisViolatedError,
    StepSizeError,
    UnsupportedDimensionError,
)
from heleshaw.models.report_models import CheckName, ReportEntry
from heleshaw.services.grid_core import Grid, ball_mask, ball_max
from heleshaw.services.pme import SATURATION_MARGIN, saturation_threshold
from heleshaw.services.simulation import RunResult

logger = structlog.get_logger(__name__)

RESOLUTION_FLOOR_CELLS = 4
DEFAULT_COMPARISON_TOL = 0.02
MECHANICS_TOL = 0.01

PressureBound = Callable[[float, float], float]


@dataclass(frozen=True)
class FundamentalSolution:
    dim: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise UnsupportedDimensionError(self.dim)

    def value(self, r):
        r = np.asarray(r, dtype=float)
        if self.dim == 1:
            return r
        if self.dim == 2:
            return np.log(r)
        return -1.0 / r

    def derivative(self, r):
        return np.asarray(r, dtype=float) ** (1 - self.dim)


def xi_of_m(dim: int, m: float) -> float:
    """r |G'(r)| / (G(m r) - G(r)); independent of r."""
    if m <= 1:
        raise DomainError(f"annulus ratio m must exceed 1, got {m}")
    if dim == 1:
        return 1.0 / (m - 1.0)
    if dim == 2:
        return 1.0 / math.log(m)
    if dim == 3:
        return m / (m - 1.0)
    raise UnsupportedDimensionError(dim)


def exponent_constants(dim: int) -> Tuple[float, float, float]:
    """(xi_d, alpha_d, m_star): xi_d = inf_m m^2 xi_d(m) / 2, alpha_d = 2 / xi_d."""
    if dim == 2:
        xi = math.e
        m_star = math.sqrt(math.e)
    elif dim == 3:
        xi = (dim / 2.0) ** (dim / (dim - 2.0))
        m_star = (dim / 2.0) ** (1.0 / (dim - 2.0))
    else:
        raise UnsupportedDimensionError(dim)
    return xi, 2.0 / xi, m_star


def exponent_constants_entry(tol: float = 1e-14) -> ReportEntry:
    defect = 0.0
    details = {}
    for dim in (2, 3):
        xi, alpha, m_star = exponent_constants(dim)
        defect = max(defect, abs(alpha - 2.0 / xi), abs(m_star ** 2 * xi_of_m(dim, m_star) / 2.0 - xi))
        details[f"alpha_{dim}"] = alpha
        details[f"xi_{dim}"] = xi
    defect = max(defect, abs(details["alpha_2"] - 2.0 / math.e), abs(details["alpha_3"] - 16.0 / 27.0))
    return ReportEntry.compare(CheckName.EXPONENT_CONSTANTS, defect, tol, details=details)


def default_ratio(dim: int) -> float:
    if dim == 1:
        return 2.0
    return exponent_constants(dim)[2]


def holder_alpha(dim: int) -> float:
    """2 / xi at the default annulus ratio; equals alpha_d for d >= 2 and 1 for d = 1."""
    m = default_ratio(dim)
    return 4.0 / (m ** 2 * xi_of_m(dim, m))


def decay_rate(dim: int, m: float, nbar0: float) -> float:
    """Rate of r' = -kappa r when pbar vanishes."""
    return nbar0 * ((m ** 2 - 1.0) * xi_of_m(dim, m) / 2.0 + 1.0) / dim


@dataclass(frozen=True)
class BarrierConfig:
    x0: Tuple[float, ...]
    r0: float
    m: float
    nbar0: float
    pbar: PressureBound
    dim: int

    def __post_init__(self):
        if not self.r0 > 0:
            raise DomainError(f"r0 must be positive, got {self.r0}")
        if not self.m > 1:
            raise DomainError(f"m must exceed 1, got {self.m}")
        if self.nbar0 < 0:
            raise DomainError(f"nbar0 must be nonnegative, got {self.nbar0}")

    @property
    def fundamental(self) -> FundamentalSolution:
        return FundamentalSolution(self.dim)


def growth_constant_K(config: BarrierConfig) -> float:
    return decay_rate(config.dim, config.m, config.nbar0)


@dataclass(frozen=True)
class RadialProfile:
    h: float
    g: float
    r: float
    m: float
    nbar0: float
    fundamental: FundamentalSolution

    @property
    def outer(self) -> float:
        return self.m * self.r

    def __call__(self, radius):
        radius = np.asarray(radius, dtype=float)
        d = self.fundamental.dim
        return self.h * self.fundamental.value(radius) - self.nbar0 * radius ** 2 / (2.0 * d) + self.g

    def on_grid(self, grid: Grid, center: Sequence[float]) -> np.ndarray:
        """psi on the annulus, 0 inside the inner ball, NaN beyond the outer sphere."""
        distance = grid.distance_from(center)
        values = np.full(grid.shape, np.nan)
        inner = distance < self.r
        annulus = ~inner & (distance <= self.outer)
        values[inner] = 0.0
        values[annulus] = self(distance[annulus])
        return values


def _h_of(config: BarrierConfig, t: float, r: float) -> Tuple[float, float]:
    G = config.fundamental
    d = config.dim
    pbar = config.pbar(t, config.m * r)
    gap = float(G.value(config.m * r) - G.value(r))
    h = (pbar + config.nbar0 * (config.m ** 2 - 1.0) * r ** 2 / (2.0 * d)) / gap
    return h, pbar


def psi_profile(config: BarrierConfig, t: float, r_of_t: float) -> RadialProfile:
    if not r_of_t > 0:
        raise DomainError(f"inner radius must be positive, got {r_of_t}")
    h, _ = _h_of(config, t, r_of_t)
    d = config.dim
    g = config.nbar0 * r_of_t ** 2 / (2.0 * d) - h * float(config.fundamental.value(r_of_t))
    return RadialProfile(h, g, r_of_t, config.m, config.nbar0, config.fundamental)


def radius_rhs(config: BarrierConfig, t: float, r: float) -> float:
    h, _ = _h_of(config, t, r)
    return -abs(h) * float(config.fundamental.derivative(r)) - config.nbar0 / config.dim * r


@dataclass
class RadiusTrajectory:
    times: List[float] = field(default_factory=list)
    radii: List[float] = field(default_factory=list)
    h_values: List[float] = field(default_factory=list)
    pbar_values: List[float] = field(default_factory=list)
    truncated: bool = False

    def record(self, config: BarrierConfig, t: float, r: float):
        h, pbar = _h_of(config, t, r)
        self.times.append(t)
        self.radii.append(r)
        self.h_values.append(h)
        self.pbar_values.append(pbar)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, "r": self.radii, "h_of_t": self.h_values, "pbar": self.pbar_values})


def _rk4_step(config: BarrierConfig, t: float, r: float, dt: float) -> float:
    k1 = radius_rhs(config, t, r)
    r2 = r + 0.5 * dt * k1
    if r2 <= 0:
        raise StepSizeError(t + 0.5 * dt, r2)
    k2 = radius_rhs(config, t + 0.5 * dt, r2)
    r3 = r + 0.5 * dt * k2
    if r3 <= 0:
        raise StepSizeError(t + 0.5 * dt, r3)
    k3 = radius_rhs(config, t + 0.5 * dt, r3)
    r4 = r + dt * k3
    if r4 <= 0:
        raise StepSizeError(t + dt, r4)
    k4 = radius_rhs(config, t + dt, r4)
    return r + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_radius(
    config: BarrierConfig,
    t_span: Tuple[float, float],
    dt: float,
    floor: float = 0.0,
    record_every: int = 1,
) -> RadiusTrajectory:
    """RK4 on r' = -|h| |G'(r)| - (nbar0/d) r from r(t_span[0]) = r0; stops once r <= floor."""
    t0, t1 = t_span
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    trajectory = RadiusTrajectory()
    t, r = t0, config.r0
    trajectory.record(config, t, r)
    steps = int(math.ceil((t1 - t0) / dt - 1e-9))
    for step in range(1, steps + 1):
        step_dt = min(dt, t1 - t)
        r_next = _rk4_step(config, t, r, step_dt)
        if r_next <= 0:
            raise StepSizeError(t + step_dt, r_next)
        t, r = t0 + min(step * dt, t1 - t0), r_next
        if r <= floor:
            trajectory.record(config, t, r)
            trajectory.truncated = True
            logger.debug("Barrier radius reached resolution floor", t=t, r=r, floor=floor)
            break
        if step % record_every == 0 or step == steps:
            trajectory.record(config, t, r)
    return trajectory


def snapshot_pressure_bound(run: RunResult, x0: Sequence[float], start_time: float) -> PressureBound:
    """pbar(t, R): ball supremum of p about x0, maximised over the snapshots bracketing start_time + t."""
    times = np.array(run.times)

    def pbar(t: float, radius: float) -> float:
        absolute = start_time + t
        hi = int(np.clip(np.searchsorted(times, absolute - 1e-12), 0, len(times) - 1))
        lo = max(hi - 1, 0) if times[hi] > absolute + 1e-12 else hi
        return max(ball_max(run.snapshots[k].p, x0, radius) for k in {lo, hi})

    return pbar


def check_hypothesis(run: RunResult, config: BarrierConfig, start_index: int, margin: float = SATURATION_MARGIN):
    state = run.snapshots[start_index]
    patch = state.rho.values > saturation_threshold(run.gamma, margin)
    touching = patch & ball_mask(state.grid, config.x0, config.r0)
    if touching.any():
        raise HypothesisViolatedError(
            f"saturated patch meets B_{config.r0:g}({tuple(config.x0)}) at t={state.time:.4g}"
        )


def verify_comparison(
    run: RunResult,
    config: BarrierConfig,
    start_index: int = 0,
    tol: float = DEFAULT_COMPARISON_TOL,
    substeps: int = 10,
    margin: float = SATURATION_MARGIN,
) -> Tuple[ReportEntry, RadiusTrajectory]:
    """max (p - psi)_+ over the annulus and max p over the inner ball, relative to max p."""
    check_hypothesis(run, config, start_index, margin)
    grid = run.grid
    x0 = grid.point(config.x0)
    snapshots = run.snapshots[start_index:]
    t_start = snapshots[0].time
    floor = RESOLUTION_FLOOR_CELLS * grid.spacing
    if not grid.contains_ball(x0, config.m * config.r0):
        raise DomainError(f"outer radius {config.m * config.r0:.4g} about {x0} leaves the box")

    trajectory = RadiusTrajectory()
    trajectory.record(config, 0.0, config.r0)
    violation = 0.0
    r = config.r0
    for previous, state in zip(snapshots, snapshots[1:]):
        span = state.time - previous.time
        segment_config = BarrierConfig(x0, r, config.m, config.nbar0, config.pbar, config.dim)
        segment = integrate_radius(
            segment_config,
            (previous.time - t_start, state.time - t_start),
            span / substeps,
            floor=floor,
            record_every=substeps,
        )
        r = segment.radii[-1]
        trajectory.times.extend(segment.times[1:])
        trajectory.radii.extend(segment.radii[1:])
        trajectory.h_values.extend(segment.h_values[1:])
        trajectory.pbar_values.extend(segment.pbar_values[1:])
        if segment.truncated:
            trajectory.truncated = True
            break
        profile = psi_profile(config, state.time - t_start, r)
        psi = profile.on_grid(grid, x0)
        tracked = ~np.isnan(psi)
        gap = state.p.values[tracked] - psi[tracked]
        violation = max(violation, float(np.maximum(gap, 0.0).max(initial=0.0)))

    p_max = max(s.p.max() for s in snapshots)
    relative = violation / p_max if p_max > 0 else 0.0
    entry = ReportEntry.compare(
        CheckName.BARRIER_COMPARISON,
        relative,
        tol,
        details={
            "max_violation": violation,
            "p_max": p_max,
            "final_radius": r,
            "truncated": float(trajectory.truncated),
            "K": growth_constant_K(config),
        },
    )
    logger.info("Barrier comparison evaluated", violation=relative, final_radius=r, truncated=trajectory.truncated)
    return entry, trajectory


def lower_bound_mechanics(
    dim: int,
    r0: float,
    nbar0: float,
    H: Callable[[float], float],
    horizon: float,
    dt: float,
    m: Optional[float] = None,
    tol: float = MECHANICS_TOL,
) -> ReportEntry:
    """z = r^2 against z(0) exp(-2Kt - xi Hbar(t)) with pbar = m^2 r^2 H(t) and Hbar = int 4H.

    The trajectory solves z' = -z (2K + 2 m^2 xi_d(m) H), so with xi = m^2 xi_d(m) / 2 the bound
    is attained up to RK4 error; at the optimal ratio xi equals xi_d.
    """
    m = m or default_ratio(dim)
    def pbar(t: float, outer: float) -> float:
        return outer ** 2 * H(t)

    config = BarrierConfig((0.0,) * dim, r0, m, nbar0, pbar, dim)
    trajectory = integrate_radius(config, (0.0, horizon), dt)
    K = growth_constant_K(config)
    xi = m ** 2 * xi_of_m(dim, m) / 2.0
    times = np.array(trajectory.times)
    H_bar = 4.0 * cumulative_trapezoid([H(t) for t in times], times, initial=0.0)
    z = np.array(trajectory.radii) ** 2
    bound = z[0] * np.exp(-2.0 * K * times - xi * H_bar)
    defect = float(np.max(np.maximum(bound - z, 0.0) / z))
    return ReportEntry.compare(
        CheckName.BARRIER_MECHANICS,
        defect,
        tol,
        details={"K": K, "xi": xi, "m": m, "final_radius": float(trajectory.radii[-1])},
    )
