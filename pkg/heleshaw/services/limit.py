# File: heleshaw/services/limit.py

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import structlog
from scipy import ndimage
from scipy.integrate import trapezoid

from heleshaw.core.config import settings
from heleshaw.core.exceptions import (
    DomainError,
    EmptyRunListError,
    HeleShawException,
    MomentOverflowError,
    SweepMemberError,
)
from heleshaw.models.report_models import CheckName, ReportEntry
from heleshaw.models.solver_models import GammaSweep, PmeParams
from heleshaw.services.pme import SimState, compute_u_gamma
from heleshaw.services.simulation import RunResult, StateObserver, simulate

logger = structlog.get_logger(__name__)

OVERFLOW_EXPONENT = 700.0
B_SCAN_DOUBLINGS = 20
SUPPORT_FLOOR = 1e-3
NESTING_CELLS = 2.0


def run_sweep(
    sweep: GammaSweep,
    initial: Callable[[float], SimState],
    template: PmeParams,
    threads: Optional[int] = None,
    observers: Optional[Callable[[float], Sequence[StateObserver]]] = None,
) -> List[RunResult]:
    """One run per gamma, in the order of `sweep.gammas` regardless of thread count."""

    def member(gamma: float) -> RunResult:
        with structlog.contextvars.bound_contextvars(gamma=gamma):
            try:
                params = template.model_copy(update={"gamma": gamma})
                watchers = observers(gamma) if observers else ()
                return simulate(initial(gamma), params, sweep.horizon, sweep.snapshot_interval, watchers)
            except HeleShawException as e:
                logger.error("Sweep member failed", error=str(e), code=e.code)
                raise SweepMemberError(gamma, e)

    workers = threads or settings.THREADS
    logger.info("Starting gamma sweep", gammas=sweep.gammas, threads=workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(member, gamma) for gamma in sweep.gammas]
        return [future.result() for future in futures]


@dataclass(frozen=True)
class AbMoment:
    b: float
    value: float
    gamma: Optional[float] = None


@dataclass(frozen=True, eq=False)
class PositivePartSeries:
    """u_+ on the stored snapshots of one run."""

    times: np.ndarray
    values: np.ndarray
    cell_volume: float
    gamma: Optional[float] = None

    @classmethod
    def from_run(cls, run: RunResult) -> "PositivePartSeries":
        values = np.stack([np.maximum(compute_u_gamma(s, run.gamma).values, 0.0) for s in run.snapshots])
        return cls(np.array(run.times), values, run.grid.cell_volume, run.gamma)

    @property
    def peak(self) -> float:
        return float(self.values.max(initial=0.0))


MomentSource = Union[RunResult, PositivePartSeries]


def _series(source: MomentSource) -> PositivePartSeries:
    return source if isinstance(source, PositivePartSeries) else PositivePartSeries.from_run(source)


def ab_integrand(bu: np.ndarray) -> np.ndarray:
    # (bu - 1) e^{bu} + 1 written to keep precision near bu = 0
    return bu * np.exp(bu) - np.expm1(bu)


def ab_moment_from_fields(series: PositivePartSeries, b: float) -> AbMoment:
    if not b > 0:
        raise ValueError(f"b must be positive, got {b}")
    peak = b * series.peak
    if peak > OVERFLOW_EXPONENT:
        raise MomentOverflowError(b, peak)
    per_time = ab_integrand(b * series.values).reshape(len(series.times), -1).sum(axis=1) * series.cell_volume
    value = float(trapezoid(per_time, series.times)) if len(series.times) > 1 else 0.0
    return AbMoment(b, value, series.gamma)


def ab_moment(run: MomentSource, b: float) -> AbMoment:
    return ab_moment_from_fields(_series(run), b)


def calibrate_b(runs: Sequence[MomentSource]) -> float:
    """Largest dyadic b <= 1 with b u_+ <= 700 and finite M_b on every run."""
    if not runs:
        raise EmptyRunListError()
    series = [_series(run) for run in runs]
    b = 1.0
    for _ in range(B_SCAN_DOUBLINGS + 1):
        try:
            if all(np.isfinite(ab_moment_from_fields(s, b).value) for s in series):
                logger.info("Calibrated AB moment exponent", b=b)
                return b
        except MomentOverflowError:
            pass
        b /= 2.0
    return 2.0 ** -B_SCAN_DOUBLINGS


def ab_uniformity(moments: Sequence[AbMoment], factor: float = 2.0) -> ReportEntry:
    values = [m.value for m in moments]
    top, bottom = max(values), min(values)
    if top == 0.0:
        ratio = 1.0
    elif bottom == 0.0:
        ratio = float("inf")
    else:
        ratio = top / bottom
    details = {f"M_b_gamma_{m.gamma:g}": m.value for m in moments if m.gamma is not None}
    details["b"] = moments[0].b
    return ReportEntry.compare(CheckName.AB_MOMENT_UNIFORMITY, ratio, factor, details=details)


def ab_monotone(run: MomentSource, bs: Sequence[float]) -> ReportEntry:
    """Largest drop of M_b along increasing b; exactly zero for u_+ >= 0."""
    series = _series(run)
    values = [ab_moment_from_fields(series, b).value for b in sorted(bs)]
    drop = max([0.0] + [a - c for a, c in zip(values, values[1:])])
    return ReportEntry.compare(CheckName.AB_MOMENT_MONOTONE, drop, 0.0, details={"b_values": float(len(bs))})


def l1_distances(runs: Sequence[RunResult]) -> List[float]:
    return [
        float(np.abs(b.final.rho.values - a.final.rho.values).sum() * a.grid.cell_volume)
        for a, b in zip(runs, runs[1:])
    ]


def l1_cauchy(runs: Sequence[RunResult], reference: Optional[RunResult] = None) -> ReportEntry:
    """Largest ratio between consecutive cross-gamma L1 distances at the horizon.

    With a reference run at a larger gamma, the distances from each member to it must shrink too.
    """
    distances = l1_distances(runs)
    details = {f"l1_gamma_{r.gamma:g}": d for r, d in zip(runs, distances)}
    ratios = _shrink_ratios(distances)
    if reference is not None:
        if any(run.gamma >= reference.gamma for run in runs):
            raise DomainError(f"reference gamma {reference.gamma:g} must exceed every sweep gamma")
        to_reference = l1_distances_to(runs, reference)
        ratios += _shrink_ratios(to_reference)
        details.update({f"l1_ref_gamma_{r.gamma:g}": d for r, d in zip(runs, to_reference)})
        details["reference_gamma"] = reference.gamma
    if not ratios:
        return ReportEntry.skipped(CheckName.SWEEP_CAUCHY)
    return ReportEntry.compare(CheckName.SWEEP_CAUCHY, max(ratios), 1.0, details=details)


def l1_distances_to(runs: Sequence[RunResult], reference: RunResult) -> List[float]:
    return [
        float(np.abs(reference.final.rho.values - run.final.rho.values).sum() * run.grid.cell_volume)
        for run in runs
    ]


def _shrink_ratios(distances: Sequence[float]) -> List[float]:
    return [b / a if a > 0 else (0.0 if b == 0 else float("inf")) for a, b in zip(distances, distances[1:])]


def pressure_support(state: SimState) -> np.ndarray:
    peak = state.p.max()
    return state.p.values > SUPPORT_FLOOR * peak if peak > 0 else np.zeros(state.grid.shape, dtype=bool)


def support_nesting(runs: Sequence[RunResult], tolerance_cells: float = NESTING_CELLS) -> ReportEntry:
    """Worst distance, in cells, from a support cell of one gamma to the support of the next."""
    if len(runs) < 2:
        return ReportEntry.skipped(CheckName.SUPPORT_NESTING)
    worst = 0.0
    for a, b in zip(runs, runs[1:]):
        for state_a, state_b in zip(a.snapshots, b.snapshots):
            inner, outer = pressure_support(state_a), pressure_support(state_b)
            if not inner.any():
                continue
            if not outer.any():
                worst = float("inf")
                continue
            distance = ndimage.distance_transform_edt(~outer)
            worst = max(worst, float(distance[inner].max()))
    return ReportEntry.compare(CheckName.SUPPORT_NESTING, worst, tolerance_cells)


def sweep_rows(runs: Sequence[RunResult], moments: Sequence[AbMoment]) -> pd.DataFrame:
    distances = l1_distances(runs) + [float("nan")]
    return pd.DataFrame(
        {
            "gamma": [run.gamma for run in runs],
            "tau": [run.final.time for run in runs],
            "b": [m.b for m in moments],
            "M_b": [m.value for m in moments],
            "l1_to_next_gamma": distances,
        }
    )
