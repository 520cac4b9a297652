# File: heleshaw/services/hopflax.py

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog
from scipy.integrate import quad

from heleshaw.core.exceptions import CoverageError, DomainError
from heleshaw.models.report_models import CheckName, ReportEntry
from heleshaw.models.solver_models import HopfLaxParams
from heleshaw.services.grid_core import Grid, grad_sq
from heleshaw.services.pme import compute_u_gamma
from heleshaw.services.simulation import RunResult

logger = structlog.get_logger(__name__)

QUAD_TOL = 1e-8
DEFAULT_FRACTION_TOL = 0.01
DEFAULT_HJB_TOL = 0.05
MAX_DOUBLINGS = 10
BUMP_RADIUS_FRACTION = 0.45


def lambda_schedule(theta: float, s: float) -> float:
    if s <= 0:
        raise DomainError(f"lambda schedule needs s > 0, got {s}")
    return theta + s ** -0.5


def _big_lambda(b: float, C: float, theta: float, t: float) -> float:
    if t <= 0:
        raise DomainError(f"Lambda needs t > 0, got {t}")
    return 5.0 / (4.0 * b) * (theta * t + 2.0 * math.sqrt(t)) + t / b * math.log1p(C / t)


def big_lambda(params: HopfLaxParams, t: float) -> float:
    return _big_lambda(params.b, params.C, params.theta, t)


@lru_cache(maxsize=4096)
def _envelope_integral(b: float, C: float, theta: float, span: float) -> float:
    def integrand(s: float) -> float:
        return math.exp(_big_lambda(b, C, theta, s)) if s > 0 else 1.0

    value, _ = quad(integrand, 0.0, span, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
    return value


def envelope_integral(params: HopfLaxParams, span: float) -> float:
    """int_0^span exp(Lambda(s)) ds."""
    return _envelope_integral(params.b, params.C, params.theta, span)


def hopf_lax_rhs(params: HopfLaxParams, p1: float, distance: float, span: float) -> float:
    envelope = math.exp(big_lambda(params, span))
    transport = distance ** 2 / (4.0 * envelope_integral(params, span))
    remainder = params.C * span ** 0.7 * math.exp(-lambda_schedule(params.theta, span))
    return envelope * (p1 + transport + remainder)


@dataclass(frozen=True)
class PairRow:
    t0: float
    t1: float
    distance: float
    lhs: float
    rhs: float
    violation: float


def _offset(rng: np.random.Generator, dim: int, radius: float) -> np.ndarray:
    direction = rng.standard_normal(dim)
    norm = np.linalg.norm(direction)
    direction = direction / norm if norm > 0 else np.eye(dim)[0]
    return direction * radius * rng.random() ** (1.0 / dim)


def sample_pairs(run: RunResult, params: HopfLaxParams) -> List[Tuple[int, Tuple[int, ...], int, Tuple[int, ...]]]:
    """(k0, cell0, k1, cell1) per pair; pair i draws from default_rng([seed, i])."""
    snapshots = run.snapshots
    if len(snapshots) < 2:
        raise CoverageError("Hopf-Lax verification needs at least 2 stored snapshots")
    grid: Grid = run.grid
    K = len(snapshots)
    positive_cells = [np.argwhere(s.p.values > 0) for s in snapshots]
    pairs = []
    for i in range(params.pair_count):
        rng = np.random.default_rng([params.seed, i])
        k0 = int(rng.integers(0, K - 1))
        k1 = int(rng.integers(k0 + 1, K))
        candidates = positive_cells[k0]
        if len(candidates):
            cell0 = tuple(int(c) for c in candidates[rng.integers(0, len(candidates))])
        else:
            cell0 = tuple(int(c) for c in rng.integers(0, grid.cells_per_axis, size=grid.dim))
        x1 = np.asarray(grid.cell_center(cell0)) + _offset(rng, grid.dim, params.pair_radius)
        cell1 = grid.cell_index(x1)
        pairs.append((k0, cell0, k1, cell1))
    return pairs


def evaluate_pairs(run: RunResult, params: HopfLaxParams) -> List[PairRow]:
    grid = run.grid
    rows = []
    for k0, cell0, k1, cell1 in sample_pairs(run, params):
        s0, s1 = run.snapshots[k0], run.snapshots[k1]
        span = s1.time - s0.time
        distance = float(np.linalg.norm(np.subtract(grid.cell_center(cell1), grid.cell_center(cell0))))
        lhs = float(s0.p.values[cell0])
        rhs = hopf_lax_rhs(params, float(s1.p.values[cell1]), distance, span)
        violation = max(lhs - rhs, 0.0) / lhs if lhs > 0 else 0.0
        rows.append(PairRow(s0.time, s1.time, distance, lhs, rhs, violation))
    return rows


def verify_hopf_lax(
    run: RunResult,
    params: HopfLaxParams,
    fraction_tol: float = DEFAULT_FRACTION_TOL,
) -> Tuple[ReportEntry, List[PairRow]]:
    rows = evaluate_pairs(run, params)
    violated = sum(1 for row in rows if row.violation > params.relative_tolerance)
    fraction = violated / len(rows)
    entry = ReportEntry.compare(
        CheckName.HOPF_LAX,
        fraction,
        fraction_tol,
        details={
            "C": params.C,
            "b": params.b,
            "pairs": float(len(rows)),
            "max_relative_violation": max(row.violation for row in rows),
        },
    )
    return entry, rows


@dataclass(frozen=True)
class ConstantScan:
    C: float
    doublings: int
    entry: ReportEntry
    rows: List[PairRow]


def scan_constant(
    run: RunResult,
    params: HopfLaxParams,
    fraction_tol: float = DEFAULT_FRACTION_TOL,
    max_doublings: int = MAX_DOUBLINGS,
) -> ConstantScan:
    """Smallest C in {1, 2, ..., 2^max_doublings} passing; the largest tried if none does."""
    scan = None
    for doublings in range(max_doublings + 1):
        C = 2.0 ** doublings
        entry, rows = verify_hopf_lax(run, params.model_copy(update={"C": C}), fraction_tol)
        scan = ConstantScan(C, doublings, entry, rows)
        if entry.passed:
            break
    logger.info("Hopf-Lax constant scan finished", C=scan.C, passed=scan.entry.passed, gamma=run.gamma)
    return scan


def constant_drift(fine: ConstantScan, coarse: ConstantScan, allowed_steps: int = 1) -> ReportEntry:
    drift = abs(fine.doublings - coarse.doublings)
    if not (fine.entry.passed and coarse.entry.passed):
        drift = max(drift, allowed_steps + 1)
    return ReportEntry.compare(
        CheckName.HOPF_LAX_REFINEMENT,
        float(drift),
        float(allowed_steps),
        details={"C_fine": fine.C, "C_coarse": coarse.C},
    )


def hopf_lax_rows(rows: Sequence[PairRow]) -> pd.DataFrame:
    return pd.DataFrame(
        [(r.t0, r.t1, r.distance, r.lhs, r.rhs, r.violation) for r in rows],
        columns=["t0", "t1", "distance", "lhs", "rhs", "violation"],
    )


def bump_weight(grid: Grid, center: Optional[Sequence[float]] = None, radius: Optional[float] = None) -> np.ndarray:
    center = grid.point(center) if center is not None else tuple(o + 0.5 * grid.extent for o in grid.origin)
    radius = radius or BUMP_RADIUS_FRACTION * grid.extent
    squared = grid.distance_from(center) ** 2 / radius ** 2
    return np.maximum(1.0 - squared, 0.0) ** 2


def hjb_residual(
    run: RunResult,
    tol: float = DEFAULT_HJB_TOL,
    center: Optional[Sequence[float]] = None,
    radius: Optional[float] = None,
) -> ReportEntry:
    """Weighted negative part of d_t p - |grad p|^2 + u_+ p, relative to the weighted size of its terms."""
    snapshots = run.snapshots
    if len(snapshots) < 2:
        raise CoverageError("HJB residual needs at least 2 stored snapshots")
    space = bump_weight(run.grid, center, radius)
    horizon = snapshots[-1].time - snapshots[0].time
    negative = 0.0
    scale = 0.0
    for now, later in zip(snapshots, snapshots[1:]):
        dt = later.time - now.time
        time_weight = math.sin(math.pi * (now.time - snapshots[0].time) / horizon) ** 2
        if time_weight == 0.0:
            continue
        p = now.p.values
        dp = (later.p.values - p) / dt
        slope = grad_sq(now.p).values
        growth = np.maximum(compute_u_gamma(now, run.gamma).values, 0.0) * p
        residual = dp - slope + growth
        weight = space * time_weight * dt
        negative += float((np.maximum(-residual, 0.0) * weight).sum())
        scale += float(((np.abs(dp) + slope + growth) * weight).sum())
    measured = negative / scale if scale > 0 else 0.0
    return ReportEntry.compare(
        CheckName.HJB_RESIDUAL,
        measured,
        tol,
        details={"negative_part": negative * run.grid.cell_volume, "scale": scale * run.grid.cell_volume},
    )

