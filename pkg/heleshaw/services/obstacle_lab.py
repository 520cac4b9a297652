# File: heleshaw/services/obstacle_lab.py

"""Obstacle problem toolkit: projected SOR solve, quadratic blowups, regular/singular
classification, Monneau functional and the nondegeneracy / quadratic growth bounds.

The complementarity system solved is u >= 0, Delta u <= f, u (Delta u - f) = 0.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog
from scipy import ndimage

from heleshaw.core.config import settings
from heleshaw.core.exceptions import (
    DomainError,
    FreeBoundaryPointError,
    ObstacleProblemError,
    OutOfDomainError,
    ResolutionError,
    SolverDivergenceError,
)
from heleshaw.models.report_models import CheckName, ReportEntry, ReportStatus
from heleshaw.models.solver_models import ClassificationLabel
from heleshaw.services.grid_core import Grid, ScalarField, ball_mask, ball_max, radial_sample, sample

logger = structlog.get_logger(__name__)

MIN_SOURCE = 0.5
RESIDUAL_CHECK_EVERY = 10
LATTICE_POINTS = 33
ANGULAR_DIRECTIONS = 720
MIN_RADIUS_CELLS = 4
REGULAR_DENSITY = 1.0 / 8.0
SINGULAR_DENSITY = 1.0 / 16.0
KERNEL_CUTOFF = 0.05
MONNEAU_ANGLES = 256
NONDEGENERACY_SLACK = 0.1
# sup_{B_r} u <= C(d) mu r^2, C(d) measured on the synthetic corpus
QUADRATIC_BOUND_CONSTANT: Dict[int, float] = {1: 0.55, 2: 0.55}


@dataclass(frozen=True, eq=False)
class ObstacleProblem:
    grid: Grid
    source: ScalarField
    boundary: ScalarField

    def __post_init__(self):
        if self.source.min() <= MIN_SOURCE:
            raise ObstacleProblemError(f"source must exceed {MIN_SOURCE} everywhere, min is {self.source.min():.4g}")
        if self.grid.cells_per_axis < 3:
            raise ObstacleProblemError("need at least one interior cell per axis")


def _interior(shape: Tuple[int, ...]) -> Tuple[slice, ...]:
    return tuple(slice(1, -1) for _ in shape)


def _neighbour_sum(u: np.ndarray) -> np.ndarray:
    total = np.zeros(tuple(n - 2 for n in u.shape))
    for axis in range(u.ndim):
        lo = [slice(1, -1)] * u.ndim
        hi = [slice(1, -1)] * u.ndim
        lo[axis] = slice(0, -2)
        hi[axis] = slice(2, None)
        total += u[tuple(lo)] + u[tuple(hi)]
    return total


def complementarity_residual(u: np.ndarray, f: np.ndarray, h: float) -> float:
    core = _interior(u.shape)
    lap = (_neighbour_sum(u) - 2 * u.ndim * u[core]) / h ** 2
    return float(np.abs(np.minimum(u[core], f[core] - lap)).max())


def solve_obstacle(prob: ObstacleProblem, omega: Optional[float] = None) -> ScalarField:
    """Red-black projected SOR with the outer ring of cells held at the boundary data."""
    grid = prob.grid
    h = grid.spacing
    d = grid.dim
    n = grid.cells_per_axis
    omega = omega or 2.0 / (1.0 + math.sin(math.pi / n))
    f = prob.source.values
    u = np.zeros(grid.shape)
    ring = np.ones(grid.shape, dtype=bool)
    ring[_interior(grid.shape)] = False
    u[ring] = prob.boundary.values[ring]

    core = _interior(grid.shape)
    parity = np.indices(tuple(k - 2 for k in grid.shape)).sum(axis=0) % 2
    colours = [parity == 0, parity == 1]
    f_core = f[core]

    for sweep in range(1, settings.PSOR_MAXITER + 1):
        for colour in colours:
            inner = u[core]
            gauss_seidel = (_neighbour_sum(u) - h ** 2 * f_core) / (2 * d)
            relaxed = np.maximum(0.0, inner + omega * (gauss_seidel - inner))
            inner[colour] = relaxed[colour]
        if sweep % RESIDUAL_CHECK_EVERY == 0:
            residual = complementarity_residual(u, f, h)
            if residual <= settings.PSOR_TOL:
                logger.debug("PSOR converged", sweeps=sweep, residual=residual)
                return ScalarField(grid, u)
    residual = complementarity_residual(u, f, h)
    logger.error("PSOR did not converge", sweeps=settings.PSOR_MAXITER, residual=residual)
    raise SolverDivergenceError("projected SOR", settings.PSOR_MAXITER, residual)


def unit_ball_lattice(dim: int) -> np.ndarray:
    axis = np.linspace(-1.0, 1.0, LATTICE_POINTS)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    points = np.column_stack([m.ravel() for m in mesh])
    return points[np.linalg.norm(points, axis=1) <= 1.0 + 1e-12]


def unit_directions(dim: int) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    angles = 2.0 * np.pi * np.arange(ANGULAR_DIRECTIONS) / ANGULAR_DIRECTIONS
    return np.column_stack([np.cos(angles), np.sin(angles)])


def _quadratic_design(points: np.ndarray) -> np.ndarray:
    if points.shape[1] == 1:
        return 0.5 * points ** 2
    x, y = points[:, 0], points[:, 1]
    return np.column_stack([0.5 * x ** 2, x * y, 0.5 * y ** 2])


def _assemble(coefficients: np.ndarray, dim: int) -> np.ndarray:
    if dim == 1:
        return coefficients.reshape(1, 1)
    a, b, c = coefficients
    return np.array([[a, b], [b, c]])


def project_psd(Q: np.ndarray) -> np.ndarray:
    eigenvalues, vectors = np.linalg.eigh(Q)
    return (vectors * np.maximum(eigenvalues, 0.0)) @ vectors.T


@dataclass(frozen=True, eq=False)
class BlowupProfile:
    center: Tuple[float, ...]
    radius: float
    points: np.ndarray
    values: np.ndarray
    zero_density: float
    Q: np.ndarray
    quadratic_residual: float
    direction: np.ndarray
    half_space_residual: float
    amplitude: float

    @property
    def trace_ratio(self) -> float:
        return float(np.trace(self.Q) / self.amplitude)

    @property
    def accepted(self) -> bool:
        return 0.9 <= self.trace_ratio <= 1.1


def is_free_boundary(u: ScalarField, center: Sequence[float], zero_level: float = 0.0) -> bool:
    near = ball_mask(u.grid, center, 2.0 * u.grid.spacing)
    values = u.values[near]
    return bool((values <= zero_level).any() and (values > zero_level).any())


def blowup(
    u: ScalarField,
    center: Sequence[float],
    radii: Sequence[float],
    f_at_center: float = 1.0,
    zero_level: float = 0.0,
) -> List[BlowupProfile]:
    """u_r(x) = u(center + r x) / r^2 on the unit-ball lattice, with quadratic and half-space fits."""
    grid = u.grid
    center = grid.point(center)
    h = grid.spacing
    if not is_free_boundary(u, center, zero_level):
        raise FreeBoundaryPointError(center)
    if min(radii) < MIN_RADIUS_CELLS * h - 1e-12:
        raise ResolutionError(min(radii), MIN_RADIUS_CELLS * h)

    lattice = unit_ball_lattice(grid.dim)
    design = _quadratic_design(lattice)
    directions = unit_directions(grid.dim)
    projections = np.maximum(lattice @ directions.T, 0.0)
    half_spaces = 0.5 * f_at_center * projections ** 2

    profiles = []
    for radius in radii:
        if not grid.contains_ball(center, radius):
            raise OutOfDomainError(f"blowup ball of radius {radius:.4g} about {center} leaves the box")
        physical = np.asarray(center) + radius * lattice
        smooth = sample(u, physical, "cubic") / radius ** 2
        linear = sample(u, physical, "linear")
        zero_density = float(np.mean(linear <= zero_level))

        coefficients, *_ = np.linalg.lstsq(design, smooth, rcond=None)
        Q = project_psd(_assemble(coefficients, grid.dim))
        quadratic_fit = 0.5 * np.einsum("pi,ij,pj->p", lattice, Q, lattice)
        quadratic_residual = float(np.sqrt(np.mean((smooth - quadratic_fit) ** 2)))

        misfit = np.sqrt(np.mean((half_spaces - smooth[:, None]) ** 2, axis=0))
        best = int(np.argmin(misfit))
        profiles.append(
            BlowupProfile(
                center=center,
                radius=float(radius),
                points=lattice,
                values=smooth,
                zero_density=zero_density,
                Q=Q,
                quadratic_residual=quadratic_residual,
                direction=directions[best],
                half_space_residual=float(misfit[best]),
                amplitude=f_at_center,
            )
        )
    return profiles


@dataclass(frozen=True, eq=False)
class Classification:
    label: ClassificationLabel
    normal: Optional[np.ndarray] = None
    kernel_dim: Optional[int] = None
    density_at_min_r: float = float("nan")
    Q: Optional[np.ndarray] = None


def classify(profiles: Sequence[BlowupProfile]) -> Classification:
    if len(profiles) < 3:
        raise DomainError(f"classification needs at least 3 ladder radii, got {len(profiles)}")
    ladder = sorted(profiles, key=lambda p: p.radius, reverse=True)
    smallest = ladder[-1]
    densities = [p.zero_density for p in ladder]

    half_space_wins = smallest.half_space_residual < smallest.quadratic_residual
    if max(densities) >= REGULAR_DENSITY and half_space_wins:
        return Classification(
            ClassificationLabel.REGULAR,
            normal=-smallest.direction,
            density_at_min_r=smallest.zero_density,
            Q=smallest.Q,
        )
    if max(densities[-2:]) <= SINGULAR_DENSITY and not half_space_wins and smallest.accepted:
        eigenvalues = np.linalg.eigvalsh(smallest.Q)
        cutoff = KERNEL_CUTOFF * float(np.trace(smallest.Q))
        return Classification(
            ClassificationLabel.SINGULAR,
            kernel_dim=int((eigenvalues < cutoff).sum()),
            density_at_min_r=smallest.zero_density,
            Q=smallest.Q,
        )
    logger.debug("Point left unresolved", center=smallest.center, densities=densities)
    return Classification(ClassificationLabel.UNRESOLVED, density_at_min_r=smallest.zero_density, Q=smallest.Q)


def sphere_measure(dim: int) -> float:
    return 2.0 if dim == 1 else 2.0 * math.pi


def monneau(
    u: ScalarField,
    center: Sequence[float],
    Q: np.ndarray,
    radii: Sequence[float],
    n_angles: int = MONNEAU_ANGLES,
) -> List[Tuple[float, float]]:
    """Xi(r) = r^-(d+3) int_{dB_r} (u - q)^2 with q(x) = x^T Q x / 2 about `center`."""
    grid = u.grid
    center = np.asarray(grid.point(center))
    series = []
    for radius in radii:
        if radius < MIN_RADIUS_CELLS * grid.spacing - 1e-12:
            raise ResolutionError(radius, MIN_RADIUS_CELLS * grid.spacing)
        values = radial_sample(u, center, radius, n_angles=n_angles, method="cubic")
        count = values.size
        if grid.dim == 1:
            offsets = np.array([[-radius], [radius]])
        else:
            angles = 2.0 * np.pi * np.arange(count) / count
            offsets = radius * np.column_stack([np.cos(angles), np.sin(angles)])
        q = 0.5 * np.einsum("pi,ij,pj->p", offsets, Q, offsets)
        xi = sphere_measure(grid.dim) * float(np.mean((values - q) ** 2)) / radius ** 4
        series.append((float(radius), xi))
    return series


def monneau_drift(series: Sequence[Tuple[float, float]], C: float = 0.0, alpha: float = 1.0) -> float:
    """min over the ladder of Xi(r_k) - Xi(r_k+1) + C r_k^alpha (r_k - r_k+1)."""
    ordered = sorted(series, key=lambda item: item[0], reverse=True)
    if len(ordered) < 2:
        return 0.0
    return min(
        xi_k - xi_next + C * r_k ** alpha * (r_k - r_next)
        for (r_k, xi_k), (r_next, xi_next) in zip(ordered, ordered[1:])
    )


def source_holder_seminorm(source: ScalarField, center: Sequence[float], radius: float, alpha: float) -> float:
    """max over B_radius(center) of |f(x) - f(center)| / |x - center|^alpha."""
    grid = source.grid
    center = grid.point(center)
    distance = grid.distance_from(center)
    mask = (distance <= radius) & (distance > 1e-12)
    if not mask.any():
        return 0.0
    f_center = float(sample(source, [center])[0])
    return float((np.abs(source.values[mask] - f_center) / distance[mask] ** alpha).max())


@dataclass(frozen=True, eq=False)
class ClassifiedPoint:
    point: Tuple[float, ...]
    classification: Classification
    monneau_drift: float = float("nan")


def classify_point(
    u: ScalarField,
    point: Sequence[float],
    radii: Sequence[float],
    f_at_center: float = 1.0,
    zero_level: float = 0.0,
    source: Optional[ScalarField] = None,
    alpha: float = 1.0,
) -> ClassifiedPoint:
    """Blowup classification; singular points also get the Monneau drift with C = [f]_alpha."""
    profiles = blowup(u, point, radii, f_at_center, zero_level)
    result = classify(profiles)
    drift = float("nan")
    if result.label == ClassificationLabel.SINGULAR:
        series = monneau(u, point, result.Q, radii)
        C = source_holder_seminorm(source, point, max(radii), alpha) if source is not None else 0.0
        drift = monneau_drift(series, C, alpha)
    return ClassifiedPoint(tuple(u.grid.point(point)), result, drift)


def classify_points(
    u: ScalarField,
    points: Sequence[Sequence[float]],
    radii: Sequence[float],
    source: Optional[ScalarField] = None,
    zero_level: float = 0.0,
    threads: Optional[int] = None,
    alpha: float = 1.0,
) -> List[ClassifiedPoint]:
    workers = threads or settings.THREADS

    def f_at(point: Sequence[float]) -> float:
        if source is None:
            return 1.0
        return float(source.values[u.grid.cell_index(point)])

    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(classify_point, u, point, radii, f_at(point), zero_level, source, alpha)
            for point in points
        ]
        return [future.result() for future in futures]


@dataclass(frozen=True, eq=False)
class NormalMap:
    normals: Dict[Tuple[float, ...], np.ndarray]
    seminorm: float
    entry: ReportEntry


def normal_map(
    classified: Sequence[ClassifiedPoint],
    alpha: float = 1.0,
    pair_radius: float = 0.5,
    cap: float = 50.0,
    reference_seminorm: Optional[float] = None,
    drift_factor: float = 1.5,
) -> NormalMap:
    """Empirical C^{0, alpha/(1+alpha)} seminorm of the unit normal over regular points."""
    normals = {
        item.point: item.classification.normal
        for item in classified
        if item.classification.label == ClassificationLabel.REGULAR
    }
    exponent = alpha / (1.0 + alpha)
    keys = list(normals)
    seminorm = 0.0
    for i, x in enumerate(keys):
        for y in keys[i + 1:]:
            distance = float(np.linalg.norm(np.subtract(x, y)))
            if 0.0 < distance <= pair_radius:
                seminorm = max(seminorm, float(np.linalg.norm(normals[x] - normals[y])) / distance ** exponent)

    details = {
        "regular_points": float(len(normals)),
        "singular_points": float(sum(1 for c in classified if c.classification.label == ClassificationLabel.SINGULAR)),
        "unresolved_points": float(
            sum(1 for c in classified if c.classification.label == ClassificationLabel.UNRESOLVED)
        ),
        "cap": cap,
    }
    if not normals:
        return NormalMap(normals, seminorm, ReportEntry.skipped(CheckName.CLASSIFICATION))

    drift = 1.0
    if reference_seminorm is not None:
        low, high = sorted([seminorm, reference_seminorm])
        drift = high / low if low > 0 else (1.0 if high == 0 else float("inf"))
        details["refinement_drift"] = drift
    entry = ReportEntry.compare(CheckName.CLASSIFICATION, seminorm, cap, details=details)
    if drift > drift_factor:
        entry = entry.model_copy(update={"status": ReportStatus.FAIL})
    return NormalMap(normals, seminorm, entry)


def nondegeneracy_check(
    u: ScalarField,
    center: Sequence[float],
    radii: Sequence[float],
    lam: float,
    eps: float = NONDEGENERACY_SLACK,
) -> ReportEntry:
    """min over radii of sup_{B_r} u / (lam r^2 / 2d); passes at >= 1 - eps."""
    grid = u.grid
    if ball_max(u, center, 2.0 * grid.spacing) <= 0.0:
        return ReportEntry.skipped(CheckName.NONDEGENERACY)
    ratios = [ball_max(u, center, r) / (lam * r ** 2 / (2.0 * grid.dim)) for r in radii]
    return ReportEntry.compare(
        CheckName.NONDEGENERACY, min(ratios), 1.0 - eps, at_least=True, details={"lambda": lam}
    )


def quadratic_bound_check(
    u: ScalarField,
    center: Sequence[float],
    radii: Sequence[float],
    mu: float,
    constant: Optional[float] = None,
) -> ReportEntry:
    grid = u.grid
    constant = constant if constant is not None else QUADRATIC_BOUND_CONSTANT[grid.dim]
    ratios = [ball_max(u, center, r) / (mu * r ** 2) for r in radii]
    return ReportEntry.compare(CheckName.QUADRATIC_BOUND, max(ratios), constant, details={"mu": mu})


def free_boundary_points(
    u: ScalarField,
    max_points: int,
    margin: float = 0.0,
    zero_level: float = 0.0,
) -> List[Tuple[float, ...]]:
    """Zero cells touching the positivity set whose ball of `margin` stays in the box."""
    grid = u.grid
    positive = u.values > zero_level
    touching = ~positive & ndimage.binary_dilation(positive)
    candidates = [
        grid.cell_center(index)
        for index in np.argwhere(touching)
        if grid.contains_ball(grid.cell_center(index), margin)
    ]
    if len(candidates) <= max_points:
        return candidates
    picks = np.unique(np.linspace(0, len(candidates) - 1, max_points).round().astype(int))
    return [candidates[i] for i in picks]


def classification_rows(classified: Sequence[ClassifiedPoint], T: Optional[Callable[[Tuple[float, ...]], float]] = None) -> pd.DataFrame:
    rows = []
    for item in classified:
        c = item.classification
        normal = c.normal if c.normal is not None else np.full(2, np.nan)
        rows.append(
            {
                "x": item.point[0],
                "y": item.point[1] if len(item.point) > 1 else np.nan,
                "T": T(item.point) if T else np.nan,
                "label": c.label.value,
                "nu_x": float(normal[0]),
                "nu_y": float(normal[1]) if len(normal) > 1 else np.nan,
                "kernel_dim": c.kernel_dim if c.kernel_dim is not None else -1,
                "density_at_min_r": c.density_at_min_r,
                "monneau_drift": item.monneau_drift,
            }
        )
    columns = ["x", "y", "T", "label", "nu_x", "nu_y", "kernel_dim", "density_at_min_r", "monneau_drift"]
    return pd.DataFrame(rows, columns=columns)
