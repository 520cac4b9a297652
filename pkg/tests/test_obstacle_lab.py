import math

import numpy as np
import pytest

from heleshaw.core.exceptions import DomainError, FreeBoundaryPointError, ObstacleProblemError, ResolutionError
from heleshaw.models.report_models import ReportStatus
from heleshaw.models.solver_models import ClassificationLabel
from heleshaw.services.grid_core import Grid, ScalarField
from heleshaw.services.obstacle_lab import (
    Classification,
    ClassifiedPoint,
    ObstacleProblem,
    blowup,
    classification_rows,
    classify,
    classify_point,
    classify_points,
    complementarity_residual,
    free_boundary_points,
    monneau,
    monneau_drift,
    nondegeneracy_check,
    normal_map,
    quadratic_bound_check,
    solve_obstacle,
    source_holder_seminorm,
)

ZERO_LEVEL = 1e-12
ORIGIN = (0.0, 0.0)


@pytest.fixture(scope="module")
def grid() -> Grid:
    return Grid.centered(2, 101, 2.0)


@pytest.fixture(scope="module")
def radii(grid) -> list:
    return [16 * grid.spacing, 8 * grid.spacing, 4 * grid.spacing]


def field(grid: Grid, fn) -> ScalarField:
    x, y = grid.coordinates()
    return ScalarField(grid, fn(x, y))


def unit(angle_degrees: float) -> np.ndarray:
    angle = math.radians(angle_degrees)
    return np.array([math.cos(angle), math.sin(angle)])


def angle_between(a: np.ndarray, b: np.ndarray) -> float:
    return math.degrees(math.acos(float(np.clip(np.dot(a, b), -1.0, 1.0))))


def half_space(grid: Grid, angle: float, scale: float = 1.0) -> ScalarField:
    e = unit(angle)
    return field(grid, lambda x, y: 0.5 * scale * np.maximum(e[0] * x + e[1] * y, 0.0) ** 2)


def rank_one(grid: Grid, angle: float) -> ScalarField:
    e = unit(angle)
    return field(grid, lambda x, y: 0.5 * (e[0] * x + e[1] * y) ** 2)


def isotropic(grid: Grid) -> ScalarField:
    return field(grid, lambda x, y: 0.25 * (x ** 2 + y ** 2))


def test_psor_reproduces_discrete_1d_solution():
    grid = Grid.centered(1, 101, 1.01)
    h = grid.spacing
    i = np.arange(101) - 50
    exact = 0.5 * h ** 2 * np.maximum(np.abs(i) - 20, 0) ** 2
    problem = ObstacleProblem(grid, ScalarField.constant(grid, 1.0), ScalarField(grid, exact))
    u = solve_obstacle(problem)
    assert u.values == pytest.approx(exact, abs=1e-6)
    assert complementarity_residual(u.values, problem.source.values, h) <= 1e-8


def test_psor_reproduces_planar_2d_solution():
    grid = Grid.centered(2, 51, 1.0)
    exact = field(grid, lambda x, y: 0.5 * np.maximum(x, 0.0) ** 2)
    problem = ObstacleProblem(grid, ScalarField.constant(grid, 1.0), exact)
    u = solve_obstacle(problem)
    assert u.values == pytest.approx(exact.values, abs=1e-6)


def test_source_must_stay_above_one_half(grid_1d):
    with pytest.raises(ObstacleProblemError):
        ObstacleProblem(grid_1d, ScalarField.constant(grid_1d, 0.5), ScalarField.zeros(grid_1d))


@pytest.mark.parametrize("angle", [0.0, 30.0])
def test_half_space_is_regular_with_inward_normal(grid, radii, angle):
    result = classify_point(half_space(grid, angle), ORIGIN, radii, zero_level=ZERO_LEVEL).classification
    assert result.label == ClassificationLabel.REGULAR
    assert angle_between(result.normal, -unit(angle)) <= 2.0
    assert result.density_at_min_r > 0.25


def test_perturbed_half_space_is_regular(grid, radii):
    u = field(grid, lambda x, y: 0.5 * np.maximum(x, 0.0) ** 2 + 0.05 * np.maximum(x, 0.0) ** 3)
    result = classify_point(u, ORIGIN, radii, zero_level=ZERO_LEVEL).classification
    assert result.label == ClassificationLabel.REGULAR
    assert angle_between(result.normal, np.array([-1.0, 0.0])) <= 2.0


def test_isotropic_point_is_singular_with_trivial_kernel(grid, radii):
    classified = classify_point(isotropic(grid), ORIGIN, radii, zero_level=ZERO_LEVEL)
    assert classified.classification.label == ClassificationLabel.SINGULAR
    assert classified.classification.kernel_dim == 0
    assert np.isfinite(classified.monneau_drift)


@pytest.mark.parametrize("angle", [0.0, 30.0])
def test_rank_one_point_is_singular_with_line_kernel(grid, radii, angle):
    result = classify_point(rank_one(grid, angle), ORIGIN, radii, zero_level=ZERO_LEVEL).classification
    assert result.label == ClassificationLabel.SINGULAR
    assert result.kernel_dim == 1


def test_classification_is_scale_invariant(grid, radii):
    base = classify_point(half_space(grid, 30.0), ORIGIN, radii, zero_level=ZERO_LEVEL).classification
    scaled = classify_point(
        half_space(grid, 30.0, scale=3.0), ORIGIN, radii, f_at_center=3.0, zero_level=ZERO_LEVEL
    ).classification
    assert scaled.label == base.label
    assert np.allclose(scaled.normal, base.normal)


def test_classify_points_keeps_input_order(grid, radii):
    points = [ORIGIN, (0.0, 0.1), (0.0, -0.1)]
    classified = classify_points(half_space(grid, 0.0), points, radii, zero_level=ZERO_LEVEL, threads=2)
    assert [c.point for c in classified] == points

    frame = classification_rows(classified)
    assert list(frame["label"]) == ["regular"] * 3
    assert frame["kernel_dim"].tolist() == [-1, -1, -1]


def test_blowup_rejects_bad_points_and_radii(grid, radii):
    u = half_space(grid, 0.0)
    with pytest.raises(FreeBoundaryPointError):
        blowup(u, (0.5, 0.0), radii, zero_level=ZERO_LEVEL)
    with pytest.raises(ResolutionError):
        blowup(u, ORIGIN, [2 * grid.spacing], zero_level=ZERO_LEVEL)
    with pytest.raises(DomainError):
        classify(blowup(u, ORIGIN, radii[:2], zero_level=ZERO_LEVEL))


def test_monneau_vanishes_on_exact_quadratic(grid, radii):
    series = monneau(isotropic(grid), ORIGIN, np.diag([0.5, 0.5]), radii)
    assert [xi for _, xi in series] == pytest.approx([0.0] * 3, abs=1e-6)
    assert monneau_drift(series) == pytest.approx(0.0, abs=1e-6)


def test_nondegeneracy_and_quadratic_bound_on_isotropic_solution(grid, radii):
    u = isotropic(grid)
    nondegenerate = nondegeneracy_check(u, ORIGIN, radii, lam=1.0)
    assert nondegenerate.measured == pytest.approx(1.0, rel=1e-9)
    assert nondegenerate.status == ReportStatus.PASS

    bound = quadratic_bound_check(u, ORIGIN, radii, mu=1.0)
    assert bound.measured == pytest.approx(0.25, rel=1e-9)
    assert bound.status == ReportStatus.PASS


def regular(point, normal) -> ClassifiedPoint:
    return ClassifiedPoint(point, Classification(ClassificationLabel.REGULAR, normal=np.asarray(normal)))


def test_normal_map_seminorm_and_refinement_drift():
    classified = [
        regular((0.0, 0.0), [1.0, 0.0]),
        regular((0.1, 0.0), [0.0, 1.0]),
        ClassifiedPoint((0.5, 0.5), Classification(ClassificationLabel.SINGULAR, kernel_dim=0)),
    ]
    result = normal_map(classified)
    expected = math.sqrt(2.0) / 0.1 ** 0.5
    assert result.seminorm == pytest.approx(expected)
    assert result.entry.status == ReportStatus.PASS
    assert result.entry.details["singular_points"] == 1.0

    drifted = normal_map(classified, reference_seminorm=2.0 * expected)
    assert drifted.entry.status == ReportStatus.FAIL


def test_normal_map_without_regular_points_is_skipped():
    assert normal_map([]).entry.status == ReportStatus.SKIPPED


def test_free_boundary_points_lie_on_the_interface(grid):
    points = free_boundary_points(half_space(grid, 0.0), max_points=10, margin=0.2, zero_level=ZERO_LEVEL)
    assert 0 < len(points) <= 10
    assert all(abs(x) < grid.spacing for x, _ in points)


def test_quadratic_with_wrong_trace_is_unresolved(grid, radii):
    u = field(grid, lambda x, y: 0.5 * (x ** 2 + y ** 2))
    profiles = blowup(u, ORIGIN, radii, zero_level=ZERO_LEVEL)
    assert profiles[-1].trace_ratio == pytest.approx(2.0, rel=1e-3)
    assert classify(profiles).label == ClassificationLabel.UNRESOLVED


def variable_source(grid: Grid) -> ScalarField:
    return field(grid, lambda x, y: 1.0 + 0.3 * np.sqrt(x ** 2 + y ** 2))


def test_source_seminorm_of_a_conical_source(grid, radii):
    assert source_holder_seminorm(variable_source(grid), ORIGIN, max(radii), alpha=1.0) == pytest.approx(0.3)
    assert source_holder_seminorm(ScalarField.constant(grid, 1.0), ORIGIN, max(radii), alpha=1.0) == 0.0


def test_monneau_drift_is_calibrated_by_the_source(grid, radii):
    u = isotropic(grid)
    plain = classify_point(u, ORIGIN, radii, zero_level=ZERO_LEVEL)
    calibrated = classify_point(u, ORIGIN, radii, zero_level=ZERO_LEVEL, source=variable_source(grid), alpha=1.0)
    series = monneau(u, ORIGIN, calibrated.classification.Q, radii)
    assert calibrated.monneau_drift == pytest.approx(monneau_drift(series, C=0.3, alpha=1.0))
    assert calibrated.monneau_drift > plain.monneau_drift


def radial_obstacle(grid: Grid, hole: float) -> ScalarField:
    """(r^2 - R^2)/4 - (R^2/2) log(r/R) outside the hole of radius R, zero inside."""
    def profile(x, y):
        r = np.maximum(np.sqrt(x ** 2 + y ** 2), hole)
        return 0.25 * (r ** 2 - hole ** 2) - 0.5 * hole ** 2 * np.log(r / hole)

    return field(grid, profile)


# Thirty cells on the 101-cell grid, so the circle passes through cell centres
CELL = 2.0 / 101
HOLE = 30 * CELL


@pytest.fixture(scope="module")
def radial_solution(grid) -> ScalarField:
    problem = ObstacleProblem(grid, ScalarField.constant(grid, 1.0), radial_obstacle(grid, HOLE))
    return solve_obstacle(problem)


def test_psor_reproduces_radial_2d_solution(grid, radial_solution):
    exact = radial_obstacle(grid, HOLE)
    assert radial_solution.min() >= 0.0
    assert np.abs(radial_solution.values - exact.values).max() <= 5e-3
    distance = grid.distance_from(ORIGIN)
    assert (radial_solution.values[distance < HOLE - 4 * grid.spacing] <= 1e-8).all()
    assert (radial_solution.values[distance > HOLE + 4 * grid.spacing] > 0.0).all()


def test_radial_free_boundary_normals_point_to_the_centre(grid, radial_solution):
    offsets = [(30, 0), (0, 30), (-30, 0), (0, -30), (18, 24), (24, 18), (-18, -24)]
    points = [(i * CELL, j * CELL) for i, j in offsets]
    radii = [16 * grid.spacing, 12 * grid.spacing, 8 * grid.spacing]
    classified = classify_points(radial_solution, points, radii, zero_level=1e-8)
    for item in classified:
        assert item.classification.label == ClassificationLabel.REGULAR
        inward = -np.asarray(item.point) / np.linalg.norm(item.point)
        assert angle_between(item.classification.normal, inward) <= 5.0
    assert np.isfinite(normal_map(classified).seminorm)


@pytest.mark.parametrize("boundary", [isotropic, lambda grid: rank_one(grid, 0.0)])
def test_monneau_is_nearly_monotone_on_solved_singular_problems(grid, radii, boundary):
    problem = ObstacleProblem(grid, ScalarField.constant(grid, 1.0), boundary(grid))
    u = solve_obstacle(problem)
    classified = classify_point(u, ORIGIN, radii, zero_level=1e-8, source=problem.source)
    assert classified.classification.label == ClassificationLabel.SINGULAR
    assert classified.monneau_drift >= -1e-3
