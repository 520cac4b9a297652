import numpy as np
import pytest

from heleshaw.core.exceptions import CoverageError, DegenerateFitError, DomainError, ResolutionError, TimeOrderingError
from heleshaw.models.report_models import ReportStatus
from heleshaw.services.baiocchi import (
    BaiocchiAccumulator,
    BaiocchiField,
    HittingField,
    accumulate,
    containment_check,
    eta_consistency,
    eta_from_T,
    front_speed_check,
    holder_exponent,
    holder_report,
    hitting_time,
    obstacle_residual,
    patch_agreement,
)
from heleshaw.services.grid_core import Grid, ScalarField
from heleshaw.services.pme import SimState
from heleshaw.services.simulation import first_observer


def constant_state(grid: Grid, t: float, value: float = 1.0) -> SimState:
    field = ScalarField.constant(grid, value)
    return SimState(t, field, field, field)


def history_from(grid: Grid, times, w_values) -> list:
    zeros = ScalarField.zeros(grid)
    return [BaiocchiField(grid, ScalarField(grid, np.asarray(w, dtype=float)), zeros, t) for t, w in zip(times, w_values)]


def test_accumulator_integrates_trapezoidally():
    grid = Grid.centered(1, 4, 1.0)
    accumulator = BaiocchiAccumulator()
    for t in (0.0, 0.5, 1.5):
        accumulator.push(constant_state(grid, t))
    current = accumulator.current()
    assert current.w.values == pytest.approx(np.full(4, 1.5))
    assert current.eta.values == pytest.approx(np.full(4, 1.5))
    assert accumulator.times == [0.0, 0.5, 1.5]


def test_accumulator_rejects_time_going_backwards():
    grid = Grid.centered(1, 4, 1.0)
    accumulator = BaiocchiAccumulator()
    accumulator.push(constant_state(grid, 1.5))
    with pytest.raises(TimeOrderingError):
        accumulator.push(constant_state(grid, 1.0))


def test_accumulated_w_is_nonnegative_and_nondecreasing(disk_run):
    history = first_observer(disk_run, BaiocchiAccumulator).history
    assert len(history) >= 2
    for earlier, later in zip(history, history[1:]):
        assert earlier.w.min() >= 0.0
        assert np.all(later.w.values >= earlier.w.values)


def test_hitting_time_interpolates_between_stored_times():
    grid = Grid.centered(1, 3, 3.0)
    history = history_from(grid, [0.0, 1.0, 2.0], [[2.0, 0.0, 0.0], [3.0, 0.5, 0.0], [4.0, 1.5, 0.0]])
    hitting = hitting_time(history, w_min=1.0)
    assert hitting.T[0] == 0.0
    assert hitting.T[1] == pytest.approx(1.5)
    assert np.isinf(hitting.T[2])


def test_hitting_time_needs_history_and_positive_threshold():
    grid = Grid.centered(1, 3, 3.0)
    with pytest.raises(CoverageError):
        hitting_time([])
    with pytest.raises(DomainError):
        hitting_time(history_from(grid, [0.0], [[1.0, 0.0, 0.0]]), w_min=0.0)


def test_eta_from_hitting_time_with_unit_nutrient():
    grid = Grid.centered(1, 3, 3.0)
    hitting = HittingField(grid, np.array([0.0, 1.5, np.inf]), w_min=1.0)
    n_history = [(t, ScalarField.constant(grid, 1.0)) for t in (0.0, 1.0, 2.0, 3.0)]
    eta = eta_from_T(hitting, n_history, t=3.0)
    assert eta.values == pytest.approx([3.0, 1.5, 0.0])


def test_eta_from_hitting_time_requires_coverage():
    grid = Grid.centered(1, 3, 3.0)
    hitting = HittingField(grid, np.array([0.0, 1.5, np.inf]), w_min=1.0)
    n_history = [(t, ScalarField.constant(grid, 1.0)) for t in (0.0, 1.0, 2.0)]
    with pytest.raises(CoverageError):
        eta_from_T(hitting, n_history, t=3.0)


def test_containment_flags_cells_leaving_the_positive_set():
    grid = Grid.centered(1, 3, 3.0)
    growing = history_from(grid, [0.0, 1.0], [[1.0, 0.0, 0.0], [2.0, 1.0, 0.0]])
    assert containment_check(growing, w_min=0.5).status == ReportStatus.PASS

    shrinking = history_from(grid, [0.0, 1.0], [[1.0, 1.0, 0.0], [2.0, 0.0, 0.0]])
    entry = containment_check(shrinking, w_min=0.5)
    assert entry.status == ReportStatus.FAIL
    assert entry.measured == 1.0


@pytest.mark.parametrize("alpha", [1.0, 0.7])
def test_holder_exponent_of_power_law(alpha):
    grid = Grid.centered(2, 129, 2.0)
    center = grid.cell_center((64, 64))
    T = 1.0 - grid.distance_from(center) ** alpha
    fit = holder_exponent(HittingField(grid, T, w_min=1e-12), center)
    assert fit.alpha == pytest.approx(alpha, abs=1e-6)
    assert fit.residual < 1e-6

    entry = holder_report([fit], alpha_d=alpha)
    assert entry.status == ReportStatus.PASS


def test_holder_exponent_rejects_small_or_escaping_balls():
    grid = Grid.centered(2, 129, 2.0)
    center = grid.cell_center((64, 64))
    hitting = HittingField(grid, 1.0 - grid.distance_from(center), w_min=1e-12)
    with pytest.raises(ResolutionError):
        holder_exponent(hitting, center, radii=[grid.spacing, 4 * grid.spacing])
    with pytest.raises(DomainError):
        holder_exponent(hitting, grid.cell_center((2, 64)), radii=[4 * grid.spacing, 8 * grid.spacing])


def test_patch_agreement_on_matching_sets(grid_2d):
    inside = grid_2d.distance_from((0.0, 0.0)) <= 0.4
    w = ScalarField(grid_2d, np.where(inside, 1.0, 0.0))
    bf = BaiocchiField(grid_2d, w, ScalarField.zeros(grid_2d), 1.0)
    rho = ScalarField(grid_2d, inside.astype(float))
    entry = patch_agreement(bf, rho, gamma=10.0, w_min=0.5)
    assert entry.measured == 0.0
    assert entry.status == ReportStatus.PASS


def test_obstacle_residual_ignores_the_interface(grid_2d):
    inside = grid_2d.distance_from((0.0, 0.0)) <= 0.4
    bf = BaiocchiField(grid_2d, ScalarField(grid_2d, inside.astype(float)), ScalarField.zeros(grid_2d), 1.0)
    rho = ScalarField.constant(grid_2d, 0.5)
    entry = obstacle_residual(bf, rho, rho)
    assert entry.status == ReportStatus.PASS
    assert entry.measured == 0.0
    assert entry.details["all_cells"] > 1.0
    assert entry.details["cells_checked"] < grid_2d.cell_count


def test_obstacle_residual_flags_a_density_mismatch(grid_2d):
    bf = BaiocchiField(grid_2d, ScalarField.zeros(grid_2d), ScalarField.zeros(grid_2d), 1.0)
    rho0 = ScalarField.constant(grid_2d, 0.5)
    entry = obstacle_residual(bf, rho0, ScalarField.constant(grid_2d, 0.8), tol=0.05)
    assert entry.status == ReportStatus.FAIL
    assert entry.measured == pytest.approx(0.3)


def test_eta_consistency_against_the_accumulated_integral():
    grid = Grid.centered(1, 4, 1.0)
    history = accumulate([constant_state(grid, t) for t in (0.0, 0.5, 1.0)])
    hitting = hitting_time(history)
    n_history = [(t, ScalarField.constant(grid, 1.0)) for t in (0.0, 0.5, 1.0)]
    recomputed = eta_from_T(hitting, n_history, t=1.0)
    entry = eta_consistency(recomputed, history[-1].eta)
    assert entry.status == ReportStatus.PASS
    assert entry.measured < 1e-9

    tampered = history[-1].eta.with_values(history[-1].eta.values + 0.1)
    entry = eta_consistency(recomputed, tampered, tol=0.05)
    assert entry.status == ReportStatus.FAIL
    assert entry.measured == pytest.approx(0.1)


def linear_front(grid: Grid, slope: float) -> list:
    x = grid.axis(0)
    p = ScalarField(grid, slope * (x + 1.0))
    return [SimState(t, ScalarField.constant(grid, 1.0), p, ScalarField.constant(grid, 1.0)) for t in (0.0, 1.0, 2.0)]


def test_front_speed_matches_the_pressure_gradient(grid_1d):
    hitting = HittingField(grid_1d, 1.0 + 0.5 * grid_1d.axis(0), w_min=1e-12)
    entry = front_speed_check(hitting, linear_front(grid_1d, 2.0))
    assert entry.status == ReportStatus.INFO
    assert entry.measured == pytest.approx(0.0, abs=1e-9)

    too_fast = front_speed_check(hitting, linear_front(grid_1d, 4.0))
    assert too_fast.measured == pytest.approx(1.0)


def test_front_speed_without_late_cells_is_skipped(grid_1d):
    hitting = HittingField(grid_1d, np.zeros(grid_1d.shape), w_min=1e-12)
    assert front_speed_check(hitting, linear_front(grid_1d, 2.0)).status == ReportStatus.SKIPPED


def test_holder_exponent_needs_two_radii_with_a_drop():
    grid = Grid.centered(2, 129, 2.0)
    center = grid.cell_center((64, 64))
    flat = HittingField(grid, np.full(grid.shape, 0.5), w_min=1e-12)
    with pytest.raises(DegenerateFitError):
        holder_exponent(flat, center)

    # Only the largest default ball reaches the early cells
    far = grid.distance_from(center) > 20 * grid.spacing
    stepped = HittingField(grid, np.where(far, 0.5, 1.0), w_min=1e-12)
    with pytest.raises(DegenerateFitError):
        holder_exponent(stepped, center)
