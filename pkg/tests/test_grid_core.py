import numpy as np
import pytest

from heleshaw.core.exceptions import (
    DomainError,
    FieldError,
    GridTooSmallError,
    OutOfDomainError,
    UnsupportedDimensionError,
)
from heleshaw.services.grid_core import (
    Grid,
    ScalarField,
    ball_max,
    grad_sq,
    laplacian,
    laplacian_matrix,
    radial_sample,
    support_margin,
)


def test_cell_centres_are_offset_by_half_a_cell():
    grid = Grid(1, 4, 2.0, (0.0,))
    assert grid.spacing == 0.5
    assert np.allclose(grid.axis(0), [0.25, 0.75, 1.25, 1.75])


def test_centered_grid_is_symmetric(grid_2d):
    x, y = grid_2d.coordinates()
    assert x.min() == pytest.approx(-x.max())
    assert grid_2d.shape == (32, 32)
    assert grid_2d.cell_volume == pytest.approx((2.0 / 32) ** 2)


def test_cell_index_round_trips_cell_centres(grid_2d):
    index = (3, 17)
    assert grid_2d.cell_index(grid_2d.cell_center(index)) == index


def test_unsupported_dimension():
    with pytest.raises(UnsupportedDimensionError):
        Grid.centered(3, 8, 1.0)


def test_field_rejects_non_finite(grid_1d):
    values = np.zeros(grid_1d.shape)
    values[3] = np.nan
    with pytest.raises(FieldError):
        ScalarField(grid_1d, values)


def test_field_rejects_wrong_size(grid_1d):
    with pytest.raises(FieldError):
        ScalarField(grid_1d, np.zeros(10))


def test_laplacian_of_quadratic_is_exact_in_the_interior(grid_2d):
    f = ScalarField.from_function(grid_2d, lambda x, y: x ** 2 + 3.0 * y ** 2)
    lap = laplacian(f).values
    assert np.allclose(lap[1:-1, 1:-1], 8.0)


def test_laplacian_matrix_matches_stencil(grid_2d):
    rng = np.random.default_rng(0)
    f = ScalarField(grid_2d, rng.random(grid_2d.shape))
    assert np.allclose(laplacian_matrix(grid_2d) @ f.values.ravel(), laplacian(f).values.ravel())


def test_neumann_laplacian_conserves_the_integral(grid_1d):
    rng = np.random.default_rng(1)
    f = ScalarField(grid_1d, rng.random(grid_1d.shape))
    assert laplacian(f).integral() == pytest.approx(0.0, abs=1e-10)


def test_gradient_squared_of_linear_field(grid_1d):
    f = ScalarField.from_function(grid_1d, lambda x: 3.0 * x)
    assert np.allclose(grad_sq(f).values[1:-1], 9.0)


def test_stencils_need_three_cells():
    grid = Grid.centered(1, 2, 1.0)
    with pytest.raises(GridTooSmallError):
        laplacian(ScalarField.zeros(grid))


def test_cubic_radial_sample_is_exact_on_quadratics(odd_grid_2d):
    f = ScalarField.from_function(odd_grid_2d, lambda x, y: x ** 2 + y ** 2)
    values = radial_sample(f, (0.0, 0.0), 0.3, n_angles=32, method="cubic")
    assert np.allclose(values, 0.09, atol=1e-10)


def test_radial_sample_outside_the_box(grid_2d):
    f = ScalarField.zeros(grid_2d)
    with pytest.raises(OutOfDomainError):
        radial_sample(f, (0.9, 0.0), 0.5)


def test_radial_sample_needs_enough_angles(grid_2d):
    with pytest.raises(DomainError):
        radial_sample(ScalarField.zeros(grid_2d), (0.0, 0.0), 0.2, n_angles=4)


def test_ball_max_uses_closed_ball(odd_grid_2d):
    f = ScalarField.from_function(odd_grid_2d, lambda x, y: x ** 2 + y ** 2)
    h = odd_grid_2d.spacing
    assert ball_max(f, (0.0, 0.0), 5 * h) == pytest.approx((5 * h) ** 2)


def test_support_margin(grid_1d):
    values = np.zeros(grid_1d.shape)
    values[10:20] = 1.0
    assert support_margin(ScalarField(grid_1d, values)) == 10
    assert support_margin(ScalarField.zeros(grid_1d)) == grid_1d.cells_per_axis


def test_laplacian_converges_at_second_order():
    def error(cells: int) -> float:
        grid = Grid.centered(1, cells, 2.0)
        f = ScalarField.from_function(grid, lambda x: np.cos(np.pi * x))
        exact = -np.pi ** 2 * np.cos(np.pi * grid.axis(0))
        return float(np.abs(laplacian(f).values - exact).max())

    assert error(32) / error(64) >= 3.5


def test_laplacian_is_linear_and_grad_sq_quadratic(grid_2d):
    rng = np.random.default_rng(2)
    f = ScalarField(grid_2d, rng.random(grid_2d.shape))
    g = ScalarField(grid_2d, rng.random(grid_2d.shape))
    combined = laplacian(f.with_values(2.0 * f.values - 3.0 * g.values)).values
    assert np.allclose(combined, 2.0 * laplacian(f).values - 3.0 * laplacian(g).values, rtol=0.0, atol=1e-9)
    assert np.allclose(grad_sq(f.with_values(-3.0 * f.values)).values, 9.0 * grad_sq(f).values)


def test_linear_radial_sample_is_exact_on_affine_fields(grid_2d):
    f = ScalarField.from_function(grid_2d, lambda x, y: 2.0 * x - y + 0.5)
    values = radial_sample(f, (0.1, -0.2), 0.4, n_angles=16)
    theta = 2.0 * np.pi * np.arange(16) / 16
    x, y = 0.1 + 0.4 * np.cos(theta), -0.2 + 0.4 * np.sin(theta)
    assert np.allclose(values, 2.0 * x - y + 0.5, atol=1e-12)
