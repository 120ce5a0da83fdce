import math

import numpy as np
import pytest

from fbsde.jumps.errors import ConfigurationError, InterpolationError, UnsupportedError
from fbsde.jumps.interp import (
    ExtrapolationPolicy,
    PiecewiseLagrangeInterpolant,
    lagrange_basis,
    stencil,
)
from fbsde.jumps.models import SpatialMesh


@pytest.fixture
def unit_mesh():
    # nodes 0, 1, ..., 10
    return SpatialMesh(np.arange(11.0), (0.0, 10.0))


class TestStencil:
    def test_closest_nodes(self, unit_mesh):
        np.testing.assert_array_equal(stencil(unit_mesh, 5.2, 3), [4, 5, 6, 7])
        np.testing.assert_array_equal(stencil(unit_mesh, 5.2, 1), [5, 6])
        np.testing.assert_array_equal(stencil(unit_mesh, 5.2, 2), [4, 5, 6])

    def test_ties_go_to_lower_indices(self, unit_mesh):
        np.testing.assert_array_equal(stencil(unit_mesh, 5.5, 2), [4, 5, 6])

    def test_node_centres_odd_stencil(self, unit_mesh):
        np.testing.assert_array_equal(stencil(unit_mesh, 5.0, 2), [4, 5, 6])

    def test_clamped_at_edges(self, unit_mesh):
        np.testing.assert_array_equal(stencil(unit_mesh, -3.0, 3), [0, 1, 2, 3])
        np.testing.assert_array_equal(stencil(unit_mesh, 20.0, 3), [7, 8, 9, 10])

    def test_degree_out_of_range(self, unit_mesh):
        with pytest.raises(ConfigurationError):
            stencil(unit_mesh, 1.0, 4)

    def test_mesh_too_small(self):
        with pytest.raises(ConfigurationError):
            stencil(SpatialMesh(np.array([0.0, 1.0, 2.0]), (0.0, 1.0)), 1.0, 3)

    def test_basis_is_a_partition_of_unity(self, unit_mesh):
        x = np.linspace(-2.0, 12.0, 57)
        _, basis = lagrange_basis(unit_mesh, x, 3)
        np.testing.assert_allclose(basis.sum(axis=-1), 1.0, atol=1e-12)


class TestInterpolant:
    @pytest.mark.parametrize("degree", [1, 2, 3])
    def test_polynomial_reproduction(self, coarse_mesh, degree):
        coefficients = [0.7, -1.3, 0.4, 2.1][: degree + 1]
        values = np.polynomial.polynomial.polyval(coarse_mesh.points, coefficients)
        interpolant = PiecewiseLagrangeInterpolant(coarse_mesh, values, degree)
        x = np.random.default_rng(degree).uniform(*coarse_mesh.extent, size=200)
        expected = np.polynomial.polynomial.polyval(x, coefficients)
        np.testing.assert_allclose(interpolant(x), expected, atol=1e-11)

    @pytest.mark.parametrize("degree", [1, 2, 3])
    def test_nodes_are_reproduced_exactly(self, coarse_mesh, degree):
        values = np.exp(coarse_mesh.points)
        interpolant = PiecewiseLagrangeInterpolant(coarse_mesh, values, degree)
        np.testing.assert_array_equal(interpolant(coarse_mesh.points), values)

    @pytest.mark.parametrize("degree", [1, 2, 3])
    def test_order_on_sine(self, degree):
        x = np.linspace(0.2, 0.8, 1001)
        errors = []
        for dx in (0.1, 0.05, 0.025):
            mesh = SpatialMesh.uniform(dx, (0.0, 1.0), 0.5)
            interpolant = PiecewiseLagrangeInterpolant(mesh, np.sin(mesh.points), degree)
            errors.append(np.max(np.abs(interpolant(x) - np.sin(x))))
        for coarse, fine in zip(errors, errors[1:]):
            assert math.log2(coarse / fine) == pytest.approx(degree + 1, abs=0.25)

    def test_scalar_evaluation_returns_float(self, coarse_mesh):
        interpolant = PiecewiseLagrangeInterpolant(coarse_mesh, coarse_mesh.points, 1)
        value = interpolant(0.55)
        assert isinstance(value, float)
        assert value == pytest.approx(0.55, abs=1e-14)

    def test_several_fields(self, coarse_mesh):
        values = np.stack([coarse_mesh.points, 2 * coarse_mesh.points, np.ones(coarse_mesh.size)])
        interpolant = PiecewiseLagrangeInterpolant(coarse_mesh, values, 2)
        x = np.linspace(0.0, 1.0, 20).reshape(4, 5)
        result = interpolant(x)
        assert result.shape == (3, 4, 5)
        np.testing.assert_allclose(result[1], 2 * x, atol=1e-13)

    def test_clamp_uses_the_end_values(self, coarse_mesh):
        values = np.sin(coarse_mesh.points)
        interpolant = PiecewiseLagrangeInterpolant(
            coarse_mesh, values, 3, ExtrapolationPolicy.CLAMP
        )
        result = interpolant(np.array([-50.0, 50.0]))
        np.testing.assert_array_equal(result, [values[0], values[-1]])

    def test_extrapolate_continues_the_edge_polynomial(self, coarse_mesh):
        values = coarse_mesh.points**2
        interpolant = PiecewiseLagrangeInterpolant(coarse_mesh, values, 2, "extrapolate")
        assert interpolant(3.0) == pytest.approx(9.0, rel=1e-12)

    def test_analytic_extension(self, coarse_mesh):
        interpolant = PiecewiseLagrangeInterpolant(
            coarse_mesh, np.cos(coarse_mesh.points), 3, ExtrapolationPolicy.ANALYTIC, np.cos
        )
        x = np.array([-4.0, 0.5, 5.0])
        result = interpolant(x)
        assert result[0] == np.cos(-4.0)
        assert result[2] == np.cos(5.0)
        assert result[1] == pytest.approx(np.cos(0.5), abs=1e-4)

    def test_analytic_needs_extension(self, coarse_mesh):
        with pytest.raises(UnsupportedError):
            PiecewiseLagrangeInterpolant(coarse_mesh, coarse_mesh.points, 3, "analytic")

    def test_values_must_match_mesh(self, coarse_mesh):
        with pytest.raises(ConfigurationError):
            PiecewiseLagrangeInterpolant(coarse_mesh, np.ones(coarse_mesh.size + 1), 3)

    def test_non_finite_value(self, coarse_mesh):
        values = np.ones(coarse_mesh.size)
        values[15] = np.nan
        interpolant = PiecewiseLagrangeInterpolant(coarse_mesh, values, 1)
        with pytest.raises(InterpolationError, match="x=0.5"):
            interpolant(np.array([0.0, 0.52]))
