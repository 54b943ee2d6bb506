"""Unit tests for quadrature rules."""

from math import factorial

import numpy as np
import pytest

from basis.basis import monomial_exponents
from quadrature.quadrature import default_degree, edge_rule, map_to_triangles, triangle_rule


def exact_triangle_monomial(a, b):
    return factorial(a) * factorial(b) / factorial(a + b + 2)


class TestTriangleRule:
    """Test the collapsed Gauss rules on the reference triangle."""

    def test_degree_zero_integrates_one(self):
        rule = triangle_rule(0)
        assert rule.weights.sum() == pytest.approx(0.5, abs=1e-15)

    def test_product_of_coordinates(self):
        rule = triangle_rule(2)
        x, y = rule.points[:, 0], rule.points[:, 1]
        assert rule.weights @ (x * y) == pytest.approx(1.0 / 24.0, rel=1e-13)

    def test_sixth_power(self):
        rule = triangle_rule(6)
        assert rule.weights @ rule.points[:, 0] ** 6 == pytest.approx(1.0 / 56.0, rel=1e-13)

    @pytest.mark.parametrize("degree", [1, 4, 7, 12, 20])
    def test_monomial_exactness_sweep(self, degree):
        rule = triangle_rule(degree)
        x, y = rule.points[:, 0], rule.points[:, 1]
        for a, b in monomial_exponents(degree):
            exact = exact_triangle_monomial(a, b)
            assert rule.weights @ (x ** a * y ** b) == pytest.approx(exact, rel=1e-13)

    def test_points_inside_triangle(self):
        rule = triangle_rule(9)
        assert np.all(rule.points >= 0.0)
        assert np.all(rule.points.sum(axis=1) <= 1.0)

    def test_out_of_range_degree(self):
        with pytest.raises(ValueError):
            triangle_rule(21)
        with pytest.raises(ValueError):
            triangle_rule(-1)

    def test_rule_is_read_only(self):
        rule = triangle_rule(3)
        with pytest.raises(ValueError):
            rule.weights[0] = 1.0


class TestEdgeRule:
    """Test Gauss-Legendre rules on [0, 1]."""

    def test_one_point_rule(self):
        rule = edge_rule(1)
        assert rule.size == 1
        assert rule.weights @ rule.points == pytest.approx(0.5)

    def test_two_point_rule(self):
        rule = edge_rule(3)
        assert rule.size == 2
        assert rule.weights @ rule.points ** 3 == pytest.approx(0.25, rel=1e-14)

    @pytest.mark.parametrize("npoints", [1, 2, 5, 9])
    def test_exact_up_to_2n_minus_1(self, npoints):
        rule = edge_rule(2 * npoints - 1)
        assert rule.size == npoints
        for k in range(2 * npoints):
            assert rule.weights @ rule.points ** k == pytest.approx(1.0 / (k + 1), rel=1e-13)

    def test_out_of_range_degree(self):
        with pytest.raises(ValueError):
            edge_rule(-2)


class TestMapping:
    """Test pushing rules to physical triangles."""

    def test_area_of_mapped_triangles(self):
        corners = np.array([[[0.0, 0.0], [2.0, 0.0], [0.0, 3.0]],
                            [[1.0, 1.0], [2.0, 1.5], [0.5, 2.0]]])
        _, weights = map_to_triangles(corners, triangle_rule(2))
        assert weights.sum(axis=1) == pytest.approx([3.0, 0.625])

    def test_centroid_moment(self):
        corners = np.array([[[1.0, 0.0], [3.0, 1.0], [2.0, 4.0]]])
        points, weights = map_to_triangles(corners, triangle_rule(1))
        centroid = (weights[0] @ points[0]) / weights[0].sum()
        assert centroid == pytest.approx(corners[0].mean(axis=0))

    def test_default_degree(self):
        assert default_degree(3) == 10
        assert default_degree(30) == 20
