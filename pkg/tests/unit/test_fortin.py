"""Unit tests for the reference Fortin system."""

import numpy as np
import pytest

from fortin.fortin import (FortinSingularError, PolynomialVectorField, ReferenceFortinSystem,
                           apply_reference_fortin, build_and_check, graddiv_norm, moment_mismatch,
                           reference_moments)
from quadrature.quadrature import triangle_rule


@pytest.fixture(scope="module")
def system():
    return ReferenceFortinSystem()


class TestPolynomialVectorField:
    """Test polynomial field arithmetic."""

    def test_grad_div_of_cubic(self):
        field = PolynomialVectorField.unit(0, (3, 0), 4)
        points = np.array([[0.5, 0.2], [1.0, 3.0]])
        assert np.allclose(field.grad_div()(points), [[3.0, 0.0], [6.0, 0.0]])

    def test_mixed_grad_div(self):
        # v = (x y, x y^2): div v = y + 2 x y, grad div v = (2 y, 1 + 2 x)
        coeffs = np.zeros((2, 4, 4))
        coeffs[0, 1, 1] = 1.0
        coeffs[1, 1, 2] = 1.0
        field = PolynomialVectorField(coeffs)
        assert np.allclose(field.grad_div()(np.array([0.3, 0.7])), [1.4, 1.6])

    def test_difference(self):
        a = PolynomialVectorField.unit(1, (1, 0), 2)
        b = PolynomialVectorField.unit(1, (2, 1), 4)
        points = np.array([[2.0, 3.0]])
        assert np.allclose((a - b)(points), [[0.0, 2.0 - 12.0]])

    def test_invalid_shape(self):
        with pytest.raises(ValueError):
            PolynomialVectorField(np.zeros((3, 2, 2)))


class TestReferenceMoments:
    """Test the moment functionals."""

    def test_constant_field(self):
        moments = reference_moments(PolynomialVectorField.unit(0, (0, 0), 1))
        assert moments[:2] == pytest.approx([0.5, 0.0])
        assert moments[2:5] == pytest.approx([0.0, 0.0, 0.0])
        assert moments[5:].sum() == pytest.approx(0.0, abs=1e-15)

    def test_hat_moments_sum_to_divergence(self):
        field = PolynomialVectorField.random(4, np.random.default_rng(7))
        rule = triangle_rule(4)
        div = np.polynomial.polynomial.polyval2d(rule.points[:, 0], rule.points[:, 1], field.divergence())
        assert reference_moments(field)[5:].sum() == pytest.approx(-(rule.weights @ div), rel=1e-12, abs=1e-13)


class TestReferenceFortinSystem:
    """Test the saddle-point matrix and the operator it defines."""

    def test_size_and_symmetry(self, system):
        assert system.size == 28
        assert system.n_basis == 20
        assert np.max(np.abs(system.matrix - system.matrix.T)) <= 1e-13

    def test_nonsingular(self, system):
        sigma_min, sigma_max = system.check()
        assert sigma_min > 1e-10 * sigma_max

    def test_singular_threshold(self, system):
        with pytest.raises(FortinSingularError):
            system.check(ratio=1.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_moments_preserved(self, system, seed):
        field = PolynomialVectorField.random(6, np.random.default_rng(seed))
        assert moment_mismatch(field, system.apply(field)) <= 1e-10

    def test_idempotent_on_range(self, system):
        field = PolynomialVectorField.random(5, np.random.default_rng(11))
        once = system.apply(field)
        twice = system.apply(once)
        assert np.allclose(twice.coeffs, once.coeffs, atol=1e-10 * np.abs(once.coeffs).max())

    def test_linear(self, system):
        rng = np.random.default_rng(3)
        a = PolynomialVectorField.random(4, rng)
        b = PolynomialVectorField.random(4, rng)
        combined = PolynomialVectorField(2.0 * a.coeffs - b.coeffs)
        expected = 2.0 * system.apply(a).coeffs - system.apply(b).coeffs
        assert np.allclose(system.apply(combined).coeffs, expected, atol=1e-9)

    def test_result_is_cubic(self, system):
        projected = apply_reference_fortin(PolynomialVectorField.random(6, np.random.default_rng(5)), system)
        assert projected.degree == 3

    def test_zero_moments_give_zero(self, system):
        zero = PolynomialVectorField(np.zeros((2, 2, 2)))
        assert np.all(system.apply(zero).coeffs == 0.0)


class TestBuildAndCheck:
    """Test the full verification report."""

    def test_report(self):
        report = build_and_check(samples=20, seed=1)
        assert report.size == 28
        assert report.symmetry_error <= 1e-13
        assert report.max_moment_mismatch <= 1e-10
        assert 0.0 < report.boundedness < np.inf
        assert report.condition == pytest.approx(report.sigma_max / report.sigma_min)
        assert "sigma_min" in report.format()

    def test_boundedness_positive(self, system):
        field = PolynomialVectorField.random(6, np.random.default_rng(2))
        assert graddiv_norm(system.apply(field)) > 0.0
