"""
Fortin module for the grad-div DPG solver.
Contains the reference-element Fortin system of the second-order form: the
minimum H(grad div)-norm cubic field matching the constant volume moments
and the grad-div trace moments of a given field, with a numerical check
that the defining saddle-point matrix is invertible.
"""

import logging
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P

from basis.basis import monomial_exponents
from config import FORTIN_RANDOM_SAMPLES, FORTIN_SINGULARITY_RATIO, GRADDIV_TEST_OFFSET
from quadrature.quadrature import edge_rule, triangle_rule

logger = logging.getLogger(__name__)

REFERENCE_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
REFERENCE_NORMALS = np.array([[0.0, -1.0], [np.sqrt(0.5), np.sqrt(0.5)], [-1.0, 0.0]])
REFERENCE_LENGTHS = np.array([1.0, np.sqrt(2.0), 1.0])


class FortinSingularError(RuntimeError):
    """The reference Fortin matrix is numerically singular."""


def _pad(coeffs, size):
    out = np.zeros((size, size))
    out[:coeffs.shape[0], :coeffs.shape[1]] = coeffs
    return out


class PolynomialVectorField:
    """
    Vector field with polynomial components sum c[i, j] x^i y^j.

    Attributes:
        coeffs (np.ndarray): Shape (2, n, n), one coefficient array per component.
    """

    def __init__(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.ndim != 3 or coeffs.shape[0] != 2 or coeffs.shape[1] != coeffs.shape[2]:
            raise ValueError(f"Coefficients must have shape (2, n, n), got {coeffs.shape}")
        self.coeffs = coeffs

    @property
    def degree(self):
        """Total degree bound (size of the coefficient arrays minus one)."""
        return self.coeffs.shape[1] - 1

    @classmethod
    def random(cls, degree, rng):
        """Random field of total degree <= degree with standard normal coefficients."""
        coeffs = np.zeros((2, degree + 1, degree + 1))
        for a, b in monomial_exponents(degree):
            coeffs[:, a, b] = rng.standard_normal(2)
        return cls(coeffs)

    @classmethod
    def unit(cls, component, exponent, size):
        """The field x^a y^b e_component."""
        coeffs = np.zeros((2, size, size))
        coeffs[component, exponent[0], exponent[1]] = 1.0
        return cls(coeffs)

    def __call__(self, points):
        x, y = points[..., 0], points[..., 1]
        return np.stack([P.polyval2d(x, y, self.coeffs[0]), P.polyval2d(x, y, self.coeffs[1])], axis=-1)

    def __sub__(self, other):
        size = max(self.coeffs.shape[1], other.coeffs.shape[1])
        return PolynomialVectorField(np.stack([_pad(a, size) for a in self.coeffs])
                                     - np.stack([_pad(b, size) for b in other.coeffs]))

    def divergence(self):
        """Coefficient array of div v."""
        size = self.coeffs.shape[1]
        return _pad(P.polyder(self.coeffs[0], axis=0), size) + _pad(P.polyder(self.coeffs[1], axis=1), size)

    def grad_div(self):
        """grad div v as a PolynomialVectorField."""
        div = self.divergence()
        size = div.shape[0]
        return PolynomialVectorField(np.stack([_pad(P.polyder(div, axis=0), size),
                                               _pad(P.polyder(div, axis=1), size)]))


def _evaluate_scalar(coeffs, points):
    return P.polyval2d(points[..., 0], points[..., 1], coeffs)


def graddiv_inner(v, w):
    """(v, w) + (grad div v, grad div w) on the reference triangle."""
    rule = triangle_rule(min(v.degree + w.degree, 20))
    gv, gw = v.grad_div(), w.grad_div()
    integrand = np.einsum("qk,qk->q", v(rule.points), w(rule.points)) \
        + np.einsum("qk,qk->q", gv(rule.points), gw(rule.points))
    return float(rule.weights @ integrand)


def graddiv_norm(v):
    return float(np.sqrt(graddiv_inner(v, v)))


def reference_moments(v):
    """
    Moments preserved by the reference Fortin operator.

    Order: int v_1, int v_2 over the triangle; int_{E_k} div v ds for the
    three edges; -int_{dT} hat_j (v . n) ds for the three vertex hats.

    Args:
        v (PolynomialVectorField): Field on the reference triangle.

    Returns:
        np.ndarray: Shape (8,).
    """
    volume = triangle_rule(min(v.degree, 20))
    volume_moments = volume.weights @ v(volume.points)

    rule = edge_rule(v.degree + 1)
    s = rule.points
    div = v.divergence()
    flux = np.zeros(3)
    normal_by_edge = []
    for k in range(3):
        start, stop = REFERENCE_VERTICES[k], REFERENCE_VERTICES[(k + 1) % 3]
        points = start + s[:, None] * (stop - start)
        weights = rule.weights * REFERENCE_LENGTHS[k]
        flux[k] = weights @ _evaluate_scalar(div, points)
        normal_by_edge.append(weights * (v(points) @ REFERENCE_NORMALS[k]))

    hats = np.zeros(3)
    for j in range(3):
        # vertex j starts edge j and ends edge j - 1
        hats[j] = -(normal_by_edge[j] @ (1.0 - s) + normal_by_edge[(j - 1) % 3] @ s)

    return np.concatenate([volume_moments, flux, hats])


@dataclass
class FortinReport:
    """
    Outcome of the reference Fortin check.

    Attributes:
        size (int): Matrix dimension.
        sigma_min (float): Smallest singular value.
        sigma_max (float): Largest singular value.
        condition (float): sigma_max / sigma_min.
        symmetry_error (float): max |K - K^T|.
        max_moment_mismatch (float): Largest scaled moment mismatch over the samples.
        boundedness (float): Observed max |Pi v| / |v| in the grad-div norm.
        samples (int): Number of random inputs.
    """

    size: int
    sigma_min: float
    sigma_max: float
    condition: float
    symmetry_error: float
    max_moment_mismatch: float
    boundedness: float
    samples: int

    def format(self):
        return "\n".join([
            f"reference Fortin matrix: {self.size} x {self.size}",
            f"sigma_min: {self.sigma_min:.6e}",
            f"sigma_max: {self.sigma_max:.6e}",
            f"condition: {self.condition:.6e}",
            f"symmetry error: {self.symmetry_error:.3e}",
            f"max moment mismatch ({self.samples} samples): {self.max_moment_mismatch:.3e}",
            f"observed boundedness constant: {self.boundedness:.6f}",
        ])


class ReferenceFortinSystem:
    """
    Saddle-point system [[G, C^T], [C, 0]] on the reference triangle.

    G is the H(grad div) Gram matrix of the monomial basis of P^3(T)^2 (20
    functions: first component, then second); C holds the 8 moment
    functionals of reference_moments applied to the basis.
    """

    def __init__(self, degree=GRADDIV_TEST_OFFSET):
        self.degree = degree
        size = degree + 1
        self.basis = [PolynomialVectorField.unit(c, tuple(e), size)
                      for c in range(2) for e in monomial_exponents(degree)]
        n = len(self.basis)
        gram = np.array([[graddiv_inner(a, b) for b in self.basis] for a in self.basis])
        constraints = np.array([reference_moments(phi) for phi in self.basis]).T

        m = constraints.shape[0]
        self.matrix = np.zeros((n + m, n + m))
        self.matrix[:n, :n] = gram
        self.matrix[:n, n:] = constraints.T
        self.matrix[n:, :n] = constraints
        self.n_basis = n

    @property
    def size(self):
        return self.matrix.shape[0]

    def singular_values(self):
        return np.linalg.svd(self.matrix, compute_uv=False)

    def check(self, ratio=FORTIN_SINGULARITY_RATIO):
        """
        Smallest and largest singular value.

        Raises:
            FortinSingularError: If sigma_min <= ratio * sigma_max.
        """
        sigma = self.singular_values()
        sigma_min, sigma_max = float(sigma[-1]), float(sigma[0])
        if sigma_min <= ratio * sigma_max:
            raise FortinSingularError(
                f"Reference Fortin matrix is singular: sigma_min = {sigma_min:.3e}, sigma_max = {sigma_max:.3e}")
        return sigma_min, sigma_max

    def apply(self, v):
        """
        Minimum-norm cubic field with the moments of v.

        Args:
            v (PolynomialVectorField): Input field.

        Returns:
            PolynomialVectorField: Pi v of degree GRADDIV_TEST_OFFSET.
        """
        rhs = np.concatenate([np.zeros(self.n_basis), reference_moments(v)])
        solution = np.linalg.solve(self.matrix, rhs)[:self.n_basis]
        coeffs = sum(c * phi.coeffs for c, phi in zip(solution, self.basis))
        return PolynomialVectorField(coeffs)


def apply_reference_fortin(v, system=None):
    """Pi v for a polynomial field v on the reference triangle."""
    system = ReferenceFortinSystem() if system is None else system
    return system.apply(v)


def moment_mismatch(v, projected):
    """Largest moment difference of v and Pi v, relative to the moments of v."""
    target = reference_moments(v)
    return float(np.max(np.abs(reference_moments(projected) - target)) / max(1.0, np.max(np.abs(target))))


def build_and_check(samples=FORTIN_RANDOM_SAMPLES, degree=6, seed=0, ratio=FORTIN_SINGULARITY_RATIO):
    """
    Assemble the reference Fortin matrix and verify it on random fields.

    Args:
        samples (int): Number of random polynomial inputs.
        degree (int): Their total degree.
        seed (int): Random seed.
        ratio (float): Singularity threshold for sigma_min / sigma_max.

    Returns:
        FortinReport: Singular values, condition number, worst moment
        mismatch and observed boundedness constant.

    Raises:
        FortinSingularError: If the matrix is numerically singular.
    """
    system = ReferenceFortinSystem()
    sigma_min, sigma_max = system.check(ratio)

    rng = np.random.default_rng(seed)
    mismatch = 0.0
    bound = 0.0
    for _ in range(samples):
        v = PolynomialVectorField.random(degree, rng)
        projected = system.apply(v)
        mismatch = max(mismatch, moment_mismatch(v, projected))
        bound = max(bound, graddiv_norm(projected) / graddiv_norm(v))

    report = FortinReport(
        size=system.size, sigma_min=sigma_min, sigma_max=sigma_max, condition=sigma_max / sigma_min,
        symmetry_error=float(np.max(np.abs(system.matrix - system.matrix.T))),
        max_moment_mismatch=mismatch, boundedness=bound, samples=samples)
    logger.info("Reference Fortin matrix: condition %.3e, observed boundedness %.3f",
                report.condition, report.boundedness)
    return report
