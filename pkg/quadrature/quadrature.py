"""
Quadrature module for the grad-div DPG solver.
Contains Gauss rules on the unit interval and Duffy-collapsed Gauss rules on
the reference triangle (0,0), (1,0), (0,1).
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

from config import MAX_EDGE_DEGREE, MAX_TRIANGLE_DEGREE


@dataclass(frozen=True)
class QuadRule:
    """
    Immutable quadrature rule on a reference domain.

    Attributes:
        points (np.ndarray): Reference coordinates, shape (n,) on [0, 1] or (n, 2) on the triangle.
        weights (np.ndarray): Weights, summing to the reference measure (1 or 1/2).
        degree (int): Total polynomial degree integrated exactly.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def size(self):
        return self.weights.shape[0]


def _frozen(array):
    array = np.ascontiguousarray(array, dtype=float)
    array.setflags(write=False)
    return array


def _gauss_on_unit_interval(npoints):
    points, weights = leggauss(npoints)
    return 0.5 * (points + 1.0), 0.5 * weights


@lru_cache(maxsize=None)
def edge_rule(degree):
    """
    Gauss-Legendre rule on [0, 1].

    An n-point rule is exact for degree 2n - 1, so the rule uses
    ceil((degree + 1) / 2) points.

    Args:
        degree (int): Polynomial degree to integrate exactly.

    Returns:
        QuadRule: Points of shape (n,), weights summing to 1.

    Raises:
        ValueError: If degree is negative or above MAX_EDGE_DEGREE.
    """
    if not 0 <= degree <= MAX_EDGE_DEGREE:
        raise ValueError(f"Edge rule degree {degree} outside [0, {MAX_EDGE_DEGREE}]")

    npoints = degree // 2 + 1
    points, weights = _gauss_on_unit_interval(npoints)
    return QuadRule(points=_frozen(points), weights=_frozen(weights), degree=2 * npoints - 1)


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """
    Collapsed (Duffy) tensor Gauss rule on the reference triangle.

    The square [0,1]^2 is mapped by (s, t) -> (s, t (1 - s)), with Jacobian
    (1 - s). A degree-k integrand becomes degree k + 1 in s and k in t.

    Args:
        degree (int): Total polynomial degree to integrate exactly (0-20).

    Returns:
        QuadRule: Points of shape (n, 2), weights summing to 1/2.

    Raises:
        ValueError: If degree is outside [0, MAX_TRIANGLE_DEGREE].
    """
    if not 0 <= degree <= MAX_TRIANGLE_DEGREE:
        raise ValueError(f"Triangle rule degree {degree} outside [0, {MAX_TRIANGLE_DEGREE}]")

    s, ws = _gauss_on_unit_interval((degree + 1) // 2 + 1)
    t, wt = _gauss_on_unit_interval(degree // 2 + 1)

    s_grid, t_grid = np.meshgrid(s, t, indexing="ij")
    points = np.column_stack([s_grid.ravel(), (t_grid * (1.0 - s_grid)).ravel()])
    weights = np.outer(ws * (1.0 - s), wt).ravel()
    return QuadRule(points=_frozen(points), weights=_frozen(weights), degree=degree)


def map_to_triangles(corners, rule):
    """
    Push a reference triangle rule forward to a batch of physical triangles.

    Args:
        corners (np.ndarray): Vertex coordinates, shape (m, 3, 2), counterclockwise.
        rule (QuadRule): Rule on the reference triangle.

    Returns:
        tuple: (points (m, nq, 2), weights (m, nq)) with weights scaled by |det J|.
    """
    origin = corners[:, 0, :]
    jac = np.stack([corners[:, 1] - origin, corners[:, 2] - origin], axis=2)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    points = origin[:, None, :] + np.einsum("mij,qj->mqi", jac, rule.points)
    weights = np.abs(det)[:, None] * rule.weights[None, :]
    return points, weights


def default_degree(enriched_degree):
    """Operating quadrature degree 2 (p_enriched + 2), capped to the supported range."""
    return min(2 * (enriched_degree + 2), MAX_TRIANGLE_DEGREE)
