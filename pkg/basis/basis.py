"""
Basis module for the grad-div DPG solver.
Contains orthonormal polynomial bases on triangles (physical-frame scaled
monomials), the grad-div test basis with an exactly split kernel,
vector-valued helpers and the skeleton trace DOF maps.
"""

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import legvander

from quadrature.quadrature import map_to_triangles, triangle_rule

FLUX = "flux"
CONTINUOUS = "continuous"


def monomial_exponents(degree):
    """
    Exponents (a, b) of x^a y^b with a + b <= degree, ordered by total degree.

    Args:
        degree (int): Maximal total degree (>= 0).

    Returns:
        np.ndarray: Integer array of shape ((degree+1)(degree+2)/2, 2).

    Raises:
        ValueError: If degree is negative.
    """
    if degree < 0:
        raise ValueError(f"Polynomial degree must be >= 0, got {degree}")
    return np.array([(k - b, b) for k in range(degree + 1) for b in range(k + 1)], dtype=np.int64)


def dimension(degree):
    return (degree + 1) * (degree + 2) // 2


def _powers(t, degree):
    # t^k for k = 0..degree stacked on a new leading axis
    out = np.ones((degree + 1,) + t.shape)
    for k in range(1, degree + 1):
        out[k] = out[k - 1] * t
    return out


def scaled_monomials(points, centers, scales, degree):
    """
    Scaled monomials ((x - x_c) / h)^alpha with their physical gradients.

    Args:
        points (np.ndarray): Shape (m, nq, 2).
        centers (np.ndarray): Shape (m, 2).
        scales (np.ndarray): Shape (m,).
        degree (int): Total degree.

    Returns:
        tuple: values (m, nq, n), gradients (m, nq, n, 2).
    """
    exps = monomial_exponents(degree)
    h = scales[:, None]
    xi = (points[..., 0] - centers[:, None, 0]) / h
    eta = (points[..., 1] - centers[:, None, 1]) / h
    px = _powers(xi, degree)
    py = _powers(eta, degree)

    a, b = exps[:, 0], exps[:, 1]

    def take(pw, k):
        return np.moveaxis(pw[np.maximum(k, 0)], 0, -1)

    hh = h[..., None]
    values = take(px, a) * take(py, b)
    dx = a * take(px, a - 1) * take(py, b) / hh
    dy = b * take(px, a) * take(py, b - 1) / hh
    return values, np.stack([dx, dy], axis=-1)


def _frame(corners, centers=None, scales=None):
    # centroid and longest edge unless given
    if centers is None:
        centers = corners.mean(axis=1)
    if scales is None:
        edges = corners - np.roll(corners, -1, axis=1)
        scales = np.linalg.norm(edges, axis=2).max(axis=1)
    return centers, scales


@dataclass
class ScalarElementBasis:
    """
    L2-orthonormal basis of P^p(T) on a batch of triangles.

    phi = C q where q are the scaled monomials of the element and C = L^{-1}
    for the Cholesky factor L of their mass matrix.

    Attributes:
        degree (int): Polynomial degree p.
        centers (np.ndarray): Centroids, shape (m, 2).
        scales (np.ndarray): Element diameters, shape (m,).
        coefficients (np.ndarray): C, shape (m, n, n).
    """

    degree: int
    centers: np.ndarray
    scales: np.ndarray
    coefficients: np.ndarray

    @property
    def size(self):
        return dimension(self.degree)

    @classmethod
    def build(cls, corners, degree, centers=None, scales=None):
        """
        Orthonormalize the scaled monomials of degree `degree` on each triangle.

        Args:
            corners (np.ndarray): Vertex coordinates, shape (m, 3, 2).
            degree (int): Polynomial degree.
            centers (np.ndarray): Optional centroids (default: vertex mean).
            scales (np.ndarray): Optional scaling lengths (default: longest edge).

        Returns:
            ScalarElementBasis: Basis for every triangle of the batch.
        """
        corners = np.asarray(corners, dtype=float)
        centers, scales = _frame(corners, centers, scales)

        rule = triangle_rule(2 * degree)
        points, weights = map_to_triangles(corners, rule)
        q, _ = scaled_monomials(points, centers, scales, degree)
        mass = np.einsum("mq,mqi,mqj->mij", weights, q, q)
        factor = np.linalg.cholesky(mass)
        eye = np.broadcast_to(np.eye(mass.shape[-1]), mass.shape)
        coefficients = np.linalg.solve(factor, eye)
        return cls(degree=degree, centers=centers, scales=scales, coefficients=coefficients)

    def eval(self, points):
        """
        Values and gradients of all basis functions.

        Args:
            points (np.ndarray): Shape (m, nq, 2), one point set per element.

        Returns:
            tuple: values (m, nq, n), gradients (m, nq, n, 2).
        """
        q, dq = scaled_monomials(points, self.centers, self.scales, self.degree)
        c = self.coefficients
        return np.einsum("mij,mqj->mqi", c, q), np.einsum("mij,mqjk->mqik", c, dq)


def eval_scalar(basis, points):
    """Values and gradients of an element basis at per-element points."""
    return basis.eval(points)


def vector_values(values):
    """
    Values of the vector basis {(phi_i, 0)} followed by {(0, phi_i)}.

    Args:
        values (np.ndarray): Scalar values, shape (..., n).

    Returns:
        np.ndarray: Shape (..., 2n, 2).
    """
    zeros = np.zeros_like(values)
    first = np.stack([values, zeros], axis=-1)
    second = np.stack([zeros, values], axis=-1)
    return np.concatenate([first, second], axis=-2)


def vector_divergence(gradients):
    """Divergence of the vector basis, shape (..., 2n), from scalar gradients (..., n, 2)."""
    return np.concatenate([gradients[..., 0], gradients[..., 1]], axis=-1)


def graddiv_splitting(degree):
    """
    Integer change of basis of P^degree(T)^2 that splits off the kernel of grad div.

    Columns act on the coefficients of {(q_i, 0)} followed by {(0, q_i)}, the
    scaled monomials of `monomial_exponents(degree)`. The first `n_kernel`
    columns have constant divergence. Column n_kernel + j has divergence
    rates[j] * q_{targets[j]}, a nonconstant monomial of degree < `degree`.

    Args:
        degree (int): Polynomial degree (>= 0).

    Returns:
        tuple: transform (2n, 2n) int array, n_kernel (int), targets (int array),
        rates (int array).
    """
    exps = monomial_exponents(degree)
    n = exps.shape[0]
    index = {(int(a), int(b)): i for i, (a, b) in enumerate(exps)}

    def column(*entries):
        col = np.zeros(2 * n, dtype=np.int64)
        for row, value in entries:
            col[row] = value
        return col

    kernel, complement, targets, rates = [], [], [], []
    for (a, b), i in index.items():
        if a == 0:
            kernel.append(column((i, 1)))
        if b == 0:
            kernel.append(column((n + i, 1)))

    lower = monomial_exponents(degree - 1) if degree > 0 else np.zeros((0, 2), dtype=np.int64)
    for t, (a, b) in enumerate(lower):
        a, b = int(a), int(b)
        first, second = index[(a + 1, b)], n + index[(a, b + 1)]
        if a + b == 0:
            kernel += [column((first, 1)), column((second, 1))]
            continue
        # (b+1) (x^{a+1} y^b, 0) - (a+1) (0, x^a y^{b+1}) is divergence free
        kernel.append(column((first, b + 1), (second, -(a + 1))))
        complement.append(column((first, 1), (second, 1)))
        targets.append(t)
        rates.append(a + b + 2)

    transform = np.stack(kernel + complement, axis=1)
    return transform, len(kernel), np.array(targets, dtype=np.int64), np.array(rates, dtype=np.int64)


def _graddiv_monomials(points, centers, scales, degree):
    # split vector monomials with values, divergence and grad div in physical
    # units; the complement functions carry a factor h^2
    transform, n_kernel, targets, rates = graddiv_splitting(degree)
    q, dq = scaled_monomials(points, centers, scales, degree)
    h = scales[:, None, None]
    dq_ref = dq * h[..., None]

    weight = np.ones((scales.shape[0], 1, transform.shape[1]))
    weight[:, :, n_kernel:] = scales[:, None, None] ** 2

    values = np.einsum("mqrk,rj->mqjk", vector_values(q), transform) * weight[..., None]
    divergence = (vector_divergence(dq_ref) @ transform) / h * weight
    graddiv = np.zeros(values.shape)
    graddiv[:, :, n_kernel:, :] = rates[:, None] * dq_ref[:, :, targets, :]
    return values, divergence, graddiv


@dataclass
class GradDivTestBasis:
    """
    Basis of P^p(T)^2 orthonormal in (v, w) + (grad div v, grad div w).

    The split monomials of `graddiv_splitting` keep the kernel of grad div
    exact; the others are scaled by h^2 so that their grad div is of unit
    size. Their Gram matrix is then well conditioned for every h, and its
    inverse Cholesky factor C (lower triangular) orthonormalizes them with
    the kernel functions first.

    Attributes:
        degree (int): Polynomial degree.
        centers (np.ndarray): Centroids, shape (m, 2).
        scales (np.ndarray): Element diameters, shape (m,).
        coefficients (np.ndarray): C, shape (m, 2n, 2n).
    """

    degree: int
    centers: np.ndarray
    scales: np.ndarray
    coefficients: np.ndarray

    @property
    def size(self):
        return 2 * dimension(self.degree)

    @classmethod
    def build(cls, corners, degree, centers=None, scales=None):
        corners = np.asarray(corners, dtype=float)
        centers, scales = _frame(corners, centers, scales)
        points, weights = map_to_triangles(corners, triangle_rule(2 * degree))
        values, _, graddiv = _graddiv_monomials(points, centers, scales, degree)
        gram = (np.einsum("mq,mqik,mqjk->mij", weights, values, values)
                + np.einsum("mq,mqik,mqjk->mij", weights, graddiv, graddiv))
        factor = np.linalg.cholesky(gram)
        eye = np.broadcast_to(np.eye(gram.shape[-1]), gram.shape)
        return cls(degree=degree, centers=centers, scales=scales, coefficients=np.linalg.solve(factor, eye))

    def eval(self, points):
        """
        Values, divergence and grad div of all basis functions.

        Args:
            points (np.ndarray): Shape (m, nq, 2).

        Returns:
            tuple: values (m, nq, 2n, 2), divergence (m, nq, 2n), grad div (m, nq, 2n, 2).
        """
        values, divergence, graddiv = _graddiv_monomials(points, self.centers, self.scales, self.degree)
        c = self.coefficients
        return (np.einsum("mij,mqjk->mqik", c, values),
                np.einsum("mij,mqj->mqi", c, divergence),
                np.einsum("mij,mqjk->mqik", c, graddiv))


def legendre(degree, s):
    """Legendre polynomials P_0..P_degree in 2s - 1, shape (len(s), degree + 1)."""
    return legvander(2.0 * np.asarray(s, dtype=float) - 1.0, degree)


class TraceDofMap:
    """
    Global numbering of one skeleton trace variable.

    A flux trace of degree q (H^{-1/2} type, represents a normal component
    with respect to the global edge normal) has q + 1 Legendre modes per edge.
    A continuous trace of degree q >= 1 (H^{1/2} type) has one DOF per vertex
    and q - 1 bubbles per edge. Along an edge the parameter s runs from the
    lower to the higher vertex index.

    Local columns per element: flux traces list edge 0 modes, edge 1 modes,
    edge 2 modes; continuous traces list the three vertex hats followed by
    the bubbles of edges 0, 1, 2.

    Attributes:
        kind (str): FLUX or CONTINUOUS.
        degree (int): Polynomial degree q along each edge.
        offset (int): First global index of this variable.
        n_dofs (int): Number of global DOFs.
        element_dofs (np.ndarray): Global index of every local column, shape (nt, n_local).
    """

    def __init__(self, mesh, kind, degree, offset=0):
        if kind not in (FLUX, CONTINUOUS):
            raise ValueError(f"Unknown trace kind '{kind}'")
        if kind == FLUX and degree < 0:
            raise ValueError(f"Flux trace degree must be >= 0, got {degree}")
        if kind == CONTINUOUS and degree < 1:
            raise ValueError(f"Continuous trace degree must be >= 1, got {degree}")

        self.kind = kind
        self.degree = degree
        self.offset = offset
        self.n_edges = mesh.n_edges
        self.n_vertices = mesh.n_vertices

        ee = mesh.element_edges
        if kind == FLUX:
            per_edge = degree + 1
            modes = np.arange(per_edge)
            self.n_dofs = mesh.n_edges * per_edge
            self.element_dofs = offset + (ee[:, :, None] * per_edge + modes).reshape(mesh.n_triangles, -1)
        else:
            nb = degree - 1
            self.n_dofs = mesh.n_vertices + mesh.n_edges * nb
            bubbles = offset + mesh.n_vertices + (ee[:, :, None] * nb + np.arange(nb)).reshape(mesh.n_triangles, -1)
            self.element_dofs = np.hstack([offset + mesh.triangles, bubbles])

        self._mesh = mesh

    @property
    def n_local(self):
        return self.element_dofs.shape[1]

    def edge_dofs(self):
        """
        Global DOFs of every edge in the column order of trace_eval.

        Returns:
            np.ndarray: Shape (ne, degree + 1).
        """
        ne = self.n_edges
        if self.kind == FLUX:
            return self.offset + np.arange(ne * (self.degree + 1)).reshape(ne, -1)
        nb = self.degree - 1
        bubbles = self.offset + self.n_vertices + np.arange(ne * nb).reshape(ne, nb)
        return np.hstack([self.offset + self._mesh.edges, bubbles])

    def boundary_dofs(self, edge_mask=None):
        """
        Sorted global DOFs lying on the selected edges (default: the boundary).

        Args:
            edge_mask (np.ndarray): Boolean mask over edges.

        Returns:
            np.ndarray: Sorted unique DOF indices.
        """
        if edge_mask is None:
            edge_mask = self._mesh.boundary_edges
        return np.unique(self.edge_dofs()[edge_mask])


def local_trace_size(kind, degree):
    """Number of local columns of a trace variable on one triangle."""
    return 3 * (degree + 1) if kind == FLUX else 3 * degree


def local_trace_values(kind, degree, s, signs):
    """
    Values of the local trace columns on the three local edges of a batch.

    Args:
        kind (str): FLUX or CONTINUOUS.
        degree (int): Trace degree.
        s (np.ndarray): Parameters in [0, 1] along each local edge, from
            t[k] to t[k+1], shape (nq,).
        signs (np.ndarray): Local edge signs, shape (m, 3).

    Returns:
        np.ndarray: Shape (m, 3, nq, local_trace_size(kind, degree)).
    """
    m, nq = signs.shape[0], s.shape[0]
    out = np.zeros((m, 3, nq, local_trace_size(kind, degree)))
    s_global = np.where(signs[:, :, None] > 0, s[None, None, :], 1.0 - s[None, None, :])

    if kind == FLUX:
        per_edge = degree + 1
        for k in range(3):
            modes = legendre(degree, s_global[:, k].ravel()).reshape(m, nq, per_edge)
            out[:, k, :, k * per_edge:(k + 1) * per_edge] = modes
        return out

    for k in range(3):
        out[:, k, :, k] = 1.0 - s
        out[:, (k - 1) % 3, :, k] = s
    nb = degree - 1
    if nb == 0:
        return out
    for k in range(3):
        sg = s_global[:, k].ravel()
        bubble = (sg * (1.0 - sg))[:, None] * legendre(nb - 1, sg)
        out[:, k, :, 3 + k * nb:3 + (k + 1) * nb] = bubble.reshape(m, nq, nb)
    return out


def trace_eval(trace_map, s):
    """
    Values of the DOFs of one edge at parameters s (lower to higher vertex).

    Args:
        trace_map (TraceDofMap): Trace variable.
        s (array_like): Parameters in [0, 1].

    Returns:
        np.ndarray: Shape (len(s), degree + 1), columns ordered as edge_dofs().
    """
    s = np.asarray(s, dtype=float)
    if trace_map.kind == FLUX:
        return legendre(trace_map.degree, s)
    nb = trace_map.degree - 1
    hats = np.column_stack([1.0 - s, s])
    if nb == 0:
        return hats
    return np.hstack([hats, (s * (1.0 - s))[:, None] * legendre(nb - 1, s)])
