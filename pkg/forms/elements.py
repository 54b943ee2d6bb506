"""
Element batch module for the grad-div DPG solver.
Contains per-element quadrature data shared by both ultraweak forms and the
edge pairings that produce trace columns.
"""

from dataclasses import dataclass

import numpy as np

from basis.basis import (GradDivTestBasis, ScalarElementBasis, dimension, local_trace_size, local_trace_values,
                         vector_values)
from quadrature.quadrature import default_degree, edge_rule, map_to_triangles, triangle_rule


class ElementBatch:
    """
    Quadrature data for a contiguous block of triangles.

    Volume points are the pushed-forward triangle rule; edge points sit on
    each local edge k, parametrized from t[k] to t[k+1].

    Attributes:
        elements (np.ndarray): Triangle indices of the batch.
        corners (np.ndarray): Shape (m, 3, 2).
        points (np.ndarray): Volume points, shape (m, nq, 2).
        weights (np.ndarray): Volume weights, shape (m, nq).
        edge_params (np.ndarray): Parameters along an edge, shape (ne,).
        edge_points (np.ndarray): Shape (m, 3, ne, 2).
        edge_weights (np.ndarray): Arc-length weights, shape (m, 3, ne).
        normals (np.ndarray): Outward unit normals, shape (m, 3, 2).
        signs (np.ndarray): Local edge signs, shape (m, 3).
    """

    def __init__(self, mesh, elements, quadrature_degree):
        self.mesh = mesh
        self.elements = np.asarray(elements, dtype=np.int64)
        self.quadrature_degree = quadrature_degree
        self.corners = mesh.vertices[mesh.triangles[self.elements]]
        self.centers = mesh.centroids[self.elements]
        self.scales = mesh.diameters[self.elements]

        self.points, self.weights = map_to_triangles(self.corners, triangle_rule(quadrature_degree))

        rule = edge_rule(quadrature_degree)
        start = self.corners
        stop = np.roll(self.corners, -1, axis=1)
        s = rule.points
        self.edge_params = s
        self.edge_points = start[:, :, None, :] + s[None, None, :, None] * (stop - start)[:, :, None, :]
        lengths = mesh.edge_lengths[mesh.element_edges[self.elements]]
        self.edge_weights = lengths[:, :, None] * rule.weights[None, None, :]
        self.normals = mesh.local_normals()[self.elements]
        self.signs = mesh.edge_signs[self.elements]

        self._bases = {}
        self._volume = {}
        self._edge = {}
        self._graddiv = {}

    @property
    def size(self):
        return self.elements.shape[0]

    def basis(self, degree):
        """Orthonormal P^degree basis of every element (cached)."""
        if degree not in self._bases:
            self._bases[degree] = ScalarElementBasis.build(
                self.corners, degree, centers=self.centers, scales=self.scales)
        return self._bases[degree]

    def volume_eval(self, degree):
        """Values and gradients of the P^degree basis at volume points."""
        if degree not in self._volume:
            self._volume[degree] = self.basis(degree).eval(self.points)
        return self._volume[degree]

    def edge_eval(self, degree):
        """Values and gradients at edge points, shaped (m, 3, ne, ...)."""
        if degree not in self._edge:
            self._edge[degree] = self._on_edges(self.basis(degree).eval)
        return self._edge[degree]

    def graddiv_basis(self, degree):
        """grad-div orthonormal P^degree(T)^2 basis of every element (cached)."""
        if degree not in self._graddiv:
            self._graddiv[degree] = GradDivTestBasis.build(
                self.corners, degree, centers=self.centers, scales=self.scales)
        return self._graddiv[degree]

    def graddiv_volume_eval(self, degree):
        """Values, divergence and grad div of the grad-div basis at volume points."""
        key = ("volume", degree)
        if key not in self._graddiv:
            self._graddiv[key] = self.graddiv_basis(degree).eval(self.points)
        return self._graddiv[key]

    def graddiv_edge_eval(self, degree):
        """Values, divergence and grad div of the grad-div basis at edge points."""
        key = ("edge", degree)
        if key not in self._graddiv:
            self._graddiv[key] = self._on_edges(self.graddiv_basis(degree).eval)
        return self._graddiv[key]

    def _on_edges(self, evaluate):
        m, _, ne, _ = self.edge_points.shape
        evaluated = evaluate(self.edge_points.reshape(m, 3 * ne, 2))
        return tuple(a.reshape((m, 3, ne) + a.shape[2:]) for a in evaluated)

    def integrate(self, left, right):
        """Volume integrals sum_q w left[..., i] right[..., j] -> (m, ni, nj)."""
        return np.einsum("mq,mqi,mqj->mij", self.weights, left, right)

    def integrate_vector(self, left, right):
        """Like integrate, for vector-valued arguments of shape (m, nq, n, 2)."""
        return np.einsum("mq,mqik,mqjk->mij", self.weights, left, right)

    def moments(self, test, values):
        """Load moments sum_q w test[..., i] . values, for scalar or vector tests."""
        if test.ndim == 3:
            return np.einsum("mq,mqi,mq->mi", self.weights, test, values)
        return np.einsum("mq,mqik,mqk->mi", self.weights, test, values)

    def edge_normal_component(self, vector_values):
        """v . n_T on every local edge, from values of shape (m, 3, ne, n, 2)."""
        return np.einsum("mkqil,mkl->mkqi", vector_values, self.normals)

    def flux_pairing(self, test_edge_values, trace_values):
        """
        Columns of a flux trace: sum over edges of sigma * int trace * test ds.

        Args:
            test_edge_values (np.ndarray): Scalar test values, shape (m, 3, ne, nt).
            trace_values (np.ndarray): Local trace columns, shape (m, 3, ne, nc).

        Returns:
            np.ndarray: Shape (m, nt, nc).
        """
        weights = self.edge_weights * self.signs[:, :, None]
        return np.einsum("mkq,mkqi,mkqc->mic", weights, test_edge_values, trace_values)

    def continuous_pairing(self, test_edge_values, trace_values):
        """
        Columns of a continuous trace: int over the boundary of trace * test ds.

        The caller passes the test quantity already paired with the outward
        normal where needed (v . n_T).
        """
        return np.einsum("mkq,mkqi,mkqc->mic", self.edge_weights, test_edge_values, trace_values)


@dataclass(frozen=True)
class FieldSpec:
    """Broken L2 field variable: name and number of components (1 or 2)."""

    name: str
    components: int


@dataclass(frozen=True)
class TraceSpec:
    """
    Skeleton trace variable.

    Attributes:
        name (str): Variable name.
        kind (str): FLUX or CONTINUOUS.
        degree (int): Degree along each edge.
        boundary (str or None): "normal" or "div" if the variable carries the
            essential condition u . n = g or div u = g on the boundary.
    """

    name: str
    kind: str
    degree: int
    boundary: str = None


class Formulation:
    """
    Element-local ingredients of an ultraweak DPG formulation.

    Subclasses declare fields, traces and test blocks and implement
    local_gram, local_b and local_load on an ElementBatch. Local trial
    columns list all field coefficients first (per field, per component, per
    basis function) and then the local columns of every trace in order.
    """

    name = None
    min_degree = 0
    max_degree = None

    def __init__(self, degree):
        if degree < self.min_degree or (self.max_degree is not None and degree > self.max_degree):
            raise ValueError(
                f"Degree {degree} outside [{self.min_degree}, {self.max_degree}] for '{self.name}'")
        self.degree = degree
        self.fields = ()
        self.traces = ()
        self.test_blocks = ()

    @property
    def test_degree(self):
        """Highest polynomial degree among the test blocks."""
        return max(deg for _, _, deg in self.test_blocks)

    @property
    def quadrature_degree(self):
        return default_degree(self.test_degree)

    @property
    def test_size(self):
        return sum(block_size(comps, deg) for _, comps, deg in self.test_blocks)

    def test_slices(self):
        """Row slice of each test block, keyed by name."""
        return _slices((name, block_size(comps, deg)) for name, comps, deg in self.test_blocks)

    @property
    def field_size(self):
        return sum(block_size(f.components, self.degree) for f in self.fields)

    def field_slices(self):
        """Column slice of each field within the local field block."""
        return _slices((f.name, block_size(f.components, self.degree)) for f in self.fields)

    def trace_slices(self):
        """Column slice of each trace within the local trial columns."""
        return _slices(((t.name, local_trace_size(t.kind, t.degree)) for t in self.traces),
                       start=self.field_size)

    @property
    def local_trial_size(self):
        return self.field_size + sum(local_trace_size(t.kind, t.degree) for t in self.traces)

    def trace_columns(self, batch):
        """Local trace column values of every trace on the edges of a batch."""
        return {t.name: local_trace_values(t.kind, t.degree, batch.edge_params, batch.signs)
                for t in self.traces}

    def assemble_gram(self, blocks, batch):
        """Block-diagonal local Gram matrix from per-block matrices."""
        gram = np.zeros((batch.size, self.test_size, self.test_size))
        for name, rows in self.test_slices().items():
            gram[:, rows, rows] = blocks[name]
        return gram

    def test_coefficients(self, batch, functions):
        """
        Coefficients of given functions in the local test bases (L2 projection).

        Args:
            batch (ElementBatch): Elements.
            functions (dict): Test block name -> callable of points (..., 2).
                Missing blocks get zero coefficients.

        Returns:
            np.ndarray: Shape (m, test_size).
        """
        out = np.zeros((batch.size, self.test_size))
        slices = self.test_slices()
        for name, comps, deg in self.test_blocks:
            if name not in functions:
                continue
            test = self.test_values(batch, comps, deg)
            data = np.asarray(functions[name](batch.points), dtype=float)
            mass = batch.integrate(test, test) if comps == 1 else batch.integrate_vector(test, test)
            out[:, slices[name]] = np.linalg.solve(mass, batch.moments(test, data)[..., None])[..., 0]
        return out

    def test_values(self, batch, components, degree):
        """Test basis values of a block at the volume points, (m, nq, n) or (m, nq, 2n, 2)."""
        values, _ = batch.volume_eval(degree)
        return vector_values(values) if components == 2 else values

    def field_values(self, batch, coefficients, points=None):
        """
        Evaluate the discrete fields of a batch.

        Args:
            batch (ElementBatch): Elements.
            coefficients (np.ndarray): Local field coefficients, shape (m, field_size).
            points (np.ndarray): Optional points (m, nq, 2), default the volume points.

        Returns:
            dict: Field name -> values of shape (m, nq) or (m, nq, 2).
        """
        if points is None:
            phi, _ = batch.volume_eval(self.degree)
        else:
            phi, _ = batch.basis(self.degree).eval(points)
        n = phi.shape[-1]
        out = {}
        for f, cols in zip(self.fields, self.field_slices().values()):
            c = coefficients[:, cols].reshape(batch.size, f.components, n)
            values = np.einsum("mqi,mci->mqc", phi, c)
            out[f.name] = values[..., 0] if f.components == 1 else values

        return out

    def exact_fields(self, problem):
        raise NotImplementedError

    def exact_traces(self, problem):
        raise NotImplementedError

    def local_gram(self, batch):
        raise NotImplementedError

    def local_b(self, batch):
        raise NotImplementedError

    def local_load(self, batch, f):
        raise NotImplementedError


def block_size(components, degree):
    return components * dimension(degree)


def _slices(named_sizes, start=0):
    out = {}
    for name, size in named_sizes:
        out[name] = slice(start, start + size)
        start += size
    return out
