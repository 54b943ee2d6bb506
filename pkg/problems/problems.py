"""
Problems module for the grad-div DPG solver.
Contains the two manufactured problems (smooth solution on the unit square,
singular solution on the L-shape), boundary data projection, exact
interpolation into the trial space and exact L2 errors.
"""

import logging
from dataclasses import dataclass

import numpy as np

from basis.basis import CONTINUOUS, FLUX, legendre, trace_eval
from config import (BOUNDARY_QUADRATURE_DEGREE, DEFAULT_SUBDIVISIONS, ELEMENT_CHUNK_SIZE,
                    ERROR_QUADRATURE_DEGREE, LSHAPE_REENTRANT_TAGS, LSHAPE_SPLIT)
from dpg.layout import DofLayout, SolutionVector
from forms.elements import ElementBatch
from mesh.mesh import make_lshape, make_unit_square
from quadrature.quadrature import edge_rule

logger = logging.getLogger(__name__)

SINGULAR_EXPONENT = 2.0 / 3.0


@dataclass(frozen=True)
class ProblemSpec:
    """
    Manufactured solution of (grad div)^2 u + u = f.

    All callbacks take points of shape (..., 2) and return arrays of shape
    (...,) for scalars or (..., 2) for vectors.

    Attributes:
        name (str): "smooth", "lshape" or a custom label.
        domain (str): "unit_square" or "lshape".
        u, div_u, grad_div_u, div_grad_div_u, f (callable): Exact data.
        regularity (str): "smooth" or "singular".
        zero_flux_tags (frozenset): Boundary tags where u . n vanishes identically.
    """

    name: str
    domain: str
    u: object
    div_u: object
    grad_div_u: object
    div_grad_div_u: object
    f: object
    regularity: str = "smooth"
    zero_flux_tags: frozenset = frozenset()


def _g(t, k=0):
    # derivatives of t^2 (t - 1)^2
    return [t ** 2 * (t - 1.0) ** 2, 4 * t ** 3 - 6 * t ** 2 + 2 * t,
            12 * t ** 2 - 12 * t + 2, 24 * t - 12, 24.0 + 0.0 * t][k]


def _s(t, k=0):
    # derivatives of sin^2(pi t)
    a = 2.0 * np.pi * t
    return [np.sin(np.pi * t) ** 2, np.pi * np.sin(a), 2 * np.pi ** 2 * np.cos(a),
            -4 * np.pi ** 3 * np.sin(a), -8 * np.pi ** 4 * np.cos(a)][k]


def smooth_problem():
    """
    u = (x^2 (x-1)^2 y^2 (y-1)^2, sin^2(pi x) sin^2(pi y)) on (0,1)^2.

    u . n and div u vanish on the boundary. See docs/derivations.md for the
    closed forms.

    Returns:
        ProblemSpec: Smooth problem.
    """

    def u(p):
        x, y = p[..., 0], p[..., 1]
        return np.stack([_g(x) * _g(y), _s(x) * _s(y)], axis=-1)

    def div_u(p):
        x, y = p[..., 0], p[..., 1]
        return _g(x, 1) * _g(y) + _s(x) * _s(y, 1)

    def grad_div_u(p):
        x, y = p[..., 0], p[..., 1]
        return np.stack([_g(x, 2) * _g(y) + _s(x, 1) * _s(y, 1),
                         _g(x, 1) * _g(y, 1) + _s(x) * _s(y, 2)], axis=-1)

    def div_grad_div_u(p):
        x, y = p[..., 0], p[..., 1]
        return _g(x, 3) * _g(y) + _s(x, 2) * _s(y, 1) + _g(x, 1) * _g(y, 2) + _s(x) * _s(y, 3)

    def grad_div_squared_u(p):
        x, y = p[..., 0], p[..., 1]
        return np.stack([
            _g(x, 4) * _g(y) + _s(x, 3) * _s(y, 1) + _g(x, 2) * _g(y, 2) + _s(x, 1) * _s(y, 3),
            _g(x, 3) * _g(y, 1) + _s(x, 2) * _s(y, 2) + _g(x, 1) * _g(y, 3) + _s(x) * _s(y, 4),
        ], axis=-1)

    def f(p):
        return u(p) + grad_div_squared_u(p)

    return ProblemSpec(name="smooth", domain="unit_square", u=u, div_u=div_u, grad_div_u=grad_div_u,
                       div_grad_div_u=div_grad_div_u, f=f, regularity="smooth")


def lshape_problem():
    """
    u = curl v, v = r^{2/3} cos(2 phi / 3), on the rotated L-shape.

    div u = 0, so grad div u = 0 and f = u. The stream function v vanishes
    on the two sides meeting at the reentrant corner, hence u . n = 0 there.

    Returns:
        ProblemSpec: Singular problem.
    """
    alpha = SINGULAR_EXPONENT

    def u(p):
        r = np.hypot(p[..., 0], p[..., 1])
        phi = np.arctan2(p[..., 1], p[..., 0])
        scale = alpha * r ** (alpha - 1.0)
        return np.stack([scale * np.sin((1.0 - alpha) * phi), -scale * np.cos((1.0 - alpha) * phi)], axis=-1)

    def zero_scalar(p):
        return np.zeros(np.shape(p)[:-1])

    def zero_vector(p):
        return np.zeros(np.shape(p))

    return ProblemSpec(name="lshape", domain="lshape", u=u, div_u=zero_scalar, grad_div_u=zero_vector,
                       div_grad_div_u=zero_scalar, f=u, regularity="singular",
                       zero_flux_tags=LSHAPE_REENTRANT_TAGS)


def stream_function(p):
    """v = r^{2/3} cos(2 phi / 3) of the L-shape problem."""
    r = np.hypot(p[..., 0], p[..., 1])
    phi = np.arctan2(p[..., 1], p[..., 0])
    return r ** SINGULAR_EXPONENT * np.cos(SINGULAR_EXPONENT * phi)


PROBLEMS = {"smooth": smooth_problem, "lshape": lshape_problem}


def get_problem(name):
    """Problem by name; raises ValueError for unknown names."""
    if name not in PROBLEMS:
        raise ValueError(f"Unknown problem '{name}', expected one of {sorted(PROBLEMS)}")
    return PROBLEMS[name]()


def initial_mesh(problem, subdivisions=DEFAULT_SUBDIVISIONS, split=LSHAPE_SPLIT):
    """Initial triangulation of the problem's domain."""
    if problem.domain == "unit_square":
        return make_unit_square(subdivisions)
    if problem.domain == "lshape":
        return make_lshape(split)
    raise ValueError(f"Unknown domain '{problem.domain}'")


def _edge_samples(mesh, edges, degree):
    rule = edge_rule(degree)
    a = mesh.vertices[mesh.edges[edges, 0]]
    b = mesh.vertices[mesh.edges[edges, 1]]
    points = a[:, None, :] + rule.points[None, :, None] * (b - a)[:, None, :]
    return rule, points


def _project_flux(mesh, tmap, vector_fn, edges, degree):
    """Legendre L2 projection of g . n_E on each edge, shape (len(edges), q + 1)."""
    rule, points = _edge_samples(mesh, edges, degree)
    normal = np.einsum("eqk,ek->eq", vector_fn(points), mesh.edge_normals[edges])
    modes = legendre(tmap.degree, rule.points)
    scale = 2.0 * np.arange(tmap.degree + 1) + 1.0
    return np.einsum("q,eq,qj->ej", rule.weights, normal, modes) * scale


def _project_continuous(mesh, tmap, scalar_fn, edges, degree):
    """
    Vertex interpolation plus L2 projection of the remainder onto the edge bubbles.

    Returns:
        tuple: (vertex values at mesh.edges[edges], bubble coefficients (len(edges), q - 1)).
    """
    ends = mesh.edges[edges]
    vertex_values = scalar_fn(mesh.vertices[ends])
    nb = tmap.degree - 1
    if nb == 0:
        return vertex_values, np.zeros((len(edges), 0))

    rule, points = _edge_samples(mesh, edges, degree)
    shapes = trace_eval(tmap, rule.points)
    hats, bubbles = shapes[:, :2], shapes[:, 2:]
    remainder = scalar_fn(points) - vertex_values @ hats.T
    mass = np.einsum("q,qi,qj->ij", rule.weights, bubbles, bubbles)
    rhs = np.einsum("q,eq,qi->ei", rule.weights, remainder, bubbles)
    return vertex_values, np.linalg.solve(mass, rhs.T).T


def _fill_trace(values, mesh, tmap, fn, edges, degree):
    edge_dofs = tmap.edge_dofs()[edges]
    if tmap.kind == FLUX:
        values[edge_dofs] = _project_flux(mesh, tmap, fn, edges, degree)
        return
    vertex_values, bubbles = _project_continuous(mesh, tmap, fn, edges, degree)
    values[edge_dofs[:, :2]] = vertex_values
    values[edge_dofs[:, 2:]] = bubbles


def project_boundary_data(mesh, problem, layout, degree=BOUNDARY_QUADRATURE_DEGREE):
    """
    Values of the essential trace DOFs.

    The normal trace gets the edgewise Legendre L2 projection of u . n
    (exactly zero on the problem's zero-flux segments); the div trace gets
    vertex interpolation of div u plus projection onto the edge bubbles.

    Args:
        mesh (Mesh): Triangulation.
        problem (ProblemSpec): Exact solution.
        layout (DofLayout): Trial numbering.
        degree (int): Edge quadrature degree.

    Returns:
        np.ndarray: Values aligned with layout.essential_dofs().
    """
    values = np.zeros(layout.n_dofs)
    exact = layout.formulation.exact_traces(problem)
    boundary = np.flatnonzero(mesh.boundary_edges)

    for record in layout.essential:
        tmap = layout.trace_maps[record.trace]
        _fill_trace(values, mesh, tmap, exact[record.trace], boundary, degree)
        if record.kind == "normal" and problem.zero_flux_tags:
            quiet = boundary[np.isin(mesh.edge_tags[boundary], list(problem.zero_flux_tags))]
            values[tmap.edge_dofs()[quiet]] = 0.0

    return values[layout.essential_dofs()]


def interpolate_exact(mesh, formulation, problem, degree=ERROR_QUADRATURE_DEGREE):
    """
    Projection of an exact solution into the discrete trial space.

    Fields are L2-projected element by element; traces are projected edge by
    edge as in project_boundary_data. Solutions lying in the trial space are
    reproduced exactly.

    Args:
        mesh (Mesh): Triangulation.
        formulation (Formulation): Ultraweak form.
        problem (ProblemSpec): Exact solution.
        degree (int): Quadrature degree.

    Returns:
        SolutionVector: Interpolant (without estimator data).
    """
    layout = DofLayout(mesh, formulation)
    values = np.zeros(layout.n_dofs)

    fields = formulation.exact_fields(problem)
    slices = formulation.field_slices()
    for start in range(0, mesh.n_triangles, ELEMENT_CHUNK_SIZE):
        batch = ElementBatch(mesh, np.arange(start, min(start + ELEMENT_CHUNK_SIZE, mesh.n_triangles)), degree)
        phi, _ = batch.volume_eval(formulation.degree)
        for spec in formulation.fields:
            data = fields[spec.name](batch.points)
            if spec.components == 1:
                data = data[..., None]
            coeffs = np.einsum("mq,mqi,mqc->mci", batch.weights, phi, data)
            dofs = layout.element_dofs[batch.elements][:, slices[spec.name]]
            values[dofs] = coeffs.reshape(batch.size, -1)

    traces = formulation.exact_traces(problem)
    every_edge = np.arange(mesh.n_edges)
    for name, tmap in layout.trace_maps.items():
        _fill_trace(values, mesh, tmap, traces[name], every_edge, degree)

    return SolutionVector(layout=layout, coefficients=values)


def exact_errors(mesh, solution, problem, degree=ERROR_QUADRATURE_DEGREE):
    """
    L2 errors of all discrete fields against the exact solution.

    Args:
        mesh (Mesh): Triangulation.
        solution (SolutionVector): Discrete solution.
        problem (ProblemSpec): Exact solution.
        degree (int): Quadrature degree (fixed, also near singularities).

    Returns:
        dict: Field name -> L2 error.
    """
    formulation = solution.layout.formulation
    exact = formulation.exact_fields(problem)
    squared = {f.name: 0.0 for f in formulation.fields}

    for start in range(0, mesh.n_triangles, ELEMENT_CHUNK_SIZE):
        batch = ElementBatch(mesh, np.arange(start, min(start + ELEMENT_CHUNK_SIZE, mesh.n_triangles)), degree)
        discrete = solution.evaluate_fields(batch)
        for name, values in discrete.items():
            diff = exact[name](batch.points) - values
            if diff.ndim == 3:
                diff = np.einsum("mqk,mqk->mq", diff, diff)
            else:
                diff = diff ** 2
            squared[name] += float(np.einsum("mq,mq->", batch.weights, diff))

    return {name: float(np.sqrt(value)) for name, value in squared.items()}
