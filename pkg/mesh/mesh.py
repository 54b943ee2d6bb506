"""
Mesh module for the grad-div DPG solver.
Contains the Mesh class (conforming triangulations with global edge
orientation), the two computational domains and newest-vertex bisection.
"""

import logging
from dataclasses import dataclass

import numpy as np

from config import LSHAPE_HALF_DIAGONAL, LSHAPE_SPLIT

logger = logging.getLogger(__name__)

INTERIOR_TAG = -1


def _edge_key(a, b):
    return (a, b) if a < b else (b, a)


def _readonly(array, dtype=None):
    array = np.array(array, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class ElementGeometry:
    """
    Geometry of one triangle.

    Attributes:
        origin (np.ndarray): First vertex, image of the reference origin.
        jacobian (np.ndarray): 2x2 matrix [x1 - x0, x2 - x0] (columns).
        determinant (float): det(jacobian) = 2 * area > 0.
        diameter (float): Longest edge length h_T.
        normals (np.ndarray): Outward unit normals of the local edges, shape (3, 2).
        lengths (np.ndarray): Local edge lengths, shape (3,).
    """

    origin: np.ndarray
    jacobian: np.ndarray
    determinant: float
    diameter: float
    normals: np.ndarray
    lengths: np.ndarray


class Mesh:
    """
    Conforming triangulation with globally oriented edges.

    Local edge k of triangle (t0, t1, t2) joins t[k] and t[k+1 mod 3]; local
    edge 0 is the refinement edge (newest vertex t2 opposite). Global edges
    run from the lower to the higher vertex index; the global normal is the
    tangent rotated clockwise, so a local edge has sign +1 exactly when it is
    traversed from its lower to its higher vertex.

    Attributes:
        vertices (np.ndarray): Vertex coordinates, shape (nv, 2).
        triangles (np.ndarray): Counterclockwise vertex triples, shape (nt, 3).
        edges (np.ndarray): Sorted vertex pairs, shape (ne, 2).
        element_edges (np.ndarray): Global edge of each local edge, shape (nt, 3).
        edge_signs (np.ndarray): +1/-1 orientation of each local edge, shape (nt, 3).
        edge_elements (np.ndarray): Incident triangles per edge, -1 padded, shape (ne, 2).
        edge_tags (np.ndarray): Boundary segment tag per edge, INTERIOR_TAG inside.
        parents (np.ndarray or None): Parent triangle of each triangle after refine.
    """

    def __init__(self, vertices, triangles, boundary_tags=None, parents=None):
        """
        Build the edge structure of a triangulation.

        Args:
            vertices (array_like): Coordinates, shape (nv, 2).
            triangles (array_like): Vertex triples, counterclockwise, refinement edge first.
            boundary_tags (dict): Optional {(i, j) with i < j: tag} for boundary edges.
                Untagged boundary edges get tag 0.
            parents (array_like): Optional parent index per triangle.

        Raises:
            ValueError: If a triangle is degenerate or clockwise, or the mesh is
                not conforming.
        """
        self.vertices = _readonly(vertices, float)
        self.triangles = _readonly(triangles, np.int64)
        self.parents = None if parents is None else _readonly(parents, np.int64)

        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise ValueError(f"Vertices must have shape (n, 2), got {self.vertices.shape}")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ValueError(f"Triangles must have shape (n, 3), got {self.triangles.shape}")

        corners = self.vertices[self.triangles]
        jac = np.stack([corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]], axis=2)
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        if np.any(det <= 0.0):
            bad = int(np.flatnonzero(det <= 0.0)[0])
            raise ValueError(f"Triangle {bad} is degenerate or clockwise (det = {det[bad]:.3e})")

        self.jacobians = _readonly(jac)
        self.determinants = _readonly(det)
        self.areas = _readonly(0.5 * det)
        self.centroids = _readonly(corners.mean(axis=1))

        self._build_edges(boundary_tags or {})

    def _build_edges(self, boundary_tags):
        tri = self.triangles
        local = np.stack([tri, np.roll(tri, -1, axis=1)], axis=2)  # (nt, 3, 2)
        lo = local.min(axis=2)
        hi = local.max(axis=2)
        pairs = np.stack([lo.ravel(), hi.ravel()], axis=1)
        edges, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)

        if np.any(counts > 2):
            raise ValueError("Edge shared by more than two triangles")

        element_edges = inverse.reshape(tri.shape)
        signs = np.where(local[:, :, 0] < local[:, :, 1], 1, -1)

        edge_elements = np.full((edges.shape[0], 2), -1, dtype=np.int64)
        owners = np.repeat(np.arange(tri.shape[0]), 3)
        flat = element_edges.ravel()
        order = np.argsort(flat, kind="stable")
        first = np.ones(order.shape[0], dtype=bool)
        first[1:] = flat[order][1:] != flat[order][:-1]
        edge_elements[flat[order][first], 0] = owners[order][first]
        edge_elements[flat[order][~first], 1] = owners[order][~first]

        tags = np.full(edges.shape[0], INTERIOR_TAG, dtype=np.int64)
        for e in np.flatnonzero(counts == 1):
            tags[e] = boundary_tags.get((int(edges[e, 0]), int(edges[e, 1])), 0)

        self.edges = _readonly(edges)
        self.element_edges = _readonly(element_edges)
        self.edge_signs = _readonly(signs)
        self.edge_elements = _readonly(edge_elements)
        self.edge_tags = _readonly(tags)

        tangents = self.vertices[edges[:, 1]] - self.vertices[edges[:, 0]]
        self.edge_lengths = _readonly(np.linalg.norm(tangents, axis=1))
        self.edge_normals = _readonly(
            np.column_stack([tangents[:, 1], -tangents[:, 0]]) / self.edge_lengths[:, None])

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    @property
    def n_edges(self):
        return self.edges.shape[0]

    @property
    def boundary_edges(self):
        """Boolean mask of edges with a single incident triangle."""
        return self.edge_elements[:, 1] < 0

    @property
    def boundary_vertices(self):
        """Boolean mask of vertices on the boundary."""
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.edges[self.boundary_edges].ravel()] = True
        return mask

    @property
    def refinement_edges(self):
        """Global index of the refinement edge of every triangle."""
        return self.element_edges[:, 0]

    @property
    def diameters(self):
        """Longest edge length h_T of every triangle."""
        return self.edge_lengths[self.element_edges].max(axis=1)

    def boundary_tag_map(self):
        """Return {(i, j): tag} for all boundary edges."""
        return {(int(a), int(b)): int(t)
                for (a, b), t in zip(self.edges[self.boundary_edges],
                                     self.edge_tags[self.boundary_edges])}

    def local_normals(self):
        """Outward unit normals of all local edges, shape (nt, 3, 2)."""
        return self.edge_normals[self.element_edges] * self.edge_signs[:, :, None]

    def geometry(self, t):
        """
        Geometry of a single triangle.

        Args:
            t (int): Triangle index.

        Returns:
            ElementGeometry: Affine map, diameter, outward normals and edge lengths.

        Raises:
            IndexError: If t is not a valid triangle index.
        """
        if not 0 <= t < self.n_triangles:
            raise IndexError(f"Triangle index {t} out of range [0, {self.n_triangles})")

        lengths = self.edge_lengths[self.element_edges[t]]
        return ElementGeometry(
            origin=self.vertices[self.triangles[t, 0]].copy(),
            jacobian=self.jacobians[t].copy(),
            determinant=float(self.determinants[t]),
            diameter=float(lengths.max()),
            normals=self.local_normals()[t].copy(),
            lengths=lengths.copy(),
        )

    def is_conforming(self):
        """
        Check edge incidences and orientation signs.

        Every edge must have one or two triangles, interior edges must be seen
        with opposite signs, and every boundary edge must lie on the convex
        boundary of its only element (no hanging vertex inside another edge).
        """
        interior = ~self.boundary_edges
        signs = np.zeros((self.n_edges, 2))
        for slot in range(2):
            owners = self.edge_elements[:, slot]
            valid = owners >= 0
            local = np.argmax(self.element_edges[owners[valid]] ==
                              np.flatnonzero(valid)[:, None], axis=1)
            signs[valid, slot] = self.edge_signs[owners[valid], local]
        if np.any(signs[interior, 0] * signs[interior, 1] != -1):
            return False

        # a hanging vertex would sit in the interior of a boundary edge
        used = np.zeros(self.n_vertices, dtype=bool)
        used[self.triangles.ravel()] = True
        bnd = self.edges[self.boundary_edges]
        a, b = self.vertices[bnd[:, 0]], self.vertices[bnd[:, 1]]
        for v in np.flatnonzero(used):
            p = self.vertices[v]
            cross = (b[:, 0] - a[:, 0]) * (p[1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (p[0] - a[:, 0])
            along = np.einsum("ij,ij->i", p - a, b - a) / np.einsum("ij,ij->i", b - a, b - a)
            inside = (np.abs(cross) < 1e-12) & (along > 1e-12) & (along < 1 - 1e-12)
            if np.any(inside):
                return False
        return True

    def shape_regularity(self):
        """Return max over triangles of diam(T)^2 / area(T)."""
        return float(np.max(self.diameters ** 2 / self.areas))


def make_unit_square(n):
    """
    Structured triangulation of (0,1)^2.

    Each of the n x n squares is split by its diagonal from the lower-left to
    the upper-right corner; the diagonal is the refinement edge of both halves.
    Boundary tags: 0 bottom, 1 right, 2 top, 3 left.

    Args:
        n (int): Subdivisions per direction (>= 1).

    Returns:
        Mesh: 2 n^2 triangles on (n + 1)^2 vertices.

    Raises:
        ValueError: If n < 1.
    """
    if n < 1:
        raise ValueError(f"Subdivision count must be >= 1, got {n}")

    ticks = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(ticks, ticks, indexing="xy")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def index(i, j):
        return j * (n + 1) + i

    triangles = []
    for j in range(n):
        for i in range(n):
            v00, v10 = index(i, j), index(i + 1, j)
            v01, v11 = index(i, j + 1), index(i + 1, j + 1)
            triangles.append((v11, v00, v10))
            triangles.append((v00, v11, v01))

    tags = {}
    for i in range(n):
        tags[_edge_key(index(i, 0), index(i + 1, 0))] = 0
        tags[_edge_key(index(n, i), index(n, i + 1))] = 1
        tags[_edge_key(index(i, n), index(i + 1, n))] = 2
        tags[_edge_key(index(0, i), index(0, i + 1))] = 3

    return Mesh(vertices, triangles, boundary_tags=tags)


def make_lshape(split=LSHAPE_SPLIT):
    """
    Initial triangulation of the rotated L-shape |x1| + |x2| < a minus the
    western quarter, a = sqrt(2)/4, reentrant corner at the origin.

    The domain is the union of three squares sharing the origin; each is cut
    into two triangles along one diagonal, which becomes the refinement edge
    of both halves. Boundary tags number the six straight sides of the L
    counterclockwise, starting with the reentrant side towards (-a/2, -a/2);
    tags 0 and 5 are the two sides meeting at the origin.

    Args:
        split (str): "origin" cuts along the diagonal through the origin,
            "outer" along the other one.

    Returns:
        Mesh: 6 triangles, total area 3/16.

    Raises:
        ValueError: If split is unknown.
    """
    if split not in ("origin", "outer"):
        raise ValueError(f"Unknown L-shape split '{split}'")

    a = LSHAPE_HALF_DIAGONAL
    h = 0.5 * a
    vertices = np.array([
        [0.0, 0.0],   # 0 origin
        [-h, -h],     # 1 SW
        [0.0, -a],    # 2 S
        [h, -h],      # 3 SE
        [a, 0.0],     # 4 E
        [h, h],       # 5 NE
        [0.0, a],     # 6 N
        [-h, h],      # 7 NW
    ])
    # squares (origin, p, far, q), counterclockwise
    squares = [(0, 1, 2, 3), (0, 3, 4, 5), (0, 5, 6, 7)]

    triangles = []
    for o, p, far, q in squares:
        if split == "origin":
            triangles += [(far, o, p), (o, far, q)]
        else:
            triangles += [(p, q, o), (q, p, far)]

    tags = {
        (0, 1): 0,
        (1, 2): 1,
        (2, 3): 2, (3, 4): 2,
        (4, 5): 3, (5, 6): 3,
        (6, 7): 4,
        (0, 7): 5,
    }
    return Mesh(vertices, triangles, boundary_tags=tags)


def _bisect(triangle, midpoints, out):
    a, b, c = triangle
    m = midpoints.get(_edge_key(a, b))
    if m is None:
        out.append(triangle)
        return
    # children keep the newest vertex m last; their refinement edges are (c, a) and (b, c)
    _bisect((c, a, m), midpoints, out)
    _bisect((b, c, m), midpoints, out)


def refine(mesh, marked):
    """
    Newest-vertex bisection with closure.

    Marked triangles are bisected at their refinement edge; every triangle
    with a bisected edge then has its own refinement edge bisected too,
    until no hanging vertex remains.

    Args:
        mesh (Mesh): Mesh to refine (unchanged).
        marked (iterable): Triangle indices to refine.

    Returns:
        Mesh: Refined mesh with `parents` set (identical mesh if nothing is marked).

    Raises:
        ValueError: If a marked index is out of range.
    """
    marked = np.unique(np.asarray(list(marked), dtype=np.int64))
    if marked.size and (marked[0] < 0 or marked[-1] >= mesh.n_triangles):
        raise ValueError(f"Marked triangles out of range [0, {mesh.n_triangles})")

    if marked.size == 0:
        return Mesh(mesh.vertices, mesh.triangles, mesh.boundary_tag_map(),
                    parents=np.arange(mesh.n_triangles))

    flagged = np.zeros(mesh.n_edges, dtype=bool)
    flagged[mesh.refinement_edges[marked]] = True
    while True:
        touched = flagged[mesh.element_edges].any(axis=1)
        pending = touched & ~flagged[mesh.refinement_edges]
        if not pending.any():
            break
        flagged[mesh.refinement_edges[pending]] = True

    split = np.flatnonzero(flagged)
    ends = mesh.edges[split]
    new_vertices = np.vstack([mesh.vertices, 0.5 * (mesh.vertices[ends[:, 0]] + mesh.vertices[ends[:, 1]])])
    midpoints = {(int(a), int(b)): mesh.n_vertices + k for k, (a, b) in enumerate(ends)}

    tags = mesh.boundary_tag_map()
    for (a, b), m in midpoints.items():
        tag = tags.pop((a, b), None)
        if tag is not None:
            tags[_edge_key(a, m)] = tag
            tags[_edge_key(m, b)] = tag

    triangles = []
    parents = []
    for t, tri in enumerate(mesh.triangles.tolist()):
        children = []
        _bisect(tuple(tri), midpoints, children)
        triangles.extend(children)
        parents.extend([t] * len(children))

    logger.debug("NVB: %d marked, %d edges bisected, %d -> %d triangles",
                 marked.size, split.size, mesh.n_triangles, len(triangles))
    return Mesh(new_vertices, triangles, boundary_tags=tags, parents=parents)


def refine_uniformly(mesh, rounds=1):
    """Mark every triangle `rounds` times in a row."""
    for _ in range(rounds):
        mesh = refine(mesh, range(mesh.n_triangles))
    return mesh
