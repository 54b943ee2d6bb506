"""Unit tests for triangulations and newest-vertex bisection."""

import numpy as np
import pytest

from config import LSHAPE_HALF_DIAGONAL, LSHAPE_REENTRANT_TAGS
from mesh.mesh import INTERIOR_TAG, Mesh, make_lshape, make_unit_square, refine, refine_uniformly


def reference_mesh():
    return Mesh([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]])


class TestUnitSquare:
    """Test the structured unit-square meshes."""

    def test_single_square_counts(self):
        mesh = make_unit_square(1)
        assert mesh.n_triangles == 2
        assert mesh.n_vertices == 4
        assert mesh.n_edges == 5

    def test_two_by_two_counts(self):
        mesh = make_unit_square(2)
        assert mesh.n_triangles == 8
        assert mesh.n_vertices == 9
        assert mesh.n_edges == 16

    def test_total_area(self):
        assert make_unit_square(4).areas.sum() == pytest.approx(1.0, rel=1e-14)

    def test_boundary_tags(self):
        mesh = make_unit_square(3)
        boundary = mesh.boundary_edges
        assert np.all(mesh.edge_tags[boundary] >= 0)
        assert np.all(mesh.edge_tags[~boundary] == INTERIOR_TAG)
        mid = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
        assert np.allclose(mid[mesh.edge_tags == 0, 1], 0.0)
        assert np.allclose(mid[mesh.edge_tags == 1, 0], 1.0)
        assert np.allclose(mid[mesh.edge_tags == 2, 1], 1.0)
        assert np.allclose(mid[mesh.edge_tags == 3, 0], 0.0)

    def test_invalid_subdivisions(self):
        with pytest.raises(ValueError):
            make_unit_square(0)

    def test_clockwise_triangle_rejected(self):
        with pytest.raises(ValueError):
            Mesh([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 2, 1]])


class TestLShape:
    """Test the rotated L-shape initial mesh."""

    @pytest.mark.parametrize("split", ["origin", "outer"])
    def test_area_and_size(self, split):
        mesh = make_lshape(split)
        assert mesh.n_triangles == 6
        assert mesh.areas.sum() == pytest.approx(3.0 / 16.0, rel=1e-14)
        assert mesh.is_conforming()

    def test_origin_is_a_vertex(self):
        mesh = make_lshape()
        assert np.any(np.all(mesh.vertices == 0.0, axis=1))

    def test_boundary_lies_on_sides(self):
        mesh = make_lshape()
        a = LSHAPE_HALF_DIAGONAL
        for e in np.flatnonzero(mesh.boundary_edges):
            p, q = mesh.vertices[mesh.edges[e]]
            tag = mesh.edge_tags[e]
            if tag in LSHAPE_REENTRANT_TAGS:
                # the two sides through the origin lie on |x| = |y| with x <= 0
                assert abs(abs(p[0]) - abs(p[1])) < 1e-14 and abs(abs(q[0]) - abs(q[1])) < 1e-14
                assert p[0] <= 0.0 and q[0] <= 0.0
            else:
                assert np.abs(p).sum() == pytest.approx(a)
                assert np.abs(q).sum() == pytest.approx(a)

    def test_unknown_split(self):
        with pytest.raises(ValueError):
            make_lshape("diagonal")


class TestGeometry:
    """Test element geometry and edge orientation."""

    def test_reference_triangle(self):
        geo = reference_mesh().geometry(0)
        assert geo.determinant == pytest.approx(1.0)
        assert geo.diameter == pytest.approx(np.sqrt(2.0))
        assert geo.lengths == pytest.approx([1.0, np.sqrt(2.0), 1.0])
        expected = np.array([[0.0, -1.0], [1.0, 1.0], [-1.0, 0.0]])
        expected[1] /= np.sqrt(2.0)
        assert np.allclose(geo.normals, expected)

    def test_closed_boundary(self):
        mesh = make_lshape()
        for t in range(mesh.n_triangles):
            geo = mesh.geometry(t)
            assert np.allclose(geo.lengths @ geo.normals, 0.0, atol=1e-15)

    def test_invalid_index(self):
        with pytest.raises(IndexError):
            reference_mesh().geometry(1)

    def test_interior_edges_have_opposite_signs(self):
        mesh = make_unit_square(3)
        for e in np.flatnonzero(~mesh.boundary_edges):
            signs = []
            for t in mesh.edge_elements[e]:
                local = int(np.flatnonzero(mesh.element_edges[t] == e)[0])
                signs.append(mesh.edge_signs[t, local])
            assert signs[0] * signs[1] == -1

    def test_outward_normals_point_away_from_centroid(self):
        mesh = refine_uniformly(make_lshape(), 2)
        normals = mesh.local_normals()
        for t in range(mesh.n_triangles):
            corners = mesh.vertices[mesh.triangles[t]]
            for k in range(3):
                mid = 0.5 * (corners[k] + corners[(k + 1) % 3])
                assert normals[t, k] @ (mid - mesh.centroids[t]) > 0.0


class TestRefine:
    """Test newest-vertex bisection."""

    def test_empty_marking_is_identity(self):
        mesh = make_unit_square(2)
        refined = refine(mesh, [])
        assert np.array_equal(refined.triangles, mesh.triangles)
        assert np.array_equal(refined.vertices, mesh.vertices)

    def test_single_square_all_marked(self):
        refined = refine(make_unit_square(1), [0, 1])
        assert refined.n_triangles == 4
        assert refined.is_conforming()

    def test_closure_refines_neighbour(self):
        refined = refine(make_unit_square(1), [0])
        # both halves share the refinement edge, so both are bisected
        assert refined.n_triangles == 4
        assert refined.is_conforming()

    @pytest.mark.parametrize("rounds", [1, 2, 3, 4])
    def test_uniform_rounds(self, rounds):
        refined = refine_uniformly(make_unit_square(1), rounds)
        assert refined.n_triangles == 2 * 2 ** rounds
        assert refined.is_conforming()
        assert refined.areas.sum() == pytest.approx(1.0, rel=1e-13)

    def test_parents_nest_areas(self):
        mesh = make_lshape()
        refined = refine(mesh, [0, 3])
        sums = np.bincount(refined.parents, weights=refined.areas, minlength=mesh.n_triangles)
        assert np.allclose(sums, mesh.areas, rtol=1e-13)

    def test_repeated_local_refinement_stays_conforming(self):
        mesh = make_lshape()
        for _ in range(8):
            near = np.argmin(np.linalg.norm(mesh.centroids, axis=1))
            mesh = refine(mesh, [near])
            assert mesh.is_conforming()
        assert mesh.areas.sum() == pytest.approx(3.0 / 16.0, rel=1e-13)

    def test_shape_regularity_bounded(self):
        mesh = make_lshape()
        initial = mesh.shape_regularity()
        for _ in range(10):
            near = np.argsort(np.linalg.norm(mesh.centroids, axis=1))[:3]
            mesh = refine(mesh, near)
        assert mesh.shape_regularity() <= 2.0 * initial

    def test_boundary_tags_inherited(self):
        mesh = refine_uniformly(make_lshape(), 3)
        assert np.all(mesh.edge_tags[mesh.boundary_edges] >= 0)
        reentrant = np.isin(mesh.edge_tags, list(LSHAPE_REENTRANT_TAGS))
        ends = mesh.vertices[mesh.edges[reentrant]]
        assert np.allclose(np.abs(ends[..., 0]), np.abs(ends[..., 1]), atol=1e-15)

    def test_out_of_range_marking(self):
        with pytest.raises(ValueError):
            refine(make_unit_square(1), [2])
