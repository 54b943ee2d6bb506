"""Integration tests for full convergence studies."""

from functools import lru_cache

import numpy as np
import pytest

from adaptivity.adaptivity import AdaptiveConfig, adaptive_loop
from app import FORMULATIONS
from config import ADAPTIVE_SLOPE_MIN_DIM, ESTIMATOR_SLOPE_TOLERANCE
from helper import acceptance_failures, summarize
from problems.problems import get_problem

STUDIES = {
    ("smooth", "uniform"): AdaptiveConfig(levels=6, mode="uniform"),
    ("lshape", "uniform"): AdaptiveConfig(levels=6, mode="uniform"),
    ("lshape", "adaptive"): AdaptiveConfig(levels=60, max_dofs=3 * ADAPTIVE_SLOPE_MIN_DIM, mode="adaptive"),
}


@lru_cache(maxsize=None)
def run_study(problem_name, formulation, mode):
    meshes = []
    records = adaptive_loop(get_problem(problem_name), FORMULATIONS[formulation](0),
                            STUDIES[(problem_name, mode)],
                            on_level=lambda record, mesh, solution, eta: meshes.append(mesh))
    return records, meshes[-1]


@pytest.mark.parametrize("formulation", ["first", "second"])
class TestSmoothUniform:
    """Test uniform refinement for the smooth solution."""

    def test_error_rate(self, formulation):
        """Test that the L2 error decays like dim^(-1/2)."""
        records, _ = run_study("smooth", formulation, "uniform")
        summary = summarize(records, "smooth", "uniform")
        assert summary["slope_error"] == pytest.approx(-0.5, abs=0.1)

    def test_estimator_follows_error(self, formulation):
        """Test that the estimator and the error decay at the same rate."""
        records, _ = run_study("smooth", formulation, "uniform")
        summary = summarize(records, "smooth", "uniform")
        assert abs(summary["slope_eta"] - summary["slope_error"]) <= ESTIMATOR_SLOPE_TOLERANCE
        assert acceptance_failures(summary, "smooth") == []

    def test_errors_decrease(self, formulation):
        """Test monotone decay once the initial mesh resolves the data."""
        records, _ = run_study("smooth", formulation, "uniform")
        totals = [r.e_total for r in records][1:]
        assert all(b < a for a, b in zip(totals, totals[1:]))


@pytest.mark.parametrize("formulation", ["first", "second"])
class TestLShapeUniform:
    """Test uniform refinement for the singular solution."""

    def test_reduced_rate(self, formulation):
        """Test that the singularity limits the rate to dim^(-1/3)."""
        records, _ = run_study("lshape", formulation, "uniform")
        summary = summarize(records, "lshape", "uniform")
        assert summary["slope_error"] == pytest.approx(-1.0 / 3.0, abs=0.07)


@pytest.mark.parametrize("formulation", ["first", "second"])
class TestLShapeAdaptive:
    """Test adaptive refinement for the singular solution."""

    def test_optimal_rate_recovered(self, formulation):
        """Test that Doerfler marking restores the rate dim^(-1/2)."""
        records, _ = run_study("lshape", formulation, "adaptive")
        assert sum(r.dim >= ADAPTIVE_SLOPE_MIN_DIM for r in records) >= 2
        summary = summarize(records, "lshape", "adaptive")
        assert summary["slope_error"] == pytest.approx(-0.5, abs=0.1)
        assert acceptance_failures(summary, "lshape") == []

    def test_refinement_concentrates_at_corner(self, formulation):
        """Test that the smallest triangles include one at the reentrant corner."""
        _, mesh = run_study("lshape", formulation, "adaptive")
        diameters = mesh.diameters
        smallest = np.flatnonzero(np.isclose(diameters, diameters.min(), rtol=1e-12, atol=0.0))
        distances = np.linalg.norm(mesh.vertices[mesh.triangles[smallest]], axis=2).min(axis=1)
        assert distances.min() <= 1e-12
        assert mesh.is_conforming()

    def test_beats_uniform(self, formulation):
        """Test that adaptivity reaches a smaller error per DOF than uniform refinement."""
        adaptive, _ = run_study("lshape", formulation, "adaptive")
        uniform, _ = run_study("lshape", formulation, "uniform")
        target = uniform[-1].dim
        comparable = [r for r in adaptive if r.dim <= target]
        assert comparable[-1].e_total < uniform[-1].e_total
