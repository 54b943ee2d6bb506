"""Unit tests for helper functions."""

import math

import numpy as np
import pytest

from adaptivity.adaptivity import ConvergenceRecord
from config import CSV_HEADER
from dpg.dpg import assemble_solve, estimate
from forms.first_order import FirstOrderFormulation
from helper import (acceptance_failures, fit_slope, plot_convergence, plot_mesh, read_convergence_csv,
                    summarize, write_convergence_csv, write_dof_csv, write_solution_vtk, write_vtk)
from mesh.mesh import make_unit_square
from problems.problems import get_problem


def power_law_records(slope, dims=(100, 400, 1600, 6400), eta_factor=2.0):
    return [ConvergenceRecord(level=k, nelems=d // 10, dim=d, e_u=d ** slope, e_w=0.0,
                              eta=eta_factor * d ** slope, e_total=d ** slope)
            for k, d in enumerate(dims)]


class TestConvergenceCsv:
    """Test the convergence table."""

    def test_header_and_rows(self, tmp_path):
        path = tmp_path / "out" / "table.csv"
        write_convergence_csv(path, power_law_records(-0.5))
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(CSV_HEADER)
        assert len(lines) == 5
        assert lines[1].split(",")[6] == "nan"

    def test_values_read_back_exactly(self, tmp_path):
        records = power_law_records(-1.0 / 3.0)
        path = tmp_path / "table.csv"
        write_convergence_csv(path, records)
        table = read_convergence_csv(path)
        assert list(table["dim"]) == [100, 400, 1600, 6400]
        assert list(table["e_total"]) == [r.e_total for r in records]

    def test_identical_records_identical_bytes(self, tmp_path):
        write_convergence_csv(tmp_path / "a.csv", power_law_records(-0.5))
        write_convergence_csv(tmp_path / "b.csv", power_law_records(-0.5))
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


class TestSlopes:
    """Test slope fits and acceptance checks."""

    def test_exact_power_law(self):
        dims = [10, 100, 1000, 10000]
        assert fit_slope(dims, [d ** -0.5 for d in dims]) == pytest.approx(-0.5)

    def test_uses_last_levels(self):
        dims = [10, 100, 1000, 10000]
        values = [1.0, 1.0, 1e-1, 1e-2]
        assert fit_slope(dims, values, last=2) == pytest.approx(-1.0)

    def test_too_few_levels(self):
        assert math.isnan(fit_slope([10], [1.0]))

    def test_summary_and_acceptance(self):
        summary = summarize(power_law_records(-0.5), "smooth", "uniform")
        assert summary["slope_error"] == pytest.approx(-0.5)
        assert summary["slope_eta"] == pytest.approx(-0.5)
        assert acceptance_failures(summary, "smooth") == []

    def test_failed_acceptance(self):
        summary = summarize(power_law_records(-0.25), "smooth", "uniform")
        assert len(acceptance_failures(summary, "smooth")) == 1

    def test_adaptive_lshape_uses_large_levels(self):
        records = power_law_records(-0.5, dims=(100, 1000, 10000, 40000))
        records[1].e_total = 1e3
        summary = summarize(records, "lshape", "adaptive")
        assert summary["slope_error"] == pytest.approx(-0.5)
        assert acceptance_failures(summary, "lshape") == []


class TestExports:
    """Test VTK, DOF and figure output."""

    def test_vtk_structure(self, tmp_path):
        mesh = make_unit_square(1)
        path = tmp_path / "mesh.vtk"
        write_vtk(path, mesh, cell_data={"eta": [0.5, 1.5], "u": np.ones((2, 2))},
                  point_data={"p": np.arange(4.0)})
        text = path.read_text()
        assert text.startswith("# vtk DataFile Version 2.0")
        assert "POINTS 4 double" in text
        assert "CELLS 2 8" in text
        assert "CELL_TYPES 2" in text
        assert "CELL_DATA 2" in text
        assert "VECTORS u double" in text
        assert "POINT_DATA 4" in text

    def test_vtk_rejects_wrong_length(self, tmp_path):
        with pytest.raises(ValueError):
            write_vtk(tmp_path / "bad.vtk", make_unit_square(1), cell_data={"eta": [1.0]})

    def test_solution_exports(self, tmp_path):
        mesh = make_unit_square(2)
        solution = assemble_solve(mesh, FirstOrderFormulation(0), get_problem("smooth").f)
        eta_t, _ = estimate(mesh, solution)

        write_solution_vtk(tmp_path / "solution.vtk", mesh, solution, eta_t)
        text = (tmp_path / "solution.vtk").read_text()
        for name in ("u1", "u2", "u3", "u4", "eta", "hat_u2", "hat_u4"):
            assert f" {name} double" in text

        write_dof_csv(tmp_path / "dofs.csv", solution)
        lines = (tmp_path / "dofs.csv").read_text().splitlines()
        assert lines[0] == "index,variable,value"
        assert len(lines) == solution.layout.n_dofs + 1
        assert lines[1].split(",")[1] == "u1"

    def test_figures(self, tmp_path):
        plot_convergence(power_law_records(-0.5), tmp_path / "rates.png", title="rates")
        plot_mesh(make_unit_square(2), tmp_path / "mesh.png")
        assert (tmp_path / "rates.png").stat().st_size > 0
        assert (tmp_path / "mesh.png").stat().st_size > 0
