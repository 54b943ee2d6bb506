"""Integration tests for the command-line application."""

import pytest

import adaptivity.adaptivity as adaptivity

from app import EXIT_CHECK_FAILED, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, RunConfig, main
from config import CSV_HEADER, OUTPUT_DIR_ENV
from helper import read_convergence_csv
from solver.solver import SolverError

SMALL_RUN = ["run", "--problem", "smooth", "--formulation", "first", "--p", "0", "--mode", "uniform",
             "--levels", "2"]


class TestRunConfig:
    """Test validation of run settings."""

    def test_defaults(self):
        config = RunConfig()
        assert config.stem == "smooth_first_p0_uniform"

    @pytest.mark.parametrize("kwargs", [
        {"problem": "disk"}, {"formulation": "third"}, {"formulation": "second", "degree": 1},
        {"degree": 4}, {"theta": 0.0}, {"levels": 0}, {"threads": 0}, {"solver": "qr"},
        {"mode": "random"}, {"subdivisions": 0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            RunConfig(**kwargs)

    def test_output_dir_from_environment(self, monkeypatch, tmp_path):
        monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "env"))
        assert RunConfig().resolved_output_dir() == tmp_path / "env"
        assert RunConfig(output_dir=str(tmp_path / "flag")).resolved_output_dir() == tmp_path / "flag"


class TestRunCommand:
    """Test the run subcommand end to end."""

    def test_writes_table(self, tmp_path, capsys):
        """Test that a small study writes its convergence table."""
        status = main(SMALL_RUN + ["--output-dir", str(tmp_path)])
        assert status == EXIT_OK
        path = tmp_path / "smooth_first_p0_uniform.csv"
        table = read_convergence_csv(path)
        assert tuple(table) == CSV_HEADER
        assert list(table["nelems"]) == [8, 32]
        assert "error slope" in capsys.readouterr().out

    def test_environment_output_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path))
        assert main(SMALL_RUN) == EXIT_OK
        assert (tmp_path / "smooth_first_p0_uniform.csv").exists()

    def test_repeated_runs_are_byte_identical(self, tmp_path):
        """Test that identical settings give identical tables for any thread count."""
        main(SMALL_RUN + ["--output-dir", str(tmp_path / "a")])
        main(SMALL_RUN + ["--output-dir", str(tmp_path / "b")])
        main(SMALL_RUN + ["--output-dir", str(tmp_path / "c"), "--threads", "3"])
        name = "smooth_first_p0_uniform.csv"
        first = (tmp_path / "a" / name).read_bytes()
        assert (tmp_path / "b" / name).read_bytes() == first
        assert (tmp_path / "c" / name).read_bytes() == first

    def test_optional_artifacts(self, tmp_path):
        args = ["run", "--problem", "lshape", "--formulation", "second", "--mode", "adaptive",
                "--levels", "2", "--output-dir", str(tmp_path), "--vtk", "--dofs", "--plot", "--export-matrix"]
        assert main(args) == EXIT_OK
        stem = "lshape_second_p0_adaptive"
        for name in (f"{stem}.csv", f"{stem}_level0.vtk", f"{stem}_level1.vtk", f"{stem}_level1_dofs.csv",
                     f"{stem}.png", f"{stem}_mesh.png", f"{stem}.mtx"):
            assert (tmp_path / name).exists(), name

    def test_failed_check(self, tmp_path):
        # a single level has no slope to check
        args = ["run", "--problem", "lshape", "--mode", "uniform", "--levels", "1",
                "--output-dir", str(tmp_path), "--check"]
        assert main(args) == EXIT_CHECK_FAILED

    def test_invalid_arguments(self, tmp_path, capsys):
        assert main(["run", "--formulation", "second", "--p", "1", "--output-dir", str(tmp_path)]) == EXIT_USAGE
        assert "error" in capsys.readouterr().err
        assert main(["run", "--theta", "2", "--output-dir", str(tmp_path)]) == EXIT_USAGE

    def test_unknown_choice_exits_with_usage(self):
        with pytest.raises(SystemExit) as info:
            main(["run", "--problem", "disk"])
        assert info.value.code == EXIT_USAGE

    def test_numerical_failure(self, tmp_path, monkeypatch):

        def failing(*args, **kwargs):
            raise SolverError("breakdown")

        monkeypatch.setattr(adaptivity, "assemble_solve", failing)
        assert main(SMALL_RUN + ["--output-dir", str(tmp_path)]) == EXIT_NUMERICAL
        assert (tmp_path / "smooth_first_p0_uniform.csv").exists()


class TestFortinCommand:
    """Test the fortin subcommand."""

    def test_report(self, capsys):
        assert main(["fortin", "--samples", "5"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "reference Fortin matrix: 28 x 28" in out
        assert "condition" in out
