"""
Grad-div DPG - command-line application

Runs convergence studies of the first- and second-order ultraweak DPG
discretizations of (grad div)^2 u + u = f on the unit square (smooth
solution) and the L-shape (singular solution), with uniform or adaptive
refinement, and checks the reference Fortin system.

Usage:
    python app.py run --problem smooth --formulation first --p 0 --mode uniform --levels 6
    python app.py run --problem lshape --formulation second --mode adaptive --theta 0.75 --check
    python app.py fortin
"""

import argparse
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from adaptivity.adaptivity import MODES, AdaptiveConfig, RefinementAborted, adaptive_loop
from config import (DEFAULT_LEVELS, DEFAULT_MAX_DOFS, DEFAULT_OUTPUT_DIR, DEFAULT_SOLVER,
                    DEFAULT_SUBDIVISIONS, DEFAULT_THETA, DEFAULT_THREADS, FORTIN_RANDOM_SAMPLES,
                    LSHAPE_SPLIT, OUTPUT_DIR_ENV, SOLVER_CHOICES)
from dpg.dpg import GramAssemblyError, assemble
from dpg.layout import DofLayout
from forms.first_order import FirstOrderFormulation
from forms.second_order import SecondOrderFormulation
from fortin.fortin import FortinSingularError, build_and_check
from helper import (acceptance_failures, plot_convergence, plot_mesh, summarize,
                    write_convergence_csv, write_dof_csv, write_solution_vtk)
from problems.problems import PROBLEMS, get_problem, initial_mesh, project_boundary_data
from solver.solver import SolverError, export_matrix_market

logger = logging.getLogger(__name__)

FORMULATIONS = {"first": FirstOrderFormulation, "second": SecondOrderFormulation}

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


@dataclass
class RunConfig:
    """
    Settings of one convergence study.

    Attributes:
        problem (str): "smooth" or "lshape".
        formulation (str): "first" or "second".
        degree (int): Polynomial degree p (the second-order form requires 0).
        mode (str): "uniform" or "adaptive".
        theta (float): Doerfler parameter (used in adaptive mode).
        levels (int): Maximal number of levels.
        max_dofs (int): DOF budget.
        output_dir (str): Output directory (None: environment variable or default).
        vtk (bool): Write a VTK file per level.
        dofs (bool): Write the DOF vector of every level as CSV.
        plot (bool): Write PNG figures.
        export_matrix (bool): Write the final constrained matrix in Matrix Market format.
        solver (str): "direct" or "cg".
        threads (int): Worker threads.
        check (bool): Compare fitted slopes with the acceptance thresholds.
        subdivisions (int): Initial unit-square subdivisions.
        split (str): L-shape initial split.
    """

    problem: str = "smooth"
    formulation: str = "first"
    degree: int = 0
    mode: str = "uniform"
    theta: float = DEFAULT_THETA
    levels: int = DEFAULT_LEVELS
    max_dofs: int = DEFAULT_MAX_DOFS
    output_dir: str = None
    vtk: bool = False
    dofs: bool = False
    plot: bool = False
    export_matrix: bool = False
    solver: str = DEFAULT_SOLVER
    threads: int = DEFAULT_THREADS
    check: bool = False
    subdivisions: int = DEFAULT_SUBDIVISIONS
    split: str = LSHAPE_SPLIT

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"Unknown problem '{self.problem}', expected one of {sorted(PROBLEMS)}")
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"Unknown formulation '{self.formulation}', expected one of {sorted(FORMULATIONS)}")
        if self.formulation == "second" and self.degree != 0:
            raise ValueError(f"The second-order formulation is lowest order only (p = 0), got p = {self.degree}")
        if self.subdivisions < 1:
            raise ValueError(f"Subdivisions must be >= 1, got {self.subdivisions}")
        # range checks of degree, theta, levels, budget, solver and threads
        FORMULATIONS[self.formulation](self.degree)
        self.adaptive_config()

    def adaptive_config(self):
        return AdaptiveConfig(theta=self.theta, levels=self.levels, max_dofs=self.max_dofs,
                              mode=self.mode, solver=self.solver, threads=self.threads)

    def resolved_output_dir(self):
        return Path(self.output_dir or os.environ.get(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR)

    @property
    def stem(self):
        return f"{self.problem}_{self.formulation}_p{self.degree}_{self.mode}"


def run(config):
    """
    Run a convergence study and write its artifacts.

    Args:
        config (RunConfig): Settings.

    Returns:
        int: Exit status (0 ok, 1 failed check, 3 numerical failure).
    """
    problem = get_problem(config.problem)
    formulation = FORMULATIONS[config.formulation](config.degree)
    out = config.resolved_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{config.stem}.csv"
    meshes = []

    def on_level(record, mesh, solution, eta):
        meshes[:] = [mesh]
        if config.vtk:
            write_solution_vtk(out / f"{config.stem}_level{record.level}.vtk", mesh, solution, eta)
        if config.dofs:
            write_dof_csv(out / f"{config.stem}_level{record.level}_dofs.csv", solution)

    mesh = initial_mesh(problem, subdivisions=config.subdivisions, split=config.split)
    try:
        records = adaptive_loop(problem, formulation, config.adaptive_config(), mesh=mesh, on_level=on_level)
    except RefinementAborted as exc:
        write_convergence_csv(csv_path, exc.records)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    write_convergence_csv(csv_path, records)
    summary = summarize(records, config.problem, config.mode)
    print(f"{config.stem}: {len(records)} levels, final dim {records[-1].dim}")
    print(f"  error slope     {summary['slope_error']:.4f} (expected {summary['expected']:.4f})")
    print(f"  estimator slope {summary['slope_eta']:.4f}")
    print(f"  table           {csv_path}")

    if config.plot:
        plot_convergence(records, out / f"{config.stem}.png", title=config.stem)
        plot_mesh(meshes[0], out / f"{config.stem}_mesh.png", title=f"{meshes[0].n_triangles} triangles")

    if config.export_matrix:
        final = meshes[0]
        boundary = project_boundary_data(final, problem, DofLayout(final, formulation))
        system = assemble(final, formulation, problem.f, boundary_values=boundary, threads=config.threads)
        matrix, _, _ = system.reduced()
        export_matrix_market(out / f"{config.stem}.mtx", matrix)

    if config.check:
        failures = acceptance_failures(summary, config.problem)
        for failure in failures:
            print(f"  check failed: {failure}", file=sys.stderr)
        if failures:
            return EXIT_CHECK_FAILED
    return EXIT_OK


def run_fortin(samples=FORTIN_RANDOM_SAMPLES, seed=0):
    """Print the reference Fortin report."""
    report = build_and_check(samples=samples, seed=seed)
    print(report.format())
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(description="Ultraweak DPG methods for (grad div)^2 u + u = f")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="log INFO (-v) or DEBUG (-vv) messages")
    commands = parser.add_subparsers(dest="command", required=True)

    study = commands.add_parser("run", help="convergence study")
    study.add_argument("--problem", choices=sorted(PROBLEMS), default="smooth")
    study.add_argument("--formulation", choices=sorted(FORMULATIONS), default="first")
    study.add_argument("--p", dest="degree", type=int, default=0, help="polynomial degree (first-order form)")
    study.add_argument("--mode", choices=MODES, default="uniform")
    study.add_argument("--theta", type=float, default=DEFAULT_THETA, help="Doerfler parameter")
    study.add_argument("--levels", type=int, default=DEFAULT_LEVELS)
    study.add_argument("--max-dofs", type=int, default=DEFAULT_MAX_DOFS)
    study.add_argument("--subdivisions", type=int, default=DEFAULT_SUBDIVISIONS,
                       help="initial unit-square subdivisions")
    study.add_argument("--split", choices=("origin", "outer"), default=LSHAPE_SPLIT,
                       help="diagonal of the initial L-shape squares")
    study.add_argument("--solver", choices=SOLVER_CHOICES, default=DEFAULT_SOLVER)
    study.add_argument("--threads", type=int, default=DEFAULT_THREADS)
    study.add_argument("--output-dir", default=None, help=f"default: ${OUTPUT_DIR_ENV} or '{DEFAULT_OUTPUT_DIR}'")
    study.add_argument("--vtk", action="store_true", help="write a VTK file per level")
    study.add_argument("--dofs", action="store_true", help="write the DOF vector per level")
    study.add_argument("--plot", action="store_true", help="write PNG figures")
    study.add_argument("--export-matrix", action="store_true", help="write the final matrix (Matrix Market)")
    study.add_argument("--check", action="store_true", help="fail if the fitted slope misses its target")

    fortin = commands.add_parser("fortin", help="check the reference Fortin system")
    fortin.add_argument("--samples", type=int, default=FORTIN_RANDOM_SAMPLES)
    fortin.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")

    try:
        if args.command == "fortin":
            return run_fortin(samples=args.samples, seed=args.seed)
        config = RunConfig(
            problem=args.problem, formulation=args.formulation, degree=args.degree, mode=args.mode,
            theta=args.theta, levels=args.levels, max_dofs=args.max_dofs, output_dir=args.output_dir,
            vtk=args.vtk, dofs=args.dofs, plot=args.plot, export_matrix=args.export_matrix,
            solver=args.solver, threads=args.threads, check=args.check,
            subdivisions=args.subdivisions, split=args.split)
        return run(config)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, GramAssemblyError, FortinSingularError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
