"""
Adaptivity module for the grad-div DPG solver.
Contains Doerfler marking and the solve-estimate-mark-refine loop that
produces one ConvergenceRecord per level.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from config import (DEFAULT_LEVELS, DEFAULT_MAX_DOFS, DEFAULT_SOLVER, DEFAULT_THETA,
                    DEFAULT_THREADS, SOLVER_CHOICES, UNIFORM_BISECTIONS)
from dpg.dpg import GramAssemblyError, assemble_solve, estimate
from dpg.layout import DofLayout
from mesh.mesh import refine, refine_uniformly
from problems.problems import exact_errors, initial_mesh, project_boundary_data
from solver.solver import SolverError

logger = logging.getLogger(__name__)

MODES = ("uniform", "adaptive")


class RefinementAborted(RuntimeError):
    """A numerical failure stopped the refinement loop."""

    def __init__(self, level, records, cause):
        super().__init__(f"Refinement aborted at level {level}: {cause}")
        self.level = level
        self.records = records


@dataclass
class AdaptiveConfig:
    """
    Settings of the refinement loop.

    Attributes:
        theta (float): Doerfler parameter in (0, 1].
        levels (int): Maximal number of solved levels.
        max_dofs (int): Stop after the first level with dim(U_h) above this budget.
        mode (str): "uniform" or "adaptive".
        solver (str): "direct" or "cg".
        threads (int): Worker threads for local computations.
        uniform_bisections (int): NVB rounds per uniform level.
    """

    theta: float = DEFAULT_THETA
    levels: int = DEFAULT_LEVELS
    max_dofs: int = DEFAULT_MAX_DOFS
    mode: str = "adaptive"
    solver: str = DEFAULT_SOLVER
    threads: int = DEFAULT_THREADS
    uniform_bisections: int = UNIFORM_BISECTIONS

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise ValueError(f"Marking parameter theta must be in (0, 1], got {self.theta}")
        if self.levels < 1:
            raise ValueError(f"Number of levels must be >= 1, got {self.levels}")
        if self.max_dofs < 1:
            raise ValueError(f"DOF budget must be >= 1, got {self.max_dofs}")
        if self.mode not in MODES:
            raise ValueError(f"Unknown mode '{self.mode}', expected one of {MODES}")
        if self.solver not in SOLVER_CHOICES:
            raise ValueError(f"Unknown solver '{self.solver}', expected one of {SOLVER_CHOICES}")
        if self.threads < 1:
            raise ValueError(f"Thread count must be >= 1, got {self.threads}")
        if self.uniform_bisections < 1:
            raise ValueError(f"Uniform bisections must be >= 1, got {self.uniform_bisections}")


@dataclass
class ConvergenceRecord:
    """
    One refinement level.

    Attributes:
        level (int): Level index, starting at 0.
        nelems (int): Number of triangles.
        dim (int): dim(U_h), the number of free DOFs.
        e_u (float): L2 error of u.
        e_w (float): L2 error of w = -grad div u.
        eta (float): Residual estimator.
        eoc_u (float): Slope of e_u against dim from the previous level (NaN on level 0).
        eoc_eta (float): Same for eta.
        e_total (float): L2 error of all field variables together.
        errors (dict): Field name -> L2 error.
    """

    level: int
    nelems: int
    dim: int
    e_u: float
    e_w: float
    eta: float
    eoc_u: float = math.nan
    eoc_eta: float = math.nan
    e_total: float = math.nan
    errors: dict = field(default_factory=dict)

    def row(self):
        """Values in CSV column order."""
        return (self.level, self.nelems, self.dim, self.e_u, self.e_w, self.eta,
                self.eoc_u, self.eoc_eta, self.e_total)


def doerfler_mark(eta, theta):
    """
    Minimal set M with sum_{T in M} eta_T^2 >= theta^2 sum_T eta_T^2.

    Elements are taken by decreasing eta_T, ties by lower index.

    Args:
        eta (array_like): Non-negative local estimators.
        theta (float): Marking parameter in (0, 1].

    Returns:
        np.ndarray: Sorted marked indices (empty if all eta_T vanish).

    Raises:
        ValueError: If theta is outside (0, 1] or some eta_T is negative.
    """
    eta = np.asarray(eta, dtype=float)
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"Marking parameter theta must be in (0, 1], got {theta}")
    if np.any(eta < 0.0):
        raise ValueError("Local estimators must be non-negative")

    squared = eta ** 2
    total = squared.sum()
    if total == 0.0:
        return np.zeros(0, dtype=np.int64)
    if theta == 1.0:
        return np.flatnonzero(squared > 0.0)

    order = np.argsort(-squared, kind="stable")
    cumulative = np.cumsum(squared[order])
    count = int(np.searchsorted(cumulative, theta ** 2 * total * (1.0 - 1e-12))) + 1
    return np.sort(order[:count])


def eoc(previous, current):
    """Slope log(e_k / e_{k-1}) / log(dim_k / dim_{k-1}) from (dim, error) pairs."""
    (dim0, e0), (dim1, e1) = previous, current
    if dim0 <= 0 or dim1 == dim0 or e0 <= 0.0 or e1 <= 0.0:
        return math.nan
    return math.log(e1 / e0) / math.log(dim1 / dim0)


def adaptive_loop(problem, formulation, config, mesh=None, on_level=None):
    """
    Solve, estimate, mark and refine until the level or DOF budget is spent.

    Args:
        problem (ProblemSpec): Exact solution.
        formulation (Formulation): Ultraweak form.
        config (AdaptiveConfig): Loop settings.
        mesh (Mesh): Initial mesh (default: initial_mesh(problem)).
        on_level (callable): Called as on_level(record, mesh, solution, eta_T).

    Returns:
        list: ConvergenceRecord per level.

    Raises:
        RefinementAborted: On a solver or Gram failure; carries the records so far.
    """
    mesh = initial_mesh(problem) if mesh is None else mesh
    records = []

    for level in range(config.levels):
        layout = DofLayout(mesh, formulation)
        try:
            boundary = project_boundary_data(mesh, problem, layout)
            solution = assemble_solve(mesh, formulation, problem.f, boundary_values=boundary,
                                      solver=config.solver, threads=config.threads)
        except (SolverError, GramAssemblyError) as exc:
            logger.error("Level %d failed: %s", level, exc)
            raise RefinementAborted(level, records, exc) from exc

        eta_t, eta = estimate(mesh, solution)
        errors = exact_errors(mesh, solution, problem)
        first, second = formulation.error_fields
        record = ConvergenceRecord(
            level=level, nelems=mesh.n_triangles, dim=layout.dimension,
            e_u=errors[first], e_w=errors[second], eta=eta,
            e_total=float(np.sqrt(sum(e ** 2 for e in errors.values()))), errors=errors)
        if records:
            prev = records[-1]
            record.eoc_u = eoc((prev.dim, prev.e_u), (record.dim, record.e_u))
            record.eoc_eta = eoc((prev.dim, prev.eta), (record.dim, record.eta))
        records.append(record)

        logger.info("Level %d: %d elements, dim %d, e_u %.3e, e_w %.3e, eta %.3e, eoc %.3f",
                    level, record.nelems, record.dim, record.e_u, record.e_w, eta, record.eoc_u)
        if on_level is not None:
            on_level(record, mesh, solution, eta_t)

        if level == config.levels - 1 or record.dim >= config.max_dofs:
            break
        if config.mode == "uniform":
            mesh = refine_uniformly(mesh, config.uniform_bisections)
        else:
            marked = doerfler_mark(eta_t, config.theta)
            if marked.size == 0:
                logger.info("Estimator vanished, stopping at level %d", level)
                break
            mesh = refine(mesh, marked)

    return records
