"""
Helper functions for the grad-div DPG solver.
Contains convergence tables, slope fits, acceptance checks, VTK and DOF
exports and optional matplotlib figures.
"""

import csv
import logging
import math
from pathlib import Path

import numpy as np

from config import (ADAPTIVE_SLOPE_MIN_DIM, CSV_HEADER, ESTIMATOR_SLOPE_TOLERANCE, EXPECTED_SLOPES,
                    SLOPE_FIT_LEVELS, SLOPE_TOLERANCES)

logger = logging.getLogger(__name__)


def _number(value):
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_convergence_csv(path, records):
    """
    Write one row per level with the columns of CSV_HEADER.

    Floats are written with repr(), the shortest round-tripping form, so the
    file is byte-identical across runs with identical results.

    Args:
        path (str or Path): Output file (parent directories are created).
        records (list): ConvergenceRecord objects.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for record in records:
            writer.writerow([_number(v) for v in record.row()])


def read_convergence_csv(path):
    """Read a convergence table back into a dict of column name -> np.ndarray."""
    with Path(path).open(newline="") as handle:
        rows = list(csv.reader(handle))
    header, body = rows[0], rows[1:]
    return {name: np.array([float(r[i]) for r in body]) for i, name in enumerate(header)}


def fit_slope(dims, values, last=SLOPE_FIT_LEVELS):
    """
    Least-squares slope of log(values) against log(dims) over the last levels.

    Args:
        dims (array_like): dim(U_h) per level.
        values (array_like): Errors or estimators per level.
        last (int): Number of trailing levels used.

    Returns:
        float: Fitted slope, NaN with fewer than two usable levels.
    """
    dims = np.asarray(dims, dtype=float)[-last:]
    values = np.asarray(values, dtype=float)[-last:]
    usable = (dims > 0) & (values > 0)
    if np.count_nonzero(usable) < 2:
        return math.nan
    return float(np.polyfit(np.log(dims[usable]), np.log(values[usable]), 1)[0])


def summarize(records, problem_name, mode):
    """
    Fitted slopes of a run.

    For adaptive L-shape runs only levels with dim >= ADAPTIVE_SLOPE_MIN_DIM
    enter the fit when at least two such levels exist.

    Returns:
        dict: slope_error, slope_eta, expected, tolerance.
    """
    dims = [r.dim for r in records]
    totals = [r.e_total for r in records]
    etas = [r.eta for r in records]
    last = SLOPE_FIT_LEVELS
    if (problem_name, mode) == ("lshape", "adaptive"):
        large = sum(d >= ADAPTIVE_SLOPE_MIN_DIM for d in dims)
        if large >= 2:
            last = large
        else:
            logger.warning("Fewer than two levels with dim >= %d; fitting the last %d levels",
                           ADAPTIVE_SLOPE_MIN_DIM, last)
    return {
        "slope_error": fit_slope(dims, totals, last),
        "slope_eta": fit_slope(dims, etas, last),
        "expected": EXPECTED_SLOPES.get((problem_name, mode), math.nan),
        "tolerance": SLOPE_TOLERANCES.get((problem_name, mode), math.nan),
    }


def acceptance_failures(summary, problem_name):
    """
    Messages for every violated acceptance threshold (empty if all pass).

    Args:
        summary (dict): Output of summarize().
        problem_name (str): "smooth" or "lshape".

    Returns:
        list: Human-readable failure messages.
    """
    failures = []
    slope, expected, tol = summary["slope_error"], summary["expected"], summary["tolerance"]
    if math.isnan(slope) or abs(slope - expected) > tol:
        failures.append(f"error slope {slope:.3f} outside {expected:.3f} +/- {tol:.2f}")
    if problem_name == "smooth":
        gap = abs(summary["slope_eta"] - slope)
        if math.isnan(gap) or gap > ESTIMATOR_SLOPE_TOLERANCE:
            failures.append(f"estimator slope {summary['slope_eta']:.3f} differs from error slope "
                            f"{slope:.3f} by more than {ESTIMATOR_SLOPE_TOLERANCE}")
    return failures


def write_vtk(path, mesh, cell_data=None, point_data=None, title="grad-div DPG"):
    """
    Write the triangulation in VTK legacy ASCII format.

    Args:
        path (str or Path): Output file.
        mesh (Mesh): Triangulation.
        cell_data (dict): Name -> (nt,) scalars or (nt, 2) vectors.
        point_data (dict): Name -> (nv,) scalars or (nv, 2) vectors.
        title (str): Header line.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# vtk DataFile Version 2.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_vertices} double"]
    lines += [f"{_number(x)} {_number(y)} 0.0" for x, y in mesh.vertices]
    lines.append(f"CELLS {mesh.n_triangles} {4 * mesh.n_triangles}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {mesh.n_triangles}")
    lines += ["5"] * mesh.n_triangles

    for section, count, data in (("CELL_DATA", mesh.n_triangles, cell_data),
                                 ("POINT_DATA", mesh.n_vertices, point_data)):
        if not data:
            continue
        lines.append(f"{section} {count}")
        for name, values in data.items():
            values = np.asarray(values, dtype=float)
            if values.shape[0] != count:
                raise ValueError(f"{section} '{name}' has {values.shape[0]} entries, expected {count}")
            if values.ndim == 1:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [_number(v) for v in values]
            else:
                lines.append(f"VECTORS {name} double")
                lines += [f"{_number(x)} {_number(y)} 0.0" for x, y in values]

    path.write_text("\n".join(lines) + "\n")


def write_solution_vtk(path, mesh, solution, eta):
    """Fields at centroids, eta_T as cell data and continuous-trace vertex values as point data."""
    cells = dict(solution.centroid_values())
    cells["eta"] = eta
    write_vtk(path, mesh, cell_data=cells, point_data=solution.vertex_values())


def write_dof_csv(path, solution):
    """Dump the coefficient vector as (index, variable, value) rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = solution.layout.dof_names()
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(("index", "variable", "value"))
        for index, (name, value) in enumerate(zip(names, solution.coefficients)):
            writer.writerow((index, name, _number(value)))


def plot_convergence(records, path, title=""):
    """Log-log plot of e_u, e_w, e_total and eta against dim(U_h)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    dims = [r.dim for r in records]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.loglog(dims, [r.e_u for r in records], "o-", label="e_u")
    ax.loglog(dims, [r.e_w for r in records], "s-", label="e_w")
    ax.loglog(dims, [r.e_total for r in records], "^-", label="total")
    ax.loglog(dims, [r.eta for r in records], "d--", label="eta")
    reference = np.array(dims, dtype=float)
    if reference.size:
        ax.loglog(reference, records[0].eta * (reference / reference[0]) ** -0.5, "k:", label="dim^-1/2")
    ax.set_xlabel("dim(U_h)")
    ax.set_title(title)
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_mesh(mesh, path, title=""):
    """Draw the triangulation."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 5))
    ax.triplot(mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.triangles, linewidth=0.4, color="black")
    ax.set_aspect("equal")
    ax.set_title(title)
    ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
