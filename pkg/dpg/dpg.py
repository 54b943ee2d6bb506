"""
DPG core module for the grad-div DPG solver.
Contains local optimal-test solves (Schur complements B^T G^{-1} B), global
assembly with essential trace conditions, the residual estimator and a
monolithic dense assembly used as a reference.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from config import DEFAULT_SOLVER, DEFAULT_THREADS, ELEMENT_CHUNK_SIZE
from dpg.layout import DofLayout, SolutionVector
from forms.elements import ElementBatch
from solver.solver import SolverError, SparseSymmetric, dense_cholesky, forward_substitute, sparse_spd_solve

logger = logging.getLogger(__name__)


class GramAssemblyError(RuntimeError):
    """A local Gram matrix is not positive definite."""

    def __init__(self, element, message):
        super().__init__(f"Gram matrix of element {element} is not SPD: {message}")
        self.element = element


@dataclass
class LocalSystem:
    """
    Local DPG data of a chunk of elements.

    Attributes:
        elements (np.ndarray): Triangle indices, shape (m,).
        gram (np.ndarray): Test Gram matrices G_T, shape (m, nt, nt).
        b (np.ndarray): Trial-test matrices B_T, shape (m, nt, nc).
        load (np.ndarray): Test loads l_T, shape (m, nt).
        dofs (np.ndarray): Global trial index of every column, shape (m, nc).
    """

    elements: np.ndarray
    gram: np.ndarray
    b: np.ndarray
    load: np.ndarray
    dofs: np.ndarray


def local_system(layout, f, elements):
    """
    Build G_T, B_T and l_T on a set of elements.

    Args:
        layout (DofLayout): Numbering of the trial space.
        f (callable): Right-hand side.
        elements (array_like): Triangle indices.

    Returns:
        LocalSystem: Local data of the elements.
    """
    formulation = layout.formulation
    batch = ElementBatch(layout.mesh, elements, formulation.quadrature_degree)
    return LocalSystem(
        elements=batch.elements,
        gram=formulation.local_gram(batch),
        b=formulation.local_b(batch),
        load=formulation.local_load(batch, f),
        dofs=layout.element_dofs[batch.elements],
    )


def _factorize(ls):
    try:
        factor = dense_cholesky(ls.gram)
    except SolverError as exc:
        if exc.index is None:
            raise
        raise GramAssemblyError(int(ls.elements[exc.index]), "non-positive pivot in its Cholesky factor") from exc
    y = forward_substitute(factor, ls.b)
    z = forward_substitute(factor, ls.load[..., None])[..., 0]
    return y, z


def _schur(y, z):
    return np.einsum("mki,mkj->mij", y, y), np.einsum("mki,mk->mi", y, z)


def schur_local(ls):
    """
    Local Schur complements A_T = B^T G^{-1} B and F_T = B^T G^{-1} l.

    G_T is factorized by Cholesky, G = L L^T, and A_T = Y^T Y with Y = L^{-1} B.

    Args:
        ls (LocalSystem): Local data.

    Returns:
        tuple: (A (m, nc, nc), F (m, nc)).

    Raises:
        GramAssemblyError: If some G_T is not positive definite.
    """
    y, z = _factorize(ls)
    return _schur(y, z)


@dataclass
class GlobalSystem:
    """
    Assembled DPG normal equations.

    Attributes:
        layout (DofLayout): Trial numbering.
        matrix (scipy.sparse.csr_matrix): A = sum_T B_T^T G_T^{-1} B_T.
        rhs (np.ndarray): F = sum_T B_T^T G_T^{-1} l_T.
        essential_dofs (np.ndarray): Constrained DOFs.
        essential_values (np.ndarray): Their prescribed values.
        local_residuals (list): (elements, Y, z) per chunk for the estimator.
    """

    layout: DofLayout
    matrix: sp.csr_matrix
    rhs: np.ndarray
    essential_dofs: np.ndarray
    essential_values: np.ndarray
    local_residuals: list

    def reduced(self):
        """
        Eliminate the essential DOFs by substitution.

        Returns:
            tuple: (A_ff, F_f - A_fe x_e, free DOFs).
        """
        free = self.layout.free_dofs()
        ess = self.essential_dofs
        rows = self.matrix[free]
        rhs = self.rhs[free] - rows[:, ess] @ self.essential_values
        return rows[:, free].tocsr(), rhs, free

    def solve(self, method=DEFAULT_SOLVER):
        """Solve the constrained system and return the SolutionVector."""
        matrix, rhs, free = self.reduced()
        logger.info("Solving: %d free DOFs, %d nonzeros, solver '%s'", free.size, matrix.nnz, method)
        x_free, residual = sparse_spd_solve(SparseSymmetric.from_matrix(matrix), rhs, method=method)
        logger.info("Relative residual %.3e", residual)

        x = np.zeros(self.layout.n_dofs)
        x[self.essential_dofs] = self.essential_values
        x[free] = x_free
        return SolutionVector(layout=self.layout, coefficients=x,
                              local_residuals=self.local_residuals, residual=residual)


def _chunks(n, size):
    return [np.arange(start, min(start + size, n)) for start in range(0, n, size)]


def assemble(mesh, formulation, f, boundary_values=None, threads=DEFAULT_THREADS,
             chunk_size=ELEMENT_CHUNK_SIZE):
    """
    Assemble the global DPG system.

    Elements are processed in chunks of fixed size; chunk results are merged
    in element order, so the assembled system does not depend on `threads`.

    Args:
        mesh (Mesh): Triangulation.
        formulation (Formulation): Ultraweak form.
        f (callable): Right-hand side.
        boundary_values (np.ndarray): Values of layout.essential_dofs()
            (default zeros).
        threads (int): Worker threads for the local computations.
        chunk_size (int): Elements per chunk.

    Returns:
        GlobalSystem: Assembled system.

    Raises:
        ValueError: If threads or chunk_size is not positive, or the boundary
            values have the wrong length.
        GramAssemblyError: If a local Gram matrix is not SPD.
    """
    if threads < 1:
        raise ValueError(f"Thread count must be >= 1, got {threads}")
    if chunk_size < 1:
        raise ValueError(f"Chunk size must be >= 1, got {chunk_size}")

    layout = DofLayout(mesh, formulation)
    essential = layout.essential_dofs()
    if boundary_values is None:
        boundary_values = np.zeros(essential.size)
    boundary_values = np.asarray(boundary_values, dtype=float)
    if boundary_values.shape != essential.shape:
        raise ValueError(f"Expected {essential.size} boundary values, got {boundary_values.shape}")

    def work(elements):
        ls = local_system(layout, f, elements)
        y, z = _factorize(ls)
        a, rhs = _schur(y, z)
        return ls.dofs, a, rhs, (ls.elements, y, z)

    chunks = _chunks(mesh.n_triangles, chunk_size)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, chunks))
    else:
        results = [work(c) for c in chunks]

    dofs = np.concatenate([r[0] for r in results])
    local_a = np.concatenate([r[1] for r in results])
    local_f = np.concatenate([r[2] for r in results])

    nc = dofs.shape[1]
    rows = np.repeat(dofs, nc, axis=1).ravel()
    cols = np.tile(dofs, (1, nc)).ravel()
    matrix = sp.coo_matrix((local_a.ravel(), (rows, cols)), shape=(layout.n_dofs, layout.n_dofs)).tocsr()
    rhs = np.bincount(dofs.ravel(), weights=local_f.ravel(), minlength=layout.n_dofs)

    logger.info("Assembled %s system: %d elements, %d DOFs (%d essential)",
                formulation.name, mesh.n_triangles, layout.n_dofs, essential.size)
    return GlobalSystem(layout=layout, matrix=matrix, rhs=rhs, essential_dofs=essential,
                        essential_values=boundary_values, local_residuals=[r[3] for r in results])


def assemble_solve(mesh, formulation, f, boundary_values=None, solver=DEFAULT_SOLVER,
                   threads=DEFAULT_THREADS, chunk_size=ELEMENT_CHUNK_SIZE):
    """
    Assemble and solve the DPG system.

    Args:
        mesh (Mesh): Conforming triangulation.
        formulation (Formulation): Ultraweak form.
        f (callable): Right-hand side.
        boundary_values (np.ndarray): Values of the essential DOFs.
        solver (str): "direct" or "cg".
        threads (int): Worker threads for the local computations.
        chunk_size (int): Elements per chunk.

    Returns:
        SolutionVector: Discrete solution with the data needed by estimate().

    Raises:
        GramAssemblyError: If a local Gram matrix is not SPD.
        SolverError: If the global solve breaks down.
    """
    system = assemble(mesh, formulation, f, boundary_values=boundary_values,
                      threads=threads, chunk_size=chunk_size)
    return system.solve(method=solver)


def estimate(mesh, solution):
    """
    Residual estimator eta_T^2 = r_T^T G_T^{-1} r_T with r_T = l_T - B_T x_T.

    Args:
        mesh (Mesh): Mesh the solution was computed on.
        solution (SolutionVector): Output of assemble_solve.

    Returns:
        tuple: (eta_T of shape (nt,), global eta).

    Raises:
        ValueError: If the solution belongs to another mesh or carries no local data.
    """
    if solution.mesh is not mesh:
        raise ValueError("Solution was computed on a different mesh")
    if solution.local_residuals is None:
        raise ValueError("Solution carries no local residual data")

    eta_sq = np.zeros(mesh.n_triangles)
    for elements, y, z in solution.local_residuals:
        x_local = solution.local(elements)
        r = z - np.einsum("mki,mi->mk", y, x_local)
        eta_sq[elements] = np.einsum("mk,mk->m", r, r)
    return np.sqrt(eta_sq), float(np.sqrt(eta_sq.sum()))


def assemble_monolithic(mesh, formulation, f):
    """
    Dense global G (block diagonal), B and l with element-contiguous test rows.

    Args:
        mesh (Mesh): Small triangulation.
        formulation (Formulation): Ultraweak form.
        f (callable): Right-hand side.

    Returns:
        tuple: (layout, G, B, l) as dense arrays.
    """
    layout = DofLayout(mesh, formulation)
    ls = local_system(layout, f, np.arange(mesh.n_triangles))
    nt = formulation.test_size
    n_test = mesh.n_triangles * nt

    gram = scipy.linalg.block_diag(*ls.gram)
    b = np.zeros((n_test, layout.n_dofs))
    for t in range(mesh.n_triangles):
        rows = slice(t * nt, (t + 1) * nt)
        b[rows, ls.dofs[t]] += ls.b[t]
    return layout, gram, b, ls.load.ravel()


def solve_monolithic(mesh, formulation, f, boundary_values=None):
    """
    Weighted least-squares minimizer of (Bx - l)^T G^{-1} (Bx - l) with the
    essential DOFs fixed, by dense factorization.

    Returns:
        tuple: (coefficients, residual norm).
    """
    layout, gram, b, load = assemble_monolithic(mesh, formulation, f)
    essential = layout.essential_dofs()
    free = layout.free_dofs()
    x = np.zeros(layout.n_dofs)
    if boundary_values is not None:
        x[essential] = boundary_values

    factor = scipy.linalg.cholesky(gram, lower=True)
    y = scipy.linalg.solve_triangular(factor, b, lower=True)
    z = scipy.linalg.solve_triangular(factor, load, lower=True)
    target = z - y[:, essential] @ x[essential]
    x[free] = np.linalg.lstsq(y[:, free], target, rcond=None)[0]
    return x, float(np.linalg.norm(z - y @ x))
