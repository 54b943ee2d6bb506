"""
Solver module for the grad-div DPG solver.
Contains dense Cholesky helpers for the local Gram systems and the sparse
symmetric positive definite solve of the global DPG system.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg, splu

from config import CG_MAXITER, CG_RTOL, DEFAULT_SOLVER, REFINEMENT_STEPS, RESIDUAL_TOLERANCE, SOLVER_CHOICES

logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """
    Breakdown of a factorization or an iterative solve.

    Attributes:
        index (int or None): Position of the failing matrix in a stack.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


def dense_cholesky(a):
    """
    Lower Cholesky factor of one SPD matrix or a stack of them.

    Args:
        a (np.ndarray): Shape (n, n) or (m, n, n).

    Returns:
        np.ndarray: L with a = L L^T, same shape as a.

    Raises:
        SolverError: On a non-positive pivot; for stacks `index` is the first
            failing matrix.
    """
    a = np.asarray(a, dtype=float)
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        if a.ndim == 2:
            raise SolverError(f"Non-positive pivot in dense Cholesky of a {a.shape[0]}x{a.shape[0]} matrix") from exc
        for index, block in enumerate(a):
            try:
                np.linalg.cholesky(block)
            except np.linalg.LinAlgError:
                raise SolverError(f"Non-positive pivot in dense Cholesky of matrix {index}", index=index) from exc
        raise SolverError("Non-positive pivot in dense Cholesky") from exc


def forward_substitute(factor, b):
    """Solve L y = b for a (stack of) lower factor(s)."""
    if factor.ndim == 2:
        return scipy.linalg.solve_triangular(factor, b, lower=True)
    return np.linalg.solve(factor, b)


def dense_solve(factor, b):
    """
    Solve L L^T x = b with a factor from dense_cholesky.

    Args:
        factor (np.ndarray): Lower factor, shape (n, n).
        b (np.ndarray): Right side, shape (n,) or (n, k).

    Returns:
        np.ndarray: Solution x.
    """
    return scipy.linalg.cho_solve((factor, True), b)


@dataclass
class SparseSymmetric:
    """
    Symmetric sparse matrix stored by its upper triangle.

    Attributes:
        upper (scipy.sparse.csr_matrix): Upper triangle including the diagonal.
    """

    upper: sp.csr_matrix

    @classmethod
    def from_matrix(cls, matrix, tolerance=1e-12):
        """
        Store a symmetric matrix.

        Raises:
            ValueError: If the matrix is not square or not symmetric to tolerance.
        """
        matrix = sp.csr_matrix(matrix)
        if matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"Matrix must be square, got shape {matrix.shape}")
        asym = abs(matrix - matrix.T).max() if matrix.nnz else 0.0
        scale = abs(matrix).max() if matrix.nnz else 1.0
        if asym > tolerance * scale:
            raise ValueError(f"Matrix is not symmetric (max asymmetry {asym:.3e})")
        upper = sp.triu(matrix, format="csr")
        upper.eliminate_zeros()
        return cls(upper=upper)

    @property
    def shape(self):
        return self.upper.shape

    @property
    def nnz(self):
        """Stored entries of the upper triangle."""
        return self.upper.nnz

    @property
    def fill(self):
        """Fraction of nonzero entries of the full matrix."""
        n = self.shape[0]
        diagonal = np.count_nonzero(self.upper.diagonal())
        return (2 * self.nnz - diagonal) / float(n * n) if n else 0.0

    def full(self):
        """Full symmetric matrix in CSR format."""
        strict = sp.triu(self.upper, k=1)
        return (self.upper + strict.T).tocsr()


def _as_full(a):
    return a.full() if isinstance(a, SparseSymmetric) else sp.csr_matrix(a)


def _direct(matrix):
    lu = splu(matrix.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
              options={"SymmetricMode": True})
    pivots = lu.U.diagonal()
    if np.any(pivots <= 0.0):
        bad = int(np.argmin(pivots))
        raise SolverError(
            f"Non-positive pivot {pivots[bad]:.3e} at position {bad} "
            f"(n = {matrix.shape[0]}, nnz = {matrix.nnz})")
    logger.debug("Sparse factor: n = %d, nnz(A) = %d, nnz(L + U) = %d",
                 matrix.shape[0], matrix.nnz, lu.L.nnz + lu.U.nnz)
    return lu.solve


def _conjugate_gradient(matrix, rtol, maxiter):
    diagonal = matrix.diagonal()
    if np.any(diagonal <= 0.0):
        raise SolverError(f"Non-positive diagonal entry in CG system (n = {matrix.shape[0]})")
    inverse = 1.0 / diagonal
    jacobi = LinearOperator(matrix.shape, matvec=lambda x: inverse * x, dtype=float)

    def solve(rhs):
        iterations = [0]

        def count(_):
            iterations[0] += 1

        x, info = cg(matrix, rhs, rtol=rtol, atol=0.0, maxiter=maxiter, M=jacobi, callback=count)
        if info != 0:
            raise SolverError(
                f"CG did not converge in {iterations[0]} iterations "
                f"(n = {matrix.shape[0]}, nnz = {matrix.nnz}, info = {info})")
        logger.debug("CG converged in %d iterations", iterations[0])
        return x

    return solve


def sparse_spd_solve(a, f, method=DEFAULT_SOLVER, rtol=CG_RTOL, maxiter=CG_MAXITER,
                     tolerance=RESIDUAL_TOLERANCE, refinement_steps=REFINEMENT_STEPS):
    """
    Solve a sparse symmetric positive definite system.

    The direct path factorizes with a minimum degree ordering and diagonal
    pivoting, which for an SPD matrix is a Cholesky factorization; every
    pivot must be positive. The iterative path is Jacobi-preconditioned CG.
    While the residual exceeds `tolerance`, up to `refinement_steps`
    corrections x += A^{-1} (f - A x) follow, reusing the sparse factor or
    restarting CG on the residual.

    Args:
        a (SparseSymmetric or sparse matrix): System matrix.
        f (np.ndarray): Right side.
        method (str): "direct" or "cg".
        rtol (float): CG relative tolerance.
        maxiter (int): CG iteration cap.
        tolerance (float): Accepted relative residual |Ax - f| / |f|.
        refinement_steps (int): Maximal number of residual corrections.

    Returns:
        tuple: (x, relative residual).

    Raises:
        ValueError: If method is unknown or shapes mismatch.
        SolverError: On breakdown or a residual above tolerance.
    """
    if method not in SOLVER_CHOICES:
        raise ValueError(f"Unknown solver '{method}', expected one of {SOLVER_CHOICES}")
    matrix = _as_full(a)
    f = np.asarray(f, dtype=float)
    if matrix.shape[0] != f.shape[0]:
        raise ValueError(f"Matrix of size {matrix.shape[0]} and right side of size {f.shape[0]}")

    norm_f = np.linalg.norm(f)
    if matrix.shape[0] == 0 or norm_f == 0.0:
        return np.zeros_like(f), 0.0

    solve = _direct(matrix) if method == "direct" else _conjugate_gradient(matrix, rtol, maxiter)
    x = solve(f)
    residual = float(np.linalg.norm(f - matrix @ x) / norm_f)
    for step in range(refinement_steps):
        if residual <= tolerance:
            break
        x = x + solve(f - matrix @ x)
        residual = float(np.linalg.norm(f - matrix @ x) / norm_f)
        logger.info("Refinement step %d: relative residual %.3e", step + 1, residual)

    if residual > tolerance:
        logger.error("Residual %.3e above tolerance %.1e", residual, tolerance)
        raise SolverError(
            f"Relative residual {residual:.3e} above {tolerance:.1e} "
            f"(method = {method}, n = {matrix.shape[0]}, nnz = {matrix.nnz})")
    return x, residual


def export_matrix_market(path, a):
    """Write a symmetric matrix in Matrix Market format (lower triangle stored)."""
    scipy.io.mmwrite(str(path), sp.tril(_as_full(a), format="coo"), symmetry="symmetric")
