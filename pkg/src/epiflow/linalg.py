"""Sparse CSR construction and the linear solvers behind every implicit step.

Matrices are scipy CSR throughout; this module fixes the canonical form
(sorted, duplicate-free) and wraps the solve paths so that callers get a
uniform contract: direct solves guarantee a small residual, iterative solves
report convergence instead of raising.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

SparseMatrix = sp.csr_matrix


class SingularMatrixError(RuntimeError):
    """Raised when sparse LU hits an exactly singular pivot."""


@dataclass
class SolverReport:
    iterations: int
    residual: float
    converged: bool


def csr_from_triplets(rows, cols, values, shape) -> SparseMatrix:
    """Build a canonical CSR matrix from (row, col, value) triplets.

    Duplicate entries are summed.  Out-of-range indices raise ValueError.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    values = np.asarray(values, dtype=float)
    nr, nc = shape
    if rows.size:
        if rows.min() < 0 or rows.max() >= nr:
            raise ValueError(f"row index out of range for shape {shape}")
        if cols.min() < 0 or cols.max() >= nc:
            raise ValueError(f"column index out of range for shape {shape}")
    a = sp.coo_matrix((values, (rows, cols)), shape=shape).tocsr()
    a.sum_duplicates()
    a.sort_indices()
    return a


def solve_direct(a: SparseMatrix, b: np.ndarray) -> np.ndarray:
    """Sparse LU solve with partial pivoting; residual <= 1e-10 * ||b||.

    One step of iterative refinement is applied if the raw factorization
    residual is above the contract; a persistent excess raises.
    """
    b = np.asarray(b, dtype=float)
    if a.shape[0] != a.shape[1]:
        raise ValueError("solve_direct requires a square matrix")
    if a.shape[0] != b.shape[0]:
        raise ValueError("dimension mismatch between matrix and right-hand side")
    try:
        lu = spla.splu(a.tocsc())
    except RuntimeError as exc:
        raise SingularMatrixError(str(exc)) from exc
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SingularMatrixError("non-finite solution from sparse LU")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    res = np.linalg.norm(a @ x - b)
    if res > 1e-10 * bnorm:
        x = x + lu.solve(b - a @ x)
        res = np.linalg.norm(a @ x - b)
        if res > 1e-10 * bnorm:
            raise SingularMatrixError(
                f"direct solve residual {res / bnorm:.3e} exceeds contract 1e-10"
            )
    return x


def ilu0(a: SparseMatrix):
    """In-place ILU(0): incomplete LU restricted to the sparsity pattern of a.

    Returns an object with a .solve(v) method applying (LU)^-1 v.
    """
    a = a.tocsr().copy()
    a.sort_indices()
    n = a.shape[0]
    indptr, indices, data = a.indptr, a.indices, a.data
    diag_pos = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            if indices[p] == i:
                diag_pos[i] = p
                break
    if (diag_pos < 0).any():
        raise ValueError("ilu0 requires a fully populated diagonal")
    # IKJ variant: for each row i, eliminate with previous rows k present in row i
    for i in range(1, n):
        row = slice(indptr[i], indptr[i + 1])
        row_cols = indices[row]
        for p in range(indptr[i], indptr[i + 1]):
            k = indices[p]
            if k >= i:
                break
            pivot = data[diag_pos[k]]
            if pivot == 0.0:
                raise SingularMatrixError(f"zero pivot in ilu0 at row {k}")
            lik = data[p] / pivot
            data[p] = lik
            # subtract lik * U(k, j) for j in pattern of row i, j > k
            for q in range(diag_pos[k] + 1, indptr[k + 1]):
                j = indices[q]
                hit = np.searchsorted(row_cols, j)
                if hit < row_cols.size and row_cols[hit] == j:
                    data[indptr[i] + hit] -= lik * data[q]

    class _Ilu0:
        def solve(self, v):
            y = np.array(v, dtype=float)
            for i in range(n):  # forward, unit lower
                s = 0.0
                for p in range(indptr[i], diag_pos[i]):
                    s += data[p] * y[indices[p]]
                y[i] -= s
            for i in range(n - 1, -1, -1):  # backward, upper
                s = 0.0
                for p in range(diag_pos[i] + 1, indptr[i + 1]):
                    s += data[p] * y[indices[p]]
                y[i] = (y[i] - s) / data[diag_pos[i]]
            return y

    return _Ilu0()


def solve_gmres(
    a: SparseMatrix,
    b: np.ndarray,
    tol: float = 1e-10,
    restart: int = 50,
    max_iters: int = 1000,
    preconditioner: str | None = None,
) -> tuple[np.ndarray, SolverReport]:
    """Restarted GMRES; non-convergence is reported, not raised.

    preconditioner: None or "ilu0".
    """
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), SolverReport(iterations=0, residual=0.0, converged=True)
    m = None
    if preconditioner == "ilu0":
        fac = ilu0(a)
        m = spla.LinearOperator(a.shape, matvec=fac.solve)
    elif preconditioner is not None:
        raise ValueError(f"unknown preconditioner {preconditioner!r}")
    count = {"n": 0}

    def _cb(_):
        count["n"] += 1

    x, info = spla.gmres(
        a, b, rtol=tol, atol=0.0, restart=restart, maxiter=max_iters, M=m,
        callback=_cb, callback_type="pr_norm",
    )
    res = float(np.linalg.norm(a @ x - b) / bnorm)
    converged = info == 0 and res <= tol
    return x, SolverReport(iterations=count["n"], residual=res, converged=converged)


def export_matrix_market(a: SparseMatrix, path) -> None:
    """Dump a matrix in MatrixMarket coordinate format for external debugging."""
    from scipy.io import mmwrite

    mmwrite(str(path), a.tocoo())
