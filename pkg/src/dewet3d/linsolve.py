"""Sparse solves for the coupled position/curvature systems.

``method="gmres"`` runs restarted GMRES preconditioned with an incomplete LU
factorisation; ``method="direct"`` uses SuperLU with a few steps of
iterative refinement.  ``method="auto"`` (the default) factorises small
systems directly and otherwise tries GMRES first, falling back to the direct
path if the preconditioner breaks down or the iteration stalls.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SingularMatrix, SizeMismatch, SolverDivergence

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DIRECT_SIZE_LIMIT = 60_000


@dataclass(frozen=True)
class SolveInfo:
    method: str
    residual: float  # ||Ax - b|| / ||b||  (absolute if b == 0)
    iterations: int


def compile_triplets(rows, cols, vals, shape) -> sp.csr_matrix:
    """Sum duplicate (row, col) entries into compressed row storage."""
    vals = np.asarray(vals, dtype=float)
    if not np.isfinite(vals).all():
        raise ValueError("matrix entries must be finite")
    A = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    A.sum_duplicates()
    return A


def _relative_residual(A, x, b):
    r = np.linalg.norm(A @ x - b)
    nb = np.linalg.norm(b)
    return r / nb if nb > 0 else r


def _direct(A, b, tol, refinements=3):
    try:
        lu = spla.splu(A.tocsc())
    except RuntimeError as exc:  # SuperLU reports exact singularity this way
        raise SingularMatrix(str(exc)) from exc
    x = lu.solve(b)
    if not np.isfinite(x).all():
        raise SingularMatrix("direct factorisation produced non-finite values")
    res = _relative_residual(A, x, b)
    steps = 0
    while res > tol and steps < refinements:
        x = x + lu.solve(b - A @ x)
        res = _relative_residual(A, x, b)
        steps += 1
    if res > tol:
        raise SolverDivergence(f"direct solve residual {res:.3e} exceeds tol {tol:.1e}")
    return x, SolveInfo("direct", res, steps)


def _gmres(A, b, tol, max_iter, restart=200):
    try:
        ilu = spla.spilu(A.tocsc(), drop_tol=1e-6, fill_factor=20)
    except RuntimeError as exc:
        raise SingularMatrix(f"incomplete factorisation failed: {exc}") from exc
    M = spla.LinearOperator(A.shape, ilu.solve)
    count = [0]

    def cb(_):
        count[0] += 1

    restart = min(restart, A.shape[0])
    cycles = max(1, -(-max_iter // restart))
    x, _ = spla.gmres(
        A, b, rtol=tol * 0.1, atol=0.0, restart=restart, maxiter=cycles,
        M=M, callback=cb, callback_type="pr_norm",
    )
    res = _relative_residual(A, x, b)
    if not np.isfinite(res) or res > tol:
        raise SolverDivergence(
            f"GMRES did not reach tol {tol:.1e} in {count[0]} iterations (residual {res:.3e})"
        )
    return x, SolveInfo("gmres", res, count[0])


def solve(A, b, tol=DEFAULT_TOL, max_iter=None, method="auto"):
    """Solve ``A x = b`` to relative residual ``tol``; returns ``(x, SolveInfo)``.

    Raises
    ------
    SolverDivergence
        The residual contract could not be met within ``max_iter``.
    SingularMatrix
        The (incomplete) factorisation broke down.
    """
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if A.shape[0] != A.shape[1] or b.shape != (n,):
        raise SizeMismatch(f"need a square system, got A {A.shape} and b {b.shape}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter is None:
        max_iter = 10 * n
    if not np.any(b):
        return np.zeros(n), SolveInfo("trivial", 0.0, 0)

    if method == "direct":
        return _direct(A, b, tol)
    if method == "gmres":
        return _gmres(A, b, tol, max_iter)
    if method != "auto":
        raise ValueError(f"unknown solver method {method!r}")
    if n <= DIRECT_SIZE_LIMIT:
        return _direct(A, b, tol)
    try:
        return _gmres(A, b, tol, max_iter)
    except (SolverDivergence, SingularMatrix) as exc:
        logger.warning("GMRES path failed (%s); falling back to direct factorisation", exc)
        return _direct(A, b, tol)
