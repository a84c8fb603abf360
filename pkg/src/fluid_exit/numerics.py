"""Dense small-matrix kernels: matrix exponential, linear and Sylvester solves.

Everything here works on plain ``numpy`` arrays. Matrices are small (the state
space is finite and modest), so no sparse path is provided.
"""
from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg

from .errors import Overflow, ShapeMismatch, SingularMatrix

DEFAULT_EXP_RTOL = 1e-12
SINGULAR_PIVOT_RTOL = 1e-13


def _finite_or_overflow(x: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise Overflow(f"{what} produced non-finite entries")
    return x


def matrix_exp(A, rel_tol: float = DEFAULT_EXP_RTOL) -> np.ndarray:
    """Return ``exp(A)`` by scaling and squaring with a diagonal Pade approximant.

    ``A`` may also be a stack of square matrices with shape ``(n, m, m)``; the
    exponential is then taken slice by slice.

    The backing routine selects the Pade degree and the number of squarings
    from a one-norm estimate and delivers close to unit roundoff relative
    error on well-conditioned input, which is below every admissible
    ``rel_tol``.
    """
    if not 0.0 < rel_tol <= 1e-6:
        raise ValueError(f"rel_tol must lie in (0, 1e-6], got {rel_tol}")
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ShapeMismatch(f"matrix_exp needs square input, got shape {A.shape}")
    _finite_or_overflow(A, "matrix_exp input")
    with np.errstate(over="ignore", invalid="ignore"):
        out = scipy.linalg.expm(A)
    return _finite_or_overflow(out, "matrix_exp")


def solve_linear(A, b) -> np.ndarray:
    """Solve ``A x = b`` by LU with partial pivoting.

    Raises :class:`SingularMatrix` when a pivot falls below
    ``1e-13 * ||A||_inf``. ``b`` may be a vector or a matrix of right-hand sides.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeMismatch(f"solve_linear needs a square matrix, got {A.shape}")
    if b.shape[0] != A.shape[0]:
        raise ShapeMismatch(f"right-hand side has {b.shape[0]} rows, matrix has {A.shape[0]}")
    norm = np.abs(A).sum(axis=1).max() if A.size else 0.0
    if norm == 0.0:
        raise SingularMatrix("zero matrix")
    with warnings.catch_warnings():
        # singularity is judged by the pivot test below
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
    if np.abs(np.diag(lu)).min() < SINGULAR_PIVOT_RTOL * norm:
        raise SingularMatrix("pivot below threshold; matrix is numerically singular")
    return _finite_or_overflow(scipy.linalg.lu_solve((lu, piv), b), "solve_linear")


def solve_sylvester(B, A, C) -> np.ndarray:
    """Solve ``X A + B X = C`` for ``X`` (p x q).

    The equation is linearised with Kronecker products into a ``pq x pq``
    system and handed to :func:`solve_linear`; fine for desk-sized problems.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    p, q = C.shape
    if A.shape != (q, q) or B.shape != (p, p):
        raise ShapeMismatch(f"shapes A{A.shape}, B{B.shape}, C{C.shape} are not conformable")
    # row-major vec: vec(B X) = (B kron I) vec X, vec(X A) = (I kron A^T) vec X
    big = np.kron(B, np.eye(q)) + np.kron(np.eye(p), A.T)
    try:
        x = solve_linear(big, C.reshape(-1))
    except SingularMatrix as exc:
        raise SingularMatrix("A and -B share an eigenvalue (Sylvester operator singular)") from exc
    return x.reshape(p, q)


def inf_norm(A) -> float:
    """Induced infinity norm (max absolute row sum); vectors use max abs entry."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    if A.ndim == 1:
        return float(np.abs(A).max())
    return float(np.abs(A).sum(axis=-1).max())
