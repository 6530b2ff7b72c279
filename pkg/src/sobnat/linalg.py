"""Dense double-precision linear algebra shared by every module.

Matrices are plain numpy float64 arrays in C (row-major) order; this module
only adds the SPD solve and the Kronecker-factored preconditioning product
that the metric and K-FAC paths need, with the package's error types.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NotPositiveDefinite

__all__ = [
    "as_matrix",
    "cholesky_factor",
    "cholesky_solve",
    "solve_from_factor",
    "kron_precondition",
    "symmetrize",
    "check_symmetric",
]


def as_matrix(a) -> np.ndarray:
    """Coerce to a C-contiguous float64 2-D array."""
    m = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got ndim={m.ndim}")
    return m


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def check_symmetric(m: np.ndarray, rtol: float = 1e-12) -> bool:
    """Symmetry to within |M_ij - M_ji| <= rtol * max(1, |M_ij|)."""
    m = np.asarray(m)
    if m.shape[0] != m.shape[1]:
        return False
    return bool(np.all(np.abs(m - m.T) <= rtol * np.maximum(1.0, np.abs(m))))


def cholesky_factor(a: np.ndarray):
    """Lower-triangular Cholesky factor of an SPD matrix, no pivoting.

    Raises NotPositiveDefinite when a pivot is <= 0; the caller owns jitter.
    """
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"matrix must be square, got {a.shape}")
    try:
        c, low = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    return c, low


def solve_from_factor(factor, b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    vector_in = b.ndim == 1
    x = scipy.linalg.cho_solve(factor, b.reshape(b.shape[0], -1), check_finite=False)
    return x.reshape(-1) if vector_in else x


def cholesky_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a x = b for SPD a via Cholesky.

    b may be a vector or a matrix of right-hand sides; the result has the
    same shape as b.
    """
    a = as_matrix(a)
    b_arr = np.asarray(b, dtype=np.float64)
    if b_arr.shape[0] != a.shape[0]:
        raise DimensionMismatch(
            f"rhs has {b_arr.shape[0]} rows, matrix is {a.shape[0]}x{a.shape[1]}"
        )
    return solve_from_factor(cholesky_factor(a), b_arr)


def kron_precondition(a_inv: np.ndarray, s_inv: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Apply the Kronecker-factored inverse: returns s_inv @ v @ a_inv.

    Equivalent to reshaping (a_inv kron s_inv) applied to vec(v) for
    symmetric factors, with v of shape (d_out, d_in), s_inv (d_out, d_out),
    a_inv (d_in, d_in).
    """
    a_inv = as_matrix(a_inv)
    s_inv = as_matrix(s_inv)
    v = as_matrix(v)
    if s_inv.shape[0] != s_inv.shape[1] or a_inv.shape[0] != a_inv.shape[1]:
        raise DimensionMismatch("factors must be square")
    if v.shape != (s_inv.shape[0], a_inv.shape[0]):
        raise DimensionMismatch(
            f"v has shape {v.shape}, expected ({s_inv.shape[0]}, {a_inv.shape[0]})"
        )
    return s_inv @ v @ a_inv
