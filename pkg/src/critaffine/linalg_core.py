"""Small dense linear algebra and overflow-safe log-scaled matrix products.

Long products of random matrices overflow or underflow double precision
after a few hundred steps.  A :class:`LogScaledMatrix` stores such a product
as a factor of unit operator norm together with the natural log of the
discarded scale, so ``exp(log_scale) * factor`` is the represented matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_DIM = 8
UNIT_TOL = 1e-10


class NumericalError(ArithmeticError):
    """Raised when a computed identity fails beyond its tolerance."""


def as_matrix(M) -> np.ndarray:
    """Validate and return ``M`` as a square float64 array with finite entries."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if not 1 <= M.shape[0] <= MAX_DIM:
        raise ValueError(f"dimension {M.shape[0]} outside supported range 1..{MAX_DIM}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


def as_vector(v, d: int | None = None) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got shape {v.shape}")
    if d is not None and v.shape[0] != d:
        raise ValueError(f"expected length {d}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


def operator_norm(M) -> float:
    """Spectral norm (largest singular value) of a square matrix."""
    M = as_matrix(M)
    return float(np.linalg.svd(M, compute_uv=False)[0])


def singular_values(M) -> np.ndarray:
    """Singular values in descending order."""
    M = as_matrix(M)
    return np.linalg.svd(M, compute_uv=False)


@dataclass(frozen=True)
class LogScaledMatrix:
    """Matrix stored as ``exp(log_scale) * factor`` with ``||factor|| = 1``.

    The zero matrix is represented by a zero factor and ``log_scale = -inf``.
    """

    factor: np.ndarray
    log_scale: float

    @property
    def is_zero(self) -> bool:
        return self.log_scale == -np.inf

    @property
    def dim(self) -> int:
        return self.factor.shape[0]

    def to_matrix(self) -> np.ndarray:
        """Dense matrix; overflows to inf for large ``log_scale``."""
        if self.is_zero:
            return np.zeros_like(self.factor)
        return np.exp(self.log_scale) * self.factor


def _zero(d: int) -> LogScaledMatrix:
    return LogScaledMatrix(np.zeros((d, d)), -np.inf)


def logscaled_from(M) -> LogScaledMatrix:
    """Split ``M`` into ``(M / ||M||, ln ||M||)``."""
    M = as_matrix(M)
    nrm = operator_norm(M)
    if nrm == 0.0:
        return _zero(M.shape[0])
    return LogScaledMatrix(M / nrm, float(np.log(nrm)))


def logscaled_multiply(L: LogScaledMatrix, R: LogScaledMatrix) -> LogScaledMatrix:
    """Product ``L @ R`` with the factor renormalized to unit operator norm."""
    if L.dim != R.dim:
        raise ValueError("dimension mismatch")
    if L.is_zero or R.is_zero:
        return _zero(L.dim)
    P = L.factor @ R.factor
    nrm = float(np.linalg.svd(P, compute_uv=False)[0])
    if not nrm > np.finfo(np.float64).tiny:
        return _zero(L.dim)
    return LogScaledMatrix(P / nrm, L.log_scale + R.log_scale + float(np.log(nrm)))


def logscaled_apply(L: LogScaledMatrix, v) -> tuple[float, np.ndarray | None]:
    """Apply the factor of ``L`` to a unit vector.

    Returns ``(ln|factor @ v|, direction)``.  The caller adds ``L.log_scale``
    to get the full log gain.  A vector sent to zero gives ``(-inf, None)``.
    """
    v = as_vector(v, L.dim)
    if abs(np.linalg.norm(v) - 1.0) > UNIT_TOL:
        raise ValueError("input vector must have unit norm")
    if L.is_zero:
        return -np.inf, None
    w = L.factor @ v
    g = float(np.linalg.norm(w))
    if g == 0.0:
        return -np.inf, None
    return float(np.log(g)), w / g


def min_column_sum(M) -> float:
    """Smallest column sum of a nonnegative matrix."""
    M = as_matrix(M)
    if np.any(M < 0):
        raise ValueError("matrix has negative entries")
    return float(M.sum(axis=0).min())
