"""Projective space with an absorbing zero state, the sine metric and the
Hennion metric on the positive part of the sphere."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg_core import UNIT_TOL, as_matrix, as_vector


@dataclass(frozen=True, eq=False)
class ProjectivePoint:
    """A direction in ``P(R^d)`` or the absorbing zero state.

    ``rep`` is the unit representative whose first nonzero coordinate is
    positive, or ``None`` for the zero state.  Two points are equal iff their
    representatives are equal as vectors.
    """

    rep: np.ndarray | None
    dim: int

    @property
    def is_zero(self) -> bool:
        return self.rep is None

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProjectivePoint) or self.dim != other.dim:
            return NotImplemented
        if self.is_zero or other.is_zero:
            return self.is_zero and other.is_zero
        return bool(np.array_equal(self.rep, other.rep))

    def __hash__(self) -> int:
        return hash((self.dim, None if self.rep is None else self.rep.tobytes()))

    def __repr__(self) -> str:
        if self.is_zero:
            return f"ProjectivePoint(Zero, dim={self.dim})"
        return f"ProjectivePoint({np.array2string(self.rep, precision=6)})"


def zero_point(d: int) -> ProjectivePoint:
    return ProjectivePoint(None, d)


def canonical_sign_vector(v: np.ndarray) -> np.ndarray:
    """Flip ``v`` so that its first nonzero coordinate is positive."""
    nz = np.flatnonzero(v)
    if nz.size and v[nz[0]] < 0:
        return -v
    return v


def canonicalize(v) -> ProjectivePoint:
    v = as_vector(v)
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        return zero_point(v.shape[0])
    u = canonical_sign_vector(v / nrm)
    u.setflags(write=False)
    return ProjectivePoint(u, v.shape[0])


def delta(p: ProjectivePoint, q: ProjectivePoint) -> float:
    """Sine of the angle between two directions.

    Evaluated as ``|u - v| * sqrt(1 - |u - v|^2 / 4)`` with the sign of
    ``v`` chosen to minimise ``|u - v|``.  This equals ``sqrt(1 - <u,v>^2)``
    but keeps full relative precision for nearly equal directions.
    """
    if p.is_zero or q.is_zero:
        raise ValueError("delta is undefined at the zero state")
    return sine_distance(p.rep, q.rep)


def sine_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Sine of the angle between unit vectors ``u`` and ``v``."""
    c = min(np.linalg.norm(u - v), np.linalg.norm(u + v))
    return float(min(1.0, max(0.0, c * np.sqrt(max(0.0, 1.0 - 0.25 * c * c)))))


def act(A, p: ProjectivePoint) -> tuple[ProjectivePoint, float]:
    """Projective action of ``A`` on ``p`` with its log gain ``ln|A u|``."""
    A = as_matrix(A)
    if A.shape[0] != p.dim:
        raise ValueError("dimension mismatch")
    if p.is_zero:
        return p, -np.inf
    w = A @ p.rep
    g = np.linalg.norm(w)
    if g == 0.0:
        return zero_point(p.dim), -np.inf
    return canonicalize(w), float(np.log(g))


def norm_ratio(A, p: ProjectivePoint) -> float:
    """``||A|| / |A u|`` for the unit representative ``u`` of ``p``."""
    A = as_matrix(A)
    g = np.linalg.norm(A @ p.rep)
    if g == 0.0:
        return np.inf
    return float(np.linalg.svd(A, compute_uv=False)[0] / g)


@dataclass(frozen=True, eq=False)
class SimplexPoint:
    """Unit vector with nonnegative entries."""

    rep: np.ndarray

    def __post_init__(self):
        rep = as_vector(self.rep)
        if np.any(rep < 0):
            raise ValueError("simplex point must have nonnegative entries")
        if abs(np.linalg.norm(rep) - 1.0) > UNIT_TOL:
            raise ValueError("simplex point must have unit norm")
        object.__setattr__(self, "rep", rep)

    @classmethod
    def from_vector(cls, v) -> "SimplexPoint":
        v = np.abs(as_vector(v))
        return cls(v / np.linalg.norm(v))


def _min_ratio(u: np.ndarray, v: np.ndarray) -> float:
    pos = v > 0
    return float(np.min(u[pos] / v[pos]))


def hennion_distance(u: SimplexPoint, v: SimplexPoint) -> float:
    """Hennion's distance ``(1 - m m') / (1 + m m')`` on the positive simplex,
    where ``m = min_i u_i / v_i`` over the support of ``v`` and ``m'`` swaps
    the roles."""
    return hennion_distance_vec(u.rep, v.rep)


def hennion_distance_vec(u: np.ndarray, v: np.ndarray) -> float:
    mm = _min_ratio(u, v) * _min_ratio(v, u)
    return float(min(1.0, max(0.0, (1.0 - mm) / (1.0 + mm))))
