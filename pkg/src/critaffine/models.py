"""Samplers for the law of the pair (A, B) in each model family, centring
calibration and approximate sampling of the invariant direction law."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .linalg_core import MAX_DIM
from .projective import ProjectivePoint, canonicalize

FAMILIES = (
    "Similarity",
    "RankOne",
    "InvertibleProximal",
    "Nonnegative",
    "DiagonalCounterexample",
    "PermutationCounterexample",
    "Constant",
)
B_LAWS = ("gaussian", "log_pareto", "constant")
INVERTIBLE_FAMILIES = ("Similarity", "InvertibleProximal", "Nonnegative",
                       "DiagonalCounterexample", "PermutationCounterexample")


class CalibrationError(RuntimeError):
    """Centring did not reach the requested tolerance within budget."""

    def __init__(self, message: str, last_estimate: float):
        super().__init__(message)
        self.last_estimate = last_estimate


def _tuple_matrix(M) -> tuple:
    return tuple(tuple(float(x) for x in row) for row in np.asarray(M, dtype=float))


@dataclass(frozen=True)
class ModelSpec:
    """Description of the law of (A, B).

    Only the fields relevant to ``family`` are read.  ``log_scale_shift``
    multiplies every sampled A by ``exp(log_scale_shift)``.

    Family parameters
    -----------------
    Similarity
        ``mean_a``, ``sigma_a`` (ln a Gaussian), ``rotation`` ("haar" for
        Haar measure on O(d), "identity" for pure scalings).
    RankOne
        ``A = a w w~^T`` with ln a Gaussian(``mean_a``, ``sigma_a``).  The
        directions are uniform on the sphere unless ``w_center`` /
        ``w_tilde_center`` are given, in which case they are the normalised
        centre plus ``direction_spread`` times a Gaussian vector.
        ``coupling`` in [0, 1) pulls w towards w~ of the same draw.
    InvertibleProximal
        Mixture over ``matrices`` with ``weights``; entries of ``conjugate``
        mark matrices that are conjugated by an independent Haar rotation;
        ``jitter`` adds Gaussian noise to every entry.
    Nonnegative
        Entries i.i.d. ``exp(entry_log_mean + entry_log_sigma * N(0,1))``.
    DiagonalCounterexample
        ``diag(alpha, 1/alpha)`` with ln alpha Gaussian(0, ``diag_sigma``^2).
    PermutationCounterexample
        Uniform on ``{antidiag(lam, 1/lam), antidiag(1, 1)}``, lam = ``perm_lambda``.
    Constant
        ``A`` is always ``matrices[0]``.

    The B law is ``b_law``: "gaussian" (``sigma_b`` times a standard
    Gaussian vector), "log_pareto" (uniform direction, ln|B| Lomax with
    index ``b_tail_index``, times ``sigma_b``) or "constant" (``b_vector``).
    """

    family: str
    d: int = 2
    log_scale_shift: float = 0.0
    mean_a: float = 0.0
    sigma_a: float = 1.0
    rotation: str = "haar"
    w_center: tuple | None = None
    w_tilde_center: tuple | None = None
    direction_spread: float = 0.0
    coupling: float = 0.0
    matrices: tuple = ()
    weights: tuple = ()
    conjugate: tuple = ()
    jitter: float = 0.0
    entry_log_mean: float = 0.0
    entry_log_sigma: float = 0.5
    diag_sigma: float = 1.0
    perm_lambda: float = 2.0
    b_law: str = "gaussian"
    sigma_b: float = 1.0
    b_tail_index: float = 3.0
    b_vector: tuple | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if not 1 <= self.d <= MAX_DIM:
            raise ValueError(f"d={self.d} outside 1..{MAX_DIM}")
        if self.b_law not in B_LAWS:
            raise ValueError(f"unknown b_law {self.b_law!r}")
        for name in ("sigma_a", "direction_spread", "jitter", "entry_log_sigma",
                     "diag_sigma", "sigma_b"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not 0.0 <= self.coupling < 1.0:
            raise ValueError("coupling must lie in [0, 1)")
        if self.rotation not in ("haar", "identity"):
            raise ValueError("rotation must be 'haar' or 'identity'")
        if self.b_law == "log_pareto" and self.b_tail_index <= 0:
            raise ValueError("b_tail_index must be positive")
        if self.b_law == "constant":
            if self.b_vector is None or len(self.b_vector) != self.d:
                raise ValueError("constant b_law needs a b_vector of length d")
            object.__setattr__(self, "b_vector", tuple(float(x) for x in self.b_vector))
        for name in ("w_center", "w_tilde_center"):
            c = getattr(self, name)
            if c is not None:
                c = tuple(float(x) for x in c)
                if len(c) != self.d or not np.linalg.norm(c) > 0:
                    raise ValueError(f"{name} must be a nonzero vector of length d")
                object.__setattr__(self, name, c)
        if self.family in ("DiagonalCounterexample", "PermutationCounterexample") and self.d != 2:
            raise ValueError(f"{self.family} is defined for d = 2")
        if self.family == "PermutationCounterexample" and not self.perm_lambda > 1:
            raise ValueError("perm_lambda must exceed 1")
        if self.family in ("InvertibleProximal", "Constant"):
            mats = tuple(_tuple_matrix(M) for M in self.matrices)
            if not mats:
                raise ValueError(f"{self.family} needs at least one matrix")
            for M in mats:
                if np.asarray(M).shape != (self.d, self.d):
                    raise ValueError("matrix shape does not match d")
            object.__setattr__(self, "matrices", mats)
            if self.family == "InvertibleProximal":
                w = tuple(float(x) for x in (self.weights or [1.0] * len(mats)))
                if len(w) != len(mats) or min(w) < 0 or not sum(w) > 0:
                    raise ValueError("weights must be nonnegative, one per matrix")
                object.__setattr__(self, "weights", w)
                conj = tuple(bool(x) for x in (self.conjugate or [False] * len(mats)))
                if len(conj) != len(mats):
                    raise ValueError("conjugate needs one flag per matrix")
                object.__setattr__(self, "conjugate", conj)

    def with_shift(self, shift: float) -> "ModelSpec":
        return dataclasses.replace(self, log_scale_shift=float(shift))

    def to_dict(self) -> dict:
        out = {"family": self.family, "d": self.d}
        for f in dataclasses.fields(self):
            if f.name in out:
                continue
            val = getattr(self, f.name)
            if val != f.default:
                out[f.name] = _jsonable(val)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown model keys: {sorted(unknown)}")
        return cls(**data)


def _jsonable(val):
    if isinstance(val, tuple):
        return [_jsonable(v) for v in val]
    return val


# ----------------------------------------------------------------- sampling

def haar_orthogonal(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """``n`` independent Haar-distributed matrices on O(d)."""
    return kernels.haar_orthogonalize(rng.standard_normal((n, d, d)))


def _unit_rows(X: np.ndarray) -> np.ndarray:
    return X / np.linalg.norm(X, axis=-1, keepdims=True)


def _directions(rng, n, d, center, spread):
    if center is None:
        return _unit_rows(rng.standard_normal((n, d)))
    c = np.asarray(center) / np.linalg.norm(center)
    if spread == 0.0:
        return np.broadcast_to(c, (n, d)).copy()
    return _unit_rows(c + spread * rng.standard_normal((n, d)))


def sample_rank_one_components(spec: ModelSpec, rng: np.random.Generator, n: int):
    """Draw ``(a, w, w_tilde)`` for ``n`` rank-one matrices ``a w w_tilde^T``.

    ``a`` already includes the centring shift.
    """
    log_a = spec.mean_a + spec.sigma_a * rng.standard_normal(n) + spec.log_scale_shift
    wt = _directions(rng, n, spec.d, spec.w_tilde_center, spec.direction_spread)
    w = _directions(rng, n, spec.d, spec.w_center, spec.direction_spread)
    if spec.coupling > 0:
        w = _unit_rows((1.0 - spec.coupling) * w + spec.coupling * wt)
    return np.exp(log_a), w, wt


def _sample_A(spec: ModelSpec, rng: np.random.Generator, n: int) -> np.ndarray:
    d = spec.d
    fam = spec.family
    if fam == "Similarity":
        log_a = spec.mean_a + spec.sigma_a * rng.standard_normal(n)
        if spec.rotation == "haar":
            A = haar_orthogonal(rng, n, d)
        else:
            A = np.broadcast_to(np.eye(d), (n, d, d)).copy()
        A *= np.exp(log_a + spec.log_scale_shift)[:, None, None]
        return A
    if fam == "RankOne":
        a, w, wt = sample_rank_one_components(spec, rng, n)
        return a[:, None, None] * w[:, :, None] * wt[:, None, :]
    if fam == "InvertibleProximal":
        mats = np.asarray(spec.matrices)
        p = np.asarray(spec.weights) / sum(spec.weights)
        idx = rng.choice(len(mats), size=n, p=p)
        A = mats[idx].copy()
        conj = np.asarray(spec.conjugate)
        if conj.any():
            Q = haar_orthogonal(rng, n, d)
            mask = conj[idx]
            Qm = Q[mask]
            A[mask] = Qm @ A[mask] @ np.swapaxes(Qm, 1, 2)
        if spec.jitter > 0:
            A += spec.jitter * rng.standard_normal((n, d, d))
        if spec.log_scale_shift != 0.0:
            A *= np.exp(spec.log_scale_shift)
        return A
    if fam == "Nonnegative":
        return np.exp(spec.entry_log_mean + spec.log_scale_shift
                      + spec.entry_log_sigma * rng.standard_normal((n, d, d)))
    if fam == "DiagonalCounterexample":
        alpha = np.exp(spec.diag_sigma * rng.standard_normal(n))
        A = np.zeros((n, 2, 2))
        A[:, 0, 0] = alpha
        A[:, 1, 1] = 1.0 / alpha
        A *= np.exp(spec.log_scale_shift)
        return A
    if fam == "PermutationCounterexample":
        pick = rng.integers(0, 2, size=n)
        lam = spec.perm_lambda
        A = np.zeros((n, 2, 2))
        A[:, 0, 1] = np.where(pick == 0, lam, 1.0)
        A[:, 1, 0] = np.where(pick == 0, 1.0 / lam, 1.0)
        A *= np.exp(spec.log_scale_shift)
        return A
    # Constant
    A = np.broadcast_to(np.asarray(spec.matrices[0]), (n, d, d)).copy()
    if spec.log_scale_shift != 0.0:
        A *= np.exp(spec.log_scale_shift)
    return A


def _sample_B(spec: ModelSpec, rng: np.random.Generator, n: int) -> np.ndarray:
    d = spec.d
    if spec.b_law == "gaussian":
        return spec.sigma_b * rng.standard_normal((n, d))
    if spec.b_law == "log_pareto":
        u = _unit_rows(rng.standard_normal((n, d)))
        return spec.sigma_b * np.exp(rng.pareto(spec.b_tail_index, size=n))[:, None] * u
    return np.broadcast_to(np.asarray(spec.b_vector), (n, d)).copy()


def sample_pairs(spec: ModelSpec, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` i.i.d. pairs; returns arrays of shape (n, d, d) and (n, d).

    All matrices of the batch are drawn before the vectors.
    """
    A = _sample_A(spec, rng, n)
    B = _sample_B(spec, rng, n)
    return A, B


def sample_pair(spec: ModelSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    A, B = sample_pairs(spec, rng, 1)
    return A[0], B[0]


# ------------------------------------------------------------ pair streams

CHUNK_START = 64
CHUNK_MAX = 16384


@dataclass
class PairStream:
    """Chunked source of (A, B) pairs with a fixed chunk schedule.

    Chunks double from 64 up to 16384 pairs.  Any two walks that read the
    same stream see the same matrices in the same order, whatever they do
    with them.
    """

    spec: ModelSpec
    rng: np.random.Generator
    _next: int = field(default=CHUNK_START, init=False)

    def next_chunk(self) -> tuple[np.ndarray, np.ndarray]:
        n = self._next
        self._next = min(CHUNK_MAX, 2 * n)
        return sample_pairs(self.spec, self.rng, n)


# ----------------------------------------------------- invariant directions

def uniform_direction(rng: np.random.Generator, d: int, positive: bool = False) -> np.ndarray:
    g = rng.standard_normal(d)
    if positive:
        g = np.abs(g)
    return g / np.linalg.norm(g)


def sample_invariant_directions(spec: ModelSpec, rng: np.random.Generator, m: int,
                                burn_in: int = 200) -> np.ndarray:
    """``m`` unit vectors approximately distributed as the invariant
    direction law (exactly for Similarity and RankOne)."""
    if burn_in < 0:
        raise ValueError("burn_in must be nonnegative")
    d = spec.d
    positive = spec.family == "Nonnegative"
    if spec.family == "Similarity" and spec.rotation == "haar":
        return _unit_rows(rng.standard_normal((m, d)))
    if spec.family == "RankOne":
        _, w, _ = sample_rank_one_components(spec, rng, m)
        return w
    U = rng.standard_normal((m, d))
    if positive:
        U = np.abs(U)
    U = _unit_rows(U)
    if burn_in == 0:
        return U
    A, _ = sample_pairs(spec, rng, m * burn_in)
    kernels.burn_in_walk(A.reshape(m, burn_in, d, d), U)
    return U


def sample_invariant_direction(spec: ModelSpec, rng: np.random.Generator,
                               burn_in: int = 200) -> ProjectivePoint:
    """One direction approximately distributed as the invariant law."""
    return canonicalize(sample_invariant_directions(spec, rng, 1, burn_in)[0])


# ---------------------------------------------------------------- centring

def calibrate_centring(spec: ModelSpec, tol: float, budget: int,
                       rng: np.random.Generator, horizon: int | None = None,
                       max_rounds: int = 5) -> ModelSpec:
    """Return ``spec`` with ``log_scale_shift`` chosen so the Lyapunov
    exponent is zero to within ``tol``.

    Similarity is exact.  RankOne uses a Monte Carlo estimate of
    ``E ln|<w~_1, w_0>|`` from ``budget`` draws.  InvertibleProximal and
    Nonnegative iterate: estimate the exponent, shift, repeat, pooling the
    unshifted estimates of all rounds.  ``budget`` counts matrix draws.
    """
    from .estimators import estimate_lyapunov

    fam = spec.family
    if fam == "Similarity":
        return spec.with_shift(-spec.mean_a)
    if fam == "RankOne":
        _, w0, _ = sample_rank_one_components(spec.with_shift(0.0), rng, budget)
        _, _, wt1 = sample_rank_one_components(spec.with_shift(0.0), rng, budget)
        vals = np.log(np.abs(np.einsum("ij,ij->i", wt1, w0)))
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / np.sqrt(budget)) if budget > 1 else np.inf
        if se > tol / 2:
            raise CalibrationError(
                f"inner-product expectation stderr {se:.3g} exceeds tol/2", mean + spec.mean_a)
        return spec.with_shift(-spec.mean_a - mean)
    if fam not in ("InvertibleProximal", "Nonnegative"):
        raise ValueError(f"centring calibration does not apply to {fam}")

    if horizon is None:
        horizon = int(min(10**6, max(100, budget // (10 * max_rounds))))
    replicas = max(2, budget // (max_rounds * horizon))
    shift = spec.log_scale_shift
    raw = []
    gamma = np.nan
    for _ in range(max_rounds):
        rep = estimate_lyapunov(spec.with_shift(shift), horizon, replicas, rng)
        gamma = rep.point
        raw.append(gamma - shift)
        if abs(gamma) <= tol:
            return spec.with_shift(shift)
        shift = -float(np.mean(raw))
    raise CalibrationError(f"|gamma| = {abs(gamma):.3g} > tol after {max_rounds} rounds", gamma)


def sample_contractive_fixed_point(spec: ModelSpec, rng: np.random.Generator,
                                   tol: float = 1e-12, max_steps: int = 10**6,
                                   check: bool = True) -> np.ndarray:
    """Truncated backward series ``sum_k A_1 ... A_{k-1} B_k``.

    Summation stops once ``||A_1 ... A_N||`` times the largest ``|B_k|``
    seen so far drops below ``tol``.  With ``check`` the spec is first
    required to have a Lyapunov exponent significantly below zero.
    """
    from .estimators import estimate_lyapunov

    if check:
        rep = estimate_lyapunov(spec, 200, 20, rng)
        if not rep.point + 3 * rep.stderr < 0:
            raise ValueError(f"model is not verifiably contractive (gamma = {rep.point:.3g})")
    d = spec.d
    x = np.zeros(d)
    F = np.eye(d)
    log_scale = 0.0
    b_scale = 0.0
    log_tol = np.log(tol)
    stream = PairStream(spec, rng)
    steps = 0
    while steps < max_steps:
        As, Bs = stream.next_chunk()
        for A, b in zip(As, Bs):
            steps += 1
            x += np.exp(log_scale) * (F @ b)
            b_scale = max(b_scale, float(np.linalg.norm(b)))
            T = F @ A
            nrm = float(np.linalg.norm(T, 2))
            if nrm == 0.0 or b_scale == 0.0:
                return x
            log_scale += np.log(nrm)
            F = T / nrm
            if log_scale + np.log(b_scale) < log_tol:
                return x
    raise RuntimeError(f"series did not converge within {max_steps} steps")
