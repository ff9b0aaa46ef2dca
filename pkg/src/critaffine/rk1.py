"""Markov-walk view of rank-one models: the chain of signed rays, its
two-step stationarity, the weight function and the closed-form variance."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from . import kernels
from .estimators import EstimateReport, MomentAccumulator
from .models import ModelSpec, PairStream, sample_pairs, sample_rank_one_components
from .projective import ProjectivePoint, canonicalize, zero_point
from .simulation import _start_vector

DEFAULT_DELTA = 1.1
DEFAULT_P = 2.2


@dataclass(frozen=True)
class SignedRay:
    """Nonzero vector up to sign, stored as ``(ln|z|, direction)``.

    The absorbed zero state has ``log_norm = -inf`` and a zero direction.
    """

    log_norm: float
    direction: ProjectivePoint

    def __post_init__(self):
        if self.direction.is_zero != (self.log_norm == -np.inf):
            raise ValueError("zero direction goes with log_norm = -inf and nothing else")

    @property
    def absorbed(self) -> bool:
        return self.direction.is_zero

    @classmethod
    def from_vector(cls, z) -> "SignedRay":
        z = np.asarray(z, dtype=float)
        nz = float(np.linalg.norm(z))
        if nz == 0.0:
            return cls(-np.inf, zero_point(len(z)))
        return cls(math.log(nz), canonicalize(z))


def _require_rank_one(spec: ModelSpec) -> None:
    if spec.family != "RankOne":
        raise ValueError(f"rank-one machinery needs a RankOne model, got {spec.family}")


def _f_after(As: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise ``ln|A_i v_i|`` and the unit images (rows of zeros if absorbed)."""
    W = np.einsum("nij,nj->ni", As, V)
    g = np.linalg.norm(W, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.log(g)
        U = np.where(g[:, None] > 0, W / g[:, None], 0.0)
    return f, U


def step_Z(spec: ModelSpec, z: SignedRay, rng: np.random.Generator) -> SignedRay:
    """One step ``z -> +-A z / |z|`` of the ray chain."""
    if z.absorbed:
        raise ValueError("cannot step from the absorbed state")
    A, _ = sample_pairs(spec, rng, 1)
    return SignedRay.from_vector(A[0] @ z.direction.rep)


def z_chain(spec: ModelSpec, z0: SignedRay, n: int, rng: np.random.Generator) -> tuple[np.ndarray, SignedRay]:
    """Values ``f(Z_1), ..., f(Z_n)`` and the final ray.

    Reads the same pair stream as ``run_projective_walk``, so with the
    same generator state the running sums of the values reproduce its
    ``S_n`` exactly.  After absorption the remaining values are ``-inf``.
    """
    u = _start_vector(z0.direction, spec.d)
    out = np.full(n, -np.inf)
    stream = PairStream(spec, rng)
    done = 0
    while done < n:
        As, _ = stream.next_chunk()
        take = min(len(As), n - done)
        used = kernels.increment_walk(As[:take], u, out, done)
        done += used
        if used < take or out[done - 1] == -np.inf:
            return out, SignedRay(-np.inf, zero_point(spec.d))
    return out, SignedRay(float(out[-1]), canonicalize(u))


def _chain_values(spec: ModelSpec, v: np.ndarray, steps: int, size: int,
                  rng: np.random.Generator) -> np.ndarray:
    """``f(Z_steps)`` for ``size`` independent chains started at direction ``v``."""
    V = np.broadcast_to(v, (size, spec.d)).copy()
    f = np.zeros(size)
    for _ in range(steps):
        As, _ = sample_pairs(spec, rng, size)
        f, V = _f_after(As, V)
    return f


def stationary_values(spec: ModelSpec, size: int, rng: np.random.Generator) -> np.ndarray:
    """``f(Z)`` with ``Z`` drawn from the stationary law: ``ln|A v|`` with
    ``v`` an independent draw of the invariant direction."""
    _require_rank_one(spec)
    _, w, _ = sample_rank_one_components(spec, rng, size)
    As, _ = sample_pairs(spec, rng, size)
    return _f_after(As, w)[0]


def two_step_stationarity_check(spec: ModelSpec, z_list: Sequence[SignedRay], n_samples: int,
                                rng: np.random.Generator, steps: int = 2,
                                common_random_numbers: bool = False,
                                against_stationary: bool = True) -> float:
    """Largest two-sample Kolmogorov-Smirnov statistic between the laws of
    ``f(Z_steps)`` from each start, and against the stationary law.

    With ``common_random_numbers`` every start reuses the same matrices,
    so identical starts give identical samples.
    """
    _require_rank_one(spec)
    if not z_list:
        raise ValueError("need at least one start")
    samples = []
    if common_random_numbers:
        state = rng.bit_generator.state
        for z in z_list:
            rng.bit_generator.state = state
            samples.append(_chain_values(spec, _start_vector(z.direction, spec.d), steps, n_samples, rng))
    else:
        for z, child in zip(z_list, rng.spawn(len(z_list))):
            samples.append(_chain_values(spec, _start_vector(z.direction, spec.d), steps, n_samples, child))
    if against_stationary:
        samples.append(stationary_values(spec, n_samples, rng))
    worst = 0.0
    for i in range(len(samples)):
        for j in range(i + 1, len(samples)):
            worst = max(worst, float(stats.ks_2samp(samples[i], samples[j]).statistic))
    return worst


def ks_threshold(n: int, m: int | None = None, level_coefficient: float = 1.36) -> float:
    """Asymptotic two-sample KS critical value ``c sqrt((n + m) / (n m))``."""
    m = n if m is None else m
    return level_coefficient * math.sqrt((n + m) / (n * m))


# ---------------------------------------------------------------- weight N

@dataclass
class WeightModel:
    """Monte Carlo ingredients for evaluating the weight ``N`` at many rays.

    ``inner`` holds matrices shared by all evaluations of the one-step term
    and ``stationary_term`` is ``(E_stat |f|^(delta p))^(1/p)``.
    """

    spec: ModelSpec
    delta: float
    p: float
    inner: np.ndarray
    stationary_term: float
    stationary_stderr: float

    @classmethod
    def build(cls, spec: ModelSpec, n_samples: int, rng: np.random.Generator,
              delta: float = DEFAULT_DELTA, p: float = DEFAULT_P) -> "WeightModel":
        _require_rank_one(spec)
        if not delta > 1 or not p > 2:
            raise ValueError("need delta > 1 and p > 2")
        r_inner, r_stat = rng.spawn(2)
        inner, _ = sample_pairs(spec, r_inner, n_samples)
        acc = MomentAccumulator().extend(np.abs(stationary_values(spec, n_samples, r_stat)) ** (delta * p))
        term = acc.mean ** (1 / p)
        se = term / p * acc.stderr / acc.mean if acc.mean > 0 else 0.0
        return cls(spec, delta, p, inner, term, se)

    def one_step_terms(self, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(P |f|^(delta p)(v))^(1/p)`` for each row of ``V`` with stderr."""
        V = np.atleast_2d(V)
        W = np.einsum("mij,kj->kmi", self.inner, V)
        with np.errstate(divide="ignore"):
            f = np.log(np.linalg.norm(W, axis=2))
        h = np.abs(f) ** (self.delta * self.p)
        mean = h.mean(axis=1)
        sd = h.std(axis=1, ddof=1)
        term = mean ** (1 / self.p)
        with np.errstate(divide="ignore", invalid="ignore"):
            se = np.where(mean > 0, term / self.p * sd / np.sqrt(h.shape[1]) / mean, 0.0)
        return term, se

    def evaluate(self, log_norms: np.ndarray, V: np.ndarray) -> np.ndarray:
        """``N`` at the rays ``(log_norms[k], V[k])``; the sup over time
        reduces to ``n in {0, 1, 2}`` by two-step stationarity."""
        zero_term = np.abs(np.asarray(log_norms, dtype=float)) ** self.delta
        one, _ = self.one_step_terms(V)
        return np.maximum(np.maximum(zero_term, one), self.stationary_term)


def weight_N(spec: ModelSpec, z: SignedRay, delta: float = DEFAULT_DELTA, p: float = DEFAULT_P,
             n_samples: int = 10**5, rng: np.random.Generator | None = None) -> EstimateReport:
    """Estimate ``N(z) = sup_n (P^n |f|^(delta p)(z))^(1/p)``.

    The point is the largest of ``|f(z)|^delta`` and the Monte Carlo one-step
    and stationary terms; the stderr is that of the term attaining the max.
    """
    if z.absorbed:
        raise ValueError("N is infinite at the absorbed state")
    rng = rng if rng is not None else np.random.default_rng()
    wm = WeightModel.build(spec, n_samples, rng, delta, p)
    zero_term = abs(z.log_norm) ** delta
    one, one_se = wm.one_step_terms(z.direction.rep[None, :])
    terms = [(zero_term, 0.0), (float(one[0]), float(one_se[0])),
             (wm.stationary_term, wm.stationary_stderr)]
    k = int(np.argmax([t[0] for t in terms]))
    return EstimateReport(terms[k][0], terms[k][1], n_samples, 0.0, {
        "zero_step": terms[0][0], "one_step": terms[1][0], "stationary": terms[2][0],
        "attained_at": k, "delta": delta, "p": p})


def pn_weight_check(spec: ModelSpec, z: SignedRay, n_max: int = 5, delta: float = DEFAULT_DELTA,
                    p: float = DEFAULT_P, outer: int = 2000, inner: int = 2000,
                    rng: np.random.Generator | None = None) -> list[dict]:
    """Compare ``P^n N(z)`` and ``(P^n N^p(z))^(1/p)`` with ``3 N(z)`` for
    ``n = 1..n_max``.

    Each entry holds both estimates with stderr, the bound and ``ok``,
    which allows three combined standard errors of slack.
    """
    _require_rank_one(spec)
    rng = rng if rng is not None else np.random.default_rng()
    r_w, r_chain = rng.spawn(2)
    wm = WeightModel.build(spec, inner, r_w, delta, p)
    N0 = float(wm.evaluate(np.array([z.log_norm]), z.direction.rep[None, :])[0])
    V = np.broadcast_to(z.direction.rep, (outer, spec.d)).copy()
    out = []
    for n in range(1, n_max + 1):
        As, _ = sample_pairs(spec, r_chain, outer)
        f, V = _f_after(As, V)
        live = np.isfinite(f)
        Nz = wm.evaluate(f[live], V[live])
        mean = float(Nz.mean())
        se = float(Nz.std(ddof=1) / math.sqrt(len(Nz)))
        mp = float(np.mean(Nz ** p))
        mp_se = float(np.std(Nz ** p, ddof=1) / math.sqrt(len(Nz)))
        pnorm = mp ** (1 / p)
        pnorm_se = pnorm / p * mp_se / mp if mp > 0 else 0.0
        bound = 3 * N0
        bound_se = 3 * wm.stationary_stderr
        ok = (mean <= bound + 3 * math.hypot(se, bound_se)
              and pnorm <= bound + 3 * math.hypot(pnorm_se, bound_se))
        out.append({"n": n, "PnN": mean, "PnN_stderr": se, "PnNp_root": pnorm,
                    "PnNp_root_stderr": pnorm_se, "bound": bound, "ok": bool(ok),
                    "absorbed": int((~live).sum())})
    return out


# ----------------------------------------------------------------- variance

def rank_one_increments(spec: ModelSpec, n_samples: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Consecutive increments ``(Y_1, Y_2)`` with
    ``Y_k = ln a_k + ln|<w~_k, w_{k-1}>|``, one pair per independent triple."""
    _require_rank_one(spec)
    _, w0, _ = sample_rank_one_components(spec, rng, n_samples)
    a1, w1, wt1 = sample_rank_one_components(spec, rng, n_samples)
    a2, _, wt2 = sample_rank_one_components(spec, rng, n_samples)
    with np.errstate(divide="ignore"):
        Y1 = np.log(a1) + np.log(np.abs(np.einsum("ij,ij->i", wt1, w0)))
        Y2 = np.log(a2) + np.log(np.abs(np.einsum("ij,ij->i", wt2, w1)))
    return Y1, Y2


def rk1_sigma2_closed_form(spec: ModelSpec, n_samples: int, rng: np.random.Generator) -> EstimateReport:
    """``sigma^2 = Var(Y_2) + 2 cov(Y_2, Y_1)`` from i.i.d. triples.

    The stderr is from the per-triple influence terms.  ``metadata
    ["degenerate"]`` is set when the estimate is not significantly positive.
    """
    Y1, Y2 = rank_one_increments(spec, n_samples, rng)
    m1, m2 = Y1.mean(), Y2.mean()
    c1, c2 = Y1 - m1, Y2 - m2
    g = c2 * c2 + 2 * c2 * c1
    point = float(g.mean() * n_samples / (n_samples - 1))
    se = float(g.std(ddof=1) / math.sqrt(n_samples))
    var = float(np.var(Y2, ddof=1))
    cov = float(np.sum(c1 * c2) / (n_samples - 1))
    degenerate = bool(point <= 3 * se or point < 1e-12)
    return EstimateReport(point, se, n_samples, 0.0, {
        "variance": var, "covariance": cov, "degenerate": degenerate})


def increment_correlation(spec: ModelSpec, n: int, lag: int, rng: np.random.Generator) -> EstimateReport:
    """Sample correlation of ``Y_k`` and ``Y_{k+lag}`` along one stationary
    chain of length ``n``; the stderr is the null value ``1/sqrt(n - lag)``."""
    _require_rank_one(spec)
    _, w0, _ = sample_rank_one_components(spec, rng, 1)
    Y, _ = z_chain(spec, SignedRay.from_vector(w0[0]), n, rng)
    a, b = Y[:-lag], Y[lag:]
    r = float(np.corrcoef(a, b)[0, 1])
    return EstimateReport(r, 1.0 / math.sqrt(len(a)), len(a), 0.0, {"lag": lag})
