"""Monte Carlo estimators and diagnostics built on the simulation layer."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .models import (ModelSpec, PairStream, sample_invariant_directions,
                     uniform_direction)
from .simulation import (LadderSample, RncSample, TrajectoryStats,
                         contraction_pair_walk, run_projective_walk)


@dataclass
class EstimateReport:
    point: float
    stderr: float
    n_samples: int
    censored_fraction: float = 0.0
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "point": self.point,
            "stderr": self.stderr,
            "n_samples": self.n_samples,
            "censored_fraction": self.censored_fraction,
            "metadata": self.metadata,
        }


@dataclass
class RecurrenceVerdict:
    label: str
    evidence: dict

    def to_dict(self) -> dict:
        return {"label": self.label, "evidence": self.evidence}


# ------------------------------------------------------------ aggregation

# Every finite double is an integer multiple of 2**-EXPONENT_OFFSET, and its
# square a multiple of 2**-(2 * EXPONENT_OFFSET), so sums are kept as Python
# integers in those units.
EXPONENT_OFFSET = 1126


def _mantissas(xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Integer mantissas and exponents with ``x = M * 2**E`` exactly."""
    frac, exp = np.frexp(xs)
    return (frac * 2.0**53).astype(np.int64), exp.astype(np.int64) - 53


class ExactSum:
    """Exact sum of doubles (or of their squares) held as one integer.

    The total is ``total * 2**-scale``.  Addition and merging are exact, so
    the result does not depend on how terms were batched or ordered.
    Non-finite terms are kept apart in ``special`` and make the sum
    non-finite.
    """

    __slots__ = ("total", "squares", "special")

    def __init__(self, squares: bool = False):
        self.total = 0
        self.squares = squares
        self.special = 0.0

    @property
    def scale(self) -> int:
        return 2 * EXPONENT_OFFSET if self.squares else EXPONENT_OFFSET

    def add(self, x: float) -> None:
        self.extend(np.array([x], dtype=np.float64))

    def extend(self, xs) -> "ExactSum":
        xs = np.asarray(xs, dtype=np.float64).ravel()
        finite = np.isfinite(xs)
        if not finite.all():
            bad = xs[~finite]
            self.special += float(np.sum(bad * bad if self.squares else bad))
            xs = xs[finite]
        if xs.size == 0:
            return self
        M, E = _mantissas(xs)
        if self.squares:
            E = 2 * E
        E = E + self.scale
        for e in np.unique(E):
            m = M[E == e].astype(object)
            part = int((m * m).sum() if self.squares else m.sum())
            self.total += part << int(e)
        return self

    def merge(self, other: "ExactSum") -> "ExactSum":
        if self.squares != other.squares:
            raise ValueError("cannot merge a sum of squares with a plain sum")
        out = ExactSum(self.squares)
        out.total = self.total + other.total
        out.special = self.special + other.special
        return out

    def exact(self) -> Fraction:
        if self.special != 0.0 or math.isnan(self.special):
            raise ValueError("sum has non-finite terms")
        return Fraction(self.total, 1 << self.scale)

    def value(self) -> float:
        if self.special != 0.0 or math.isnan(self.special):
            return self.special
        return float(Fraction(self.total, 1 << self.scale))


class MomentAccumulator:
    """Mergeable count, mean and variance of a stream of floats.

    Sums and sums of squares are exact, so merged batches give bit-identical
    results to a single pass.
    """

    def __init__(self):
        self.n = 0
        self.s1 = ExactSum()
        self.s2 = ExactSum(squares=True)

    def add(self, x: float) -> None:
        self.extend([x])

    def extend(self, xs) -> "MomentAccumulator":
        xs = np.asarray(xs, dtype=np.float64).ravel()
        self.n += xs.size
        self.s1.extend(xs)
        self.s2.extend(xs)
        return self

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        out = MomentAccumulator()
        out.n = self.n + other.n
        out.s1 = self.s1.merge(other.s1)
        out.s2 = self.s2.merge(other.s2)
        return out

    @property
    def finite(self) -> bool:
        return self.s1.special == 0.0

    @property
    def mean(self) -> float:
        if not self.n:
            return np.nan
        if not self.finite:
            return self.s1.special
        return float(self.s1.exact() / self.n)

    @property
    def variance(self) -> float:
        if self.n < 2 or not self.finite:
            return np.nan
        s1 = self.s1.exact()
        var = (self.s2.exact() - s1 * s1 / self.n) / (self.n - 1)
        return float(var)

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance / self.n) if self.n >= 2 and self.finite else np.nan

    def report(self, **metadata) -> EstimateReport:
        return EstimateReport(self.mean, self.stderr, self.n, 0.0, dict(metadata))


def mean_report(values, **metadata) -> EstimateReport:
    return MomentAccumulator().extend(values).report(**metadata)


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Slope, its standard error and intercept of a least-squares line."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xm = x.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - y.mean())) / sxx)
    intercept = float(y.mean() - slope * xm)
    if len(x) > 2:
        resid = y - intercept - slope * x
        se = math.sqrt(float(np.sum(resid**2)) / (len(x) - 2) / sxx)
    else:
        se = np.nan
    return slope, se, intercept


# --------------------------------------------------------------- Lyapunov

def lyapunov_replica(spec: ModelSpec, n: int, rng: np.random.Generator) -> float:
    """``(1/n) ln||A_n ... A_1||`` along one stream."""
    F = np.eye(spec.d)
    state = np.zeros(1)
    stream = PairStream(spec, rng)
    done = 0
    while done < n:
        As, _ = stream.next_chunk()
        take = min(len(As), n - done)
        if not kernels.lyapunov_walk(As[:take], F, state):
            return -np.inf
        done += take
    return float(state[0]) / n


def estimate_lyapunov(spec: ModelSpec, n: int, m: int, rng: np.random.Generator) -> EstimateReport:
    """Mean of ``(1/n) ln||A_{n,1}||`` over ``m`` independent replicas."""
    if n < 1 or m < 2:
        raise ValueError("need n >= 1 and m >= 2")
    vals = [lyapunov_replica(spec, n, child) for child in rng.spawn(m)]
    return lyapunov_from_replicas(vals, n)


def lyapunov_from_replicas(vals: Sequence[float], n: int) -> EstimateReport:
    vals = np.asarray(vals, dtype=float)
    if not np.all(np.isfinite(vals)):
        rep = EstimateReport(-np.inf, np.nan, len(vals), 0.0)
    else:
        rep = mean_report(vals)
    rep.metadata.update(horizon=int(n), replicas=len(vals))
    return rep


# ---------------------------------------------------------------- variance

def walk_endpoint(spec: ModelSpec, n: int, rng: np.random.Generator, burn_in: int = 200) -> float:
    """``S_n`` started from a draw of the invariant direction law."""
    v0 = sample_invariant_directions(spec, rng, 1, burn_in)[0]
    return float(run_projective_walk(spec, v0, n, rng, stride=n).S_series[-1])


def sigma2_from_endpoints(endpoints: Sequence[float], n: int) -> EstimateReport:
    """Replica variance of ``S_n / sqrt(n)`` with a fourth-moment stderr."""
    z = np.asarray(endpoints, dtype=float) / math.sqrt(n)
    m = len(z)
    c = z - z.mean()
    var = float(np.sum(c**2) / (m - 1))
    m4 = float(np.mean(c**4))
    se = math.sqrt(max(0.0, m4 - var**2) / m)
    return EstimateReport(var, se, m, 0.0, {"horizon": int(n), "replicas": m,
                                             "mean_increment": float(z.mean() / math.sqrt(n))})


def estimate_sigma2(spec: ModelSpec, n: int, m: int, rng: np.random.Generator,
                    burn_in: int = 200) -> EstimateReport:
    """Asymptotic variance of the gain cocycle from ``m`` replicas of length ``n``."""
    if m < 2:
        raise ValueError("need at least two replicas")
    ends = [walk_endpoint(spec, n, child, burn_in) for child in rng.spawn(m)]
    return sigma2_from_endpoints(ends, n)


def estimate_sigma2_batch_means(spec: ModelSpec, n: int, n_batches: int,
                                rng: np.random.Generator, burn_in: int = 200) -> EstimateReport:
    """Batch-means variance estimate from one walk of ``n`` steps."""
    b = n // n_batches
    if b < 1 or n_batches < 2:
        raise ValueError("need at least two nonempty batches")
    v0 = sample_invariant_directions(spec, rng, 1, burn_in)[0]
    S = run_projective_walk(spec, v0, b * n_batches, rng, stride=b).S_series
    sums = np.diff(np.concatenate([[0.0], S]))
    est = float(np.var(sums, ddof=1) / b)
    se = est * math.sqrt(2.0 / (n_batches - 1))
    return EstimateReport(est, se, n_batches, 0.0, {"batch_size": b, "batches": n_batches})


# ------------------------------------------------------------ tail exponent

def fit_tail_exponent(samples: Sequence[LadderSample], n_min: int = 16,
                      min_survivors: int = 30) -> EstimateReport:
    """Least-squares slope of ``ln P(l > n)`` against ``ln n`` on a dyadic grid.

    The grid runs over powers of two in ``[n_min, cap / 4]``; censored
    samples count as survivors.  Grid points with fewer than
    ``min_survivors`` survivors are dropped and the truncation is recorded.
    """
    if not samples:
        raise ValueError("no samples")
    values = np.array([s.value for s in samples], dtype=np.int64)
    censored = np.array([s.censored for s in samples], dtype=bool)
    cap = max(s.cap for s in samples)
    N = len(values)
    grid = []
    g = 1 << max(0, int(math.ceil(math.log2(n_min))))
    while g <= cap // 4:
        grid.append(g)
        g <<= 1
    counts = np.array([int(np.sum((values > g) | censored)) for g in grid], dtype=np.int64)
    keep = counts >= min_survivors
    truncated = bool(len(grid) and not keep.all())
    if keep.sum() < 2:
        raise ValueError("survival function is degenerate on the grid; slope undefined")
    x = np.log(np.array(grid, dtype=float)[keep])
    y = np.log(counts[keep] / N)
    slope, se, intercept = _ols(x, y)
    return EstimateReport(slope, se, N, float(censored.mean()), {
        "cap": int(cap), "grid": [int(v) for v in np.array(grid)[keep]],
        "grid_truncated": truncated, "intercept": intercept,
        "rho": float(samples[0].rho),
    })


# --------------------------------------------------------------- contraction

NUMERICAL_FLOOR = 1e-15
RATE_RESOLUTION = 1e-6


def default_metric(spec: ModelSpec) -> str:
    return "hennion" if spec.family == "Nonnegative" else "sine"


def contraction_curves(spec: ModelSpec, n: int, m_pairs: int, rng: np.random.Generator,
                       metric: str | None = None, also_sine: bool = False):
    """Distance series of ``m_pairs`` independent random pairs, shape (m, n).

    Series cut short by absorption are padded with zeros.  With
    ``also_sine`` the same pairs and matrices are replayed under the sine
    distance and both arrays are returned.
    """
    metric = metric or default_metric(spec)
    positive = metric == "hennion"
    out = np.zeros((m_pairs, n))
    sine = np.zeros((m_pairs, n)) if also_sine else None
    for i, child in enumerate(rng.spawn(m_pairs)):
        u = uniform_direction(child, spec.d, positive)
        v = uniform_direction(child, spec.d, positive)
        replay = copy.deepcopy(child)
        series = contraction_pair_walk(spec, u, v, n, child, metric)
        out[i, :len(series)] = series
        if also_sine:
            series = contraction_pair_walk(spec, u, v, n, replay, "sine")
            sine[i, :len(series)] = series
    return (out, sine) if also_sine else out


def _log_mean_slope(curves: np.ndarray, k_end: int) -> float:
    mean = curves[:, :k_end].mean(axis=0)
    return _ols(np.arange(1, k_end + 1), np.log(mean))[0]


def contraction_rate_from_curves(curves: np.ndarray, groups: int = 20,
                                 floor: float = NUMERICAL_FLOOR, metric: str = "sine") -> EstimateReport:
    """Fit ``rho = exp(slope)`` of the log mean distance against the step.

    The fit uses steps before the mean first drops to ``floor``.  The
    standard error is a grouped jackknife over pairs.  A mean already at
    the floor after one step is reported as immediate collapse (rho = 0).
    """
    m, n = curves.shape
    mean = curves.mean(axis=0)
    below = np.flatnonzero(mean <= floor)
    k_end = int(below[0]) if below.size else n
    meta = {"steps": n, "pairs": m, "metric": metric, "fit_steps": k_end}
    if k_end < 3:
        meta.update(collapse_step=k_end + 1, contraction=True)
        return EstimateReport(0.0, 0.0, m, 0.0, meta)
    slope = _log_mean_slope(curves, k_end)
    groups = max(2, min(groups, m))
    idx = np.array_split(np.arange(m), groups)
    jack = np.array([_log_mean_slope(np.delete(curves, g, axis=0), k_end) for g in idx])
    se_slope = math.sqrt((groups - 1) / groups * float(np.sum((jack - jack.mean()) ** 2)))
    rho = math.exp(slope)
    se = rho * se_slope
    meta.update(slope=slope, slope_stderr=se_slope,
                contraction=bool(rho + 3 * se < 1.0 - RATE_RESOLUTION))
    return EstimateReport(rho, se, m, 0.0, meta)


def fit_contraction_rate(spec: ModelSpec, n: int, m_pairs: int, rng: np.random.Generator,
                         metric: str | None = None) -> EstimateReport:
    """Exponential decay rate of the mean distance between coupled directions.

    Nonnegative models use the Hennion distance on the positive cone and
    additionally report whether the mean sine distance stayed below twice
    the mean Hennion distance at every step.
    """
    metric = metric or default_metric(spec)
    if spec.family in ("DiagonalCounterexample", "PermutationCounterexample", "Constant"):
        raise ValueError(f"contraction is not defined for {spec.family}")
    if metric != "hennion":
        return contraction_rate_from_curves(contraction_curves(spec, n, m_pairs, rng, metric),
                                            metric=metric)
    curves, sine = contraction_curves(spec, n, m_pairs, rng, metric, also_sine=True)
    rep = contraction_rate_from_curves(curves, metric=metric)
    rep.metadata["sine_rate"] = contraction_rate_from_curves(sine).point
    rep.metadata["sine_below_twice_hennion"] = bool(np.all(sine <= 2 * curves + 1e-15))
    return rep


# -------------------------------------------------------------- RNC moments

def rnc_moment_curve(samples: Sequence[RncSample], beta_grid: Sequence[float],
                     unreliable_fraction: float = 0.5) -> dict[float, EstimateReport]:
    """Empirical ``E(ln C)^beta`` at every nested horizon shared by the samples.

    Each report's ``point`` is the estimate at the largest horizon; the full
    profile is in ``metadata["profile"]`` as ``{horizon: [mean, stderr]}``.
    Censored samples (infinite coefficient) are excluded and counted.
    """
    if not samples:
        raise ValueError("no samples")
    horizons = sorted(set.intersection(*(set(s.profile) | {s.horizon} for s in samples)))
    finite = [s for s in samples if np.isfinite(s.log_value)]
    censored_fraction = 1.0 - len(finite) / len(samples)
    stabilized = float(np.mean([s.stabilized for s in samples]))
    out = {}
    for beta in beta_grid:
        profile = {}
        for h in horizons:
            vals = np.array([s.profile.get(h, s.log_value) if h != s.horizon else s.log_value
                             for s in finite])
            vals = np.maximum(vals, 0.0) ** beta
            acc = MomentAccumulator().extend(vals)
            profile[int(h)] = [acc.mean, acc.stderr]
        top = profile[int(horizons[-1])]
        meta = {"profile": profile, "stabilized_fraction": stabilized,
                "unreliable": bool(1.0 - stabilized > unreliable_fraction),
                "horizons": [int(h) for h in horizons], "cap": int(horizons[-1])}
        if len(horizons) >= 2:
            prev = profile[int(horizons[-2])][0]
            meta["last_relative_change"] = (abs(top[0] - prev) / abs(prev)) if prev else 0.0
        out[float(beta)] = EstimateReport(top[0], top[1], len(finite), censored_fraction, meta)
    return out


# --------------------------------------------------------------- recurrence

@dataclass(frozen=True)
class RecurrenceThresholds:
    recurrent_frequency: float = 0.01
    transient_frequency: float = 1e-3
    n_sigma: float = 3.0
    min_trajectories: int = 100
    min_horizon: int = 10**5
    bootstrap: int = 200


def _median_slope(lognorm: np.ndarray, steps: np.ndarray) -> float:
    med = np.median(lognorm, axis=0)
    return _ols(steps, med)[0]


def classify_recurrence(stats: Sequence[TrajectoryStats], K: float,
                        thresholds: RecurrenceThresholds = RecurrenceThresholds(),
                        rng: np.random.Generator | None = None) -> RecurrenceVerdict:
    """Label a batch of trajectories recurrent-like, transient-like or inconclusive.

    Evidence: the mean return frequency to the ball of radius ``K`` over the
    last window, the slope of the cross-trajectory median of ``ln(1+|X_n|)``
    against ``n`` over the second half of the run (bootstrap stderr over
    trajectories), and the fraction of trajectories that stayed outside the
    ball for the whole last window.
    """
    if len(stats) < thresholds.min_trajectories:
        raise ValueError(f"need at least {thresholds.min_trajectories} trajectories")
    n = stats[0].n_steps
    if any(s.n_steps != n for s in stats):
        raise ValueError("trajectories must share a horizon")
    if n < thresholds.min_horizon:
        raise ValueError(f"horizon must be at least {thresholds.min_horizon}")
    if any(s.K != K for s in stats):
        raise ValueError("trajectories were run with a different radius")
    window = stats[0].window
    last_width = n - (len(stats[0].window_returns) - 1) * window
    freq = np.array([s.window_returns[-1] / last_width for s in stats])
    f_mean = float(freq.mean())
    f_se = float(freq.std(ddof=1) / math.sqrt(len(freq)))
    steps = stats[0].sample_steps
    half = steps > n // 2
    lognorm = np.array([s.log_norm_X[half] for s in stats])
    slope = _median_slope(lognorm, steps[half])
    rng = rng or np.random.default_rng(0)
    boot = [_median_slope(lognorm[rng.integers(0, len(stats), len(stats))], steps[half])
            for _ in range(thresholds.bootstrap)]
    slope_se = float(np.std(boot, ddof=1))
    outside = float(np.mean([s.min_norm_windows[-1] > K for s in stats]))
    t = thresholds
    if f_mean - t.n_sigma * f_se > t.recurrent_frequency:
        label = "recurrent-like"
    elif slope - t.n_sigma * slope_se > 0 and f_mean < t.transient_frequency:
        label = "transient-like"
    else:
        label = "inconclusive"
    evidence = {
        "late_return_frequency": f_mean,
        "late_return_frequency_stderr": f_se,
        "median_lognorm_slope": slope,
        "median_lognorm_slope_stderr": slope_se,
        "fraction_outside_last_window": outside,
        "trajectories": len(stats),
        "horizon": int(n),
        "K": float(K),
    }
    return RecurrenceVerdict(label, evidence)


# ---------------------------------------------------------------- max lemma

def max_lemma_constant(alpha: float, beta: float, rtol: float = 1e-9) -> float:
    """``sum_{i >= 1} i^(-p)`` with ``p = alpha (beta - 1) > 1``.

    Direct summation up to ``N`` plus an Euler-Maclaurin tail, with ``N``
    doubled until the last correction term is below ``rtol`` of the total.
    """
    p = alpha * (beta - 1.0)
    if not p > 1.0:
        raise ValueError("the series diverges unless alpha (beta - 1) > 1")
    N = 64
    while True:
        i = np.arange(1, N, dtype=float)
        head = math.fsum(i ** (-p))
        # tail from N: integral + half term + first Bernoulli corrections
        b2 = p * N ** (-p - 1) / 12.0
        b4 = p * (p + 1) * (p + 2) * N ** (-p - 3) / 720.0
        tail = N ** (1 - p) / (p - 1) + 0.5 * N ** (-p) + b2 - b4
        total = head + tail
        if b4 < rtol * total * 1e-3 or N > 2**22:
            return total
        N *= 2


@dataclass
class MaxSampler:
    """Law of a nonnegative sequence ``Y_1, Y_2, ...``.

    ``max_of(rng, k)`` draws ``max(Y_1, ..., Y_k)`` and ``marginal(rng, size)``
    draws the coordinate with the largest ``beta``-moment (any coordinate
    for stationary sequences).
    """

    max_of: Callable[[np.random.Generator, int], float]
    marginal: Callable[[np.random.Generator, int], np.ndarray]
    name: str = ""

    @classmethod
    def iid(cls, marginal: Callable[[np.random.Generator, int], np.ndarray],
            isf: Callable[[np.ndarray], np.ndarray] | None = None, name: str = "") -> "MaxSampler":
        """I.i.d. sequence.

        With the inverse survival function ``isf`` the max of ``k`` draws is
        ``isf(1 - U^(1/k))``, exact for any ``k``; otherwise it is drawn by
        brute force in chunks.
        """
        if isf is None:
            def max_of(rng, k, chunk=1 << 20):
                best = -np.inf
                while k > 0:
                    take = min(k, chunk)
                    best = max(best, float(np.max(marginal(rng, take))))
                    k -= take
                return best
        else:
            def max_of(rng, k):
                q = -np.expm1(np.log(rng.random()) / k)
                return float(isf(q))
        return cls(max_of, marginal, name)


@dataclass
class LemmaCheck:
    passed: bool
    ratio: float
    lhs: EstimateReport
    rhs: float
    rhs_stderr: float
    constant: float


def lemma_max_bound_check(Y: MaxSampler, tau: Callable[[np.random.Generator, int], np.ndarray],
                          alpha: float, beta: float, trials: int,
                          rng: np.random.Generator) -> LemmaCheck:
    """Monte Carlo check of
    ``E max_{i <= tau} Y_i <= C(alpha, beta) E(tau^alpha)^((beta-1)/beta) sup_i E(Y_i^beta)^(1/beta)``.

    ``tau(rng, size)`` draws positive integers.  Passes when the left side
    is at most the right side plus three combined standard errors.
    """
    if not beta > (1.0 + alpha) / alpha:
        raise ValueError("requires beta > (1 + alpha) / alpha")
    C = max_lemma_constant(alpha, beta)
    r_tau, r_max, r_mom = rng.spawn(3)
    taus = np.asarray(tau(r_tau, trials), dtype=np.int64)
    if np.any(taus < 1):
        raise ValueError("tau must be a positive integer")
    lhs_vals = np.array([Y.max_of(r_max, int(t)) for t in taus])
    lhs = mean_report(lhs_vals)
    ta = MomentAccumulator().extend(taus.astype(float) ** alpha)
    yb = MomentAccumulator().extend(Y.marginal(r_mom, trials) ** beta)
    e_tau, e_y = ta.mean, yb.mean
    rhs = C * e_tau ** ((beta - 1) / beta) * e_y ** (1 / beta)
    # delta method on the product of powers of two independent means
    rel = 0.0
    if e_tau > 0:
        rel += ((beta - 1) / beta * ta.stderr / e_tau) ** 2
    if e_y > 0:
        rel += (1 / beta * yb.stderr / e_y) ** 2
    rhs_se = rhs * math.sqrt(rel)
    combined = math.sqrt(lhs.stderr**2 + rhs_se**2)
    passed = bool(lhs.point <= rhs + 3 * combined)
    return LemmaCheck(passed, lhs.point / rhs if rhs > 0 else np.inf, lhs, rhs, rhs_se, C)
