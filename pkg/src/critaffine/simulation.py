"""Trajectory-level simulation: the affine chain, the projective walk and
its gain cocycle, ladder times, reverse norm control coefficients, the
i.i.d. block decomposition and coupled pair walks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .models import ModelSpec, PairStream, sample_invariant_directions
from .projective import ProjectivePoint, canonical_sign_vector, canonicalize

DEFAULT_LADDER_CAP = 10**5
DEFAULT_RNC_HORIZON = 10**4
# increases of the running sup smaller than this (in log units) are
# treated as round-off when deciding whether a sample has stabilized
RNC_INCREASE_TOL = 1e-9


@dataclass
class TrajectoryStats:
    """Streamed summary of one affine trajectory.

    ``log_norm_X[j]`` and ``S_series[j]`` are sampled after step
    ``(j + 1) * stride``.  Window ``j`` covers steps ``j * window + 1`` to
    ``(j + 1) * window``; ``window_returns`` counts the steps inside it with
    ``|X_n| <= K``.
    """

    n_steps: int
    K: float
    stride: int
    window: int
    log_norm_X: np.ndarray
    min_norm_windows: np.ndarray
    window_returns: np.ndarray
    return_count: int
    S_series: np.ndarray
    final_direction: ProjectivePoint
    final_state: np.ndarray

    @property
    def sample_steps(self) -> np.ndarray:
        return self.stride * np.arange(1, len(self.log_norm_X) + 1)


@dataclass(frozen=True)
class LadderSample:
    """First step with gain at most ``rho``; ``value = cap`` when censored."""

    value: int
    censored: bool
    rho: float
    cap: int
    absorbed: bool = False


@dataclass(frozen=True)
class RncSample:
    """Running sup of the log norm ratio up to ``horizon``.

    ``profile`` maps nested horizons to the running sup reached there.
    ``log_value = inf`` marks a direction sent to zero by a nonzero product.
    """

    log_value: float
    horizon: int
    stabilized: bool
    last_increase: int
    profile: dict = field(default_factory=dict)

    @property
    def censored(self) -> bool:
        return not np.isfinite(self.log_value)


@dataclass(frozen=True)
class BlockSample:
    """One block between consecutive ladder times.

    ``log_rnc_block`` is the reverse norm control coefficient of the block's
    starting direction truncated at the block end.  The ``proof_*`` fields
    are filled when proof terms are requested; ``proof_max_log_C`` is the
    largest ``ln+`` of the suffix ratios ``||P_i|| / |P_i v_i|`` with
    ``P_i`` the product of the block's matrices after step ``i``.
    """

    block_length: int
    log_norm_A_block: float
    log_norm_B_block: float
    censored: bool
    log_rnc_block: float
    proof_log_plus_B: float = np.nan
    proof_max_log_C: float = np.nan
    proof_max_log_plus_b: float = np.nan


def _start_vector(p: ProjectivePoint | np.ndarray, d: int) -> np.ndarray:
    if isinstance(p, ProjectivePoint):
        if p.is_zero:
            raise ValueError("walk cannot start at the zero state")
        v = np.array(p.rep, dtype=np.float64)
    else:
        v = np.array(p, dtype=np.float64)
        nrm = np.linalg.norm(v)
        if nrm == 0:
            raise ValueError("walk cannot start at the zero state")
        v = v / nrm
    if v.shape != (d,):
        raise ValueError("start direction has wrong dimension")
    return v


# --------------------------------------------------------------- affine chain

def run_affine_trajectory(spec: ModelSpec, x0, n: int, K: float, rng: np.random.Generator,
                          stride: int | None = None, window: int | None = None) -> TrajectoryStats:
    """Iterate ``X <- A X + B`` for ``n`` steps and stream summary statistics.

    Above ``ln|X| = 700`` each coordinate is kept as a mantissa with its own
    binary exponent, so transient trajectories are followed without overflow
    and without losing the small coordinates that B keeps feeding.
    Default ``stride`` gives about 1000 samples and default ``window``
    splits the run into 10 windows.
    """
    if n < 1:
        raise ValueError("n must be positive")
    d = spec.d
    x = np.array(x0, dtype=np.float64)
    if x.shape != (d,):
        raise ValueError("x0 has wrong dimension")
    stride = stride or max(1, n // 1000)
    window = window or max(1, n // 10)
    n_samples = n // stride
    n_windows = -(-n // window)
    lognorm = np.full(n_samples, np.nan)
    S_trace = np.full(n_samples, np.nan)
    win_min = np.full(n_windows, np.inf)
    win_ret = np.zeros(n_windows, dtype=np.int64)
    if not np.all(np.isfinite(x)):
        raise ValueError("x0 must be finite")
    # rescale before taking the norm so huge starts do not overflow
    top = float(np.max(np.abs(x)))
    if top > 0:
        scaled_norm = float(np.linalg.norm(x / top))
        v = x / top / scaled_norm
        log_nx0 = np.log(top) + np.log(scaled_norm)
    else:
        v = np.eye(d)[0]
        log_nx0 = -np.inf
    xm = np.zeros(d)
    xe = np.zeros(d, dtype=np.int64)
    fstate = np.array([log_nx0, 0.0])
    istate = np.zeros(3, dtype=np.int64)
    if fstate[0] > 700.0:
        istate[0] = 1
        for i in range(d):
            xm[i], xe[i] = np.frexp(x[i])
    stream = PairStream(spec, rng)
    done = 0
    while done < n:
        As, Bs = stream.next_chunk()
        take = min(len(As), n - done)
        kernels.affine_walk(As[:take], Bs[:take], x, xm, xe, v, fstate, istate, float(K), lognorm,
                            S_trace, stride, window, win_min, win_ret, done, 700.0, 690.0)
        done += take
    if istate[0] == 1:
        with np.errstate(over="ignore"):
            final = np.ldexp(xm, xe)
    else:
        final = x.copy()
    return TrajectoryStats(
        n_steps=n, K=float(K), stride=stride, window=window, log_norm_X=lognorm,
        min_norm_windows=win_min, window_returns=win_ret, return_count=int(istate[1]),
        S_series=S_trace, final_direction=canonicalize(v) if istate[2] == 0 else canonicalize(np.zeros(d)),
        final_state=final)


# ------------------------------------------------------------- projective walk

@dataclass(frozen=True)
class WalkResult:
    S_series: np.ndarray
    final: ProjectivePoint
    absorbed_at: int | None = None

    def __iter__(self):
        # unpacks as (S_series, final)
        return iter((self.S_series, self.final))


def run_projective_walk(spec: ModelSpec, v0, n: int, rng: np.random.Generator,
                        stride: int = 1) -> WalkResult:
    """Gain cocycle ``S_k = ln|A_k ... A_1 v0|`` sampled every ``stride`` steps.

    Absorption at zero ends the walk; later entries are ``-inf``.
    """
    d = spec.d
    u = _start_vector(v0, d)
    trace = np.full(n // stride, np.nan)
    state = np.zeros(1)
    stream = PairStream(spec, rng)
    done = 0
    absorbed_at = None
    while done < n:
        As, _ = stream.next_chunk()
        take = min(len(As), n - done)
        used, status = kernels.gain_walk(As[:take], u, state, -np.inf, trace, stride, done)
        done += used
        if status == kernels.ABSORBED:
            absorbed_at = done
            first = done // stride
            if done % stride == 0:
                first -= 1
            trace[first:] = -np.inf
            return WalkResult(trace, canonicalize(np.zeros(d)), absorbed_at)
    return WalkResult(trace, canonicalize(u))


def ladder_time(spec: ModelSpec, v0, rho: float, cap: int, rng: np.random.Generator) -> LadderSample:
    """First ``n`` with ``S_n <= ln rho``, censored at ``cap``.

    Absorption at zero counts as reaching the threshold.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    if cap < 1:
        raise ValueError("cap must be positive")
    return _ladder(PairStream(spec, rng), _start_vector(v0, spec.d), rho, cap, None, 1)


def _ladder(stream: PairStream, u: np.ndarray, rho: float, cap: int, lift, r: int) -> LadderSample:
    state = np.zeros(1)
    empty = np.empty(0)
    log_rho = float(np.log(rho))
    done = 0
    while done < cap:
        As, _ = stream.next_chunk()
        take = min(len(As), cap - done)
        Ws = As[:take] if lift is None else lift(As[:take], r)
        used, status = kernels.gain_walk(Ws, u, state, log_rho, empty, 0, done)
        done += used
        if status != kernels.RUNNING:
            return LadderSample(done, False, rho, cap, absorbed=status == kernels.ABSORBED)
    return LadderSample(cap, True, rho, cap)


# ------------------------------------------------------ reverse norm control

def rnc_coefficient(spec: ModelSpec, v0, horizon: int, rng: np.random.Generator,
                    checkpoints=None) -> RncSample:
    """Running sup over ``n <= horizon`` of ``ln||A_{n,1}|| - ln|A_{n,1} v0|``.

    ``checkpoints`` lists nested horizons at which the running sup is
    recorded in ``profile``.
    """
    return _rnc(PairStream(spec, rng), spec.d, _start_vector(v0, spec.d), horizon,
                checkpoints, None, 1)


def _rnc(stream, d, u, horizon, checkpoints, lift, r, value_trace=None) -> RncSample:
    if horizon < 1:
        raise ValueError("horizon must be positive")
    ck = np.array(sorted(set(checkpoints or [])) if checkpoints else [], dtype=np.int64)
    if ck.size and (ck[0] < 1 or ck[-1] > horizon):
        raise ValueError("checkpoints must lie in 1..horizon")
    ck_out = np.full(ck.size, np.nan)
    ck_pos = np.zeros(1, dtype=np.int64)
    F = np.eye(d)
    state = np.zeros(5)
    trace = np.empty(0) if value_trace is None else value_trace
    r_inv = 1.0 / r
    done = 0
    while done < horizon:
        As, _ = stream.next_chunk()
        take = min(len(As), horizon - done)
        As = As[:take]
        Ws = As if lift is None else lift(As, r)
        used, status = kernels.rnc_walk(As, Ws, r_inv, F, u, state, ck, ck_out, ck_pos,
                                        trace, done, -np.inf, RNC_INCREASE_TOL)
        done += used
        if status == kernels.ABSORBED:
            break
    best = float(state[2])
    last = int(state[3])
    profile = {int(h): float(v) for h, v in zip(ck, ck_out)}
    stabilized = bool(np.isfinite(best) and last <= horizon // 2)
    return RncSample(best, horizon, stabilized, last, profile)


# ------------------------------------------------------ block decomposition

def block_decomposition(spec: ModelSpec, rho: float, n_blocks: int, cap_per_block: int,
                        rng: np.random.Generator, burn_in: int = 200,
                        proof_terms: bool = False) -> list[BlockSample]:
    """Split a trajectory into i.i.d. blocks ending at successive ladder times.

    Each block restarts the walk from a fresh direction drawn from the
    invariant law, so blocks are independent.  With ``proof_terms`` the
    block's matrices are kept to evaluate the terms of the pathwise bound
    ``ln+|B~| <= ln+ l + max_i ln+ C_i + max_i ln+ |B_i|``.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    d = spec.d
    log_rho = float(np.log(rho))
    out = []
    for _ in range(n_blocks):
        u = sample_invariant_directions(spec, rng, 1, burn_in)[0].copy()
        stream = PairStream(spec, rng)
        F = np.eye(d)
        state = np.zeros(5)
        bt = np.zeros(d)
        ck = np.empty(0, dtype=np.int64)
        ck_out = np.empty(0)
        ck_pos = np.zeros(1, dtype=np.int64)
        empty = np.empty(0)
        kept_A, kept_B, kept_S = [], [], []
        done = 0
        status = kernels.RUNNING
        while done < cap_per_block:
            As, Bs = stream.next_chunk()
            take = min(len(As), cap_per_block - done)
            As, Bs = As[:take], Bs[:take]
            if proof_terms:
                S_chunk = np.full(take, np.nan)
                walk_u = u.copy()
                kernels.gain_walk(As, walk_u, np.array([state[1]]), log_rho, S_chunk, 1, 0)
            used, status = kernels.rnc_walk(As, As, 1.0, F, u, state, ck, ck_out, ck_pos,
                                            empty, done, log_rho, RNC_INCREASE_TOL)
            kernels.affine_remainder(As[:used], Bs[:used], bt)
            if proof_terms:
                kept_A.append(As[:used])
                kept_B.append(Bs[:used])
                kept_S.append(S_chunk[:used])
            done += used
            if status != kernels.RUNNING:
                break
        censored = status == kernels.RUNNING
        nb = float(np.linalg.norm(bt))
        sample = dict(block_length=done, log_norm_A_block=float(state[0]),
                      log_norm_B_block=float(np.log1p(nb)), censored=censored,
                      log_rnc_block=float(state[2]))
        if proof_terms:
            A_all = np.concatenate(kept_A)
            B_all = np.concatenate(kept_B)
            S_all = np.concatenate(kept_S)
            suffix = kernels.suffix_log_norms(A_all)
            log_C = suffix - (S_all[-1] - S_all)
            sample.update(
                proof_log_plus_B=float(max(0.0, np.log(nb))) if nb > 0 else 0.0,
                proof_max_log_C=float(np.max(np.maximum(log_C, 0.0))),
                proof_max_log_plus_b=float(np.max(np.maximum(np.log(np.linalg.norm(B_all, axis=1)), 0.0))),
            )
        out.append(BlockSample(**sample))
    return out


# ------------------------------------------------------------- pair walks

def contraction_pair_walk(spec: ModelSpec, u0, v0, n: int, rng: np.random.Generator,
                          metric: str = "sine") -> np.ndarray:
    """Distance between two directions driven by the same matrices.

    Entry ``k - 1`` is the distance after ``k`` steps.  ``metric`` is
    "sine" or "hennion" (the latter for nonnegative models started in the
    positive cone).  If a direction is absorbed at zero the series is cut
    at the absorption step.
    """
    d = spec.d
    u = _start_vector(u0, d)
    v = _start_vector(v0, d)
    code = kernels.METRIC_HENNION if metric == "hennion" else kernels.METRIC_SINE
    if metric not in ("sine", "hennion"):
        raise ValueError("metric must be 'sine' or 'hennion'")
    if code == kernels.METRIC_HENNION:
        u = canonical_sign_vector(u)
        v = canonical_sign_vector(v)
        if np.any(u < 0) or np.any(v < 0):
            raise ValueError("hennion metric needs nonnegative directions")
    out = np.full(n, np.nan)
    stream = PairStream(spec, rng)
    done = 0
    while done < n:
        As, _ = stream.next_chunk()
        take = min(len(As), n - done)
        used = kernels.pair_walk(As[:take], u, v, out, code, done)
        done += used
        if used < take:
            return out[:done]
    return out
