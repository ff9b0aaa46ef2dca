"""Exterior powers: compound matrices, Lyapunov spectra by discrete QR,
proximal dimension, and ladder times and reverse norm control lifted to
``r``-vectors."""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np

from . import kernels
from .estimators import EstimateReport, MomentAccumulator
from .linalg_core import as_matrix, singular_values
from .models import ModelSpec, PairStream
from .projective import ProjectivePoint, canonicalize
from .simulation import LadderSample, RncSample, _ladder, _rnc, _start_vector

DEFAULT_QR_EVERY = 20
GAP_FLOOR = 0.01


def subsets(d: int, r: int) -> list[tuple[int, ...]]:
    """Lexicographically ordered ``r``-subsets of ``range(d)``."""
    if not 1 <= r <= d:
        raise ValueError(f"need 1 <= r <= d, got r={r}, d={d}")
    return list(combinations(range(d), r))


def compound(A, r: int) -> np.ndarray:
    """``r``-th compound matrix: entry ``(I, J)`` is the minor of ``A`` with
    rows ``I`` and columns ``J``."""
    A = as_matrix(A)
    return compound_stack(A[None], r)[0]


def compound_stack(As: np.ndarray, r: int) -> np.ndarray:
    """Compound matrices of a stack ``(n, d, d)`` -> ``(n, C, C)``."""
    As = np.asarray(As, dtype=np.float64)
    n, d, _ = As.shape
    if r == 1:
        return As
    idx = subsets(d, r)
    if r == d:
        return np.linalg.det(As)[:, None, None]
    rows = np.array(idx)
    # (n, C, r, d): the selected rows; then columns for every J
    R = As[:, rows, :]
    out = np.empty((n, len(idx), len(idx)))
    for j, J in enumerate(idx):
        out[:, :, j] = np.linalg.det(R[:, :, :, list(J)])
    return out


def wedge(vectors) -> np.ndarray:
    """Coordinates of ``v_1 ^ ... ^ v_r`` in the lexicographic basis."""
    V = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    r, d = V.shape
    return np.array([np.linalg.det(V[:, list(I)]) for I in subsets(d, r)])


def wedge_norm_check(A, r: int) -> tuple[float, float]:
    """``(||compound(A, r)||, s_1 ... s_r)``; equal up to round-off."""
    C = compound(A, r)
    lhs = float(np.linalg.norm(C, 2))
    rhs = float(np.prod(singular_values(A)[:r]))
    return lhs, rhs


# -------------------------------------------------------- Lyapunov spectrum

def lyapunov_spectrum_replica(spec: ModelSpec, n: int, rng: np.random.Generator,
                              every: int = DEFAULT_QR_EVERY) -> np.ndarray:
    """Per-step exponents ``(1/n) ln |R_ii|`` from the discrete QR method."""
    d = spec.d
    Q = np.eye(d)
    logsum = np.zeros(d)
    stream = PairStream(spec, rng)
    done = 0
    while done < n:
        As, _ = stream.next_chunk()
        take = min(len(As), n - done)
        kernels.qr_walk(As[:take], Q, logsum, done, every)
        done += take
    if n % every:
        kernels.qr_sweep(Q, logsum)
    return logsum / n


def estimate_proximal_dimension(spec: ModelSpec, n: int, m: int, rng: np.random.Generator,
                                every: int = DEFAULT_QR_EVERY) -> tuple[int | None, dict]:
    """Multiplicity of the top Lyapunov exponent.

    ``r`` is the number of leading exponents within ``gap_tol`` of the top
    one, where for each ``i`` ``gap_tol_i = 3 * stderr(l_1 - l_i) + 0.01``
    with the stderr taken across replicas.  Returns ``None`` when the
    exponents within tolerance do not form a leading block.
    """
    if spec.family in ("RankOne",):
        raise ValueError("proximal dimension needs an invertible family")
    if m < 2:
        raise ValueError("need at least two replicas")
    spectra = np.array([lyapunov_spectrum_replica(spec, n, child, every) for child in rng.spawn(m)])
    r_hat, profile = proximal_dimension_from_spectra(spectra)
    profile.update(horizon=int(n), qr_every=int(every))
    return r_hat, profile


def proximal_dimension_from_spectra(spectra: np.ndarray) -> tuple[int | None, dict]:
    """Top-exponent multiplicity from per-replica spectra of shape (m, d)."""
    m = len(spectra)
    lam = spectra.mean(axis=0)
    se = spectra.std(axis=0, ddof=1) / math.sqrt(m)
    gaps = spectra[:, :1] - spectra
    gap = gaps.mean(axis=0)
    gap_se = gaps.std(axis=0, ddof=1) / math.sqrt(m)
    tol = 3 * gap_se + GAP_FLOOR
    inside = gap < tol
    r_hat = int(inside.sum())
    if not inside[:r_hat].all():
        r_hat = None
    profile = {"exponents": lam.tolist(), "exponent_stderr": se.tolist(),
               "gaps": gap.tolist(), "gap_stderr": gap_se.tolist(), "gap_tol": tol.tolist(),
               "replicas": int(m)}
    return r_hat, profile


def lift_lyapunov(spec: ModelSpec, r: int, n: int, m: int, rng: np.random.Generator,
                  every: int = DEFAULT_QR_EVERY) -> dict[str, EstimateReport]:
    """Top exponent of the ``r``-th compound product against the sum of the
    top ``r`` exponents of the base product, replica by replica on the same
    matrices.

    Returns reports ``lifted``, ``sum_top`` and their paired ``difference``.
    """
    subsets(spec.d, r)
    lifted, summed, diff = MomentAccumulator(), MomentAccumulator(), MomentAccumulator()
    for child in rng.spawn(m):
        state0 = child.bit_generator.state
        spec_exps = lyapunov_spectrum_replica(spec, n, child, every)
        child.bit_generator.state = state0
        stream = PairStream(spec, child)
        C = math.comb(spec.d, r)
        F = np.eye(C)
        st = np.zeros(1)
        done = 0
        ok = True
        while done < n:
            As, _ = stream.next_chunk()
            take = min(len(As), n - done)
            ok = kernels.lyapunov_walk(compound_stack(As[:take], r), F, st) and ok
            done += take
        top = float(st[0]) / n if ok else -np.inf
        s = float(np.sum(spec_exps[:r]))
        lifted.add(top)
        summed.add(s)
        diff.add(top - s)
    meta = {"r": r, "horizon": int(n), "replicas": int(m)}
    return {"lifted": lifted.report(**meta), "sum_top": summed.report(**meta),
            "difference": diff.report(**meta)}


# ------------------------------------------------------------ lifted walks

def default_lift_start(d: int, r: int) -> ProjectivePoint:
    """``e_1 ^ ... ^ e_r``."""
    return canonicalize(wedge(np.eye(d)[:r]))


def _lift_vector(w0, d: int, r: int) -> np.ndarray:
    return _start_vector(w0, math.comb(d, r))


def lifted_rnc_coefficient(spec: ModelSpec, w0, r: int, horizon: int, rng: np.random.Generator,
                           checkpoints=None, value_trace: np.ndarray | None = None) -> RncSample:
    """Running sup of ``ln||A_{n,1}|| - (1/r) ln|compound(A_{n,1}, r) w0|``.

    Base and compound products are driven by the same matrices.  With
    ``r = 1`` this is ``rnc_coefficient`` on the same stream.
    """
    subsets(spec.d, r)
    u = _lift_vector(w0, spec.d, r)
    lift = None if r == 1 else compound_stack
    return _rnc(PairStream(spec, rng), spec.d, u, horizon, checkpoints, lift, r, value_trace)


def lifted_ladder_time(spec: ModelSpec, w0, r: int, rho: float, cap: int,
                       rng: np.random.Generator) -> LadderSample:
    """First ``n`` with ``|compound(A_{n,1}, r) w0| <= rho``, censored at ``cap``."""
    subsets(spec.d, r)
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    if cap < 1:
        raise ValueError("cap must be positive")
    u = _lift_vector(w0, spec.d, r)
    return _ladder(PairStream(spec, rng), u, rho, cap, None if r == 1 else compound_stack, r)


def compound_rnc_trace(spec: ModelSpec, w0, r: int, horizon: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Per-step ``ln||compound(A_{n,1}, r)|| - ln|compound(A_{n,1}, r) w0|``
    (the reverse norm control value of the lifted walk itself)."""
    subsets(spec.d, r)
    C = math.comb(spec.d, r)
    u = _lift_vector(w0, spec.d, r)
    trace = np.full(horizon, np.nan)
    F = np.eye(C)
    state = np.zeros(5)
    empty_i = np.empty(0, dtype=np.int64)
    empty_f = np.empty(0)
    pos = np.zeros(1, dtype=np.int64)
    stream = PairStream(spec, rng)
    done = 0
    while done < horizon:
        As, _ = stream.next_chunk()
        take = min(len(As), horizon - done)
        Ws = compound_stack(As[:take], r)
        used, status = kernels.rnc_walk(Ws, Ws, 1.0, F, u, state, empty_i, empty_f, pos,
                                        trace, done, -np.inf, 0.0)
        done += used
        if status == kernels.ABSORBED:
            trace[done - 1:] = np.inf
            break
    return trace


def domination_check(spec: ModelSpec, w0, r: int, horizon: int, rng: np.random.Generator,
                     tol: float = 1e-9) -> dict:
    """Pathwise comparison, at every horizon, of the running sup of the
    lifted coefficient with ``1/r`` times the running sup for the compound
    walk, both in logs and on the same matrices.

    On the full exterior power the bound holds when the top ``r`` singular
    values of every product coincide (conformal models, or ``r = 1``); for
    other models it can fail and ``holds`` reports that."""
    state0 = rng.bit_generator.state
    left = np.full(horizon, np.nan)
    lifted_rnc_coefficient(spec, w0, r, horizon, rng, value_trace=left)
    rng.bit_generator.state = state0
    right = compound_rnc_trace(spec, w0, r, horizon, rng)
    lsup = np.maximum.accumulate(np.maximum(left, 0.0))
    rsup = np.maximum.accumulate(np.maximum(right, 0.0)) / r
    excess = lsup - rsup
    return {"max_excess": float(np.nanmax(excess)), "holds": bool(np.all(excess <= tol)),
            "left": lsup, "right": rsup}
