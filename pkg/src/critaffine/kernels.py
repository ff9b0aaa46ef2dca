"""Compiled inner loops.

Every kernel consumes one chunk of pre-drawn matrices and updates state
arrays in place, so a walk of any length is a Python loop over chunks and
the random stream is consumed identically by every walk-type operation.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

RUNNING = 0
STOPPED = 1
ABSORBED = 2

METRIC_SINE = 0
METRIC_HENNION = 1

_TINY = np.finfo(np.float64).tiny


@njit(cache=True)
def opnorm(M):
    d = M.shape[0]
    if d == 1:
        return abs(M[0, 0])
    if d == 2:
        a = M[0, 0]
        b = M[0, 1]
        c = M[1, 0]
        e = M[1, 1]
        # sigma_1 = (|(a+e, c-b)| + |(a-e, c+b)|) / 2 has no cancellation
        return 0.5 * (math.hypot(a + e, c - b) + math.hypot(a - e, c + b))
    return np.linalg.svd(M)[1][0]


@njit(cache=True)
def vnorm(v):
    s = 0.0
    for i in range(v.shape[0]):
        s += v[i] * v[i]
    if s < 1e300 and s > 1e-300:
        return math.sqrt(s)
    # rescale to avoid overflow or underflow of the squares
    m = 0.0
    for i in range(v.shape[0]):
        if abs(v[i]) > m:
            m = abs(v[i])
    if m == 0.0 or m == np.inf:
        return m
    s = 0.0
    for i in range(v.shape[0]):
        t = v[i] / m
        s += t * t
    return m * math.sqrt(s)


@njit(cache=True)
def matvec(A, u, out):
    d = A.shape[0]
    for i in range(d):
        s = 0.0
        for j in range(A.shape[1]):
            s += A[i, j] * u[j]
        out[i] = s


@njit(cache=True)
def matmul_into(A, B, out):
    n = A.shape[0]
    m = B.shape[1]
    for i in range(n):
        for j in range(m):
            s = 0.0
            for k in range(A.shape[1]):
                s += A[i, k] * B[k, j]
            out[i, j] = s


@njit(cache=True)
def haar_orthogonalize(G):
    """Replace each matrix in the stack by the Q factor of its QR
    decomposition with positive diagonal R (Gram-Schmidt, two passes)."""
    n, d, _ = G.shape
    for k in range(n):
        M = G[k]
        for j in range(d):
            for _ in range(2):
                for i in range(j):
                    s = 0.0
                    for r in range(d):
                        s += M[r, i] * M[r, j]
                    for r in range(d):
                        M[r, j] -= s * M[r, i]
            s = 0.0
            for r in range(d):
                s += M[r, j] * M[r, j]
            s = math.sqrt(s)
            for r in range(d):
                M[r, j] /= s
    return G


@njit(cache=True)
def gain_walk(As, u, state, log_stop, trace, stride, step0):
    """Projective walk with gain cocycle.

    state[0] holds S.  Stops when S <= log_stop.  Writes S into
    ``trace[step // stride - 1]`` at multiples of ``stride``.
    Returns (steps consumed, status).
    """
    d = u.shape[0]
    w = np.empty(d)
    S = state[0]
    for k in range(As.shape[0]):
        matvec(As[k], u, w)
        g = vnorm(w)
        step = step0 + k + 1
        if g == 0.0:
            state[0] = -np.inf
            return k + 1, ABSORBED
        S += math.log(g)
        for i in range(d):
            u[i] = w[i] / g
        if stride > 0 and step % stride == 0:
            idx = step // stride - 1
            if idx < trace.shape[0]:
                trace[idx] = S
        if S <= log_stop:
            state[0] = S
            return k + 1, STOPPED
    state[0] = S
    return As.shape[0], RUNNING


@njit(cache=True)
def increment_walk(As, u, out, step0):
    """Per-step log gains ln|A_k u_{k-1}| written to ``out[step0 + k]``.

    Returns the number of steps taken; fewer than ``len(As)`` means the
    direction was sent to zero at the last step (its entry is -inf).
    """
    d = u.shape[0]
    w = np.empty(d)
    for k in range(As.shape[0]):
        matvec(As[k], u, w)
        g = vnorm(w)
        if g == 0.0:
            out[step0 + k] = -np.inf
            return k + 1
        out[step0 + k] = math.log(g)
        for i in range(d):
            u[i] = w[i] / g
    return As.shape[0]


@njit(cache=True)
def lyapunov_walk(As, F, state):
    """Accumulate ln||A_n...A_1|| with unit-norm renormalisation.

    state[0] is the log scale; returns False if the product vanished."""
    d = F.shape[0]
    T = np.empty((d, d))
    L = state[0]
    for k in range(As.shape[0]):
        matmul_into(As[k], F, T)
        nrm = opnorm(T)
        if not nrm > _TINY:
            state[0] = -np.inf
            return False
        L += math.log(nrm)
        for i in range(d):
            for j in range(d):
                F[i, j] = T[i, j] / nrm
    state[0] = L
    return True


@njit(cache=True)
def rnc_walk(As, Ws, r_inv, F, u, state, ckpt_steps, ckpt_out, ckpt_pos, value_trace, step0, log_stop,
             inc_tol):
    """Running sup of ln||A_{n,1}|| - r_inv * ln|W_{n,1} u|.

    ``Ws`` is the stream acting on the walk vector ``u`` (the matrices
    themselves, or their compounds for a lifted walk).  state = [L, S, best,
    last_increase_step, reference].  An increase counts for
    ``last_increase_step`` only when the value exceeds ``reference`` (the
    value at the previous counted increase) by more than ``inc_tol``, so
    round-off creep does not register.  ``ckpt_out[j]`` receives ``best`` after step
    ``ckpt_steps[j]``.  ``value_trace`` (possibly empty) receives the
    per-step difference.  The walk stops at S <= log_stop (used for blocks).
    Returns (steps consumed, status).
    """
    d = F.shape[0]
    D = u.shape[0]
    T = np.empty((d, d))
    w = np.empty(D)
    L = state[0]
    S = state[1]
    best = state[2]
    last = state[3]
    ref = state[4]
    pos = ckpt_pos[0]
    for k in range(As.shape[0]):
        step = step0 + k + 1
        matmul_into(As[k], F, T)
        nrm = opnorm(T)
        matvec(Ws[k], u, w)
        g = vnorm(w)
        if g == 0.0:
            # 0/0 counts as 1; c/0 as +inf
            if nrm > _TINY:
                best = np.inf
                last = step
            S = -np.inf
            L = -np.inf if not nrm > _TINY else L + math.log(nrm)
            while pos < ckpt_steps.shape[0]:
                ckpt_out[pos] = best
                pos += 1
            state[0] = L
            state[1] = S
            state[2] = best
            state[3] = last
            state[4] = ref
            ckpt_pos[0] = pos
            return k + 1, ABSORBED
        L += math.log(nrm)
        for i in range(d):
            for j in range(d):
                F[i, j] = T[i, j] / nrm
        S += math.log(g)
        for i in range(D):
            u[i] = w[i] / g
        val = L - r_inv * S
        if value_trace.shape[0] > step - 1:
            value_trace[step - 1] = val
        if val > best:
            best = val
        if val > ref + inc_tol:
            ref = val
            last = step
        while pos < ckpt_steps.shape[0] and ckpt_steps[pos] == step:
            ckpt_out[pos] = best
            pos += 1
        if S <= log_stop:
            state[0] = L
            state[1] = S
            state[2] = best
            state[3] = last
            state[4] = ref
            ckpt_pos[0] = pos
            return k + 1, STOPPED
    state[0] = L
    state[1] = S
    state[2] = best
    state[3] = last
    state[4] = ref
    ckpt_pos[0] = pos
    return As.shape[0], RUNNING


@njit(cache=True)
def affine_walk(As, Bs, x, xm, xe, v, fstate, istate, K, lognorm_trace, S_trace, stride,
                window, win_min, win_ret, step0, log_switch_up, log_switch_down):
    """Affine recursion X <- A X + B with overflow-safe saturation.

    Plain mode keeps X in ``x``.  Above ``ln|X| = log_switch_up`` every
    coordinate is kept as ``xm[i] * 2**xe[i]`` with its own exponent, so
    coordinates far below the dominant one (where B keeps acting) are never
    lost.  fstate = [ln|X|, S]; istate = [extended_mode, return_count,
    walk_absorbed].  ``v`` is the projective walk direction used for S.
    """
    d = x.shape[0]
    y = np.empty(d)
    w = np.empty(d)
    ln2 = math.log(2.0)
    logm = fstate[0]
    S = fstate[1]
    mode = istate[0]
    ret = istate[1]
    absorbed = istate[2]
    for k in range(As.shape[0]):
        step = step0 + k + 1
        A = As[k]
        b = Bs[k]
        if mode == 0:
            matvec(A, x, y)
            for i in range(d):
                x[i] = y[i] + b[i]
            nx = vnorm(x)
            logm = math.log(nx) if nx > 0.0 else -np.inf
            if logm > log_switch_up:
                mode = 1
                for i in range(d):
                    mm, ee = math.frexp(x[i])
                    xm[i] = mm
                    xe[i] = ee
        else:
            for i in range(d):
                E = 0
                if b[i] == 0.0:
                    E = -(1 << 62)
                for j in range(d):
                    if A[i, j] != 0.0 and xm[j] != 0.0 and xe[j] > E:
                        E = xe[j]
                acc = math.ldexp(b[i], -E) if b[i] != 0.0 else 0.0
                for j in range(d):
                    if A[i, j] != 0.0 and xm[j] != 0.0:
                        acc += A[i, j] * math.ldexp(xm[j], xe[j] - E)
                mm, ee = math.frexp(acc)
                y[i] = mm
                w[i] = E + ee if mm != 0.0 else 0
            Emax = -(1 << 62)
            for i in range(d):
                xm[i] = y[i]
                xe[i] = int(w[i])
                if xm[i] != 0.0 and xe[i] > Emax:
                    Emax = xe[i]
            if Emax == -(1 << 62):
                logm = -np.inf
            else:
                s = 0.0
                for i in range(d):
                    if xm[i] != 0.0:
                        t = math.ldexp(xm[i], xe[i] - Emax)
                        s += t * t
                logm = Emax * ln2 + 0.5 * math.log(s)
            if logm < log_switch_down:
                mode = 0
                for i in range(d):
                    x[i] = math.ldexp(xm[i], xe[i]) if xm[i] != 0.0 else 0.0
            nx = math.exp(logm) if logm < 709.0 else np.inf
        if nx <= K:
            ret += 1
            win_ret[(step - 1) // window] += 1
        widx = (step - 1) // window
        if nx < win_min[widx]:
            win_min[widx] = nx
        if absorbed == 0:
            matvec(A, v, w)
            g = vnorm(w)
            if g == 0.0:
                absorbed = 1
                S = -np.inf
            else:
                S += math.log(g)
                for i in range(d):
                    v[i] = w[i] / g
        if step % stride == 0:
            idx = step // stride - 1
            if mode == 0:
                lognorm_trace[idx] = math.log1p(nx)
            else:
                lognorm_trace[idx] = logm + math.log1p(math.exp(-logm))
            S_trace[idx] = S
    fstate[0] = logm
    fstate[1] = S
    istate[0] = mode
    istate[1] = ret
    istate[2] = absorbed


@njit(cache=True)
def hennion_vec(u, v):
    m1 = np.inf
    m2 = np.inf
    for i in range(u.shape[0]):
        if v[i] > 0.0:
            r = u[i] / v[i]
            if r < m1:
                m1 = r
        if u[i] > 0.0:
            r = v[i] / u[i]
            if r < m2:
                m2 = r
    mm = m1 * m2
    val = (1.0 - mm) / (1.0 + mm)
    return min(1.0, max(0.0, val))


@njit(cache=True)
def sine_vec(u, v):
    a = 0.0
    b = 0.0
    for i in range(u.shape[0]):
        a += (u[i] - v[i]) ** 2
        b += (u[i] + v[i]) ** 2
    c = math.sqrt(min(a, b))
    val = c * math.sqrt(max(0.0, 1.0 - 0.25 * c * c))
    return min(1.0, max(0.0, val))


@njit(cache=True)
def pair_walk(As, u, v, out, metric, step0):
    """Drive two directions with the same matrices and record their distance.

    Returns the number of steps consumed; fewer than ``len(As)`` means one
    of the directions was absorbed at zero."""
    d = u.shape[0]
    wu = np.empty(d)
    wv = np.empty(d)
    for k in range(As.shape[0]):
        matvec(As[k], u, wu)
        matvec(As[k], v, wv)
        gu = vnorm(wu)
        gv = vnorm(wv)
        if gu == 0.0 or gv == 0.0:
            return k
        for i in range(d):
            u[i] = wu[i] / gu
            v[i] = wv[i] / gv
        if metric == METRIC_HENNION:
            out[step0 + k] = hennion_vec(u, v)
        else:
            out[step0 + k] = sine_vec(u, v)
    return As.shape[0]


@njit(cache=True)
def affine_remainder(As, Bs, bt):
    """bt <- A bt + B along the chunk (the block's affine part)."""
    d = bt.shape[0]
    y = np.empty(d)
    for k in range(As.shape[0]):
        matvec(As[k], bt, y)
        for i in range(d):
            bt[i] = y[i] + Bs[k, i]


@njit(cache=True)
def suffix_log_norms(As):
    """out[i] = ln||A_l ... A_{i+2}|| (0-based: product of As[i+1:] in
    reverse order), out[l-1] = 0 for the empty product."""
    n, d, _ = As.shape
    out = np.empty(n)
    P = np.eye(d)
    T = np.empty((d, d))
    L = 0.0
    for i in range(n - 1, -1, -1):
        out[i] = L + math.log(opnorm(P)) if L > -np.inf else -np.inf
        matmul_into(P, As[i], T)
        nrm = opnorm(T)
        if not nrm > _TINY:
            L = -np.inf
            for a in range(d):
                for b in range(d):
                    P[a, b] = 0.0
            continue
        L += math.log(nrm)
        for a in range(d):
            for b in range(d):
                P[a, b] = T[a, b] / nrm
    return out


@njit(cache=True)
def qr_walk(As, Q, logsum, step0, every):
    """Discrete QR method: Q <- A Q, re-orthogonalised every ``every`` steps
    with the log of |diag R| accumulated in ``logsum``."""
    d = Q.shape[0]
    T = np.empty((d, d))
    for k in range(As.shape[0]):
        matmul_into(As[k], Q, T)
        for i in range(d):
            for j in range(d):
                Q[i, j] = T[i, j]
        step = step0 + k + 1
        if step % every == 0:
            qr_sweep(Q, logsum)


@njit(cache=True)
def qr_sweep(Q, logsum):
    d = Q.shape[0]
    for j in range(d):
        for _ in range(2):
            for i in range(j):
                s = 0.0
                for r in range(d):
                    s += Q[r, i] * Q[r, j]
                for r in range(d):
                    Q[r, j] -= s * Q[r, i]
        s = 0.0
        for r in range(d):
            s += Q[r, j] * Q[r, j]
        s = math.sqrt(s)
        logsum[j] += math.log(s)
        for r in range(d):
            Q[r, j] /= s


@njit(cache=True)
def burn_in_walk(As, U):
    """Forward-iterate a stack of directions, one matrix sequence per row.

    As has shape (m, n, d, d); U has shape (m, d)."""
    m, n, d, _ = As.shape
    w = np.empty(d)
    for r in range(m):
        for k in range(n):
            matvec(As[r, k], U[r], w)
            g = vnorm(w)
            if g == 0.0:
                break
            for i in range(d):
                U[r, i] = w[i] / g
