import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from critaffine import kernels, reference
from critaffine.estimators import fit_tail_exponent
from critaffine.models import ModelSpec, PairStream, sample_pairs, sample_rank_one_components
from critaffine.projective import canonicalize, sine_distance
from critaffine.simulation import (
    block_decomposition,
    contraction_pair_walk,
    ladder_time,
    rnc_coefficient,
    run_affine_trajectory,
    run_projective_walk,
)


def constant(M, b=None):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    d = M.shape[0]
    if b is None:
        return ModelSpec("Constant", d=d, matrices=(M,), sigma_b=0.0)
    return ModelSpec("Constant", d=d, matrices=(M,), b_law="constant", b_vector=tuple(b))


def replay_matrices(spec, seed, n):
    """The first ``n`` matrices a walk on ``default_rng(seed)`` consumes."""
    stream = PairStream(spec, np.random.default_rng(seed))
    As, Bs = [], []
    while sum(len(a) for a in As) < n:
        a, b = stream.next_chunk()
        As.append(a)
        Bs.append(b)
    return np.concatenate(As)[:n], np.concatenate(Bs)[:n]


# ---------------------------------------------------------------- affine chain

def test_zero_matrix_gives_constant_state():
    spec = constant(np.zeros((2, 2)), [1.0, -2.0])
    st_ = run_affine_trajectory(spec, np.array([5.0, 5.0]), 100, 1.0, np.random.default_rng(0), stride=1)
    np.testing.assert_array_equal(st_.final_state, [1.0, -2.0])
    np.testing.assert_allclose(st_.log_norm_X, math.log1p(math.sqrt(5)))


@pytest.mark.parametrize("x0,K,expected", [([0.3, 0.4], 1.0, 100), ([3.0, 4.0], 1.0, 0)])
def test_identity_keeps_state(x0, K, expected):
    spec = constant(np.eye(2))
    st_ = run_affine_trajectory(spec, np.array(x0), 100, K, np.random.default_rng(0))
    np.testing.assert_array_equal(st_.final_state, x0)
    assert st_.return_count == expected
    assert st_.return_count <= st_.n_steps


def test_affine_trajectory_matches_direct_recursion():
    spec = reference.similarity(sigma_a=0.3, sigma_b=1.0)
    n = 500
    st_ = run_affine_trajectory(spec, np.zeros(2), n, 2.0, np.random.default_rng(7), stride=1, window=50)
    A, B = replay_matrices(spec, 7, n)
    x = np.zeros(2)
    norms, returns = [], 0
    for k in range(n):
        x = A[k] @ x + B[k]
        norms.append(np.linalg.norm(x))
        returns += norms[-1] <= 2.0
    np.testing.assert_allclose(st_.final_state, x, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(st_.log_norm_X, np.log1p(norms), rtol=1e-12)
    assert st_.return_count == returns
    np.testing.assert_allclose(st_.min_norm_windows, np.array(norms).reshape(10, 50).min(axis=1), rtol=1e-12)
    assert st_.window_returns.sum() == returns


def test_window_minima_refine():
    spec = reference.similarity(sigma_a=0.5, sigma_b=1.0)
    coarse = run_affine_trajectory(spec, np.zeros(2), 1000, 5.0, np.random.default_rng(3), window=200)
    fine = run_affine_trajectory(spec, np.zeros(2), 1000, 5.0, np.random.default_rng(3), window=100)
    np.testing.assert_array_equal(coarse.min_norm_windows, fine.min_norm_windows.reshape(5, 2).min(axis=1))


def test_saturation_follows_transient_growth_without_overflow():
    # |X_n| grows like 2^n; the plain representation would overflow near n = 1024
    spec = constant(2 * np.eye(2), [1.0, 1.0])
    n = 5000
    st_ = run_affine_trajectory(spec, np.zeros(2), n, 1.0, np.random.default_rng(0), stride=1)
    assert np.all(np.isfinite(st_.log_norm_X))
    expected = math.log(math.sqrt(2)) + n * math.log(2)
    assert st_.log_norm_X[-1] == pytest.approx(expected, rel=1e-12)


def test_saturation_keeps_subdominant_coordinate():
    # first coordinate explodes, second stays bounded: the B feed must survive
    spec = constant(np.diag([2.0, 0.5]), [1.0, 1.0])
    st_ = run_affine_trajectory(spec, np.zeros(2), 3000, 1.0, np.random.default_rng(0))
    assert st_.final_state[1] == pytest.approx(2.0, rel=1e-12)
    assert np.isinf(st_.final_state[0])


def test_saturation_returns_to_plain_mode():
    # start in the extended range, halve every step, and come back to plain floats
    spec = constant(0.5 * np.eye(1), [0.0])
    x0 = np.array([2.0 ** 1020])
    st_ = run_affine_trajectory(spec, x0, 1100, 1.0, np.random.default_rng(0), stride=1)
    assert st_.final_state[0] == 2.0 ** -80
    assert st_.return_count == 81
    np.testing.assert_allclose(st_.S_series, -np.arange(1, 1101) * math.log(2), rtol=1e-12)
    assert st_.log_norm_X[0] == pytest.approx(1019 * math.log(2), rel=1e-14)
    assert st_.final_direction == canonicalize([1.0])


def test_trajectory_determinism():
    spec = reference.invertible_proximal()
    a = run_affine_trajectory(spec, np.zeros(2), 20000, 20.0, np.random.default_rng(11))
    b = run_affine_trajectory(spec, np.zeros(2), 20000, 20.0, np.random.default_rng(11))
    for field in ("log_norm_X", "min_norm_windows", "window_returns", "S_series", "final_state"):
        np.testing.assert_array_equal(getattr(a, field), getattr(b, field))
    assert a.return_count == b.return_count


def test_one_dimensional_critical_case_returns():
    spec = ModelSpec("Similarity", d=1, rotation="identity", sigma_a=1.0, sigma_b=1.0)
    runs = [run_affine_trajectory(spec, np.zeros(1), 10**6, 20.0, child)
            for child in np.random.default_rng(2).spawn(10)]
    # null-recurrent: single paths have long excursions, the pooled late frequency is positive
    assert sum(int(r.window_returns[-1]) for r in runs) > 0
    assert all(r.return_count > 0 for r in runs)


# ---------------------------------------------------------------- projective walk

def test_projective_walk_scalar():
    S, final = run_projective_walk(constant(2 * np.eye(3)), np.array([1.0, 2.0, 3.0]), 50,
                                   np.random.default_rng(0))
    np.testing.assert_allclose(S, np.arange(1, 51) * math.log(2), rtol=1e-14)
    np.testing.assert_allclose(final.rep, canonicalize([1.0, 2.0, 3.0]).rep)


def test_projective_walk_similarity_is_sum_of_log_scales():
    spec = reference.similarity(sigma_a=1.0, d=3)
    n = 400
    A, _ = replay_matrices(spec, 4, n)
    log_a = np.log(np.linalg.norm(A, 2, axis=(1, 2)))
    for v0 in ([1.0, 0, 0], [0.3, -1.0, 2.0]):
        S = run_projective_walk(spec, np.array(v0), n, np.random.default_rng(4)).S_series
        np.testing.assert_allclose(S, np.cumsum(log_a), atol=1e-10)


def test_projective_walk_rank_one_scalar_formula():
    spec = reference.rank_one_uniform()
    n = 300
    stream = PairStream(spec, np.random.default_rng(8))
    a, w, wt = [], [], []
    while sum(len(x) for x in a) < n:
        ai, wi, wti = sample_rank_one_components(spec, stream.rng, stream._next)
        stream._next = min(16384, 2 * stream._next)
        stream.rng.standard_normal((len(ai), 2))  # consume the B draws that follow the matrices
        a.append(ai), w.append(wi), wt.append(wti)
    a, w, wt = (np.concatenate(x)[:n] for x in (a, w, wt))
    v0 = np.array([0.6, 0.8])
    S = run_projective_walk(spec, v0, n, np.random.default_rng(8)).S_series
    prev = np.vstack([v0, w[:-1]])
    expected = np.cumsum(np.log(a) + np.log(np.abs(np.einsum("ij,ij->i", wt, prev))))
    np.testing.assert_allclose(S, expected, rtol=1e-9, atol=1e-9)


def test_projective_walk_absorption_and_zero_start():
    M = np.outer([1.0, 0.0], [1.0, 0.0])
    res = run_projective_walk(constant(M), np.array([0.0, 1.0]), 10, np.random.default_rng(0))
    assert res.absorbed_at == 1 and np.all(res.S_series == -np.inf) and res.final.is_zero
    with pytest.raises(ValueError):
        run_projective_walk(constant(M), np.zeros(2), 10, np.random.default_rng(0))


# ---------------------------------------------------------------- ladder times

def test_ladder_trivial_cases():
    rho = 0.4
    s = ladder_time(constant(rho / 2 * np.eye(2)), np.array([1.0, 0.0]), rho, 100, np.random.default_rng(0))
    assert s.value == 1 and not s.censored
    s = ladder_time(constant(2 * np.eye(2)), np.array([1.0, 0.0]), rho, 100, np.random.default_rng(0))
    assert s.censored and s.value == 100
    with pytest.raises(ValueError):
        ladder_time(constant(np.eye(2)), np.array([1.0, 0.0]), 1.0, 10, np.random.default_rng(0))


@given(st.integers(0, 10**6), st.floats(0.05, 0.95))
def test_ladder_stopping_correctness(seed, rho):
    spec = reference.similarity(sigma_a=1.0)
    v0 = np.array([1.0, 0.0])
    s = ladder_time(spec, v0, rho, 500, np.random.default_rng(seed))
    S = run_projective_walk(spec, v0, 500, np.random.default_rng(seed)).S_series
    if s.censored:
        assert np.all(S > math.log(rho))
    else:
        assert S[s.value - 1] <= math.log(rho)
        assert np.all(S[:s.value - 1] > math.log(rho))


def test_one_dimensional_ladder_tail_slope():
    spec = ModelSpec("Similarity", d=1, rotation="identity", sigma_a=1.0)
    rng = np.random.default_rng(21)
    cap = 2 ** 16
    samples = [ladder_time(spec, np.ones(1), math.exp(-1), cap, child) for child in rng.spawn(20000)]
    rep = fit_tail_exponent(samples, n_min=16)
    assert abs(rep.point + 0.5) <= 0.05


# ---------------------------------------------------------------- reverse norm control

def test_rnc_similarity_is_zero():
    spec = reference.similarity(sigma_a=1.0, d=3)
    s = rnc_coefficient(spec, np.array([1.0, 2.0, 2.0]), 1000, np.random.default_rng(0))
    assert abs(s.log_value) <= 1e-10 and s.stabilized


def test_rnc_one_dimension_is_zero():
    spec = ModelSpec("Similarity", d=1, rotation="identity", sigma_a=1.0)
    assert rnc_coefficient(spec, np.ones(1), 1000, np.random.default_rng(0)).log_value == 0.0


def test_rnc_rank_one_collapse_formula():
    spec = reference.rank_one_uniform()
    for seed in range(50):
        v0 = np.array([0.6, 0.8])
        s = rnc_coefficient(spec, v0, 10, np.random.default_rng(seed))
        A, _ = replay_matrices(spec, seed, 1)
        wt1 = A[0][np.argmax(np.abs(A[0]).sum(axis=1))]
        wt1 = wt1 / np.linalg.norm(wt1)
        assert s.log_value == pytest.approx(-math.log(abs(wt1 @ v0)), rel=1e-9, abs=1e-12)


def test_rnc_absorption_sentinel():
    M = np.outer([1.0, 0.0], [1.0, 0.0])
    s = rnc_coefficient(constant(M), np.array([0.0, 1.0]), 10, np.random.default_rng(0))
    assert s.log_value == np.inf and s.censored


def test_rnc_monotone_in_nested_horizons():
    spec = reference.invertible_proximal()
    s = rnc_coefficient(spec, np.array([0.0, 1.0]), 4000, np.random.default_rng(5),
                        checkpoints=[1, 10, 100, 1000, 4000])
    vals = list(s.profile.values())
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    assert vals[-1] == s.log_value and s.log_value >= 0
    for h in (10, 100, 1000):
        assert rnc_coefficient(spec, np.array([0.0, 1.0]), h, np.random.default_rng(5)).log_value == s.profile[h]


def test_sandwich_inequality():
    spec = reference.nonnegative()
    n = 300
    A, _ = replay_matrices(spec, 9, n)
    v = np.array([0.6, 0.8])
    trace = np.full(n, np.nan)
    from critaffine.simulation import _rnc
    s = _rnc(PairStream(spec, np.random.default_rng(9)), 2, v.copy(), n, None, None, 1, trace)
    P = np.eye(2)
    for k in range(n):
        P = A[k] @ P
        P /= np.linalg.norm(P, 2)
        gain = np.linalg.norm(P @ v)
        assert 0 <= -math.log(gain) <= s.log_value + 1e-9
        assert trace[k] == pytest.approx(-math.log(gain), abs=1e-9)


# ---------------------------------------------------------------- blocks

def test_blocks_trivial():
    rho = 0.5
    spec = constant(rho / 2 * np.eye(2))
    blocks = block_decomposition(spec, rho, 5, 100, np.random.default_rng(0), burn_in=0)
    for b in blocks:
        assert b.block_length == 1 and not b.censored
        assert b.log_norm_A_block == pytest.approx(math.log(rho / 2))
        assert b.log_norm_B_block == 0.0


def test_blocks_pathwise_bound():
    spec = reference.invertible_proximal(sigma_b=1.0)
    blocks = block_decomposition(spec, 0.8, 300, 10**4, np.random.default_rng(1), proof_terms=True)
    for b in blocks:
        assert b.block_length >= 1
        if b.censored:
            continue
        bound = max(0.0, math.log(b.block_length)) + b.proof_max_log_C + b.proof_max_log_plus_b
        assert b.proof_log_plus_B <= bound + 1e-9


# ---------------------------------------------------------------- pair walks

def test_pair_walk_same_start_is_zero():
    spec = reference.invertible_proximal()
    u = np.array([0.6, 0.8])
    series = contraction_pair_walk(spec, u, u, 200, np.random.default_rng(0))
    assert np.all(series == 0)


def test_pair_walk_similarity_is_flat():
    spec = reference.similarity(sigma_a=1.0, d=3)
    u, v = np.array([1.0, 0, 0]), np.array([0.5, 0.5, 0.7])
    series = contraction_pair_walk(spec, u, v, 200, np.random.default_rng(0))
    np.testing.assert_allclose(series, sine_distance(u, v / np.linalg.norm(v)), atol=1e-12)


def test_pair_walk_rank_one_collapses():
    series = contraction_pair_walk(reference.rank_one_uniform(), np.array([1.0, 0.0]),
                                   np.array([0.0, 1.0]), 50, np.random.default_rng(0))
    assert np.all(series <= 1e-15)


def test_pair_walk_hennion_needs_positive_start():
    with pytest.raises(ValueError):
        contraction_pair_walk(reference.nonnegative(), np.array([1.0, -1.0]), np.array([1.0, 0.0]),
                              10, np.random.default_rng(0), metric="hennion")
    with pytest.raises(ValueError):
        contraction_pair_walk(reference.nonnegative(), np.array([1.0, 1.0]), np.array([1.0, 0.0]),
                              10, np.random.default_rng(0), metric="taxicab")


def test_kernels_status_codes_distinct():
    assert len({kernels.RUNNING, kernels.STOPPED, kernels.ABSORBED}) == 3
