import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from critaffine import reference
from critaffine.estimators import estimate_lyapunov
from critaffine.linalg_core import logscaled_apply, logscaled_from, logscaled_multiply, singular_values
from critaffine.models import (
    CalibrationError,
    ModelSpec,
    PairStream,
    calibrate_centring,
    haar_orthogonal,
    sample_contractive_fixed_point,
    sample_invariant_direction,
    sample_invariant_directions,
    sample_pair,
    sample_pairs,
    sample_rank_one_components,
)
from critaffine.projective import act, canonicalize


def constant(M, b, d=None):
    M = np.atleast_2d(M)
    d = d or M.shape[0]
    return ModelSpec("Constant", d=d, matrices=(M,), b_law="constant", b_vector=tuple(np.atleast_1d(b)))


# ---------------------------------------------------------------- spec validation

def test_spec_validation():
    with pytest.raises(ValueError):
        ModelSpec("Nope")
    with pytest.raises(ValueError):
        ModelSpec("Similarity", d=9)
    with pytest.raises(ValueError):
        ModelSpec("Similarity", sigma_a=-1)
    with pytest.raises(ValueError):
        ModelSpec("PermutationCounterexample", perm_lambda=1.0)
    with pytest.raises(ValueError):
        ModelSpec("DiagonalCounterexample", d=3)
    with pytest.raises(ValueError):
        ModelSpec("InvertibleProximal", d=2)
    with pytest.raises(ValueError):
        ModelSpec("Similarity", b_law="constant")
    with pytest.raises(ValueError):
        ModelSpec.from_dict({"family": "Similarity", "typo": 1})


@pytest.mark.parametrize("spec", [reference.similarity(), reference.rank_one(),
                                  reference.invertible_proximal(), reference.nonnegative(),
                                  reference.diagonal_counterexample(),
                                  reference.permutation_counterexample(),
                                  constant(np.eye(2), [1.0, 0.0])])
def test_spec_dict_round_trip(spec):
    assert ModelSpec.from_dict(spec.to_dict()) == spec


# ---------------------------------------------------------------- samplers

def test_diagonal_degenerate_limit_is_identity(rng):
    A, _ = sample_pairs(ModelSpec("DiagonalCounterexample", diag_sigma=0.0), rng, 100)
    assert np.all(A == np.eye(2))


def test_permutation_support_and_mass(rng):
    spec = ModelSpec("PermutationCounterexample", perm_lambda=3.0)
    A, _ = sample_pairs(spec, rng, 20000)
    first = np.array([[0, 3], [1 / 3, 0]])
    second = np.array([[0, 1], [1, 0]])
    is_first = np.all(np.isclose(A, first), axis=(1, 2))
    is_second = np.all(np.isclose(A, second), axis=(1, 2))
    assert np.all(is_first ^ is_second)
    assert abs(is_first.mean() - 0.5) < 4 * 0.5 / math.sqrt(20000)


def test_rank_one_has_rank_one(rng):
    A, _ = sample_pairs(reference.rank_one_uniform(), rng, 1000)
    for M in A:
        s = singular_values(M)
        assert s[1] <= 1e-12 * s[0]


def test_shift_is_multiplicative(rng):
    spec = reference.nonnegative(shift=0.0)
    A0, B0 = sample_pairs(spec, np.random.default_rng(1), 10)
    A1, B1 = sample_pairs(spec.with_shift(0.3), np.random.default_rng(1), 10)
    np.testing.assert_allclose(A1, math.exp(0.3) * A0, rtol=1e-14)
    np.testing.assert_array_equal(B0, B1)


def test_haar_is_orthogonal(rng):
    Q = haar_orthogonal(rng, 200, 4)
    np.testing.assert_allclose(Q @ np.swapaxes(Q, 1, 2), np.broadcast_to(np.eye(4), Q.shape), atol=1e-12)


def test_b_laws(rng):
    spec = ModelSpec("Similarity", b_law="log_pareto", b_tail_index=3.0, sigma_b=2.0)
    _, B = sample_pairs(spec, rng, 1000)
    assert np.all(np.linalg.norm(B, axis=1) >= 2.0 * (1 - 1e-12))
    _, B = sample_pair(constant(np.eye(2), [1.0, 2.0]), rng)
    np.testing.assert_array_equal(B, [1.0, 2.0])


def test_pair_stream_chunk_schedule(rng):
    stream = PairStream(reference.similarity(), rng)
    sizes = [len(stream.next_chunk()[0]) for _ in range(12)]
    assert sizes[:3] == [64, 128, 256] and sizes[-1] == 16384


# ---------------------------------------------------------------- structural identities

def test_permutation_two_step_products_are_diagonal(rng):
    lam = 2.0
    spec = ModelSpec("PermutationCounterexample", perm_lambda=lam)
    A, _ = sample_pairs(spec, rng, 400)
    P = np.eye(2)
    S = 0
    for k in range(0, 400, 2):
        P = A[k + 1] @ A[k] @ P
        assert P[0, 1] == 0.0 and P[1, 0] == 0.0
        s = math.log(P[0, 0]) / math.log(lam)
        assert s == pytest.approx(round(s), abs=1e-9)
        assert P[1, 1] == pytest.approx(lam ** -round(s), rel=1e-9)
        S = round(s)
    assert isinstance(S, int)


def test_rank_one_product_collapse(rng):
    spec = reference.rank_one_uniform()
    n = 1000
    a, w, wt = sample_rank_one_components(spec, rng, n)
    v = np.array([0.6, 0.8])
    L = logscaled_from(np.eye(2))
    log_formula = math.log(abs(wt[0] @ v)) + math.log(a[0])
    for k in range(n):
        L = logscaled_multiply(logscaled_from(a[k] * np.outer(w[k], wt[k])), L)
        if k > 0:
            log_formula += math.log(a[k]) + math.log(abs(wt[k] @ w[k - 1]))
        g, direction = logscaled_apply(L, v)
        assert L.log_scale + g == pytest.approx(log_formula, rel=1e-8, abs=1e-8)
        assert abs(abs(direction @ w[k]) - 1) < 1e-10


def test_similarity_gain_is_direction_free(rng):
    A, _ = sample_pairs(reference.similarity(sigma_a=1.0, d=3), rng, 50)
    for M in A:
        gains = [act(M, canonicalize(rng.standard_normal(3)))[1] for _ in range(100)]
        assert np.ptp(gains) <= 1e-10


# ---------------------------------------------------------------- invariant directions

def test_similarity_invariant_direction_is_uniform(rng):
    U = sample_invariant_directions(reference.similarity(), rng, 10**5)
    theta = np.mod(np.arctan2(U[:, 1], U[:, 0]), np.pi)
    assert stats.kstest(theta / np.pi, "uniform").statistic < 0.01


def test_rank_one_invariant_direction_is_fresh_w(rng):
    spec = reference.rank_one()
    U = sample_invariant_directions(spec, np.random.default_rng(5), 1000)
    _, w, _ = sample_rank_one_components(spec, np.random.default_rng(5), 1000)
    np.testing.assert_array_equal(U, w)


def test_nonnegative_direction_in_simplex(rng):
    for _ in range(20):
        p = sample_invariant_direction(reference.nonnegative(), rng, burn_in=50)
        assert np.all(p.rep >= 0)


def test_invariant_direction_burn_in_guard(rng):
    with pytest.raises(ValueError):
        sample_invariant_directions(reference.nonnegative(), rng, 1, burn_in=-1)


# ---------------------------------------------------------------- centring

def test_similarity_centring_exact(rng):
    spec = ModelSpec("Similarity", mean_a=0.3, sigma_a=1.0)
    assert calibrate_centring(spec, 1e-3, 10, rng).log_scale_shift == -0.3


def test_diagonal_centring_rejected(rng):
    with pytest.raises(ValueError):
        calibrate_centring(reference.diagonal_counterexample(), 1e-3, 1000, rng)


def test_rank_one_centring_matches_analytic_oracle(oracle, rng):
    spec = ModelSpec("RankOne", d=2, mean_a=0.2, sigma_a=0.5)
    cal = calibrate_centring(spec, 0.004, 10**6, rng)
    assert cal.log_scale_shift == pytest.approx(-0.2 + oracle["rank_one_uniform_shift"], abs=0.004)
    assert reference.rank_one_uniform().log_scale_shift == pytest.approx(oracle["rank_one_uniform_shift"], rel=1e-15)


def test_rank_one_centring_budget_too_small(rng):
    with pytest.raises(CalibrationError) as info:
        calibrate_centring(ModelSpec("RankOne", d=2), 1e-4, 100, rng)
    assert np.isfinite(info.value.last_estimate)


@pytest.mark.parametrize("spec", [reference.nonnegative(shift=0.0),
                                  reference.invertible_proximal(shift=0.0)])
def test_iterative_centring_reaches_tolerance(spec, rng):
    tol = 0.01
    cal = calibrate_centring(spec, tol, 400_000, rng, horizon=2000)
    rep = estimate_lyapunov(cal, 2000, 40, np.random.default_rng(99))
    assert abs(rep.point) <= tol + 3 * rep.stderr


def test_iterative_centring_failure_carries_estimate(rng):
    with pytest.raises(CalibrationError) as info:
        calibrate_centring(reference.nonnegative(shift=0.0), 1e-9, 2000, rng, horizon=50, max_rounds=1)
    assert np.isfinite(info.value.last_estimate)


# ---------------------------------------------------------------- contractive fixed point

def test_fixed_point_geometric_series(rng):
    x = sample_contractive_fixed_point(constant([[0.5]], [1.0]), rng)
    assert x[0] == pytest.approx(2.0, rel=1e-11)


def test_fixed_point_zero_matrix(rng):
    spec = ModelSpec("Constant", d=2, matrices=(np.zeros((2, 2)),))
    x = sample_contractive_fixed_point(spec, np.random.default_rng(3), check=False)
    _, Bs = PairStream(spec, np.random.default_rng(3)).next_chunk()
    np.testing.assert_array_equal(x, Bs[0])


def test_fixed_point_mean_matches_closed_form(rng):
    # scalar lognormal a independent of B = 1: E X = E B / (1 - E a)
    spec = ModelSpec("Similarity", d=1, rotation="identity", mean_a=-1.0, sigma_a=0.5,
                     b_law="constant", b_vector=(1.0,))
    draws = np.array([sample_contractive_fixed_point(spec, rng, tol=1e-10, check=False)[0]
                      for _ in range(2000)])
    ea = math.exp(-1.0 + 0.5 * 0.25)
    se = draws.std(ddof=1) / math.sqrt(len(draws))
    assert abs(draws.mean() - 1.0 / (1 - ea)) <= 3 * se
    # the same mean from a long trajectory time average
    A, _ = sample_pairs(spec, rng, 200_000)
    x, total = 0.0, 0.0
    for a in A[:, 0, 0]:
        x = a * x + 1.0
        total += x
    assert abs(total / len(A) - 1.0 / (1 - ea)) <= 0.02


def test_fixed_point_rejects_critical_model(rng):
    with pytest.raises(ValueError):
        sample_contractive_fixed_point(reference.similarity(sigma_a=1.0), rng)


@given(st.floats(0.1, 0.9), st.floats(-3, 3))
def test_fixed_point_scalar_series(a, b):
    x = sample_contractive_fixed_point(constant([[a]], [b]), np.random.default_rng(0), check=False)
    assert x[0] == pytest.approx(b / (1 - a), rel=1e-9, abs=1e-11)
