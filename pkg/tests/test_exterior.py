import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from critaffine import reference
from critaffine.exterior import (
    compound,
    compound_stack,
    default_lift_start,
    domination_check,
    estimate_proximal_dimension,
    lift_lyapunov,
    lifted_ladder_time,
    lifted_rnc_coefficient,
    proximal_dimension_from_spectra,
    subsets,
    wedge,
    wedge_norm_check,
)
from critaffine.models import PairStream
from critaffine.simulation import ladder_time, rnc_coefficient


def minor_matrix(A, r):
    d = A.shape[0]
    idx = list(combinations(range(d), r))
    return np.array([[np.linalg.det(A[np.ix_(I, J)]) for J in idx] for I in idx])


def test_subsets_order_and_guards():
    assert subsets(3, 2) == [(0, 1), (0, 2), (1, 2)]
    for d, r in ((3, 0), (3, 4)):
        with pytest.raises(ValueError):
            subsets(d, r)


def test_compound_top_is_determinant_and_identity():
    A = np.random.default_rng(0).standard_normal((4, 4))
    assert compound(A, 4)[0, 0] == pytest.approx(np.linalg.det(A))
    for r in (1, 2, 3):
        np.testing.assert_allclose(compound(np.eye(4), r), np.eye(math.comb(4, r)), atol=1e-15)


@given(st.integers(2, 4), st.integers(0, 10**6))
def test_compound_minors_and_cauchy_binet(d, seed):
    rng = np.random.default_rng(seed)
    A, B = rng.standard_normal((2, d, d))
    for r in range(1, d + 1):
        np.testing.assert_allclose(compound(A, r), minor_matrix(A, r), atol=1e-12)
        np.testing.assert_allclose(compound(A @ B, r), compound(A, r) @ compound(B, r), atol=1e-10)


@given(st.integers(2, 4), st.integers(0, 10**6))
def test_wedge_norm_is_product_of_singular_values(d, seed):
    A = np.random.default_rng(seed).standard_normal((d, d))
    for r in range(1, d + 1):
        lhs, rhs = wedge_norm_check(A, r)
        assert lhs == pytest.approx(rhs, rel=1e-10)


def test_compound_acts_on_wedges():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((3, 3))
    V = rng.standard_normal((2, 3))
    np.testing.assert_allclose(compound(A, 2) @ wedge(V), wedge(V @ A.T), atol=1e-12)
    assert default_lift_start(3, 2).rep[0] == 1.0


def test_compound_stack_shapes():
    As = np.random.default_rng(2).standard_normal((5, 3, 3))
    assert compound_stack(As, 2).shape == (5, 3, 3)
    assert compound_stack(As, 3).shape == (5, 1, 1)


@pytest.mark.parametrize("factory,expected", [
    (reference.invertible_proximal, 1),
    (lambda: reference.similarity(d=3), 3),
    (reference.rotation_only, 2),
])
def test_proximal_dimension(factory, expected):
    r_hat, profile = estimate_proximal_dimension(factory(), 4000, 8, np.random.default_rng(3))
    assert r_hat == expected
    assert len(profile["exponents"]) == factory().d


def test_proximal_dimension_rejects_rank_one():
    with pytest.raises(ValueError):
        estimate_proximal_dimension(reference.rank_one(), 100, 4, np.random.default_rng(0))


def test_proximal_dimension_from_spectra_nonleading_block():
    spectra = np.array([[0.0, -1.0, 0.0]] * 4) + np.random.default_rng(0).normal(0, 1e-4, (4, 3))
    r_hat, _ = proximal_dimension_from_spectra(spectra)
    assert r_hat is None


@pytest.mark.parametrize("r", [1, 2, 3])
def test_lift_additivity(r):
    spec = reference.similarity(sigma_a=0.3, d=3)
    reps = lift_lyapunov(spec, r, 2000, 6, np.random.default_rng(4))
    assert abs(reps["difference"].point) <= 1e-10
    assert reps["lifted"].n_samples == 6


def test_lift_additivity_proximal():
    reps = lift_lyapunov(reference.invertible_proximal(), 2, 3000, 6, np.random.default_rng(5))
    assert abs(reps["difference"].point) <= 1e-10


def test_lifted_r1_matches_base_walk():
    spec = reference.invertible_proximal()
    w0 = np.array([0.6, 0.8])
    a = lifted_rnc_coefficient(spec, w0, 1, 3000, np.random.default_rng(7))
    b = rnc_coefficient(spec, w0, 3000, np.random.default_rng(7))
    assert a.log_value == b.log_value and a.last_increase == b.last_increase
    la = lifted_ladder_time(spec, w0, 1, 0.5, 10**4, np.random.default_rng(8))
    lb = ladder_time(spec, w0, 0.5, 10**4, np.random.default_rng(8))
    assert la == lb


def test_rotation_top_lift_is_trivial():
    spec = reference.rotation_only()
    w0 = default_lift_start(2, 2)
    rnc = lifted_rnc_coefficient(spec, w0, 2, 2000, np.random.default_rng(0))
    assert abs(rnc.log_value) <= 1e-9
    lad = lifted_ladder_time(spec, w0, 2, 0.5, 500, np.random.default_rng(0))
    assert lad.censored and lad.value == 500


def test_permutation_top_lift_tracks_norm():
    spec = reference.permutation_counterexample()
    horizon = 400
    rnc = lifted_rnc_coefficient(spec, default_lift_start(2, 2), 2, horizon, np.random.default_rng(11))
    stream = PairStream(spec, np.random.default_rng(11))
    P = np.eye(2)
    best = 0.0
    done = 0
    while done < horizon:
        As, _ = stream.next_chunk()
        for A in As[: horizon - done]:
            P = A @ P
            best = max(best, math.log(np.linalg.norm(P, 2)))
        done += min(len(As), horizon - done)
    assert rnc.log_value == pytest.approx(best, abs=1e-9)
    assert best / math.log(2) == pytest.approx(round(best / math.log(2)), abs=1e-9)


def test_similarity_top_lift_ladder_tail():
    from critaffine.estimators import fit_tail_exponent
    spec = reference.similarity(sigma_a=1.0, d=2)
    w0 = default_lift_start(2, 2)
    samples = [lifted_ladder_time(spec, w0, 2, math.exp(-1), 2**14, child)
               for child in np.random.default_rng(12).spawn(6000)]
    assert abs(fit_tail_exponent(samples).point + 0.5) <= 0.07


@pytest.mark.parametrize("factory,r", [
    (reference.invertible_proximal, 1),
    (reference.nonnegative, 1),
    (reference.rotation_only, 2),
    (lambda: reference.similarity(d=3), 2),
    (lambda: reference.similarity(d=3), 3),
])
def test_domination(factory, r):
    spec = factory()
    out = domination_check(spec, default_lift_start(spec.d, r), r, 1000, np.random.default_rng(13))
    assert out["holds"], out["max_excess"]
    assert out["left"].shape == (1000,)


def test_domination_needs_equal_singular_values():
    spec = reference.invertible_proximal()
    out = domination_check(spec, default_lift_start(2, 2), 2, 200, np.random.default_rng(14))
    assert not out["holds"]


@given(st.integers(3, 4), st.integers(2, 3), st.integers(0, 10**6))
def test_gain_cocycle_on_lift(d, r, seed):
    from critaffine.projective import act
    r = min(r, d - 1)
    rng = np.random.default_rng(seed)
    A, B = rng.standard_normal((2, d, d))
    p = default_lift_start(d, r)
    q, g1 = act(compound(A, r), p)
    _, g2 = act(compound(B, r), q)
    _, g12 = act(compound(B @ A, r), p)
    assert g12 == pytest.approx(g1 + g2, abs=1e-9)
