import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from critaffine.projective import (
    SimplexPoint,
    act,
    canonicalize,
    delta,
    hennion_distance,
    hennion_distance_vec,
    norm_ratio,
    sine_distance,
    zero_point,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
dims = st.sampled_from([2, 3, 5])


def nonzero_vec(d):
    return arrays(np.float64, d, elements=finite).filter(lambda v: np.linalg.norm(v) > 1e-3)


def unit_rows(rng, n, d):
    X = rng.standard_normal((n, d))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


# ---------------------------------------------------------------- canonicalize

def test_canonicalize_examples():
    assert canonicalize([0.0, 0.0, 0.0]).is_zero
    np.testing.assert_array_equal(canonicalize([-2.0, 0.0]).rep, [1.0, 0.0])
    np.testing.assert_allclose(canonicalize([3.0, 4.0]).rep, [0.6, 0.8])


@given(dims.flatmap(nonzero_vec))
def test_canonicalize_sign_and_norm(v):
    p = canonicalize(v)
    assert p == canonicalize(-v)
    assert abs(np.linalg.norm(p.rep) - 1) <= 1e-10
    assert p.rep[np.flatnonzero(p.rep)[0]] > 0


def test_zero_point_equality():
    assert zero_point(2) == canonicalize([0.0, 0.0])
    assert zero_point(2) != canonicalize([1.0, 0.0])


# ---------------------------------------------------------------- delta

def test_delta_examples(oracle):
    p = canonicalize([1.0, 2.0])
    assert delta(p, p) == 0.0
    assert delta(canonicalize([1.0, 0.0]), canonicalize([0.0, 1.0])) == 1.0
    val = delta(canonicalize([1.0, 1.0]), canonicalize([1.0, 0.0]))
    assert val == pytest.approx(oracle["delta_diag_e1"], rel=1e-14)
    assert val == pytest.approx(math.sqrt(2) / 2, rel=1e-14)


def test_delta_rejects_zero():
    with pytest.raises(ValueError):
        delta(zero_point(2), canonicalize([1.0, 0.0]))


def test_delta_matches_wedge_formula_in_2d(rng):
    U, V = unit_rows(rng, 1000, 2), unit_rows(rng, 1000, 2)
    for u, v in zip(U, V):
        assert sine_distance(u, v) == pytest.approx(abs(u[0] * v[1] - u[1] * v[0]), abs=1e-12)


@pytest.mark.parametrize("d", [2, 3, 5])
def test_delta_metric_axioms(d, rng):
    n = 10**4
    P, Q, R = (unit_rows(rng, n, d) for _ in range(3))
    for u, v, w in zip(P, Q, R):
        duv, dvu = sine_distance(u, v), sine_distance(v, u)
        assert duv == dvu
        assert 0.0 <= duv <= 1.0
        assert duv <= sine_distance(u, w) + sine_distance(w, v) + 1e-12
        assert sine_distance(u, u) == 0.0 and sine_distance(u, -u) == 0.0


def test_delta_small_angle_precision():
    eps = 1e-12
    u = np.array([1.0, 0.0])
    v = np.array([math.cos(eps), math.sin(eps)])
    assert sine_distance(u, v) == pytest.approx(eps, rel=1e-6)


# ---------------------------------------------------------------- action

def test_act_examples(oracle):
    p = canonicalize([1.0, -3.0])
    q, g = act(5 * np.eye(2), p)
    assert q == p or np.allclose(q.rep, p.rep)
    assert g == pytest.approx(math.log(5))
    q, g = act(np.outer([1.0, 0.0], [1.0, 0.0]), canonicalize([0.0, 1.0]))
    assert q.is_zero and g == -np.inf
    q, g = act(np.diag([2.0, 1.0]), canonicalize([1.0, 1.0]))
    np.testing.assert_allclose(q.rep, oracle["act_diag21_direction"], rtol=1e-14)
    assert g == pytest.approx(oracle["act_diag21_log_gain"], rel=1e-14)
    q, g = act(np.eye(2), zero_point(2))
    assert q.is_zero and g == -np.inf


@given(dims.flatmap(lambda d: st.tuples(arrays(np.float64, (d, d), elements=finite), nonzero_vec(d))))
def test_act_sign_invariance(args):
    A, v = args
    q1, g1 = act(A, canonicalize(v))
    q2, g2 = act(A, canonicalize(-v))
    assert q1 == q2 and g1 == g2


@pytest.mark.parametrize("d", [2, 3, 5])
def test_gain_cocycle(d, rng):
    for _ in range(500):
        A, B = rng.standard_normal((2, d, d))
        p = canonicalize(rng.standard_normal(d))
        _, g_ab = act(A @ B, p)
        bp, g_b = act(B, p)
        _, g_a = act(A, bp)
        assert g_ab == pytest.approx(g_a + g_b, abs=1e-9)


# ---------------------------------------------------------------- Hennion metric

def test_hennion_examples(oracle):
    u = SimplexPoint.from_vector([1.0, 1.0])
    v = SimplexPoint.from_vector([2.0, 1.0])
    assert hennion_distance(u, u) == 0.0
    e1, e2 = SimplexPoint(np.array([1.0, 0.0])), SimplexPoint(np.array([0.0, 1.0]))
    assert hennion_distance(e1, e2) == 1.0
    val = hennion_distance(u, v)
    assert val == pytest.approx(oracle["hennion_11_21"], rel=1e-14)
    assert 2 * val >= oracle["hennion_11_21_euclid"]


def test_simplex_point_validation():
    with pytest.raises(ValueError):
        SimplexPoint(np.array([-0.6, 0.8]))
    with pytest.raises(ValueError):
        SimplexPoint(np.array([1.0, 1.0]))


@pytest.mark.parametrize("d", [2, 3, 5])
def test_comparison_chain(d, rng):
    n = 10**4
    U = np.abs(unit_rows(rng, n, d))
    V = np.abs(unit_rows(rng, n, d))
    for u, v in zip(U, V):
        s = sine_distance(u, v)
        e = min(np.linalg.norm(u - v), np.linalg.norm(u + v))
        h = hennion_distance_vec(u, v)
        assert s <= e + 1e-12
        assert e <= math.sqrt(2) * s + 1e-12
        assert np.linalg.norm(u - v) <= 2 * h + 1e-12
        assert h == pytest.approx(hennion_distance_vec(v, u), abs=1e-15)


@pytest.mark.parametrize("d", [2, 3, 5])
def test_gain_ratio_inequality(d, rng):
    n = 10**5 // 3
    A = rng.standard_normal((n, d, d))
    U, V = unit_rows(rng, n, d), unit_rows(rng, n, d)
    AU = np.linalg.norm(np.einsum("nij,nj->ni", A, U), axis=1)
    AV = np.linalg.norm(np.einsum("nij,nj->ni", A, V), axis=1)
    opn = np.linalg.norm(A, 2, axis=(1, 2))
    s = np.array([sine_distance(u, v) for u, v in zip(U, V)])
    lhs = np.maximum(np.log(AU / AV), 0.0)
    rhs = math.sqrt(2) * opn / AV * s
    assert np.all(lhs <= rhs + 1e-12)


def test_norm_ratio():
    A = np.diag([3.0, 1.0])
    assert norm_ratio(A, canonicalize([0.0, 1.0])) == pytest.approx(3.0)
    assert norm_ratio(np.outer([1.0, 0.0], [1.0, 0.0]), canonicalize([0.0, 1.0])) == np.inf
