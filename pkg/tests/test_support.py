import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from robustmg.oracles import grid_sigma, sample_ball, simplex_grid_sigma
from robustmg.support import (
    UncertaintySet,
    divergence,
    sigma,
    sigma_batch,
    sigma_max,
    sigma_max_batch,
)

# frozen from a root solve of KL((0.5 + d, 0.5 - d) || (0.5, 0.5)) = 0.01 (scipy brentq)
KL_HALF_VALUE = 0.4294074297265057


def _dist(n):
    return arrays(float, n, elements=st.floats(0.01, 1.0)).map(lambda x: x / x.sum())


def _vec(n):
    return arrays(float, n, elements=st.floats(-5.0, 5.0))


kinds = st.sampled_from(["kl", "l1"])
radii = st.sampled_from([0.0, 0.001, 0.01, 0.1, 0.5, 2.0])


def test_singleton_is_nominal_expectation():
    p = np.array([0.2, 0.3, 0.5])
    V = np.array([1.0, -2.0, 4.0])
    res = sigma(UncertaintySet("singleton", p, 0.0), V)
    assert res.value == pytest.approx(p @ V, abs=1e-15)
    np.testing.assert_array_equal(res.minimizer, p)
    assert sigma_max(UncertaintySet("kl", p, 0.0), V).value == pytest.approx(p @ V, abs=1e-15)


@pytest.mark.parametrize("kind", ["singleton", "kl", "l1"])
def test_constant_vector(kind):
    p = np.array([0.1, 0.6, 0.3])
    u = UncertaintySet(kind, p, 0.0 if kind == "singleton" else 0.3)
    assert sigma(u, np.full(3, 2.5)).value == pytest.approx(2.5, abs=1e-12)
    assert sigma_max(u, np.full(3, 2.5)).value == pytest.approx(2.5, abs=1e-12)


def test_kl_two_state_example():
    u = UncertaintySet("kl", [0.5, 0.5], 0.01)
    res = sigma(u, [0.0, 1.0])
    assert res.value == pytest.approx(KL_HALF_VALUE, abs=1e-12)
    assert abs(res.value - simplex_grid_sigma([0.5, 0.5], "kl", 0.01, [0.0, 1.0])) <= 1e-4
    assert divergence(res.minimizer, u.nominal, "kl") <= 0.01 + 1e-9
    assert res.dual_parameter > 0


def test_l1_greedy_example():
    u = UncertaintySet("l1", [1.0, 0.0], 0.4)
    up = sigma_max(u, [0.0, 1.0])
    assert up.value == pytest.approx(0.2, abs=1e-15)
    np.testing.assert_allclose(up.minimizer, [0.8, 0.2])
    assert up.value == pytest.approx(-grid_sigma([1.0, 0.0], "l1", 0.4, [0.0, -1.0]), abs=1e-6)
    assert sigma(u, [0.0, 1.0]).value == 0.0


def test_kl_corner_solution():
    # all mass on the argmin is already inside the ball: KL(e_0 || p) = -log 0.9 < 0.2
    res = sigma(UncertaintySet("kl", [0.9, 0.1], 0.2), [0.0, 1.0])
    assert res.value == pytest.approx(0.0, abs=1e-15)
    assert res.dual_parameter == 0.0


def test_kl_respects_zero_support():
    p = np.array([0.5, 0.5, 0.0])
    res = sigma(UncertaintySet("kl", p, 1.0), [1.0, 2.0, -10.0])
    assert res.minimizer[2] == 0.0
    assert res.value >= 1.0 - 1e-12


def test_l1_large_radius_reaches_vertex():
    p = np.array([0.3, 0.3, 0.4])
    assert sigma(UncertaintySet("l1", p, 2.0), [3.0, -1.0, 2.0]).value == pytest.approx(-1.0)


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        UncertaintySet("kl", [0.6, 0.5], 0.1)
    with pytest.raises(ValueError):
        UncertaintySet("kl", [0.5, 0.5], -0.1)
    with pytest.raises(ValueError):
        UncertaintySet("wasserstein", [0.5, 0.5], 0.1)
    with pytest.raises(ValueError):
        sigma(UncertaintySet("kl", [0.5, 0.5], 0.1), [1.0, 2.0, 3.0])


def test_batch_matches_scalar():
    rng = np.random.default_rng(3)
    P = rng.dirichlet(np.ones(4), size=(5, 3))
    V = rng.normal(size=4)
    for kind in ("kl", "l1"):
        vals, rows, _ = sigma_batch(P, V, kind, 0.1)
        for s in range(5):
            for a in range(3):
                r = sigma(UncertaintySet(kind, P[s, a], 0.1), V)
                assert vals[s, a] == pytest.approx(r.value, abs=1e-14)
                np.testing.assert_allclose(rows[s, a], r.minimizer, atol=1e-14)
        up, _, _ = sigma_max_batch(P, V, kind, 0.1)
        np.testing.assert_allclose(up, -sigma_batch(P, -V, kind, 0.1)[0])


def test_grid_agreement_three_states():
    rng = np.random.default_rng(11)
    worst = 0.0
    for kind in ("kl", "l1"):
        for _ in range(50):
            p = rng.dirichlet(np.ones(3))
            V = rng.normal(size=3)
            theta = rng.choice([0.01, 0.05, 0.2, 1.0])
            v = sigma(UncertaintySet(kind, p, theta), V).value
            worst = max(worst, abs(v - grid_sigma(p, kind, theta, V)))
    assert worst <= 1e-4


def test_sampled_members_never_beat_sigma():
    rng = np.random.default_rng(5)
    for kind in ("kl", "l1"):
        p = rng.dirichlet(np.ones(4))
        V = rng.normal(size=4)
        v = sigma(UncertaintySet(kind, p, 0.1), V).value
        Q = sample_ball(p, kind, 0.1, rng, size=500) if p.size <= 3 else None
        if Q is None:
            # 4 states: random convex mixes of p with a feasible minimizer stay feasible
            q = sigma(UncertaintySet(kind, p, 0.1), V).minimizer
            w = rng.random((500, 1))
            Q = w * p + (1 - w) * q
        assert (Q @ V).min() >= v - 1e-10


# ------------------------------------------------------------------ properties


@settings(max_examples=200, deadline=None)
@given(p=_dist(4), V=_vec(4), kind=kinds, theta=radii)
def test_minimizer_is_feasible_and_attains_value(p, V, kind, theta):
    res = sigma(UncertaintySet(kind, p, theta), V)
    q = res.minimizer
    assert q.min() >= 0.0
    assert q.sum() == pytest.approx(1.0, abs=1e-12)
    assert q @ V == pytest.approx(res.value, abs=1e-9)
    if theta > 0:
        assert divergence(q, p, kind) <= theta + 1e-9


@settings(max_examples=200, deadline=None)
@given(p=_dist(4), V=_vec(4), c=st.floats(-10, 10), kind=kinds, theta=radii)
def test_translation(p, V, c, kind, theta):
    u = UncertaintySet(kind, p, theta)
    assert sigma(u, V + c).value == pytest.approx(sigma(u, V).value + c, abs=1e-10)


@settings(max_examples=200, deadline=None)
@given(p=_dist(4), V=_vec(4), d=arrays(float, 4, elements=st.floats(0, 3)), kind=kinds,
       theta=radii)
def test_monotone(p, V, d, kind, theta):
    u = UncertaintySet(kind, p, theta)
    assert sigma(u, V).value <= sigma(u, V + d).value + 1e-10


@settings(max_examples=200, deadline=None)
@given(p=_dist(4), V=_vec(4), W=_vec(4), kind=kinds, theta=radii)
def test_one_lipschitz(p, V, W, kind, theta):
    u = UncertaintySet(kind, p, theta)
    gap = abs(sigma(u, V).value - sigma(u, W).value)
    assert gap <= np.abs(V - W).max() + 1e-10


@settings(max_examples=200, deadline=None)
@given(p=_dist(3), V=_vec(3), kind=kinds, theta=st.sampled_from([0.01, 0.1, 0.5]))
def test_lower_below_upper(p, V, kind, theta):
    u = UncertaintySet(kind, p, theta)
    lo, hi = sigma(u, V).value, sigma_max(u, V).value
    assert lo <= p @ V + 1e-12 <= hi + 2e-12
    if np.ptp(V) > 1e-3:
        assert lo < hi


@settings(max_examples=100, deadline=None)
@given(p=_dist(3), V=_vec(3), kind=kinds)
def test_radius_monotone(p, V, kind):
    vals = [sigma(UncertaintySet(kind, p, t), V).value for t in (0.0, 0.01, 0.1, 1.0)]
    assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))
