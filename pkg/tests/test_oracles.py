import itertools

import numpy as np
import pytest

from _util import random_kernel, random_mdp, random_policy, stationary
from robustmg.oracles import (
    ReducibleChain,
    ball_boundary,
    ergodicity_coefficient,
    exact_gain_bias,
    exact_gains,
    sample_ball,
    simplex_grid_sigma,
    span,
    worst_case_gain_grid,
)
from robustmg.robust_dp import robust_policy_eval
from robustmg.support import divergence, sigma_batch


def test_swap_chain_gain():
    sol = exact_gain_bias([[0.0, 1.0], [1.0, 0.0]], [0.0, 1.0])
    assert sol.gain == pytest.approx(0.5)
    np.testing.assert_allclose(sol.stationary, [0.5, 0.5])
    np.testing.assert_allclose(sol.bias, [0.0, 0.5])


def test_reducible_chain_rejected():
    with pytest.raises(ReducibleChain):
        exact_gain_bias(np.eye(2), [0.0, 1.0])


def test_random_chain_stationary_residual():
    rng = np.random.default_rng(0)
    P = random_kernel(rng, 4, 1)[:, 0]
    r = rng.random(4)
    sol = exact_gain_bias(P, r)
    assert np.abs(sol.stationary @ P - sol.stationary).max() <= 1e-10
    assert sol.stationary.min() >= 0 and sol.stationary.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(sol.stationary, stationary(P), atol=1e-10)
    # Poisson equation r - g + P h = h
    np.testing.assert_allclose(r - sol.gain + P @ sol.bias, sol.bias, atol=1e-10)
    assert exact_gains(P[None], r)[0] == pytest.approx(sol.gain, abs=1e-12)


def test_ergodicity_coefficient_examples():
    assert ergodicity_coefficient([[0.3, 0.7], [0.3, 0.7]]) == pytest.approx(1.0)
    assert ergodicity_coefficient([[0.0, 1.0], [1.0, 0.0]]) == pytest.approx(0.0)


def test_span_contraction_bound():
    rng = np.random.default_rng(1)
    for _ in range(100):
        S = rng.integers(2, 6)
        P = rng.dirichlet(np.ones(S) * rng.choice([0.3, 1.0, 5.0]), size=S)
        V = rng.normal(size=S)
        assert span(P @ V) <= (1 - ergodicity_coefficient(P)) * span(V) + 1e-12


def test_operator_difference_sandwich():
    rng = np.random.default_rng(2)
    for _ in range(100):
        p = rng.dirichlet(np.ones(4))
        V1, V2 = rng.normal(size=(2, 4))
        (s1, s2), (q1, q2), _ = sigma_batch(np.stack([p, p]), np.stack([V1, V2]), "kl", 0.1)
        d = V1 - V2
        assert q1 @ d - 1e-10 <= s1 - s2 <= q2 @ d + 1e-10


def test_ball_boundary_points_lie_on_boundary():
    rng = np.random.default_rng(3)
    for kind in ("kl", "l1"):
        p = rng.dirichlet(np.ones(3))
        pts = ball_boundary(p, kind, 0.1, 64)
        div = np.array([divergence(q, p, kind) for q in pts[1:]])
        assert div.max() <= 0.1 + 1e-9
        # boundary: on the sphere, or on a simplex face
        assert np.all((div >= 0.1 - 1e-6) | (pts[1:].min(axis=1) <= 1e-12))


def test_sample_ball_feasible():
    rng = np.random.default_rng(4)
    for kind in ("kl", "l1"):
        p = rng.dirichlet(np.ones(3))
        Q = sample_ball(p, kind, 0.2, rng, size=300)
        assert max(divergence(q, p, kind) for q in Q) <= 0.2 + 1e-9
        np.testing.assert_allclose(Q.sum(axis=1), 1.0)


def test_simplex_grid_matches_closed_form():
    # L1 ball on two states: shift min(theta/2, p0[1]) mass to the cheaper state
    for p, theta in (([0.5, 0.5], 0.4), ([0.9, 0.1], 0.6)):
        want = 1.0 - p[0] - min(theta / 2, 1 - p[0])
        assert simplex_grid_sigma(p, "l1", theta, [0.0, 1.0]) == pytest.approx(want, abs=1e-4)


def test_grid_singleton_equals_exact():
    rng = np.random.default_rng(5)
    P = random_kernel(rng, 3, 2, 0.02)
    rew = rng.random((3, 2))
    pi = random_policy(rng, 3, 2)
    got = worst_case_gain_grid(rew, P[:, :, None, :], np.ones((3, 2, 1)), "singleton", 0.0, pi)
    want = exact_gain_bias(np.einsum("sa,sat->st", pi, P), np.einsum("sa,sa->s", pi, rew)).gain
    assert got == pytest.approx(want, abs=1e-12)


def test_grid_large_l1_ball_hits_vertex_kernels():
    P = np.array([[[0.6, 0.4]], [[0.45, 0.55]]])
    r = np.array([[0.2], [0.9]])
    theta = 0.6
    got = worst_case_gain_grid(r, P[:, :, None, :], np.ones((2, 1, 1)), "l1", theta,
                               np.ones((2, 1)), grid_density=50)
    # each row ranges over an interval whose ends move theta/2 mass (or all of it)
    ends = []
    for s in range(2):
        p = P[s, 0]
        lo = np.array([p[0] - min(theta / 2, p[0]), p[1] + min(theta / 2, p[0])])
        hi = np.array([p[0] + min(theta / 2, p[1]), p[1] - min(theta / 2, p[1])])
        ends.append((lo, hi))
    vertex = min(exact_gain_bias(np.stack([a, b]), r[:, 0]).gain
                 for a, b in itertools.product(*ends))
    assert got == pytest.approx(vertex, abs=1e-12)


def test_grid_close_to_robust_gain():
    rng = np.random.default_rng(7)
    for S in (2, 3):
        mdp = random_mdp(rng, S, 2, "kl", 0.1)
        pi = random_policy(rng, S, 2, deterministic=(S == 3))
        g = robust_policy_eval(mdp, pi).gain
        grid = worst_case_gain_grid(mdp.rewards, mdp.nominal, mdp.weights, "kl", 0.1, pi,
                                    grid_density=100 if S == 3 else 200)
        assert g - 1e-9 <= grid <= g + 1e-3


def test_grid_size_limit():
    rng = np.random.default_rng(8)
    mdp = random_mdp(rng, 4, 2)
    with pytest.raises(ValueError):
        worst_case_gain_grid(mdp.rewards, mdp.nominal, mdp.weights, "kl", 0.1,
                             random_policy(rng, 4, 2))
