import itertools

import numpy as np
import pytest

from _util import random_game, random_mdp, random_policy, stationary
from robustmg.errors import MaxIterExceeded, PolicyError
from robustmg.game import JointPolicy, RobustMDP, build_game, induce_mdp
from robustmg.oracles import exact_gain_bias, sample_ball
from robustmg.robust_dp import (
    best_response,
    discounted_best_response,
    discounted_robust_eval,
    discounted_robust_optimal,
    evaluate_joint,
    robust_optimal_control,
    robust_policy_eval,
)
from robustmg.support import UncertaintySet, sigma

SWAP = np.array([[[0.0, 1.0]], [[1.0, 0.0]]])


def _policies(S, A):
    for choice in itertools.product(range(A), repeat=S):
        yield np.eye(A)[list(choice)]


def test_swap_chain():
    mdp = RobustMDP.from_kernel([[0.0], [1.0]], SWAP, "singleton", 0.0)
    gb = robust_policy_eval(mdp, np.ones((2, 1)))
    assert gb.gain == pytest.approx(0.5, abs=1e-9)
    np.testing.assert_allclose(gb.bias, [0.0, 0.5], atol=1e-9)
    assert gb.residual <= 1e-9


@pytest.mark.parametrize("kind,theta", [("singleton", 0.0), ("kl", 0.3), ("l1", 0.5)])
def test_constant_reward(kind, theta):
    rng = np.random.default_rng(0)
    mdp = random_mdp(rng, 4, 2, kind, theta)
    mdp = RobustMDP.from_kernel(np.full((4, 2), 0.7), mdp.nominal[:, :, 0], kind, theta)
    gb = robust_policy_eval(mdp, random_policy(rng, 4, 2))
    assert gb.gain == pytest.approx(0.7, abs=1e-12)
    np.testing.assert_allclose(gb.bias, 0.0, atol=1e-12)
    opt, act = robust_optimal_control(mdp)
    assert opt.gain == pytest.approx(0.7, abs=1e-12)
    np.testing.assert_array_equal(act, 0)


def test_bellman_equation_holds_at_output():
    rng = np.random.default_rng(1)
    for kind in ("kl", "l1"):
        mdp = random_mdp(rng, 4, 3, kind, 0.1)
        pi = random_policy(rng, 4, 3)
        gb = robust_policy_eval(mdp, pi, tol=1e-10)
        # rebuild the right-hand side with per-ball calls
        rhs = np.zeros(4)
        for s in range(4):
            for a in range(3):
                u = UncertaintySet(kind, mdp.nominal[s, a, 0], 0.1)
                rhs[s] += pi[s, a] * (mdp.rewards[s, a] + sigma(u, gb.bias).value)
        assert np.abs(rhs - gb.gain - gb.bias).max() <= 1e-10
        assert gb.bias[0] == 0.0


def test_gain_is_lower_bound_over_sampled_kernels():
    rng = np.random.default_rng(2)
    mdp = random_mdp(rng, 3, 2, "kl", 0.05)
    pi = random_policy(rng, 3, 2, deterministic=True)
    act = pi.argmax(axis=1)
    g = robust_policy_eval(mdp, pi).gain
    r = mdp.rewards[np.arange(3), act]
    rows = [sample_ball(mdp.nominal[s, act[s], 0], "kl", 0.05, rng, size=500) for s in range(3)]
    gains = [exact_gain_bias(np.stack([rows[s][k] for s in range(3)]), r).gain
             for k in range(500)]
    assert min(gains) >= g - 1e-10
    # the worst-case kernel itself is feasible and attains the gain
    gb = robust_policy_eval(mdp, pi)
    assert exact_gain_bias(gb.kernel, r).gain == pytest.approx(g, abs=1e-8)


def test_worst_case_kernel_reproduces_gain():
    rng = np.random.default_rng(3)
    for kind in ("kl", "l1"):
        mdp = random_mdp(rng, 5, 2, kind, 0.1)
        pi = random_policy(rng, 5, 2)
        gb = robust_policy_eval(mdp, pi, tol=1e-11)
        r = np.einsum("sa,sa->s", pi, mdp.rewards)
        mu = stationary(gb.kernel)
        assert mu @ r == pytest.approx(gb.gain, abs=1e-8)


def test_shift_invariance_of_start():
    rng = np.random.default_rng(4)
    mdp = random_mdp(rng, 4, 2, "kl", 0.1)
    pi = random_policy(rng, 4, 2)
    h0 = rng.normal(size=4)
    a = robust_policy_eval(mdp, pi, tol=1e-11, h0=h0)
    b = robust_policy_eval(mdp, pi, tol=1e-11, h0=h0 + 3.7)
    assert a.gain == pytest.approx(b.gain, abs=1e-9)
    np.testing.assert_allclose(a.bias, b.bias, atol=1e-9)


def test_span_trace_contracts_over_windows():
    rng = np.random.default_rng(5)
    mdp = random_mdp(rng, 4, 2, "kl", 0.05)
    gb = robust_policy_eval(mdp, random_policy(rng, 4, 2), tol=1e-11, trace=True)
    t = np.array(gb.trace)
    S = 4
    windows = t[::S]
    assert np.all(np.diff(windows) <= 1e-14 + 1e-9 * windows[:-1])
    assert windows[-1] < windows[0]


def test_max_iter_raises():
    rng = np.random.default_rng(6)
    mdp = random_mdp(rng, 4, 2, "kl", 0.05)
    with pytest.raises(MaxIterExceeded) as err:
        robust_policy_eval(mdp, random_policy(rng, 4, 2), tol=1e-14, max_iter=3)
    assert err.value.iterations == 3 and err.value.residual > 0


def test_bad_policy():
    mdp = random_mdp(np.random.default_rng(0), 3, 2)
    with pytest.raises(PolicyError):
        robust_policy_eval(mdp, np.full((3, 2), 0.6))
    with pytest.raises(PolicyError):
        robust_policy_eval(mdp, np.full((2, 2), 0.5))


# ------------------------------------------------------------------ optimal control


def test_optimal_matches_enumeration_and_greedy_certificate():
    rng = np.random.default_rng(7)
    for _ in range(5):
        mdp = random_mdp(rng, 3, 2, "kl", 0.1)
        best = max(robust_policy_eval(mdp, p).gain for p in _policies(3, 2))
        opt, act = robust_optimal_control(mdp)
        assert opt.gain == pytest.approx(best, abs=1e-6)
        assert robust_policy_eval(mdp, act).gain == pytest.approx(opt.gain, abs=2e-9)


def test_trap_instance():
    # action 1 pays 1 now but moves the chain towards the poor state 1
    rewards = np.array([[0.5, 1.0], [0.0, 0.0]])
    nominal = np.array([[[0.9, 0.1], [0.3, 0.7]], [[0.5, 0.5], [0.5, 0.5]]])
    mdp = RobustMDP.from_kernel(rewards, nominal, "kl", 0.05)
    gains = {tuple(p.argmax(axis=1)): robust_policy_eval(mdp, p).gain for p in _policies(2, 2)}
    opt, act = robust_optimal_control(mdp)
    assert opt.gain == pytest.approx(max(gains.values()), abs=1e-6)
    assert act[0] == 0


def test_single_action_optimal_equals_eval():
    mdp = random_mdp(np.random.default_rng(8), 4, 1, "l1", 0.2)
    opt, act = robust_optimal_control(mdp)
    ev = robust_policy_eval(mdp, np.ones((4, 1)))
    assert opt.gain == pytest.approx(ev.gain, abs=1e-12)
    np.testing.assert_array_equal(act, 0)


def test_best_response_matches_enumeration():
    rng = np.random.default_rng(9)
    g = random_game(rng, 2, (2, 2), theta=0.05)
    others = {1: rng.dirichlet(np.ones(2), size=2)}
    mdp = induce_mdp(g, 0, others)
    best = max(robust_policy_eval(mdp, p).gain for p in _policies(2, 2))
    probs, gain = best_response(g, 0, others)
    assert gain == pytest.approx(best, abs=1e-6)
    assert probs.shape == (2, 2) and set(np.unique(probs)) <= {0.0, 1.0}


def test_best_response_with_irrelevant_opponent():
    rng = np.random.default_rng(10)
    single = random_mdp(rng, 3, 2, "kl", 0.1)
    A = 2
    rew = np.repeat(single.rewards[:, :, None], A, axis=2).reshape(3, 4)
    nom = np.repeat(single.nominal[:, :, 0][:, :, None, :], A, axis=2).reshape(3, 4, 3)
    g = build_game({"agents": 2, "states": 3, "actions_per_agent": [2, 2],
                    "rewards": np.stack([rew, rew]), "nominal": nom, "theta": 0.1})
    _, gain = best_response(g, 0, {1: rng.dirichlet(np.ones(2), size=3)})
    assert gain == pytest.approx(robust_optimal_control(single)[0].gain, abs=1e-9)


def test_evaluate_joint_requires_policy():
    g = random_game(np.random.default_rng(0), 2, (2, 2))
    with pytest.raises(PolicyError):
        evaluate_joint(g, [np.full((2, 2), 0.5)] * 2, 0)


# ------------------------------------------------------------------------ discounted


def test_discounted_gamma_zero_and_constant():
    rng = np.random.default_rng(11)
    mdp = random_mdp(rng, 3, 2, "kl", 0.2)
    pi = random_policy(rng, 3, 2)
    v = discounted_robust_eval(mdp, pi, 0.0)
    np.testing.assert_allclose(v.values, np.einsum("sa,sa->s", pi, mdp.rewards), atol=1e-15)
    c = RobustMDP.from_kernel(np.full((3, 2), 0.4), mdp.nominal[:, :, 0], "kl", 0.2)
    np.testing.assert_allclose(discounted_robust_eval(c, pi, 0.9, tol=1e-12).values, 4.0,
                               atol=1e-10)


def test_discounted_singleton_linear_solve():
    rng = np.random.default_rng(12)
    mdp = random_mdp(rng, 4, 3, "singleton", 0.0)
    pi = random_policy(rng, 4, 3)
    P = np.einsum("sa,sat->st", pi, mdp.nominal[:, :, 0])
    r = np.einsum("sa,sa->s", pi, mdp.rewards)
    want = np.linalg.solve(np.eye(4) - 0.95 * P, r)
    got = discounted_robust_eval(mdp, pi, 0.95, tol=1e-10).values
    np.testing.assert_allclose(got, want, atol=1e-8)


def test_discounted_optimal_matches_enumeration():
    rng = np.random.default_rng(13)
    mdp = random_mdp(rng, 2, 2, "singleton", 0.0)
    best = np.max([discounted_robust_eval(mdp, p, 0.9, tol=1e-12).values
                   for p in _policies(2, 2)], axis=0)
    dv, act = discounted_robust_optimal(mdp, 0.9, tol=1e-12)
    np.testing.assert_allclose(dv.values, best, atol=1e-9)
    single = RobustMDP.from_kernel(mdp.rewards[:, :1], mdp.nominal[:, :1, 0])
    a = discounted_robust_optimal(single, 0.8, tol=1e-12)[0].values
    b = discounted_robust_eval(single, np.ones((2, 1)), 0.8, tol=1e-12).values
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_discounted_contraction():
    rng = np.random.default_rng(14)
    mdp = random_mdp(rng, 4, 2, "kl", 0.1)
    gamma = 0.9
    for _ in range(50):
        V, W = rng.normal(size=(2, 4)) * 3
        TV = (mdp.rewards + gamma * mdp.sigma(V)[0]).max(axis=1)
        TW = (mdp.rewards + gamma * mdp.sigma(W)[0]).max(axis=1)
        assert np.abs(TV - TW).max() <= gamma * np.abs(V - W).max() + 1e-12


def test_discounted_values_approach_gain():
    rng = np.random.default_rng(15)
    mdp = random_mdp(rng, 5, 2, "kl", 0.05)
    g = robust_optimal_control(mdp, tol=1e-11)[0].gain
    gaps = []
    for gamma in (0.9, 0.97, 0.99):
        V = discounted_robust_optimal(mdp, gamma, tol=1e-6)[0].values
        gaps.append(np.abs((1 - gamma) * V - g).max())
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 2e-2


def test_discounted_best_response_shape():
    rng = np.random.default_rng(16)
    g = random_game(rng, 3, (2, 3))
    probs, values = discounted_best_response(g, 1, JointPolicy.uniform(g), 0.9)
    assert probs.shape == (3, 3) and values.shape == (3,)


def test_bad_gamma():
    mdp = random_mdp(np.random.default_rng(0), 2, 2)
    with pytest.raises(ValueError):
        discounted_robust_optimal(mdp, 1.0)
