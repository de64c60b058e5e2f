"""Single-agent robust dynamic programming under average and discounted reward.

Average reward is handled by relative value iteration (RVI) on the robust
Bellman operator ``T h = sum_a pi(a|.) (r(., a) + sigma_a(h))``.  Each sweep
computes the one-step difference ``d = T h - h``; the gain estimate is the
midpoint of ``d`` and the Bellman residual is ``span(d) / 2``.  Iterates are
damped, ``h <- h + tau (d - d[s0])``, which keeps the anchor ``h[s0] = 0``
and makes periodic chains converge without moving the fixed points.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import MaxIterExceeded, PolicyError
from .game import JointPolicy, RobustMDP, induce_mdp

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 10**6
DAMPING = 0.9
TIE_TOL = 1e-12


@dataclass(frozen=True)
class GainBias:
    """Robust gain/bias pair with solver diagnostics.

    ``kernel`` is the worst-case chain assembled from the per-(s,a)
    minimizers at the terminal bias; ``trace`` holds ``span(T h - h)`` per
    sweep when requested.
    """

    gain: float
    bias: np.ndarray
    residual: float
    iterations: int
    kernel: Optional[np.ndarray] = None
    trace: Optional[tuple] = None


@dataclass(frozen=True)
class DiscountedValue:
    gamma: float
    values: np.ndarray
    residual: float
    iterations: int


def _policy_matrix(mdp, policy):
    p = np.asarray(policy, dtype=float)
    if p.ndim == 1:
        p = np.eye(mdp.num_actions)[p.astype(int)]
    if p.shape != (mdp.num_states, mdp.num_actions):
        raise PolicyError(f"policy shape {p.shape}, expected {(mdp.num_states, mdp.num_actions)}")
    if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-12):
        raise PolicyError("policy rows must be distributions")
    return p


def greedy(q, tie_tol=TIE_TOL):
    """Row-wise argmax taking the lowest index among near-ties."""
    best = q.max(axis=1, keepdims=True)
    return np.argmax(q >= best - tie_tol, axis=1)


def _rvi(step, S, h0, tol, max_iter, trace):
    h = np.zeros(S) if h0 is None else np.asarray(h0, dtype=float).copy()
    h = h - h[0]
    spans = [] if trace else None
    for it in range(1, max_iter + 1):
        th = step(h)
        d = th - h
        hi, lo = d.max(), d.min()
        if spans is not None:
            spans.append(hi - lo)
        if (hi - lo) / 2.0 <= tol:
            return h, 0.5 * (hi + lo), (hi - lo) / 2.0, it, spans
        h = h + DAMPING * (d - d[0])
    raise MaxIterExceeded(
        f"RVI did not reach tol={tol:g} in {max_iter} sweeps (residual {(hi - lo) / 2:.3g})",
        residual=(hi - lo) / 2.0, iterations=max_iter)


def robust_policy_eval(mdp, policy, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, h0=None,
                       trace=False):
    """Robust gain and anchored bias of a stationary policy.

    Parameters
    ----------
    mdp : RobustMDP
    policy : ndarray
        ``(S, A)`` action probabilities, or ``(S,)`` deterministic actions.
    tol : float
        Target sup-norm Bellman residual.

    Returns
    -------
    GainBias
        ``bias[0] == 0``; ``kernel`` is the assembled worst-case chain.
    """
    pi = _policy_matrix(mdp, policy)
    mask = pi > 0
    r_pi = np.einsum("sa,sa->s", pi, mdp.rewards)

    def step(h):
        vals, _ = mdp.sigma(h, mask)
        return r_pi + np.einsum("sa,sa->s", pi, vals)

    h, g, res, it, spans = _rvi(step, mdp.num_states, h0, tol, max_iter, trace)
    _, rows = mdp.sigma(h, mask)
    kernel = np.einsum("sa,sat->st", pi, rows)
    return GainBias(float(g), h, float(res), it, kernel, tuple(spans) if trace else None)


def robust_optimal_control(mdp, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, h0=None,
                           trace=False):
    """Optimal robust gain by RVI with a max over actions.

    Returns ``(GainBias, policy)`` where ``policy`` holds greedy actions at the
    terminal bias, ties going to the lowest action index.
    """
    def step(h):
        vals, _ = mdp.sigma(h)
        return (mdp.rewards + vals).max(axis=1)

    h, g, res, it, spans = _rvi(step, mdp.num_states, h0, tol, max_iter, trace)
    vals, rows = mdp.sigma(h)
    act = greedy(mdp.rewards + vals)
    kernel = rows[np.arange(mdp.num_states), act]
    return GainBias(float(g), h, float(res), it, kernel, tuple(spans) if trace else None), act


def best_response(game, agent, others, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Best response of ``agent`` to fixed policies of the others.

    Returns ``(probs, gain)`` with ``probs`` a deterministic ``(S, A_i)`` policy.
    """
    mdp = induce_mdp(game, agent, others)
    gb, act = robust_optimal_control(mdp, tol, max_iter)
    return np.eye(mdp.num_actions)[act], gb.gain


def _check_gamma(gamma):
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")


def _discounted(step, S, gamma, tol, max_iter, V0):
    V = np.zeros(S) if V0 is None else np.asarray(V0, dtype=float).copy()
    # a-posteriori bound: ||V_{t+1} - V*|| <= gamma/(1-gamma) ||V_{t+1} - V_t||
    for it in range(1, max_iter + 1):
        new = step(V)
        diff = np.abs(new - V).max()
        V = new
        if gamma * diff <= tol * (1.0 - gamma):
            return V, gamma * diff / (1.0 - gamma), it
    raise MaxIterExceeded(f"discounted iteration did not reach tol={tol:g}",
                          residual=diff, iterations=max_iter)


def discounted_robust_eval(mdp, policy, gamma, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
                           V0=None):
    """Fixed point of ``T_pi V = sum_a pi(a|.) (r + gamma sigma_a(V))`` to within ``tol``."""
    _check_gamma(gamma)
    pi = _policy_matrix(mdp, policy)
    mask = pi > 0
    r_pi = np.einsum("sa,sa->s", pi, mdp.rewards)

    def step(V):
        vals, _ = mdp.sigma(V, mask)
        return r_pi + gamma * np.einsum("sa,sa->s", pi, vals)

    V, res, it = _discounted(step, mdp.num_states, gamma, tol, max_iter, V0)
    return DiscountedValue(float(gamma), V, float(res), it)


def discounted_robust_optimal(mdp, gamma, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, V0=None):
    """Optimal robust discounted values and a greedy deterministic policy."""
    _check_gamma(gamma)

    def step(V):
        vals, _ = mdp.sigma(V)
        return (mdp.rewards + gamma * vals).max(axis=1)

    V, res, it = _discounted(step, mdp.num_states, gamma, tol, max_iter, V0)
    vals, _ = mdp.sigma(V)
    act = greedy(mdp.rewards + gamma * vals)
    return DiscountedValue(float(gamma), V, float(res), it), act


def discounted_best_response(game, agent, others, gamma, tol=DEFAULT_TOL):
    mdp = induce_mdp(game, agent, others)
    dv, act = discounted_robust_optimal(mdp, gamma, tol)
    return np.eye(mdp.num_actions)[act], dv.values


def evaluate_joint(game, policy, agent, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Worst-case average reward of ``agent`` under a joint policy (normalized units)."""
    if not isinstance(policy, JointPolicy):
        raise PolicyError("expected a JointPolicy")
    policy.check(game)
    mdp = induce_mdp(game, agent, policy)
    return robust_policy_eval(mdp, policy.probs[agent], tol, max_iter)
