"""Robust Nash-Iteration (average and discounted), NE verification, robust diameter."""

from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import Divergence, MaxRoundsExceeded
from .game import JointPolicy, induce_mdp
from .robust_dp import (
    DEFAULT_TOL,
    discounted_robust_eval,
    discounted_robust_optimal,
    robust_optimal_control,
    robust_policy_eval,
)
from .stage_games import GENERAL_BIMATRIX, solve_stage
from .support import sigma_max_batch

DEFAULT_NASH_TOL = 1e-8
DEFAULT_MAX_ROUNDS = 100_000


@dataclass
class NashIterationResult:
    """Output of average-reward Robust Nash-Iteration.

    ``gains[i]`` is the constant that ``h_i - h_i^0`` settles to, ``biases[i]``
    the anchored bias snapshot the final policy was computed from.  Values
    are in normalized reward units; see ``MarkovGame.reward_scale``.
    """

    policy: JointPolicy
    gains: np.ndarray
    biases: np.ndarray
    rounds: int
    span: float
    span_trace: list = field(default_factory=list)
    oracle_counts: dict = field(default_factory=dict)
    converged: bool = True

    @property
    def heuristic(self):
        """True if any stage game went through the bimatrix (heuristic) oracle."""
        return self.oracle_counts.get(GENERAL_BIMATRIX, 0) > 0

    @property
    def oracle_class(self):
        return max(self.oracle_counts, key=self.oracle_counts.get) if self.oracle_counts else ""


@dataclass
class DiscountedNashResult:
    policy: JointPolicy
    gamma: float
    values: np.ndarray
    rounds: int
    residual: float
    residual_trace: list = field(default_factory=list)
    oracle_counts: dict = field(default_factory=dict)
    converged: bool = True

    @property
    def heuristic(self):
        return self.oracle_counts.get(GENERAL_BIMATRIX, 0) > 0

    @property
    def oracle_class(self):
        return max(self.oracle_counts, key=self.oracle_counts.get) if self.oracle_counts else ""


@dataclass(frozen=True)
class NeVerification:
    gains: np.ndarray
    best_gains: np.ndarray
    gaps: np.ndarray

    @property
    def epsilon(self):
        return float(self.gaps.max())


def _stage_sweep(game, Q, mode, counts, prev):
    """Solve every state's stage game; return (JointPolicy, values (N, S)).

    ``prev`` holds last round's equilibria and is updated in place; bimatrix
    stages keep last round's supports while those still carry an equilibrium,
    which stops the welfare selection from hopping between equilibria.
    """
    N, S = game.num_agents, game.num_states
    shape = (N,) + tuple(game.actions)
    probs = [np.empty((S, k)) for k in game.actions]
    vals = np.empty((N, S))
    for s in range(S):
        eq = solve_stage(Q[:, s].reshape(shape), mode, prev[s])
        prev[s] = eq
        counts[eq.tag] += 1
        for i in range(N):
            probs[i][s] = eq.strategies[i]
        vals[:, s] = eq.values
    return JointPolicy(tuple(probs)), vals


def iterate_nash_avg(game, mode="auto", h0=None):
    """Yield ``(round, policy, h_old, h_new_raw, counts)`` for each sweep of the average iteration.

    ``h_old`` is the anchored snapshot (``h_old[:, 0] == 0``) used to build the
    stage games; the next snapshot is ``h_new_raw`` re-anchored.
    """
    N, S = game.num_agents, game.num_states
    h = np.zeros((N, S)) if h0 is None else np.array(h0, dtype=float)
    h = h - h[:, :1]
    counts = Counter()
    prev = [None] * S
    rnd = 0
    while True:
        rnd += 1
        sig, _ = game.sigma(h)                      # (N, S, A)
        Q = game.rewards + sig
        policy, new = _stage_sweep(game, Q, mode, counts, prev)
        yield rnd, policy, h, new, counts
        h = new - new[:, :1]


def robust_nash_iteration_avg(game, tol=DEFAULT_NASH_TOL, max_rounds=DEFAULT_MAX_ROUNDS,
                              mode="auto"):
    """Average-reward Robust Nash-Iteration.

    Each round builds ``Q_i(s, a) = r_i(s, a) + sigma_{s,a}(h_i^0)`` for every
    agent, solves the stage game at each state, and sets
    ``h_i(s) = E_{pi(s)} Q_i(s, .)``.  The bias is re-anchored at state 0
    after each round; the run stops once ``max_i span(h_i - h_i^0) <= tol``.

    Raises
    ------
    MaxRoundsExceeded
        With the span trace and the last iterate attached.
    UnsupportedGameClass
        When a stage game has more than two agents and is not common payoff.
    """
    trace = []
    for rnd, policy, h_old, h_new, counts in iterate_nash_avg(game, mode):
        d = h_new - h_old
        spans = d.max(axis=1) - d.min(axis=1)
        span = float(spans.max())
        trace.append(span)
        gains = 0.5 * (d.max(axis=1) + d.min(axis=1))
        result = NashIterationResult(policy, gains, h_old.copy(), rnd, span, trace,
                                     dict(counts), span <= tol)
        if span <= tol:
            return result
        if rnd >= max_rounds:
            result.converged = False
            raise MaxRoundsExceeded(
                f"Nash-Iteration span {span:.3g} > tol {tol:g} after {rnd} rounds",
                span_trace=trace, result=result)


def iterate_nash_discounted(game, gamma, mode="auto", V0=None):
    N, S = game.num_agents, game.num_states
    V = np.zeros((N, S)) if V0 is None else np.array(V0, dtype=float)
    counts = Counter()
    prev = [None] * S
    rnd = 0
    while True:
        rnd += 1
        sig, _ = game.sigma(V)
        Q = game.rewards + gamma * sig
        policy, new = _stage_sweep(game, Q, mode, counts, prev)
        yield rnd, policy, V, new, counts
        V = new


def robust_nash_iteration_discounted(game, gamma, tol=DEFAULT_NASH_TOL,
                                     max_rounds=DEFAULT_MAX_ROUNDS, mode="auto"):
    """Discounted Robust Nash-Iteration: ``Q_i = r_i + gamma sigma(V_i^0)``, ``V_i = E_pi Q_i``.

    Stops when ``gamma * max_i ||V_i - V_i^0||_inf <= tol (1 - gamma)``.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    trace = []
    for rnd, policy, V_old, V_new, counts in iterate_nash_discounted(game, gamma, mode):
        diff = float(np.abs(V_new - V_old).max())
        trace.append(diff)
        done = gamma * diff <= tol * (1.0 - gamma)
        result = DiscountedNashResult(policy, gamma, V_new.copy(), rnd, diff, trace,
                                      dict(counts), done)
        if done:
            return result
        if rnd >= max_rounds:
            result.converged = False
            raise MaxRoundsExceeded(
                f"discounted Nash-Iteration change {diff:.3g} after {rnd} rounds",
                span_trace=trace, result=result)


def verify_ne(game, candidate, tol=DEFAULT_TOL):
    """Deviation gaps ``best-response gain - candidate gain`` for every agent."""
    candidate.check(game)
    gains, best = [], []
    for i in range(game.num_agents):
        mdp = induce_mdp(game, i, candidate)
        gains.append(robust_policy_eval(mdp, candidate.probs[i], tol).gain)
        best.append(robust_optimal_control(mdp, tol)[0].gain)
    gains, best = np.array(gains), np.array(best)
    return NeVerification(gains, best, best - gains)


def verify_ne_discounted(game, candidate, gamma, tol=DEFAULT_TOL):
    """Same as :func:`verify_ne` on discounted robust values (gap is the sup over states)."""
    candidate.check(game)
    vals, best = [], []
    for i in range(game.num_agents):
        mdp = induce_mdp(game, i, candidate)
        vals.append(discounted_robust_eval(mdp, candidate.probs[i], gamma, tol).values)
        best.append(discounted_robust_optimal(mdp, gamma, tol)[0].values)
    vals, best = np.array(vals), np.array(best)
    gaps = (best - vals).max(axis=1)
    return NeVerification(vals, best, gaps)


def robust_diameter_upper(game, tol=1e-10, cap=1e6, max_iter=10**7):
    """Upper bound on the robust diameter via optimistic-adversary hitting times.

    For each target ``t``: ``T(t) = 0`` and
    ``T(s) = 1 + min_a max_{q in ball(s, a)} q . T`` otherwise.  Taking the
    adversary's max inside the agents' min bounds the max-min quantity
    from above.
    """
    S, A = game.num_states, game.num_joint
    nom = np.broadcast_to(game.nominal, (S,) + game.nominal.shape)   # (t, s, a, s')
    T = np.zeros((S, S))
    eye = np.eye(S, dtype=bool)
    for _ in range(max_iter):
        vals, _, _ = sigma_max_batch(nom, T[:, None, None, :], game.divergence, game.theta)
        new = 1.0 + vals.min(axis=2)
        new[eye] = 0.0
        if new.max() > cap:
            raise Divergence("robust hitting time exceeds cap; some target is unreachable")
        diff = np.abs(new - T).max()
        T = new
        if diff <= tol:
            return float(T.max())
    raise Divergence("robust hitting-time iteration did not settle")


def discount_for_epsilon(diameter, epsilon):
    """Discount factor ``max(0, 1 - epsilon / diameter)``."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if diameter < 1:
        raise ValueError("diameter must be at least 1")
    return max(0.0, 1.0 - epsilon / diameter)
