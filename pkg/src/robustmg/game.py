"""Markov games with rectangular uncertainty, joint policies and induced robust MDPs.

Joint actions are flattened row-major in agent order, i.e. ``np.ravel_multi_index``
over ``actions = (A_0, ..., A_{N-1})``; agent 0 is the slowest-varying index.
"""

import itertools
import json
from dataclasses import dataclass
from math import prod

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import GameSpecError, NonStochasticRow, PolicyError
from .support import KINDS, UncertaintySet, sigma_batch

__all__ = [
    "RewardScale",
    "MarkovGame",
    "JointPolicy",
    "RobustMDP",
    "UncertaintySet",
    "build_game",
    "load_game",
    "save_game",
    "induce_mdp",
    "joint_mdp",
    "marginal_reward",
    "is_irreducible",
]

ROW_TOL = 1e-12


@dataclass(frozen=True)
class RewardScale:
    """Affine map between raw and normalized rewards: ``raw = offset + scale * normalized``."""

    offset: float = 0.0
    scale: float = 1.0

    @classmethod
    def fit(cls, raw):
        lo, hi = float(np.min(raw)), float(np.max(raw))
        if lo >= 0.0 and hi <= 1.0:
            return cls()
        if hi == lo:
            return cls(offset=lo, scale=1.0)
        return cls(offset=lo, scale=hi - lo)

    def normalize(self, raw):
        return (np.asarray(raw, dtype=float) - self.offset) / self.scale

    def gain_to_raw(self, g):
        return self.offset + self.scale * np.asarray(g, dtype=float)

    def bias_to_raw(self, h):
        return self.scale * np.asarray(h, dtype=float)

    def discounted_to_raw(self, V, gamma):
        return self.offset / (1.0 - gamma) + self.scale * np.asarray(V, dtype=float)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MarkovGame:
    """A distributionally robust Markov game.

    Attributes
    ----------
    actions : tuple of int
        Per-agent action counts.
    rewards : ndarray, shape (N, S, A)
        Rewards in [0, 1] (after normalization), indexed by flattened joint action.
    nominal : ndarray, shape (S, A, S)
        Nominal kernel; each ``nominal[s, a]`` is the centre of one ball.
    divergence : {'singleton', 'kl', 'l1'}
    theta : float
        Common radius of every ``(s, a)`` ball.
    reward_scale : RewardScale
        Map back to the units the rewards were supplied in.
    """

    actions: tuple
    rewards: np.ndarray
    nominal: np.ndarray
    divergence: str = "kl"
    theta: float = 0.0
    reward_scale: RewardScale = RewardScale()

    @property
    def num_agents(self):
        return len(self.actions)

    @property
    def num_states(self):
        return self.nominal.shape[0]

    @property
    def num_joint(self):
        return self.nominal.shape[1]

    @property
    def raw_rewards(self):
        return self.reward_scale.offset + self.reward_scale.scale * self.rewards

    def ball(self, s, a):
        return UncertaintySet(self.divergence, self.nominal[s, a], self.theta)

    def joint_index(self, per_agent):
        return int(np.ravel_multi_index(tuple(per_agent), self.actions))

    def with_theta(self, theta):
        """Same game with a different radius (``0`` gives the non-robust game)."""
        return MarkovGame(self.actions, self.rewards, self.nominal, self.divergence,
                          float(theta), self.reward_scale)

    def sigma(self, V):
        """Support functions for every ``(s, joint a)``.

        ``V`` may be ``(S,)`` or stacked ``(K, S)``; returns values of shape
        ``(S, A)`` (or ``(K, S, A)``) and matching minimizer rows.
        """
        V = np.asarray(V, dtype=float)
        if V.ndim == 1:
            return sigma_batch(self.nominal, V, self.divergence, self.theta)[:2]
        nom = np.broadcast_to(self.nominal, (V.shape[0],) + self.nominal.shape)
        return sigma_batch(nom, V[:, None, None, :], self.divergence, self.theta)[:2]

    def to_dict(self):
        """Game description in original reward units (the JSON file schema)."""
        return {
            "agents": self.num_agents,
            "states": self.num_states,
            "actions_per_agent": list(self.actions),
            "rewards": self.raw_rewards.tolist(),
            "nominal": self.nominal.tolist(),
            "theta": self.theta,
            "divergence": self.divergence,
        }


def build_game(description):
    """Validate a game description and return a normalized :class:`MarkovGame`.

    ``description`` is a mapping with keys ``agents``, ``states``,
    ``actions_per_agent``, ``rewards[i][s][a]``, ``nominal[s][a][s']``,
    ``theta`` and ``divergence`` (default ``'kl'``).
    """
    try:
        n = int(description["agents"])
        S = int(description["states"])
        actions = tuple(int(x) for x in description["actions_per_agent"])
        raw = np.asarray(description["rewards"], dtype=float)
        nominal = np.asarray(description["nominal"], dtype=float)
    except KeyError as err:
        raise GameSpecError(f"missing field {err.args[0]!r}") from None
    except (TypeError, ValueError) as err:
        raise GameSpecError(f"malformed field: {err}") from None
    theta = float(description.get("theta", 0.0))
    kind = str(description.get("divergence", "kl")).lower()

    if n < 1 or len(actions) != n:
        raise GameSpecError(f"agents={n} but actions_per_agent has {len(actions)} entries")
    if S < 2:
        raise GameSpecError("need at least 2 states")
    if min(actions) < 1:
        raise GameSpecError("every agent needs at least one action")
    A = prod(actions)
    if raw.shape != (n, S, A):
        raise GameSpecError(f"rewards shape {raw.shape}, expected {(n, S, A)}")
    if nominal.shape != (S, A, S):
        raise GameSpecError(f"nominal shape {nominal.shape}, expected {(S, A, S)}")
    if not np.all(np.isfinite(raw)):
        raise GameSpecError("rewards must be finite")
    if kind not in KINDS:
        raise GameSpecError(f"unknown divergence {kind!r}")
    if not np.isfinite(theta) or theta < 0:
        raise GameSpecError(f"theta must be nonnegative, got {theta}")
    bad = (nominal < 0).any(axis=-1) | (np.abs(nominal.sum(axis=-1) - 1.0) > ROW_TOL)
    if bad.any():
        s, a = np.argwhere(bad)[0]
        raise NonStochasticRow(
            f"nominal[{s}][{a}] is not a distribution (sum={nominal[s, a].sum():.6g})")

    scale = RewardScale.fit(raw)
    return MarkovGame(actions, _frozen(scale.normalize(raw)), _frozen(nominal), kind, theta, scale)


def load_game(path):
    with open(path) as fh:
        return build_game(json.load(fh))


def save_game(game, path):
    with open(path, "w") as fh:
        json.dump(game.to_dict(), fh, indent=1)


# --------------------------------------------------------------------------- policies


@dataclass(frozen=True, eq=False)
class JointPolicy:
    """Product policy: ``probs[i][s]`` is agent ``i``'s distribution at state ``s``."""

    probs: tuple

    def __post_init__(self):
        arrs = []
        for i, p in enumerate(self.probs):
            p = np.array(p, dtype=float)
            if p.ndim != 2:
                raise PolicyError(f"agent {i}: policy must be (states, actions)")
            if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > ROW_TOL):
                raise PolicyError(f"agent {i}: rows must be distributions")
            p.setflags(write=False)
            arrs.append(p)
        object.__setattr__(self, "probs", tuple(arrs))

    @classmethod
    def uniform(cls, game):
        S = game.num_states
        return cls(tuple(np.full((S, k), 1.0 / k) for k in game.actions))

    @classmethod
    def deterministic(cls, game, choice):
        """``choice[i][s]`` is the action agent ``i`` plays at state ``s``."""
        S = game.num_states
        out = []
        for k, c in zip(game.actions, choice):
            p = np.zeros((S, k))
            p[np.arange(S), np.asarray(c, dtype=int)] = 1.0
            out.append(p)
        return cls(tuple(out))

    @property
    def num_agents(self):
        return len(self.probs)

    def check(self, game):
        if self.num_agents != game.num_agents:
            raise PolicyError(f"policy has {self.num_agents} agents, game has {game.num_agents}")
        for i, (p, k) in enumerate(zip(self.probs, game.actions)):
            if p.shape != (game.num_states, k):
                raise PolicyError(f"agent {i}: shape {p.shape}, expected {(game.num_states, k)}")
        return self

    def joint(self):
        """Joint-action probabilities, shape ``(S, A)`` in row-major agent order."""
        out = self.probs[0]
        for p in self.probs[1:]:
            out = (out[:, :, None] * p[:, None, :]).reshape(out.shape[0], -1)
        return out

    def replace(self, agent, probs):
        new = list(self.probs)
        new[agent] = probs
        return JointPolicy(tuple(new))

    def to_list(self):
        return [p.tolist() for p in self.probs]

    @classmethod
    def from_list(cls, data):
        if isinstance(data, dict):
            data = data["policy"]
        return cls(tuple(np.asarray(p, dtype=float) for p in data))


def marginal_reward(game, policy, agent):
    """Expected one-step reward of ``agent`` under a joint policy, per state."""
    policy.check(game)
    return np.einsum("sa,sa->s", policy.joint(), game.rewards[agent])


# ---------------------------------------------------------------- single-agent views


@dataclass(frozen=True, eq=False)
class RobustMDP:
    """Single-agent robust MDP whose balls may be mixtures of rectangular balls.

    ``sigma(V)[s, a] = sum_k weights[s, a, k] * sigma_{nominal[s, a, k]}(V)``.
    A plain MDP has ``K = 1``; an induced MDP uses the other agents' joint
    actions as components.
    """

    rewards: np.ndarray   # (S, A)
    nominal: np.ndarray   # (S, A, K, S)
    weights: np.ndarray   # (S, A, K)
    divergence: str = "kl"
    theta: float = 0.0

    @classmethod
    def from_kernel(cls, rewards, nominal, divergence="kl", theta=0.0):
        """Plain robust MDP from ``rewards (S, A)`` and ``nominal (S, A, S)``."""
        rewards = np.asarray(rewards, dtype=float)
        nominal = np.asarray(nominal, dtype=float)
        if nominal.shape[:2] != rewards.shape or nominal.shape[0] != nominal.shape[2]:
            raise GameSpecError("rewards (S, A) and nominal (S, A, S) disagree")
        bad = (nominal < 0).any(axis=-1) | (np.abs(nominal.sum(axis=-1) - 1.0) > ROW_TOL)
        if bad.any():
            raise NonStochasticRow("nominal rows must be distributions")
        w = np.ones(rewards.shape + (1,))
        return cls(_frozen(rewards), _frozen(nominal[:, :, None, :]), _frozen(w),
                   str(divergence).lower(), float(theta))

    @property
    def num_states(self):
        return self.rewards.shape[0]

    @property
    def num_actions(self):
        return self.rewards.shape[1]

    def sigma(self, V, mask=None):
        """Values ``(S, A)`` and aggregated minimizer rows ``(S, A, S)``.

        Entries outside ``mask`` (shape ``(S, A)``) are skipped and left at zero.
        """
        S, A, K, _ = self.nominal.shape
        w = self.weights if mask is None else self.weights * np.asarray(mask)[:, :, None]
        live = w > 0
        vals = np.zeros((S, A))
        rows = np.zeros((S, A, S))
        if not live.any():
            return vals, rows
        v, q, _ = sigma_batch(self.nominal[live], V, self.divergence, self.theta)
        wl = w[live]
        idx = np.nonzero(live)
        np.add.at(vals, (idx[0], idx[1]), wl * v)
        np.add.at(rows, (idx[0], idx[1]), wl[:, None] * q)
        return vals, rows


def joint_mdp(game, agent):
    """The robust MDP for ``agent`` whose actions are the game's joint actions."""
    S, A = game.num_states, game.num_joint
    return RobustMDP(game.rewards[agent], game.nominal[:, :, None, :],
                     _frozen(np.ones((S, A, 1))), game.divergence, game.theta)


def _others_probs(game, agent, others):
    if not 0 <= agent < game.num_agents:
        raise PolicyError(f"agent {agent} out of range for {game.num_agents} agents")
    want = [j for j in range(game.num_agents) if j != agent]
    if isinstance(others, JointPolicy):
        others.check(game)
        return [others.probs[j] for j in want]
    keys = sorted(others)
    if keys != want:
        raise PolicyError(f"others cover agents {keys}, expected {want}")
    out = []
    for j in want:
        p = np.asarray(others[j], dtype=float)
        if p.shape != (game.num_states, game.actions[j]):
            raise PolicyError(f"agent {j}: shape {p.shape}")
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > ROW_TOL):
            raise PolicyError(f"agent {j}: rows must be distributions")
        out.append(p)
    return out


def induce_mdp(game, agent, others):
    """Robust MDP faced by ``agent`` when all other agents follow fixed policies.

    ``others`` is either a full :class:`JointPolicy` (the entry of ``agent``
    is ignored) or a mapping ``{j: probs}`` covering exactly the other agents.
    Rewards are marginalized exactly; each ``(s, a_i)`` ball is the
    ``pi_{-i}``-mixture of the joint-action balls, so its support function is
    the weighted sum of theirs (valid by rectangularity).
    """
    probs = _others_probs(game, agent, others)
    S, N = game.num_states, game.num_agents
    shape = game.actions
    # weights over the full joint action for each own action a_i: (S, A_i, A)
    w = np.ones((S,) + shape)
    pos = 0
    for j in range(N):
        if j == agent:
            continue
        p = probs[pos]
        pos += 1
        bshape = [S] + [1] * N
        bshape[1 + j] = shape[j]
        w = w * p.reshape(bshape)
    # bring agent axis to front: (S, A_i, rest...)
    w = np.moveaxis(w, 1 + agent, 1)
    Ai = shape[agent]
    w = w.reshape(S, Ai, -1)                          # (S, A_i, A_{-i})
    # joint index of (a_i, b) for each b in the flattened "others" ordering
    grids = np.indices(shape)
    grids = np.moveaxis(grids, 1 + agent, 1)          # (N, A_i, rest...)
    flat = np.ravel_multi_index(tuple(grids), shape).reshape(Ai, -1)  # (A_i, A_{-i})
    nom = game.nominal[:, flat, :]                    # (S, A_i, A_{-i}, S)
    rew = np.einsum("sak,sak->sa", w, game.rewards[agent][:, flat])
    return RobustMDP(_frozen(rew), _frozen(nom), _frozen(w), game.divergence, game.theta)


# ------------------------------------------------------------------ irreducibility


def _persistent_support(game):
    """Edges every kernel in the uncertainty set is guaranteed to keep."""
    if game.divergence == "l1" and game.theta > 0:
        return game.nominal > game.theta / 2.0
    return game.nominal > 0


def _strongly_connected(adj):
    n, labels = connected_components(adj, directed=True, connection="strong")
    return n == 1


def is_irreducible(game, full=None, samples=256, seed=0):
    """Check irreducibility of the nominal chain for deterministic joint policies.

    Full enumeration is used when ``full`` is True, or by default when the game
    has at most 8 joint actions and 6 states; otherwise ``samples`` random
    deterministic policies are spot-checked.  KL balls share the nominal
    support, so the check covers every kernel in the set; for L1 balls only
    edges with nominal mass above ``theta/2`` are counted.
    """
    edges = _persistent_support(game)
    S, A = game.num_states, game.num_joint
    if full is None:
        full = A <= 8 and S <= 6
    if full:
        choices = itertools.product(range(A), repeat=S)
    else:
        rng = np.random.default_rng(seed)
        choices = (rng.integers(0, A, size=S) for _ in range(samples))
    rows = np.arange(S)
    for c in choices:
        if not _strongly_connected(edges[rows, np.asarray(c)]):
            return False
    return True
