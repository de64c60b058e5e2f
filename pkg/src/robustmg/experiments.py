"""Structured random environment and the two sweep pipelines.

The ``figure1`` sweep compares discounted equilibria over a grid of discount
factors with the average-reward equilibrium; ``figure2`` follows a robust and a non-robust
learner round by round.  Every value is the worst-case average reward of one
agent under the true uncertainty set, computed by ``robust_policy_eval`` and
reported in the raw reward units of the generated game.
"""

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import RobustMGError
from .game import build_game
from .nash import (
    iterate_nash_avg,
    robust_nash_iteration_avg,
    robust_nash_iteration_discounted,
)
from .robust_dp import evaluate_joint

DEFAULT_GAMMAS = tuple(round(0.5 + 0.05 * k, 2) for k in range(10)) + (0.99,)
COLUMNS = ("x", "value_avg_baseline", "value", "agent", "oracle_class",
           "learner", "converged", "rounds", "seed", "error")


@dataclass(frozen=True)
class StructuredEnvSpec:
    """Two clusters of states: a few prosperous ones and many deprived ones.

    States ``0 .. prosperous_count - 1`` are prosperous.  Transitions favour
    staying inside the current cluster by ``intra_cluster_factor``.
    """

    num_states: int = 20
    num_agents: int = 2
    actions_per_agent: int = 5
    prosperous_count: int = 5
    deprived_count: int = 15
    prosperous_mean: float = 2.0
    deprived_mean: float = -2.0
    reward_std: float = 1.0
    intra_cluster_factor: float = 5.0
    theta: float = 0.01
    divergence: str = "kl"
    seed: int = 0

    def __post_init__(self):
        if self.prosperous_count + self.deprived_count != self.num_states:
            raise ValueError("prosperous_count + deprived_count must equal num_states")
        if min(self.prosperous_count, self.deprived_count) < 0 or self.num_states < 2:
            raise ValueError("cluster sizes must be nonnegative and num_states >= 2")
        if self.theta < 0:
            raise ValueError("theta must be nonnegative")
        if self.num_agents < 1 or self.actions_per_agent < 1:
            raise ValueError("need at least one agent and one action")

    @classmethod
    def sized(cls, num_states, seed=0, **kw):
        """Keep the 1 : 3 prosperous/deprived ratio at a different state count."""
        p = max(1, num_states // 4)
        return cls(num_states=num_states, prosperous_count=p,
                   deprived_count=num_states - p, seed=seed, **kw)

    @classmethod
    def desk(cls, seed=7):
        """10-state configuration used when runtime matters."""
        return cls.sized(10, seed=seed)

    def replace(self, **kw):
        d = asdict(self)
        d.update(kw)
        if "num_states" in kw and "prosperous_count" not in kw:
            d["prosperous_count"] = max(1, d["num_states"] // 4)
            d["deprived_count"] = d["num_states"] - d["prosperous_count"]
        return StructuredEnvSpec(**d)


def generate_structured_env(spec):
    """Draw a game from ``spec``; identical seeds give bitwise-identical games.

    Rewards ``r_i(s, a)`` are i.i.d. normal around the cluster mean of ``s``
    for every agent and joint action (drawn first), then each nominal row gets
    uniform weights, multiplied by the intra-cluster factor on destinations
    in the same cluster, normalized.
    """
    rng = np.random.default_rng(spec.seed)
    S, N = spec.num_states, spec.num_agents
    A = spec.actions_per_agent ** N
    prosperous = np.arange(S) < spec.prosperous_count
    mean = np.where(prosperous, spec.prosperous_mean, spec.deprived_mean)
    rewards = rng.normal(mean[None, :, None], spec.reward_std, size=(N, S, A))
    w = rng.uniform(size=(S, A, S))
    same = prosperous[:, None] == prosperous[None, :]
    w *= np.where(same, spec.intra_cluster_factor, 1.0)[:, None, :]
    w /= w.sum(axis=-1, keepdims=True)
    # absorb rounding so every row passes the 1e-12 stochasticity check
    w[..., -1] = 1.0 - w[..., :-1].sum(axis=-1)
    return build_game({
        "agents": N,
        "states": S,
        "actions_per_agent": [spec.actions_per_agent] * N,
        "rewards": rewards,
        "nominal": w,
        "theta": spec.theta,
        "divergence": spec.divergence,
    })


# --------------------------------------------------------------------------- results


@dataclass
class SweepResult:
    """One table of sweep rows plus the average-reward baseline.

    Each row is a dict keyed by :data:`COLUMNS`; ``x`` is the discount
    factor (``figure1``) or the round number (``figure2``).
    """

    figure: str
    rows: list
    baseline: float
    meta: dict = field(default_factory=dict)

    def values(self, learner=None):
        return np.array([r["value"] for r in self.rows
                         if learner is None or r["learner"] == learner], dtype=float)

    def xs(self, learner=None):
        return np.array([r["x"] for r in self.rows
                         if learner is None or r["learner"] == learner], dtype=float)

    def to_csv(self, path=None):
        buf = io.StringIO()
        wr = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
        wr.writeheader()
        for row in self.rows:
            wr.writerow({k: _fmt(row.get(k, "")) for k in COLUMNS})
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def concat(cls, results):
        rows = [r for res in results for r in res.rows]
        return cls(results[0].figure, rows, results[0].baseline,
                   {"seeds": [res.meta.get("seed") for res in results]})


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _threads():
    try:
        n = int(os.environ.get("ROBUSTMG_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def _map(fn, items):
    n = min(_threads(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def _worst_case_value(game, policy, agent, tol):
    g = evaluate_joint(game, policy, agent, tol=tol).gain
    return float(game.reward_scale.gain_to_raw(g))


# --------------------------------------------------------------------------- figure1


def run_figure1(spec, gammas=DEFAULT_GAMMAS, tol=1e-8, agent=0, max_rounds=100_000,
                eval_tol=1e-9, game=None):
    """Worst-case average reward of discounted equilibria across ``gammas``.

    The baseline is the average-reward equilibrium from Robust
    Nash-Iteration.  A failure at one discount factor is recorded in the
    ``error`` column and the sweep goes on.
    """
    game = generate_structured_env(spec) if game is None else game
    avg = robust_nash_iteration_avg(game, tol=tol, max_rounds=max_rounds)
    baseline = _worst_case_value(game, avg.policy, agent, eval_tol)

    def one(gamma):
        row = {"x": float(gamma), "value_avg_baseline": baseline, "agent": agent,
               "learner": "discounted", "seed": spec.seed, "error": ""}
        try:
            res = robust_nash_iteration_discounted(game, gamma, tol=tol, max_rounds=max_rounds)
            row.update(value=_worst_case_value(game, res.policy, agent, eval_tol),
                       oracle_class=res.oracle_class, converged=res.converged,
                       rounds=res.rounds)
        except RobustMGError as err:
            row.update(value=float("nan"), oracle_class="", converged=False, rounds=0,
                       error=f"{type(err).__name__}: {err}".replace("\n", " "))
        return row

    rows = _map(one, list(gammas))
    meta = {"seed": spec.seed, "avg_rounds": avg.rounds, "avg_oracle_class": avg.oracle_class,
            "avg_heuristic": avg.heuristic}
    return SweepResult("figure1", rows, baseline, meta)


# --------------------------------------------------------------------------- figure2


def checkpoints(rounds):
    """Geometric checkpoints ``1, 2, 4, ...`` plus ``rounds`` itself."""
    out, k = [], 1
    while k < rounds:
        out.append(k)
        k *= 2
    return out + [rounds]


def _learner_trace(learn_game, eval_game, marks, agent, tol, eval_tol):
    rows = []
    marks = set(marks)
    last = max(marks)
    policy, counts, done = None, {}, False
    it = iterate_nash_avg(learn_game)
    for rnd in range(1, last + 1):
        if not done:
            _, policy, h_old, h_new, c = next(it)
            counts = dict(c)
            d = h_new - h_old
            done = float((d.max(axis=1) - d.min(axis=1)).max()) <= tol
        if rnd in marks:
            rows.append({"x": rnd, "value": _worst_case_value(eval_game, policy, agent, eval_tol),
                         "oracle_class": max(counts, key=counts.get) if counts else "",
                         "converged": done, "rounds": rnd})
    return rows


def run_figure2(spec, rounds=256, tol=1e-8, agent=0, eval_tol=1e-9, game=None):
    """Robust versus non-robust Nash-Iteration, both scored against the worst case.

    The non-robust learner runs the same iteration with the radius set to 0;
    both joint-policy snapshots are evaluated with the true radius at
    geometric checkpoints.  A learner that has converged keeps its policy.
    """
    game = generate_structured_env(spec) if game is None else game
    marks = checkpoints(rounds)
    learners = [("robust", game), ("nonrobust", game.with_theta(0.0))]
    traces = _map(lambda lg: _learner_trace(lg[1], game, marks, agent, tol, eval_tol), learners)
    rob = traces[0]
    baseline = rob[-1]["value"] if rob[-1]["converged"] else float("nan")
    rows = []
    for (name, _), trace in zip(learners, traces):
        for r in trace:
            rows.append({**r, "value_avg_baseline": baseline, "agent": agent,
                         "learner": name, "seed": spec.seed, "error": ""})
    return SweepResult("figure2", rows, baseline, {"seed": spec.seed, "rounds": rounds})


# --------------------------------------------------------------------------- plotting


def plot_sweep(result, path):
    """Line chart of a sweep, written as SVG with a fixed hash salt and no date."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with plt.rc_context({"svg.hashsalt": "robustmg", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        learners = sorted({r["learner"] for r in result.rows})
        for name in learners:
            seeds = sorted({r["seed"] for r in result.rows if r["learner"] == name})
            for seed in seeds:
                pts = [(r["x"], r["value"]) for r in result.rows
                       if r["learner"] == name and r["seed"] == seed]
                x, y = zip(*pts)
                label = name if len(seeds) == 1 else f"{name} (seed {seed})"
                ax.plot(x, y, marker="o", ms=3, label=label)
        if np.isfinite(result.baseline):
            ax.axhline(result.baseline, color="k", ls="--", lw=1, label="average-reward NE")
        if result.figure == "figure1":
            ax.set_xlabel("discount factor")
        else:
            ax.set_xlabel("round")
            ax.set_xscale("log", base=2)
        ax.set_ylabel("worst-case average reward")
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
