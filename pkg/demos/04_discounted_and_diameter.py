"""
Discounted approximation and the robust diameter
================================================

An upper bound on the robust diameter picks a discount factor for a target
accuracy; scaled discounted values then track the average reward, and the
discounted equilibrium is an approximate average-reward equilibrium.
"""

import numpy as np

from robustmg import (
    JointPolicy,
    build_game,
    discount_for_epsilon,
    evaluate_joint,
    induce_mdp,
    robust_diameter_upper,
    robust_nash_iteration_discounted,
    verify_ne,
)
from robustmg.robust_dp import discounted_robust_eval

rng = np.random.default_rng(2)
S, actions = 4, (2, 2)
nominal = rng.dirichlet(np.ones(S), size=(S, 4))
nominal[..., -1] = 1.0 - nominal[..., :-1].sum(axis=-1)
game = build_game({"agents": 2, "states": S, "actions_per_agent": list(actions),
                   "rewards": rng.random((2, S, 4)), "nominal": nominal, "theta": 0.05})

D = robust_diameter_upper(game)
for eps in (0.2, 0.05):
    gamma = discount_for_epsilon(D, eps)
    pol = JointPolicy.uniform(game)
    v = discounted_robust_eval(induce_mdp(game, 0, pol), pol.probs[0], gamma).values
    g = evaluate_joint(game, pol, 0).gain
    res = robust_nash_iteration_discounted(game, gamma)
    print(f"D<={D:.3f} eps={eps} gamma={gamma:.4f}  "
          f"max|(1-gamma)V - g|={np.abs((1 - gamma) * v - g).max():.2e}  "
          f"average-reward epsilon of discounted NE={verify_ne(game, res.policy).epsilon:.2e}")
