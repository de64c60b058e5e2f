"""
Support functions of uncertainty balls
======================================

The worst-case expectation ``min_{q in B} q . V`` for KL and L1 balls around
a nominal row, compared against brute-force minimization over the ball.
"""

import numpy as np

from robustmg import UncertaintySet, sigma
from robustmg.oracles import grid_sigma

p0 = np.array([0.5, 0.3, 0.2])
V = np.array([1.0, 0.0, 2.0])
print("nominal expectation", p0 @ V)

# the adversary moves mass toward state 1 (lowest value) as the radius grows
for theta in (0.0, 0.01, 0.1, 0.5):
    for kind in ("kl", "l1"):
        res = sigma(UncertaintySet(kind, p0, theta), V)
        grid = grid_sigma(p0, kind, theta, V)
        print(f"{kind:3s} theta={theta:<5} sigma={res.value:.6f}  grid={grid:.6f}  "
              f"q*={np.round(res.minimizer, 4)}")

# shifting V by a constant shifts sigma by the same constant
c = 3.7
ball = UncertaintySet("kl", p0, 0.1)
print("translation", sigma(ball, V + c).value - sigma(ball, V).value)
