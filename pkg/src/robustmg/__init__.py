"""Distributionally robust Markov games under the average-reward criterion."""

from .errors import (
    Divergence,
    GameSpecError,
    MaxIterExceeded,
    MaxRoundsExceeded,
    NoEquilibriumFound,
    NonStochasticRow,
    PolicyError,
    RobustMGError,
    UnsupportedGameClass,
)
from .experiments import (
    StructuredEnvSpec,
    SweepResult,
    generate_structured_env,
    plot_sweep,
    run_figure1,
    run_figure2,
)
from .game import (
    JointPolicy,
    MarkovGame,
    RewardScale,
    RobustMDP,
    build_game,
    induce_mdp,
    is_irreducible,
    load_game,
    marginal_reward,
    save_game,
)
from .nash import (
    discount_for_epsilon,
    robust_diameter_upper,
    robust_nash_iteration_avg,
    robust_nash_iteration_discounted,
    verify_ne,
    verify_ne_discounted,
)
from .robust_dp import (
    GainBias,
    best_response,
    discounted_robust_eval,
    discounted_robust_optimal,
    evaluate_joint,
    robust_optimal_control,
    robust_policy_eval,
)
from .stage_games import StageEquilibrium, StageGame, solve_stage
from .support import SupportResult, UncertaintySet, sigma, sigma_max

__version__ = "0.1.0"
