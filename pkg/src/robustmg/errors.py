"""Exception types raised across the package."""


class RobustMGError(Exception):
    """Base class for all package errors."""


class GameSpecError(RobustMGError, ValueError):
    """Inconsistent dimensions or invalid fields in a game description."""


class NonStochasticRow(GameSpecError):
    """A nominal transition row is not a probability distribution."""


class PolicyError(RobustMGError, ValueError):
    """A policy has the wrong shape, covers the wrong agents, or is not a distribution."""


class MaxIterExceeded(RobustMGError):
    """An iterative solver ran out of iterations before reaching its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class MaxRoundsExceeded(RobustMGError):
    """Robust Nash-Iteration did not meet its stopping rule within the round budget.

    ``result`` holds the last iterate so callers can still inspect or evaluate it.
    """

    def __init__(self, message, span_trace=None, result=None):
        super().__init__(message)
        self.span_trace = list(span_trace or [])
        self.result = result


class UnsupportedGameClass(RobustMGError):
    """No equilibrium oracle is available for this stage game (N > 2 general-sum)."""


class NoEquilibriumFound(RobustMGError):
    """Support enumeration found no equilibrium, even after perturbation."""


class Divergence(RobustMGError):
    """Robust hitting times blew up: some target is unreachable under the worst case."""
