"""PAC sample-complexity bounds and what they imply for the learning rate."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .theory import DomainError

__all__ = [
    "PacProblem",
    "hypothesis_count",
    "sample_complexity",
    "fixed_target_error",
    "learning_rate_lower_bound",
]

# Above this confidence parameter the lower bound on l is treated with suspicion.
GAMMA_WARNING_THRESHOLD = 0.1


def hypothesis_count(action_count: int, world_count: int) -> int:
    """Number of decision functions of an agent with no prior knowledge."""
    if action_count < 1 or world_count < 0:
        raise DomainError("action_count must be >= 1 and world_count >= 0")
    return int(action_count) ** int(world_count)


@dataclass(frozen=True)
class PacProblem:
    hypothesis_count: int
    epsilon: float
    gamma: float
    initial_error: float = 1.0

    def __post_init__(self):
        if int(self.hypothesis_count) != self.hypothesis_count or self.hypothesis_count < 1:
            raise DomainError("hypothesis_count must be a positive integer")
        if not 0.0 < self.epsilon < 1.0:
            raise DomainError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not 0.0 < self.gamma < 1.0:
            raise DomainError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0.0 <= self.initial_error <= 1.0:
            raise DomainError("initial_error must lie in [0, 1]")

    @classmethod
    def for_agent(cls, action_count: int, world_count: int, epsilon: float, gamma: float, initial_error: float = 1.0):
        return cls(hypothesis_count(action_count, world_count), epsilon, gamma, initial_error)


def sample_complexity(p: PacProblem) -> int:
    """Smallest integer m with m >= ln(|H| / gamma) / epsilon."""
    # math.log accepts arbitrarily large ints, so |A|**|W| need not fit a float.
    bound = (math.log(p.hypothesis_count) - math.log(p.gamma)) / p.epsilon
    return max(0, math.ceil(bound))


def fixed_target_error(e0: float, l: float, n: int) -> float:
    """Expected error of a consistent learner after n steps on a fixed target."""
    if not 0.0 <= e0 <= 1.0 or not 0.0 <= l <= 1.0:
        raise DomainError("e0 and l must lie in [0, 1]")
    if n < 0:
        raise DomainError("n must be >= 0")
    return e0 * (1.0 - l) ** n


def learning_rate_lower_bound(e0: float, epsilon: float, m: int, gamma: float | None = None) -> float:
    """Smallest learning rate that brings e0 down to epsilon within m steps.

    The bound reads the PAC guarantee as certain, which is only reasonable
    for a small gamma; passing ``gamma`` above 0.1 emits a warning.  Returns 0
    when ``epsilon >= e0``.
    """
    if e0 == 0.0:
        raise DomainError(
            "the bound is undefined for e0 = 0; a consistent learner on a fixed "
            "target that starts with zero error keeps it for any learning rate"
        )
    if not 0.0 < e0 <= 1.0:
        raise DomainError("e0 must lie in (0, 1]")
    if not epsilon > 0.0:
        raise DomainError("epsilon must be positive")
    if m < 1:
        raise DomainError("m must be >= 1")
    if gamma is not None and gamma > GAMMA_WARNING_THRESHOLD:
        warnings.warn(
            f"gamma={gamma} is large; the bound assumes the PAC guarantee holds with near certainty",
            stacklevel=2,
        )
    if epsilon >= e0:
        return 0.0
    return -math.expm1(math.log(epsilon / e0) / m)
