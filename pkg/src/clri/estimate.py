"""Recover change, learning, retention and impact rates from simulator traces."""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .sim import Trace
from .theory import DomainError

__all__ = ["RateEstimate", "RateEstimates", "wilson_interval", "estimate_rates", "estimate_impact"]


def wilson_interval(successes: int, count: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if count <= 0:
        raise DomainError("the Wilson interval needs at least one trial")
    z = NormalDist().inv_cdf(0.5 + confidence / 2.0)
    p = successes / count
    z2 = z * z
    denom = 1.0 + z2 / count
    centre = (p + z2 / (2 * count)) / denom
    half = z * math.sqrt(p * (1.0 - p) / count + z2 / (4 * count * count)) / denom
    # The interval always contains p; clamping keeps round-off from breaking
    # that at k = 0 or k = n, where the exact bound equals p.
    return max(0.0, min(p, centre - half)), min(1.0, max(p, centre + half))


@dataclass(frozen=True)
class RateEstimate:
    """A frequency ``successes / count``; undefined (None) when count is 0."""

    successes: int
    count: int
    confidence: float = 0.95

    @property
    def defined(self) -> bool:
        return self.count > 0

    @property
    def value(self) -> float | None:
        return self.successes / self.count if self.count else None

    @property
    def interval(self) -> tuple[float, float] | None:
        return wilson_interval(self.successes, self.count, self.confidence) if self.count else None

    def covers(self, x: float) -> bool:
        iv = self.interval
        return iv is not None and iv[0] <= x <= iv[1]


@dataclass(frozen=True)
class RateEstimates:
    change: RateEstimate
    learning: RateEstimate
    retention: RateEstimate

    @property
    def c_hat(self):
        return self.change.value

    @property
    def l_hat(self):
        return self.learning.value

    @property
    def r_hat(self):
        return self.retention.value


def _window(trace: Trace, since: int):
    if not 0 <= since <= trace.steps:
        raise DomainError(f"since must lie in [0, {trace.steps}]")
    return slice(since, trace.steps)


def estimate_rates(trace: Trace, agent_index: int, since: int = 0) -> RateEstimates:
    """Empirical c, l, r of one agent over all (step, world) pairs from ``since`` on.

    Learning and retention are judged against the target in force when the
    mapping was updated (the old target), not the moved one.  Because a
    mapping can only become correct by changing, l_hat <= c_hat always.
    """
    if not 0 <= agent_index < trace.n_agents:
        raise DomainError(f"agent index {agent_index} out of range")
    win = _window(trace, since)
    dec = trace.decisions[:, agent_index]
    tgt = trace.targets[:, agent_index]
    was_correct = trace.correct[win, agent_index]
    old_target = tgt[win]
    before = dec[win]
    after = dec[since + 1 : trace.steps + 1]
    changed = after != before
    if trace.correct_if == "at_most":
        right_after = after <= old_target
    else:
        right_after = after == old_target

    wrong = ~was_correct
    n_wrong = int(wrong.sum())
    n_right = int(was_correct.sum())
    return RateEstimates(
        change=RateEstimate(int((changed & wrong).sum()), n_wrong),
        learning=RateEstimate(int((right_after & wrong).sum()), n_wrong),
        retention=RateEstimate(int((right_after & was_correct).sum()), n_right),
    )


def estimate_impact(trace: Trace, from_agent: int, to_agent: int, since: int = 0) -> RateEstimate:
    """Frequency with which ``to_agent``'s target moved where ``from_agent`` changed."""
    n = trace.n_agents
    if not (0 <= from_agent < n and 0 <= to_agent < n) or from_agent == to_agent:
        raise DomainError("need two distinct, valid agent indices")
    win = _window(trace, since)
    cause = trace.delta_changed[win, from_agent]
    effect = trace.target_changed[win, to_agent]
    return RateEstimate(int((cause & effect).sum()), int(cause.sum()))
