"""Named experiment presets and the convention-game unit mapping.

The mapping relates an HCR agent's update delay ``d`` to a learning rate via
``l = 1 / (p (d + 1))`` and turns the number of successful trials ``s`` out of
``trials_total`` into an error ``(trials_total - s) / trials_total``.  The
"experiment" curve uses a quadratic fit of success against delay,
``s(d) = 3900 - 4 d - (d - 100)^2 / 100`` for ``d`` in [0, 200].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import (
    AgentConfig,
    ExperimentConfig,
    GameConfig,
    MappingConfig,
    SystemConfig,
)
from .theory import AgentSpec, DomainError, SystemSpec, coupled_trajectory

__all__ = [
    "PRESETS",
    "ShohamMapping",
    "ShohamComparison",
    "delay_from_learning_rate",
    "learning_rate_from_delay",
    "success_from_delay",
    "error_from_success",
    "experiment_final_error",
    "theory_final_error",
    "shoham_comparison",
    "preset",
]

MAX_DELAY = 200.0


@dataclass(frozen=True)
class ShohamMapping:
    """Constants of the convention-game mapping."""

    p: float = 6.0
    trials_total: int = 4000
    horizon: int = 1600
    agent_count: int = 100

    def __post_init__(self):
        if not self.p > 0.0:
            raise DomainError("p must be positive")
        if self.trials_total < 1 or self.horizon < 0 or self.agent_count < 2:
            raise DomainError("trials_total >= 1, horizon >= 0 and agent_count >= 2 are required")

    @property
    def learning_rate_range(self) -> tuple[float, float]:
        """Learning rates that correspond to delays in [0, 200]."""
        return 1.0 / (self.p * (MAX_DELAY + 1.0)), 1.0 / self.p

    @property
    def impact(self) -> float:
        """Each agent plays one of the other ``agent_count - 1`` agents."""
        return 1.0 / (self.agent_count - 1)


def delay_from_learning_rate(l: float, p: float = 6.0) -> float:
    if not p > 0.0:
        raise DomainError("p must be positive")
    if not 0.0 < l <= 1.0 / p:
        raise DomainError(f"learning rate must lie in (0, 1/p] = (0, {1.0 / p}], got {l!r}")
    return 1.0 / (p * l) - 1.0


def learning_rate_from_delay(d: float, p: float = 6.0) -> float:
    if not p > 0.0:
        raise DomainError("p must be positive")
    if not d >= 0.0:
        raise DomainError(f"delay must be >= 0, got {d!r}")
    return 1.0 / (p * (d + 1.0))


def success_from_delay(d: float) -> float:
    """Fitted number of successful trials (out of 4000) at update delay ``d``."""
    if not 0.0 <= d <= MAX_DELAY:
        raise DomainError(f"delay must lie in [0, {MAX_DELAY:g}], got {d!r}")
    return 3900.0 - 4.0 * d - (d - 100.0) ** 2 / 100.0


def error_from_success(s: float, trials_total: int = 4000) -> float:
    if not 0.0 <= s <= trials_total:
        raise DomainError(f"successes must lie in [0, {trials_total}], got {s!r}")
    return (trials_total - s) / trials_total


def _clip_delay(d: float) -> float:
    # Round-off at the range ends (e.g. l = 1/p giving d = -1e-16).
    if -1e-9 < d < 0.0:
        return 0.0
    if MAX_DELAY < d < MAX_DELAY + 1e-9:
        return MAX_DELAY
    return d


def experiment_final_error(l: float, mapping: ShohamMapping = ShohamMapping()) -> float:
    """Error implied by the fitted experimental success rate at learning rate ``l``."""
    d = _clip_delay(delay_from_learning_rate(l, mapping.p))
    return error_from_success(success_from_delay(d), mapping.trials_total)


def _shoham_system(l: float, mapping: ShohamMapping, initial_error: float) -> SystemSpec:
    agent = AgentSpec.make(2, l, l, 1.0, initial_error)
    return SystemSpec.identical(agent, mapping.agent_count, mapping.impact, shortcut=True)


def theory_final_error(l: float, mapping: ShohamMapping = ShohamMapping(), initial_error: float = 0.5) -> float:
    """Expected error after ``mapping.horizon`` steps of the identical-agents recurrence.

    The agents have two actions, ``c = l``, ``r = 1`` and impact
    ``1 / (agent_count - 1)``; they start at error 0.5 (random actions).
    """
    spec = _shoham_system(l, mapping, initial_error)
    return float(coupled_trajectory(spec, steps=mapping.horizon).final[0])


@dataclass(frozen=True, eq=False)
class ShohamComparison:
    learning_rate: np.ndarray
    delay: np.ndarray
    theory: np.ndarray
    experiment: np.ndarray

    @property
    def deviation(self) -> np.ndarray:
        return np.abs(self.theory - self.experiment)

    @property
    def max_deviation(self) -> float:
        return float(self.deviation.max())


def shoham_comparison(
    mapping: ShohamMapping = ShohamMapping(),
    l_samples=None,
    samples: int = 50,
    initial_error: float = 0.5,
) -> ShohamComparison:
    """Theory and fitted-experiment final errors over a set of learning rates.

    By default ``samples`` log-spaced learning rates span the valid range.
    """
    lo, hi = mapping.learning_rate_range
    if l_samples is None:
        if samples < 2:
            raise DomainError("samples must be >= 2")
        ls = np.geomspace(lo, hi, samples)
    else:
        ls = np.asarray(l_samples, dtype=float)
        if np.any(ls < lo * (1 - 1e-12)) or np.any(ls > hi * (1 + 1e-12)):
            raise DomainError(f"learning rates must lie in [{lo}, {hi}]")
    theory = np.array([theory_final_error(l, mapping, initial_error) for l in ls])
    experiment = np.array([experiment_final_error(l, mapping) for l in ls])
    delay = np.array([_clip_delay(delay_from_learning_rate(l, mapping.p)) for l in ls])
    return ShohamComparison(ls, delay, theory, experiment)


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------


def _agent(a, c, l, r=1.0, e0=1.0, count=1):
    return AgentConfig(action_count=a, change_rate=c, learning_rate=l, retention_rate=r, initial_error=e0, count=count)


def _fig3():
    # Single agent under a fixed volatility of 0.2.
    return ExperimentConfig(
        mode="predict",
        steps=60,
        system=SystemConfig(agents=(_agent(20, 1.0, 0.3, 1.0, 0.95),), volatility=0.2),
    )


def _fig4():
    # Final error of agent i over the (I_ij, I_ji) grid.
    return ExperimentConfig(
        mode="surface",
        resolution=50,
        system=SystemConfig(agents=(_agent(20, 1.0, 0.2, 1.0, 1.0, count=2),), impact=0.0),
    )


def _fig5():
    return ExperimentConfig(
        mode="field",
        resolution=50,
        system=SystemConfig(
            agents=(_agent(20, 0.5, 0.2, 1.0, 1.0), _agent(20, 1.0, 0.2, 1.0, 1.0)),
            impacts=((0.0, 0.1), (0.3, 0.0)),
        ),
    )


def _market():
    # Two sellers with 20 prices; theory rates are a rough mapping of alpha = 0.1.
    return ExperimentConfig(
        mode="compare",
        runs=100,
        steps=1000,
        system=SystemConfig(agents=(_agent(20, 0.005, 0.005, 1.0, 0.5, count=2),), impact=0.17),
        game=GameConfig("market", {"alpha_i": 0.1, "alpha_j": 0.1, "price_count": 20}),
    )


def _claus():
    # Two-action matching game.
    return ExperimentConfig(
        mode="compare",
        runs=100,
        steps=50,
        system=SystemConfig(agents=(_agent(2, 0.1, 0.1, 1.0, 0.5, count=2),)),
        game=GameConfig("matching", {}),
    )


def _shoham():
    m = ShohamMapping()
    return ExperimentConfig(
        mode="compare",
        steps=m.horizon,
        system=SystemConfig(agents=(_agent(2, 1.0 / m.p, 1.0 / m.p, 1.0, 0.5, count=m.agent_count),), impact=m.impact, identical=True),
        game=GameConfig("coordination", {"n_agents": m.agent_count}),
        mapping=MappingConfig(p=m.p, samples=50, spot_check_delays=(0, 200), spot_check_runs=20),
    )


_PRESET_BUILDERS = {
    "fig3": _fig3,
    "fig4": _fig4,
    "fig5": _fig5,
    "market": _market,
    "claus": _claus,
    "shoham": _shoham,
}

PRESETS = tuple(_PRESET_BUILDERS)


def preset(name: str) -> ExperimentConfig:
    """A fully specified experiment configuration by name."""
    try:
        builder = _PRESET_BUILDERS[name]
    except KeyError:
        raise DomainError(f"unknown preset {name!r}; available presets: {', '.join(PRESETS)}") from None
    return builder()
