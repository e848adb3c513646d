"""Deterministic error dynamics for learning agents.

Every function here works on expected errors (probabilities in [0, 1]); the
stochastic counterpart lives in :mod:`clri.sim`.

Conventions
-----------
``impacts[j, i]`` is the probability that a change in agent ``j``'s decision
function moves agent ``i``'s target function at a world state.  For two
agents ``i`` (index 0) and ``j`` (index 1) the usual names are
``I_ij = impacts[0, 1]`` and ``I_ji = impacts[1, 0]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

__all__ = [
    "DomainError",
    "LearningParams",
    "AgentSpec",
    "SystemSpec",
    "CouplingModel",
    "Line",
    "Trajectory",
    "FixedPointResult",
    "Surface",
    "VectorField",
    "expected_change_prob",
    "expected_volatility",
    "step_simplified",
    "decompose",
    "flat_coupling",
    "matching_coupling",
    "step_matching",
    "step_general",
    "matching_trajectory",
    "expected_step",
    "coupled_trajectory",
    "iterate_to_fixed_point",
    "fixed_point",
    "error_surface",
    "vector_field",
]

# Tolerance used when checking c == l for two-action agents and l <= c.
_RATE_EPS = 1e-12


class DomainError(ValueError):
    """An input lies outside the domain of a CLRI quantity."""


def _check_prob(name: str, x: float) -> float:
    x = float(x)
    if not 0.0 <= x <= 1.0 or x != x:
        raise DomainError(f"{name} must be a probability in [0, 1], got {x!r}")
    return x


@dataclass(frozen=True)
class LearningParams:
    """Change, learning and retention rates of one agent."""

    change_rate: float
    learning_rate: float
    retention_rate: float = 1.0

    def __post_init__(self):
        c = _check_prob("change_rate", self.change_rate)
        l = _check_prob("learning_rate", self.learning_rate)
        _check_prob("retention_rate", self.retention_rate)
        if l > c + _RATE_EPS:
            raise DomainError(
                f"learning_rate ({l}) must not exceed change_rate ({c}): "
                "changing to the correct action is itself a change"
            )

    @property
    def c(self) -> float:
        return self.change_rate

    @property
    def l(self) -> float:
        return self.learning_rate

    @property
    def r(self) -> float:
        return self.retention_rate


@dataclass(frozen=True)
class AgentSpec:
    """An agent: how many actions it has, its rates and its starting error."""

    action_count: int
    params: LearningParams
    initial_error: float = 1.0

    def __post_init__(self):
        if int(self.action_count) != self.action_count or self.action_count < 2:
            raise DomainError(f"action_count must be an integer >= 2, got {self.action_count!r}")
        _check_prob("initial_error", self.initial_error)
        p = self.params
        if self.action_count == 2 and abs(p.change_rate - p.learning_rate) > _RATE_EPS:
            raise DomainError(
                "with two actions any change of a wrong mapping makes it right, "
                f"so change_rate must equal learning_rate (got c={p.change_rate}, l={p.learning_rate})"
            )

    @classmethod
    def make(cls, action_count: int, c: float, l: float, r: float = 1.0, initial_error: float = 1.0):
        return cls(int(action_count), LearningParams(c, l, r), initial_error)


def _as_impacts(impacts, n: int) -> np.ndarray:
    arr = np.array(impacts, dtype=float)
    if arr.shape != (n, n):
        raise DomainError(f"impact matrix must have shape ({n}, {n}), got {arr.shape}")
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError("impact entries must be probabilities in [0, 1]")
    if np.any(np.diag(arr) != 0.0):
        raise DomainError("an agent cannot move its own target: impact diagonal must be zero")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """A roster of agents plus the impact matrix coupling their targets.

    With ``identical_agents_shortcut`` the volatility is computed with the
    closed exponent form, which requires every agent to share action count,
    rates and a single off-diagonal impact value.
    """

    agents: tuple[AgentSpec, ...]
    impacts: np.ndarray
    identical_agents_shortcut: bool = False

    def __post_init__(self):
        agents = tuple(self.agents)
        if not agents:
            raise DomainError("a system needs at least one agent")
        object.__setattr__(self, "agents", agents)
        object.__setattr__(self, "impacts", _as_impacts(self.impacts, len(agents)))
        if self.identical_agents_shortcut:
            first = agents[0]
            if any(a.action_count != first.action_count or a.params != first.params for a in agents):
                raise DomainError("identical-agents shortcut requires equal action counts and rates")
            n = len(agents)
            if n > 1:
                off = self.impacts[~np.eye(n, dtype=bool)]
                if np.any(off != off[0]):
                    raise DomainError("identical-agents shortcut requires a single impact value")

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @classmethod
    def two_agent(cls, agent_i: AgentSpec, agent_j: AgentSpec, impact_ij: float, impact_ji: float):
        """Agents ``i`` and ``j``; ``impact_ij`` is i's pull on j's target."""
        return cls((agent_i, agent_j), [[0.0, impact_ij], [impact_ji, 0.0]])

    @classmethod
    def identical(cls, agent: AgentSpec, n: int, impact: float, shortcut: bool = True):
        impacts = np.full((n, n), float(impact))
        np.fill_diagonal(impacts, 0.0)
        return cls((agent,) * n, impacts, shortcut)

    def with_impacts(self, impacts) -> "SystemSpec":
        return SystemSpec(self.agents, impacts, self.identical_agents_shortcut)

    def initial_state(self) -> np.ndarray:
        return np.array([a.initial_error for a in self.agents], dtype=float)

    # Per-agent parameter columns, used by the vectorised step.
    def _columns(self):
        c = np.array([a.params.change_rate for a in self.agents])
        l = np.array([a.params.learning_rate for a in self.agents])
        r = np.array([a.params.retention_rate for a in self.agents])
        n_act = np.array([a.action_count for a in self.agents], dtype=float)
        return c, l, r, n_act


@dataclass(frozen=True)
class CouplingModel:
    """Probabilities tying an agent's correctness to movement of its target.

    ``p_target_same_given_correct`` is Pr[target unchanged | agent correct],
    likewise for incorrect.  ``B``, ``D`` and ``F`` are the residual-miss
    probabilities: wrong after leaving a correct mapping while the target
    moved (B), wrong after keeping a wrong mapping while the target moved (D),
    and wrong after switching to another wrong action while the target moved
    (F).
    """

    p_target_same_given_correct: float
    p_target_same_given_incorrect: float
    B: float
    D: float
    F: float

    def __post_init__(self):
        for name in ("p_target_same_given_correct", "p_target_same_given_incorrect", "B", "D", "F"):
            _check_prob(name, getattr(self, name))


class Line(NamedTuple):
    slope: float
    intercept: float

    def __call__(self, x):
        return self.slope * x + self.intercept


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Expected errors over time.

    ``errors[t, i]`` is agent i's expected error after t steps;
    ``volatility[t, i]`` is the volatility computed from ``errors[t]`` and
    used to produce ``errors[t + 1]``; ``clamped[t, i]`` marks steps whose
    raw value left [0, 1].
    """

    errors: np.ndarray
    volatility: np.ndarray
    clamped: np.ndarray

    @property
    def steps(self) -> int:
        return self.errors.shape[0] - 1

    @property
    def final(self) -> np.ndarray:
        return self.errors[-1]


@dataclass(frozen=True, eq=False)
class FixedPointResult:
    kind: str  # "converged" | "oscillating" | "diverged-to-boundary"
    values: np.ndarray  # (n,) or (2, n) when oscillating
    iterations: int

    @property
    def converged(self) -> bool:
        return self.kind == "converged"


# ---------------------------------------------------------------------------
# Scalar equations
# ---------------------------------------------------------------------------


def expected_change_prob(params: LearningParams, error: float) -> float:
    """Expected probability that a mapping changes in one step."""
    e = _check_prob("error", error)
    return params.change_rate * e + (1.0 - params.retention_rate) * (1.0 - e)


def _simplified_coefficients(agent: AgentSpec, volatility):
    p = agent.params
    c, l, r = p.change_rate, p.learning_rate, p.retention_rate
    a = agent.action_count
    intercept = 1.0 - r + volatility * (a * r - 1.0) / (a - 1.0)
    slope = r - l + volatility * (a * (l - r) + l - c) / (a - 1.0)
    return slope, intercept


def _clamp(x):
    return np.clip(x, 0.0, 1.0)


def step_simplified(agent: AgentSpec, error: float, volatility: float) -> float:
    """One expected step under flat redraws and independent correctness.

    The map is affine in ``error``; results are clamped to [0, 1].
    """
    e = _check_prob("error", error)
    v = _check_prob("volatility", volatility)
    slope, intercept = _simplified_coefficients(agent, v)
    return float(_clamp(intercept + slope * e))


def decompose(agent: AgentSpec, volatility: float) -> tuple[Line, Line]:
    """Split the simplified step into a learning line and a volatility line.

    The two lines add up to the (unclamped) simplified step; the volatility
    line gathers every term carrying the volatility factor.
    """
    v = _check_prob("volatility", volatility)
    p = agent.params
    c, l, r = p.change_rate, p.learning_rate, p.retention_rate
    a = agent.action_count
    learning = Line(r - l, 1.0 - r)
    vol = Line(v * (a * (l - r) + l - c) / (a - 1.0), v * (a * r - 1.0) / (a - 1.0))
    return learning, vol


def flat_coupling(agent: AgentSpec, volatility: float) -> CouplingModel:
    """Coupling under flat redraws with target moves independent of correctness.

    F is set to (|A|-3)/(|A|-1), the value that makes the general recurrence
    reproduce the simplified one; at |A| = 2 it is multiplied by c - l = 0 and
    is defined as 0.
    """
    v = _check_prob("volatility", volatility)
    a = agent.action_count
    b = (a - 2.0) / (a - 1.0)
    f = (a - 3.0) / (a - 1.0) if a > 2 else 0.0
    return CouplingModel(1.0 - v, 1.0 - v, b, b, f)


def matching_coupling(agent_i: AgentSpec, agent_j: AgentSpec, exact_conditioning: bool = False) -> CouplingModel:
    """Coupling for the matching game, where each target is the other's decision.

    By default D = 1 - l_j and F = l_j + (1 - l_j)(|A|-3)/(|A|-2).  With
    ``exact_conditioning`` the j-side probabilities are conditioned on j having
    changed its mapping (l_j / c_j instead of l_j), which is what a direct
    simulation of the game produces.
    """
    if agent_i.action_count != agent_j.action_count:
        raise DomainError("matching agents must have the same number of actions")
    a = agent_i.action_count
    pj = agent_j.params
    cj, lj, rj = pj.change_rate, pj.learning_rate, pj.retention_rate
    b = (a - 2.0) / (a - 1.0)
    if exact_conditioning:
        hit = lj / cj if cj > 0.0 else 0.0
        d = 1.0 - hit
        f = 1.0 - (1.0 - hit) / (a - 2.0) if a > 2 else 0.0
    else:
        d = 1.0 - lj
        f = lj + (1.0 - lj) * (a - 3.0) / (a - 2.0) if a > 2 else 0.0
    return CouplingModel(rj, 1.0 - cj, b, min(max(d, 0.0), 1.0), min(max(f, 0.0), 1.0))


def step_general(agent: AgentSpec, error: float, coupling: CouplingModel) -> float:
    """Four-case expected step with an explicit coupling model."""
    e = _check_prob("error", error)
    p = agent.params
    c, l, r = p.change_rate, p.learning_rate, p.retention_rate
    k = coupling
    value = (
        k.p_target_same_given_correct * (1.0 - e) * (1.0 - r)
        + k.p_target_same_given_incorrect * e * (1.0 - l)
        + (1.0 - k.p_target_same_given_correct) * (1.0 - e) * (r + (1.0 - r) * k.B)
        + (1.0 - k.p_target_same_given_incorrect) * e * ((1.0 - c) * k.D + l + (c - l) * k.F)
    )
    return float(_clamp(value))


def step_matching(agent_i: AgentSpec, agent_j: AgentSpec, p_correct: float, exact_conditioning: bool = False) -> float:
    """Expected error of ``agent_i`` after one step of the matching game.

    ``p_correct`` is the probability that i currently matches j (one minus
    i's error).  Rates are world-independent, so the sum over world states
    collapses to a single term.
    """
    pc = _check_prob("p_correct", p_correct)
    if agent_i.action_count != agent_j.action_count:
        raise DomainError("matching agents must have the same number of actions")
    a = agent_i.action_count
    pi, pj = agent_i.params, agent_j.params
    ci, li, ri = pi.change_rate, pi.learning_rate, pi.retention_rate
    cj, lj, rj = pj.change_rate, pj.learning_rate, pj.retention_rate
    e = 1.0 - pc
    b = (a - 2.0) / (a - 1.0)
    if exact_conditioning:
        k = matching_coupling(agent_i, agent_j, exact_conditioning=True)
        moved_wrong = (1.0 - ci) * k.D + li + (ci - li) * k.F
    elif a == 2:
        moved_wrong = li + (1.0 - ci) * (1.0 - lj)
    else:
        moved_wrong = 1.0 - lj + (ci * lj * (a - 1.0) + li * (1.0 - lj) - ci) / (a - 2.0)
    value = (
        rj * pc * (1.0 - ri)
        + (1.0 - cj) * e * (1.0 - li)
        + (1.0 - rj) * pc * (ri + (1.0 - ri) * b)
        + cj * e * moved_wrong
    )
    return float(_clamp(value))


def matching_trajectory(
    agent_i: AgentSpec,
    agent_j: AgentSpec,
    steps: int = 100,
    initial=None,
    exact_conditioning: bool = False,
) -> Trajectory:
    """Iterate the matching-game step for both agents.

    Column 0 is agent i (matching j), column 1 is agent j (matching i).  The
    volatility column is the probability that the agent's target, i.e. the
    other agent's decision, changes.
    """
    if steps < 0:
        raise DomainError("steps must be >= 0")
    if initial is None:
        initial = (agent_i.initial_error, agent_j.initial_error)
    e = np.array(initial, dtype=float)
    if e.shape != (2,):
        raise DomainError("initial must hold two errors")
    errors = np.empty((steps + 1, 2))
    vols = np.empty((steps + 1, 2))
    clamped = np.zeros((steps, 2), dtype=bool)
    errors[0] = e
    pairs = ((agent_i, agent_j), (agent_j, agent_i))
    for t in range(steps + 1):
        for k, (me, other) in enumerate(pairs):
            vols[t, k] = expected_change_prob(other.params, errors[t, k])
            if t < steps:
                errors[t + 1, k] = step_matching(me, other, 1.0 - errors[t, k], exact_conditioning)
    return Trajectory(errors, vols, clamped)


# ---------------------------------------------------------------------------
# Systems of agents
# ---------------------------------------------------------------------------


def _check_state(spec: SystemSpec, state) -> np.ndarray:
    e = np.asarray(state, dtype=float)
    if e.shape[-1:] != (spec.n_agents,):
        raise DomainError(f"error state must have {spec.n_agents} entries, got shape {e.shape}")
    if np.any(~np.isfinite(e)) or np.any(e < 0.0) or np.any(e > 1.0):
        raise DomainError("errors must lie in [0, 1]")
    return e


def _volatility(spec: SystemSpec, errors: np.ndarray, impacts: np.ndarray | None = None) -> np.ndarray:
    """Volatility of every agent for a batch of error states (..., n)."""
    c, _, r, _ = spec._columns()
    change = c * errors + (1.0 - r) * (1.0 - errors)
    n = spec.n_agents
    if impacts is None:
        impacts = spec.impacts
    if spec.identical_agents_shortcut:
        if n == 1:
            return np.zeros_like(errors)
        impact = impacts[..., 1, 0] if impacts.ndim > 2 else impacts[1, 0]
        impact = np.asarray(impact)[..., None] if np.ndim(impact) else impact
        return 1.0 - (1.0 - impact * change) ** (n - 1)
    # keep[..., j, i] = 1 - I[j, i] * change_j; diagonal impacts are zero.
    keep = 1.0 - impacts * change[..., :, None]
    return 1.0 - np.prod(keep, axis=-2)


def expected_volatility(spec: SystemSpec, state, agent_index: int) -> float:
    """Expected probability that ``agent_index``'s target moves this step."""
    e = _check_state(spec, state)
    if e.ndim != 1:
        raise DomainError("expected a single error state")
    if not 0 <= agent_index < spec.n_agents:
        raise DomainError(f"agent index {agent_index} out of range")
    return float(_volatility(spec, e)[agent_index])


def expected_step(spec: SystemSpec, state, volatility=None, impacts=None):
    """Synchronous expected step for all agents.

    ``state`` may carry leading batch dimensions.  With ``volatility`` given,
    it replaces the impact-derived volatility (fixed external volatility).
    Returns ``(next_state, volatility, clamped)``.
    """
    e = np.asarray(state, dtype=float)
    c, l, r, n_act = spec._columns()
    if volatility is None:
        v = _volatility(spec, e, impacts)
    else:
        v = np.broadcast_to(np.asarray(volatility, dtype=float), e.shape)
    intercept = 1.0 - r + v * (n_act * r - 1.0) / (n_act - 1.0)
    slope = r - l + v * (n_act * (l - r) + l - c) / (n_act - 1.0)
    raw = intercept + slope * e
    nxt = _clamp(raw)
    return nxt, v, nxt != raw


def coupled_trajectory(spec: SystemSpec, initial=None, steps: int = 100, volatility=None) -> Trajectory:
    """Iterate the synchronous expected step ``steps`` times."""
    if steps < 0:
        raise DomainError("steps must be >= 0")
    e = _check_state(spec, spec.initial_state() if initial is None else initial)
    if volatility is not None:
        volatility = np.broadcast_to(np.asarray(volatility, dtype=float), e.shape)
        if np.any(volatility < 0.0) or np.any(volatility > 1.0):
            raise DomainError("volatility must lie in [0, 1]")
    n = spec.n_agents
    errors = np.empty((steps + 1, n))
    vols = np.empty((steps + 1, n))
    clamped = np.zeros((steps, n), dtype=bool)
    errors[0] = e
    for t in range(steps):
        errors[t + 1], vols[t], clamped[t] = expected_step(spec, errors[t], volatility)
    if volatility is None:
        vols[steps] = _volatility(spec, errors[steps])
    else:
        vols[steps] = volatility
    return Trajectory(errors, vols, clamped)


def iterate_to_fixed_point(
    step: Callable[[np.ndarray], np.ndarray],
    initial,
    tol: float = 1e-9,
    max_iter: int = 10**6,
    cycle_checks: int = 10,
) -> FixedPointResult:
    """Iterate ``step`` until it settles, alternates, or runs out of budget.

    Converged: the sup-norm change falls below ``tol``.  Oscillating: the state
    matches the one two steps back (within ``tol``) but not the previous one,
    for ``cycle_checks`` consecutive iterations.
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    prev2 = None
    prev = np.array(initial, dtype=float)
    streak = 0
    for it in range(1, max_iter + 1):
        cur = np.asarray(step(prev), dtype=float)
        move = np.max(np.abs(cur - prev)) if cur.size else 0.0
        if move < tol:
            return FixedPointResult("converged", cur, it)
        if prev2 is not None and np.max(np.abs(cur - prev2)) < tol:
            streak += 1
            if streak >= cycle_checks:
                return FixedPointResult("oscillating", np.stack([cur, prev]), it)
        else:
            streak = 0
        prev2, prev = prev, cur
    return FixedPointResult("diverged-to-boundary", prev, max_iter)


def fixed_point(
    spec: SystemSpec,
    initial=None,
    tol: float = 1e-9,
    max_iter: int = 10**6,
    volatility=None,
) -> FixedPointResult:
    """Long-run expected errors of a system (or of agents under fixed volatility)."""
    e0 = _check_state(spec, spec.initial_state() if initial is None else initial)
    return iterate_to_fixed_point(lambda s: expected_step(spec, s, volatility)[0], e0, tol, max_iter)


def _batched_fixed_point(spec: SystemSpec, impacts: np.ndarray, initial: np.ndarray, tol: float, max_iter: int):
    """Fixed points for a batch of impact matrices (..., n, n).

    Each batch element stops updating at its own convergence step, so the
    result for any element equals the single-system computation.  Only the
    still-moving elements are stepped.
    """
    batch = impacts.shape[:-2]
    n = initial.shape[-1]
    state = np.broadcast_to(initial, batch + (n,)).reshape(-1, n).copy()
    flat_impacts = impacts.reshape((-1,) + impacts.shape[-2:])
    done = np.zeros(state.shape[0], dtype=bool)
    active = np.arange(state.shape[0])
    for _ in range(max_iter):
        cur = state[active]
        nxt, _, _ = expected_step(spec, cur, impacts=flat_impacts[active])
        state[active] = nxt
        settled = np.max(np.abs(nxt - cur), axis=-1) < tol
        done[active[settled]] = True
        active = active[~settled]
        if active.size == 0:
            break
    return state.reshape(batch + (n,)), done.reshape(batch)


@dataclass(frozen=True, eq=False)
class Surface:
    """Final error of agent i over a grid of impacts.

    ``final_error[a, b]`` belongs to ``I_ij = impact_ij[a]`` and
    ``I_ji = impact_ji[b]``.
    """

    impact_ij: np.ndarray
    impact_ji: np.ndarray
    final_error: np.ndarray
    converged: np.ndarray


def _require_two_agents(spec: SystemSpec):
    if spec.n_agents != 2:
        raise DomainError(f"a two-agent system is required, got {spec.n_agents} agents")


def error_surface(
    base: SystemSpec,
    resolution: int = 50,
    initial=None,
    tol: float = 1e-9,
    max_iter: int = 10**6,
    impact_ij: Sequence[float] | None = None,
    impact_ji: Sequence[float] | None = None,
) -> Surface:
    """Final error of agent i for every (I_ij, I_ji) pair on a grid.

    The default grid has ``resolution`` evenly spaced values on [0, 1] for
    each impact; explicit grids may be passed instead.
    """
    _require_two_agents(base)
    if resolution < 2:
        raise DomainError("resolution must be >= 2")
    grid = np.linspace(0.0, 1.0, resolution)
    gij = grid if impact_ij is None else np.asarray(impact_ij, dtype=float)
    gji = grid if impact_ji is None else np.asarray(impact_ji, dtype=float)
    e0 = _check_state(base, base.initial_state() if initial is None else initial)
    a, b = np.meshgrid(gij, gji, indexing="ij")
    impacts = np.zeros(a.shape + (2, 2))
    impacts[..., 0, 1] = a
    impacts[..., 1, 0] = b
    state, done = _batched_fixed_point(base, impacts, e0, tol, max_iter)
    return Surface(gij, gji, state[..., 0], done)


@dataclass(frozen=True, eq=False)
class VectorField:
    """One expected step from each grid point ``(e_i, e_j)``."""

    e_i: np.ndarray
    e_j: np.ndarray
    e_i_next: np.ndarray
    e_j_next: np.ndarray

    @property
    def displacement(self) -> np.ndarray:
        return np.hypot(self.e_i_next - self.e_i, self.e_j_next - self.e_j)


def vector_field(spec: SystemSpec, resolution: int = 50) -> VectorField:
    _require_two_agents(spec)
    if resolution < 2:
        raise DomainError("resolution must be >= 2")
    grid = np.linspace(0.0, 1.0, resolution)
    ei, ej = np.meshgrid(grid, grid, indexing="ij")
    nxt, _, _ = expected_step(spec, np.stack([ei, ej], axis=-1))
    return VectorField(ei, ej, nxt[..., 0], nxt[..., 1])
