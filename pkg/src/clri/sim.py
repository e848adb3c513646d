"""Agent-based Monte Carlo simulator with explicit decision and target tables.

Each run keeps, for every agent, a decision table (world -> action) and a
target table (world -> correct action) and advances them through the
perceive / act / learn loop.  Runs are deterministic functions of their seed.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .theory import AgentSpec, DomainError, LearningParams, SystemSpec

__all__ = [
    "WorldModel",
    "Trace",
    "GameDef",
    "MonteCarloResult",
    "run_seed",
    "run_synthetic",
    "run_matching",
    "run_coordination",
    "run_market",
    "market_prices",
    "monte_carlo",
]


@dataclass(frozen=True, eq=False)
class WorldModel:
    """Finite set of world states with a fixed sampling distribution."""

    world_count: int = 1
    distribution: Any = None

    def __post_init__(self):
        if int(self.world_count) != self.world_count or self.world_count < 1:
            raise DomainError("world_count must be a positive integer")
        if self.distribution is None:
            d = np.full(self.world_count, 1.0 / self.world_count)
        else:
            d = np.array(self.distribution, dtype=float)
            if d.shape != (self.world_count,):
                raise DomainError(f"distribution must have {self.world_count} entries")
            if np.any(d < 0.0) or abs(d.sum() - 1.0) > 1e-12:
                raise DomainError("distribution must be non-negative and sum to 1")
        d.setflags(write=False)
        object.__setattr__(self, "distribution", d)


@dataclass(frozen=True, eq=False)
class Trace:
    """Everything one simulation run did.

    Arrays indexed ``[t, agent, world]`` hold the state *before* learning at
    step t; index ``steps`` is the final state.  ``worlds[t]`` is the world
    drawn at step t.
    """

    seed: int | None
    weights: np.ndarray
    worlds: np.ndarray
    decisions: np.ndarray
    targets: np.ndarray
    correct: np.ndarray
    success: bool | None = None
    correct_if: str = "equal"  # "equal": decision == target; "at_most": decision <= target

    @property
    def steps(self) -> int:
        return self.decisions.shape[0] - 1

    @property
    def n_agents(self) -> int:
        return self.decisions.shape[1]

    @property
    def world_count(self) -> int:
        return self.decisions.shape[2]

    @property
    def errors(self) -> np.ndarray:
        """Distribution-weighted error of each agent at each step, (steps + 1, n)."""
        return (~self.correct).astype(float) @ self.weights

    @property
    def actions(self) -> np.ndarray:
        """Action each agent took in the drawn world, (steps, n)."""
        t = np.arange(self.steps)
        return self.decisions[t, :, self.worlds]

    @property
    def action_correct(self) -> np.ndarray:
        t = np.arange(self.steps)
        return self.correct[t, :, self.worlds]

    @property
    def delta_changed(self) -> np.ndarray:
        """Whether each decision mapping changed from t to t + 1, (steps, n, W)."""
        return self.decisions[1:] != self.decisions[:-1]

    @property
    def target_changed(self) -> np.ndarray:
        return self.targets[1:] != self.targets[:-1]


def run_seed(master_seed: int, run_index: int) -> int:
    """Seed of run ``run_index`` under ``master_seed``.

    Counter-based: the pair (master_seed, run_index) is hashed by numpy's
    SeedSequence, so any run can be regenerated on its own.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(run_index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _other_action(u, excluded, n_actions):
    """Uniform action != excluded, from uniforms u in [0, 1)."""
    k = np.floor(u * (n_actions - 1)).astype(np.int64)
    return k + (k >= excluded)


def _third_action(u, a, b, n_actions):
    """Uniform action not in {a, b} (a != b), from uniforms u in [0, 1)."""
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    k = np.floor(u * np.maximum(n_actions - 2, 1)).astype(np.int64)
    k = k + (k >= lo)
    return k + (k >= hi)


def _learn(rng, dec, tgt, c, l, r, n_act):
    """Apply change/learning/retention rules to every mapping against ``tgt``."""
    u = rng.random(dec.shape)
    pick = rng.random(dec.shape)
    wrong = dec != tgt
    learn = wrong & (u < l)
    wander = wrong & ~learn & (u < c)
    forget = ~wrong & (u < 1.0 - r)
    new = np.where(learn, tgt, dec)
    new = np.where(wander, _third_action(pick, dec, tgt, n_act), new)
    return np.where(forget, _other_action(pick, dec, n_act), new)


def _initial_tables(rng, n_act, e0, world_count):
    shape = (len(n_act), world_count)
    dec = np.floor(rng.random(shape) * n_act).astype(np.int64)
    wrong = rng.random(shape) < e0
    tgt = np.where(wrong, _other_action(rng.random(shape), dec, n_act), dec)
    return dec, tgt


def _draw_worlds(rng, world: WorldModel, steps: int):
    if world.world_count == 1:
        return np.zeros(steps, dtype=np.int64)
    return rng.choice(world.world_count, size=steps, p=world.distribution)


def run_synthetic(
    spec: SystemSpec,
    world: WorldModel | None = None,
    seed: int = 0,
    steps: int = 100,
    external_volatility=0.0,
    initial_error=None,
) -> Trace:
    """Simulate agents that follow the CLRI rates literally.

    Per step and per world: a wrong mapping is corrected with probability l,
    moved to another wrong action with probability c - l; a right mapping is
    moved to a random other action with probability 1 - r.  Then every agent
    i whose mapping at w was changed by some j has its target at w redrawn
    (uniformly among the other actions) with probability I[j, i]; the draws
    for different j are independent and at most one redraw happens.  An
    ``external_volatility`` adds target redraws unrelated to other agents.
    """
    if steps < 1:
        raise DomainError("steps must be >= 1")
    world = world or WorldModel()
    rng = np.random.default_rng(seed)
    c, l, r, n_act = (x[:, None] for x in spec._columns())
    n_act = n_act.astype(np.int64)
    n, w_count = spec.n_agents, world.world_count
    ext = np.broadcast_to(np.asarray(external_volatility, dtype=float), (n,))[:, None]
    if np.any(ext < 0.0) or np.any(ext > 1.0):
        raise DomainError("external_volatility must lie in [0, 1]")
    e0 = spec.initial_state() if initial_error is None else np.broadcast_to(np.asarray(initial_error, float), (n,))
    impacts = spec.impacts[:, :, None]

    decisions = np.empty((steps + 1, n, w_count), dtype=np.int64)
    targets = np.empty_like(decisions)
    dec, tgt = _initial_tables(rng, n_act, e0[:, None], w_count)
    worlds = _draw_worlds(rng, world, steps)
    for t in range(steps):
        decisions[t], targets[t] = dec, tgt
        new = _learn(rng, dec, tgt, c, l, r, n_act)
        changed = new != dec
        hits = changed[:, None, :] & (rng.random((n, n, w_count)) < impacts)
        moved = hits.any(axis=0) | (rng.random((n, w_count)) < ext)
        tgt = np.where(moved, _other_action(rng.random((n, w_count)), tgt, n_act), tgt)
        dec = new
    decisions[steps], targets[steps] = dec, tgt
    return Trace(seed, world.distribution, worlds, decisions, targets, decisions == targets)


def run_matching(
    params_i: LearningParams,
    params_j: LearningParams,
    action_count: int,
    world: WorldModel | None = None,
    seed: int = 0,
    steps: int = 100,
    initial_error: float = 1.0,
) -> Trace:
    """Two agents whose targets are each other's current decisions."""
    # Validates |A| >= 2 and c = l for two actions.
    AgentSpec(action_count, params_i)
    AgentSpec(action_count, params_j)
    if steps < 1:
        raise DomainError("steps must be >= 1")
    world = world or WorldModel()
    rng = np.random.default_rng(seed)
    c = np.array([[params_i.change_rate], [params_j.change_rate]])
    l = np.array([[params_i.learning_rate], [params_j.learning_rate]])
    r = np.array([[params_i.retention_rate], [params_j.retention_rate]])
    w_count = world.world_count
    n_act = np.int64(action_count)

    dj = np.floor(rng.random(w_count) * action_count).astype(np.int64)
    wrong = rng.random(w_count) < initial_error
    di = np.where(wrong, _other_action(rng.random(w_count), dj, n_act), dj)
    dec = np.stack([di, dj])
    worlds = _draw_worlds(rng, world, steps)
    decisions = np.empty((steps + 1, 2, w_count), dtype=np.int64)
    for t in range(steps):
        decisions[t] = dec
        dec = _learn(rng, dec, dec[::-1], c, l, r, n_act)
    decisions[steps] = dec
    targets = decisions[:, ::-1, :].copy()
    return Trace(seed, world.distribution, worlds, decisions, targets, decisions == targets)


def run_coordination(
    n_agents: int = 100,
    delay: int = 0,
    seed: int = 0,
    steps: int = 1600,
    pairs_per_step: int = 1,
    threshold: float = 0.95,
    initial_actions=None,
) -> Trace:
    """Convention emergence among HCR agents with two actions.

    Each step ``pairs_per_step`` disjoint pairs are drawn uniformly at random
    and play; a match pays +1 and a mismatch -1 to the action each agent
    played.  Every ``delay + 1`` steps all agents switch to the action with
    the larger cumulative payoff (ties broken by a fair coin).  An agent's
    target is the action held by the majority of the other agents (its own
    action on a tie).  ``success`` is whether at least ``threshold`` of the
    agents share one action at the end.
    """
    if n_agents < 2 or n_agents % 2:
        raise DomainError("n_agents must be an even number >= 2")
    if delay < 0 or steps < 0:
        raise DomainError("delay and steps must be >= 0")
    if not 1 <= pairs_per_step <= n_agents // 2:
        raise DomainError(f"pairs_per_step must lie in [1, {n_agents // 2}]")
    rng = np.random.default_rng(seed)
    if initial_actions is None:
        act = rng.integers(0, 2, size=n_agents)
    else:
        act = np.array(initial_actions, dtype=np.int64)
        if act.shape != (n_agents,) or np.any((act != 0) & (act != 1)):
            raise DomainError("initial_actions must be n_agents values in {0, 1}")
    idx = np.arange(n_agents)
    cum = np.zeros((n_agents, 2))
    decisions = np.empty((steps + 1, n_agents), dtype=np.int64)
    for t in range(steps):
        decisions[t] = act
        chosen = rng.permutation(n_agents)[: 2 * pairs_per_step]
        x, y = chosen[0::2], chosen[1::2]
        pay = np.where(act[x] == act[y], 1.0, -1.0)
        cum[x, act[x]] += pay
        cum[y, act[y]] += pay
        if (t + 1) % (delay + 1) == 0:
            mine = cum[idx, act]
            theirs = cum[idx, 1 - act]
            coin = rng.random(n_agents) < 0.5
            switch = (theirs > mine) | ((theirs == mine) & coin)
            act = np.where(switch, 1 - act, act)
    decisions[steps] = act

    ones_others = decisions.sum(axis=1, keepdims=True) - decisions
    half = (n_agents - 1) / 2.0
    targets = np.where(ones_others > half, 1, np.where(ones_others < half, 0, decisions))
    final_share = decisions[steps].mean()
    success = bool(max(final_share, 1.0 - final_share) >= threshold)
    decisions = decisions[:, :, None]
    targets = targets[:, :, None]
    return Trace(
        seed,
        np.ones(1),
        np.zeros(steps, dtype=np.int64),
        decisions,
        targets,
        decisions == targets,
        success,
    )


def market_prices(price_count: int = 20, marginal_cost: float = 0.0) -> np.ndarray:
    """Price grid: ``price_count`` unit ticks starting one tick above cost."""
    return marginal_cost + np.arange(1, price_count + 1, dtype=float)


def _profit_table(prices: np.ndarray, marginal_cost: float) -> np.ndarray:
    """profit[a, b]: a seller's profit posting prices[a] against prices[b]."""
    p = prices[:, None]
    q = prices[None, :]
    margin = p - marginal_cost
    return np.where(p < q, margin, np.where(p == q, margin / 2.0, 0.0))


def _highest_best_response(profit: np.ndarray) -> np.ndarray:
    best = profit.max(axis=0)
    k = profit.shape[0]
    # Last index attaining the maximum in each column.
    return k - 1 - np.argmax(profit[::-1] == best, axis=0)


def run_market(
    alpha_i: float = 0.1,
    alpha_j: float = 0.1,
    price_count: int = 20,
    seed: int = 0,
    steps: int = 1000,
    exploration_start: float = 1.0,
    exploration_decay: float = 0.95,
    marginal_cost: float = 0.0,
    initial_values=None,
) -> Trace:
    """Two reinforcement-learning sellers and a buyer who buys the cheapest offer.

    Each seller keeps a value per price and, every step, moves every value a
    fraction alpha toward the profit that price would have earned against the
    opponent's posted price (all posted prices are observable).  Prices are
    chosen epsilon-greedily; greedy ties go to the lower price and epsilon
    starts at ``exploration_start`` and is multiplied by
    ``exploration_decay`` every step.

    A seller's posted price counts as correct when it does not exceed the
    highest profit-maximising reply to the opponent's posted price, i.e. it
    wins or shares the sale at the best margin available.  The target table
    records that highest reply.
    """
    for name, a in (("alpha_i", alpha_i), ("alpha_j", alpha_j)):
        if not 0.0 < a <= 1.0:
            raise DomainError(f"{name} must lie in (0, 1], got {a}")
    if price_count < 2:
        raise DomainError("price_count must be >= 2")
    if not 0.0 <= exploration_start <= 1.0 or not 0.0 <= exploration_decay <= 1.0:
        raise DomainError("exploration parameters must lie in [0, 1]")
    if steps < 1:
        raise DomainError("steps must be >= 1")
    rng = np.random.default_rng(seed)
    prices = market_prices(price_count, marginal_cost)
    profit = _profit_table(prices, marginal_cost)
    reply = _highest_best_response(profit)
    alphas = np.array([[alpha_i], [alpha_j]])
    if initial_values is None:
        values = np.zeros((2, price_count))
    else:
        values = np.array(initial_values, dtype=float).reshape(2, price_count)

    posted = np.empty((steps + 1, 2), dtype=np.int64)
    eps = exploration_start
    for t in range(steps + 1):
        explore = rng.random(2) < eps
        random_pick = rng.integers(0, price_count, size=2)
        greedy = np.argmax(values, axis=1)
        choice = np.where(explore, random_pick, greedy)
        posted[t] = choice
        values += alphas * (profit[:, choice[::-1]].T - values)
        eps *= exploration_decay
    targets = reply[posted[:, ::-1]]
    decisions = posted[:, :, None]
    targets = targets[:, :, None]
    return Trace(
        seed,
        np.ones(1),
        np.zeros(steps, dtype=np.int64),
        decisions,
        targets,
        decisions <= targets,
        correct_if="at_most",
    )


_RUNNERS: dict[str, Callable[..., Trace]] = {
    "synthetic": run_synthetic,
    "matching": run_matching,
    "coordination": run_coordination,
    "market": run_market,
}


@dataclass(frozen=True)
class GameDef:
    """A simulator variant plus its keyword arguments (everything but the seed)."""

    variant: str
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.variant not in _RUNNERS:
            raise DomainError(f"unknown game variant {self.variant!r}; choose from {sorted(_RUNNERS)}")
        if "seed" in self.options:
            raise DomainError("seeds are assigned per run; do not put one in the game options")

    def run(self, seed: int) -> Trace:
        return _RUNNERS[self.variant](seed=seed, **self.options)


@dataclass(frozen=True, eq=False)
class MonteCarloResult:
    """Mean and standard error of each agent's error at each step."""

    mean: np.ndarray
    stderr: np.ndarray
    n_runs: int
    master_seed: int
    success_rate: float | None = None


def _run_errors(game: GameDef, seed: int):
    trace = game.run(seed)
    return trace.errors, trace.success


def monte_carlo(game: GameDef, n_runs: int, master_seed: int = 0, workers: int = 1) -> MonteCarloResult:
    """Run ``game`` ``n_runs`` times and aggregate per-step errors.

    Run k uses ``run_seed(master_seed, k)``.  Results are folded in run order
    whatever ``workers`` is, so the aggregate is bitwise reproducible.
    """
    if n_runs < 1:
        raise DomainError("n_runs must be >= 1")
    seeds = [run_seed(master_seed, k) for k in range(n_runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = pool.map(_run_errors, [game] * n_runs, seeds, chunksize=max(1, n_runs // (4 * workers)))
            return _aggregate(results, n_runs, master_seed)
    return _aggregate((_run_errors(game, s) for s in seeds), n_runs, master_seed)


def _aggregate(results, n_runs, master_seed):
    # Welford's update, applied in run order.
    mean = m2 = None
    successes = []
    for k, (err, success) in enumerate(results, start=1):
        if mean is None:
            mean = np.zeros_like(err)
            m2 = np.zeros_like(err)
        delta = err - mean
        mean += delta / k
        m2 += delta * (err - mean)
        if success is not None:
            successes.append(success)
    if n_runs > 1:
        stderr = np.sqrt(np.maximum(m2, 0.0) / (n_runs - 1) / n_runs)
    else:
        stderr = np.zeros_like(mean)
    rate = float(np.mean(successes)) if successes else None
    return MonteCarloResult(mean, stderr, n_runs, master_seed, rate)
