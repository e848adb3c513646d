"""Experiment configuration: TOML schema, parsing and validation.

Grammar (every key optional unless noted; unknown keys are errors)::

    mode = "predict"        # required unless `preset` is given; one of MODES
    preset = "fig3"         # only with mode = "preset"
    seed = 0                # master seed (default 0)
    runs = 100              # Monte Carlo runs
    steps = 100             # time steps
    tolerance = 1e-9        # fixed-point tolerance
    max_iter = 1000000      # fixed-point iteration budget
    resolution = 50         # surface / field grid size
    workers = 1             # Monte Carlo worker processes

    [system]
    impact = 0.1            # one impact for every ordered pair, or
    impacts = [[0.0, 0.1], [0.3, 0.0]]   # impacts[j][i]: j's pull on i
    identical = false       # closed exponent form for identical agents
    volatility = 0.2        # fixed volatility instead of impact-driven
    world_count = 1         # world states in simulations

    [[system.agents]]       # one table per agent (or per group, see count)
    action_count = 20       # required
    change_rate = 1.0       # required
    learning_rate = 0.3     # required
    retention_rate = 1.0
    initial_error = 1.0
    count = 1               # replicate this agent

    [game]                  # simulator variant for simulate / compare
    variant = "market"      # synthetic | matching | coordination | market
    # market:       alpha_i, alpha_j, price_count, exploration_start,
    #               exploration_decay, marginal_cost
    # coordination: n_agents, delay, pairs_per_step, threshold
    # matching:     exact_conditioning

    [pac]
    hypothesis_count = 1024 # or action_count + world_count
    epsilon = 0.1
    gamma = 0.05
    initial_error = 1.0
    m = 100                 # sample budget for the learning-rate bound

    [estimate]
    trace = "trace.csv"     # trace to read; omitted: simulate one
    since = 0               # ignore steps before this one

    [mapping]               # convention-game unit mapping
    p = 6.0
    samples = 50
    spot_check_delays = [0, 200]
    spot_check_runs = 20

    [output]
    dir = "out"
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields, replace
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

import numpy as np

from .theory import AgentSpec, DomainError, LearningParams, SystemSpec

__all__ = [
    "MODES",
    "VARIANTS",
    "ConfigError",
    "AgentConfig",
    "SystemConfig",
    "GameConfig",
    "PacConfig",
    "EstimateConfig",
    "MappingConfig",
    "OutputConfig",
    "ExperimentConfig",
    "parse_config",
    "load_config",
    "validate",
    "build_system",
]

MODES = ("predict", "simulate", "compare", "surface", "field", "pac", "estimate", "preset")

VARIANTS = {
    "synthetic": (),
    "matching": ("exact_conditioning",),
    "coordination": ("n_agents", "delay", "pairs_per_step", "threshold"),
    "market": ("alpha_i", "alpha_j", "price_count", "exploration_start", "exploration_decay", "marginal_cost"),
}

_OPTION_KINDS = {
    "exact_conditioning": "bool",
    "n_agents": "int",
    "delay": "int",
    "pairs_per_step": "int",
    "threshold": "float",
    "alpha_i": "float",
    "alpha_j": "float",
    "price_count": "int",
    "exploration_start": "float",
    "exploration_decay": "float",
    "marginal_cost": "float",
}


class ConfigError(Exception):
    """A configuration could not be read or is invalid; ``diagnostics`` lists why."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


@dataclass(frozen=True)
class AgentConfig:
    action_count: int
    change_rate: float
    learning_rate: float
    retention_rate: float = 1.0
    initial_error: float = 1.0
    count: int = 1

    _kinds = {
        "action_count": "int",
        "change_rate": "float",
        "learning_rate": "float",
        "retention_rate": "float",
        "initial_error": "float",
        "count": "int",
    }
    _required = ("action_count", "change_rate", "learning_rate")


@dataclass(frozen=True)
class SystemConfig:
    agents: tuple[AgentConfig, ...] = ()
    impact: float | None = None
    impacts: tuple | None = None
    identical: bool = False
    volatility: float | None = None
    world_count: int = 1

    _kinds = {
        "impact": "float",
        "impacts": "matrix",
        "identical": "bool",
        "volatility": "float",
        "world_count": "int",
    }
    _required = ()

    @property
    def n_agents(self) -> int:
        return sum(a.count for a in self.agents)


@dataclass(frozen=True)
class GameConfig:
    variant: str
    options: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PacConfig:
    epsilon: float
    gamma: float
    hypothesis_count: int | None = None
    action_count: int | None = None
    world_count: int | None = None
    initial_error: float = 1.0
    m: int | None = None

    _kinds = {
        "epsilon": "float",
        "gamma": "float",
        "hypothesis_count": "int",
        "action_count": "int",
        "world_count": "int",
        "initial_error": "float",
        "m": "int",
    }
    _required = ("epsilon", "gamma")


@dataclass(frozen=True)
class EstimateConfig:
    trace: str | None = None
    since: int = 0

    _kinds = {"trace": "str", "since": "int"}
    _required = ()


@dataclass(frozen=True)
class MappingConfig:
    p: float = 6.0
    samples: int = 50
    spot_check_delays: tuple = (0, 200)
    spot_check_runs: int = 20

    _kinds = {"p": "float", "samples": "int", "spot_check_delays": "int_list", "spot_check_runs": "int"}
    _required = ()


@dataclass(frozen=True)
class OutputConfig:
    dir: str | None = None

    _kinds = {"dir": "str"}
    _required = ()


@dataclass(frozen=True)
class ExperimentConfig:
    """A complete, declarative description of one CLI run."""

    mode: str
    seed: int = 0
    runs: int = 100
    steps: int = 100
    tolerance: float = 1e-9
    max_iter: int = 10**6
    resolution: int = 50
    workers: int = 1
    preset: str | None = None
    system: SystemConfig | None = None
    game: GameConfig | None = None
    pac: PacConfig | None = None
    estimate: EstimateConfig | None = None
    mapping: MappingConfig | None = None
    output: OutputConfig = OutputConfig()

    _kinds = {
        "mode": "str",
        "seed": "int",
        "runs": "int",
        "steps": "int",
        "tolerance": "float",
        "max_iter": "int",
        "resolution": "int",
        "workers": "int",
        "preset": "str",
    }

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    @property
    def volatility(self) -> float | None:
        return None if self.system is None else self.system.volatility

    @property
    def impact(self) -> float | None:
        """The single impact value shared by every ordered pair, if there is one."""
        if self.system is None:
            return None
        if self.system.impact is not None:
            return self.system.impact
        if self.system.impacts is None:
            return None
        m = np.array(self.system.impacts, dtype=float)
        off = m[~np.eye(len(m), dtype=bool)]
        return float(off[0]) if off.size and np.all(off == off[0]) else None


# ---------------------------------------------------------------------------
# Structural parsing
# ---------------------------------------------------------------------------


def _coerce(value: Any, kind: str, path: str, diags: list[str]):
    def bad(expected):
        diags.append(f"{path}: expected {expected}, got {type(value).__name__} {value!r}")

    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            return bad("an integer")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return bad("a number")
        return float(value)
    if kind == "bool":
        if not isinstance(value, bool):
            return bad("true or false")
        return value
    if kind == "str":
        if not isinstance(value, str):
            return bad("a string")
        return value
    if kind == "int_list":
        if not isinstance(value, list) or any(isinstance(x, bool) or not isinstance(x, int) for x in value):
            return bad("a list of integers")
        return tuple(value)
    if kind == "matrix":
        ok = isinstance(value, list) and all(
            isinstance(row, list) and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in row)
            for row in value
        )
        if not ok:
            return bad("a list of lists of numbers")
        return tuple(tuple(float(x) for x in row) for row in value)
    raise AssertionError(kind)  # pragma: no cover


def _parse_table(cls, data: Any, path: str, diags: list[str], skip=()):
    if not isinstance(data, dict):
        diags.append(f"{path}: expected a table")
        return None
    kinds = cls._kinds
    values = {}
    for key, raw in data.items():
        if key in skip:
            continue
        if key not in kinds:
            diags.append(f"{path}.{key}: unknown key (allowed: {', '.join(sorted(kinds) + list(skip))})")
            continue
        v = _coerce(raw, kinds[key], f"{path}.{key}", diags)
        if v is not None:
            values[key] = v
    missing = [k for k in cls._required if k not in data]
    for k in missing:
        diags.append(f"{path}.{k}: required key missing")
    if missing or len(values) != len([k for k in data if k not in skip]):
        return None
    return cls(**values)


def _parse_system(data, diags):
    base = _parse_table(SystemConfig, data, "system", diags, skip=("agents",))
    if not isinstance(data, dict):
        return None
    raw_agents = data.get("agents", [])
    if not isinstance(raw_agents, list):
        diags.append("system.agents: expected an array of tables ([[system.agents]])")
        return None
    agents = []
    for k, a in enumerate(raw_agents):
        agent = _parse_table(AgentConfig, a, f"system.agents[{k}]", diags)
        if agent is not None:
            agents.append(agent)
    if base is None or len(agents) != len(raw_agents):
        return None
    return replace(base, agents=tuple(agents))


def _parse_game(data, diags):
    if not isinstance(data, dict):
        diags.append("game: expected a table")
        return None
    variant = data.get("variant")
    if variant is None:
        diags.append("game.variant: required key missing")
        return None
    if variant not in VARIANTS:
        diags.append(f"game.variant: unknown variant {variant!r} (choose from {', '.join(VARIANTS)})")
        return None
    allowed = VARIANTS[variant]
    options = {}
    ok = True
    for key, raw in data.items():
        if key == "variant":
            continue
        if key not in allowed:
            diags.append(
                f"game.{key}: unknown key for variant {variant!r} (allowed: {', '.join(allowed) or 'none'})"
            )
            ok = False
            continue
        v = _coerce(raw, _OPTION_KINDS[key], f"game.{key}", diags)
        if v is None:
            ok = False
        else:
            options[key] = v
    return GameConfig(variant, options) if ok else None


_SECTIONS = {
    "system": _parse_system,
    "game": _parse_game,
    "pac": lambda d, diags: _parse_table(PacConfig, d, "pac", diags),
    "estimate": lambda d, diags: _parse_table(EstimateConfig, d, "estimate", diags),
    "mapping": lambda d, diags: _parse_table(MappingConfig, d, "mapping", diags),
    "output": lambda d, diags: _parse_table(OutputConfig, d, "output", diags),
}


# A preset fixes the experiment; only the seed and output location may vary.
_PRESET_KEYS = {"mode", "preset", "seed", "output"}


def parse_config(data: dict) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from parsed TOML; raises ConfigError."""
    diags: list[str] = []
    if not data:
        raise ConfigError(["config is empty: at least `mode` is required"])
    top = {}
    sections = {}
    for key, raw in data.items():
        if key in _SECTIONS:
            parsed = _SECTIONS[key](raw, diags)
            if parsed is not None:
                sections[key] = parsed
        elif key in ExperimentConfig._kinds:
            v = _coerce(raw, ExperimentConfig._kinds[key], key, diags)
            if v is not None:
                top[key] = v
        else:
            allowed = sorted(ExperimentConfig._kinds) + [f"[{s}]" for s in _SECTIONS]
            diags.append(f"{key}: unknown key (allowed: {', '.join(allowed)})")
    if "mode" not in data:
        if "preset" in data:
            top.setdefault("mode", "preset")
        else:
            diags.append("mode: required key missing")
    if top.get("mode") == "preset":
        extra = sorted(set(data) - _PRESET_KEYS)
        for key in extra:
            diags.append(f"{key}: not allowed with mode = 'preset' (allowed: {', '.join(sorted(_PRESET_KEYS))})")
    elif "preset" in data:
        diags.append("preset: only allowed with mode = 'preset'")
    if diags:
        raise ConfigError(diags)
    return ExperimentConfig(**top, **sections)


def load_config(path) -> ExperimentConfig:
    """Read and parse a TOML config file.  OSError propagates unchanged."""
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError([f"{path}: {exc}"]) from None
    return parse_config(data)


# ---------------------------------------------------------------------------
# Semantic validation
# ---------------------------------------------------------------------------


def _in_unit(x, path, diags, open_low=False, open_high=False):
    lo_ok = x > 0.0 if open_low else x >= 0.0
    hi_ok = x < 1.0 if open_high else x <= 1.0
    if not (lo_ok and hi_ok):
        lb = "(" if open_low else "["
        rb = ")" if open_high else "]"
        diags.append(f"{path}: must lie in {lb}0, 1{rb}, got {x!r}")


def _validate_agents(system: SystemConfig, diags):
    for k, a in enumerate(system.agents):
        p = f"system.agents[{k}]"
        if a.action_count < 2:
            diags.append(f"{p}.action_count: an agent needs at least 2 actions, got {a.action_count}")
        if a.count < 1:
            diags.append(f"{p}.count: must be >= 1")
        for name in ("change_rate", "learning_rate", "retention_rate", "initial_error"):
            _in_unit(getattr(a, name), f"{p}.{name}", diags)
        if a.learning_rate > a.change_rate:
            diags.append(
                f"{p}.learning_rate: learning rate {a.learning_rate} exceeds change rate {a.change_rate}; "
                "rates must satisfy l <= c (becoming correct is itself a change)"
            )
        if a.action_count == 2 and a.change_rate != a.learning_rate:
            diags.append(
                f"{p}: with action_count = 2 the change rate must equal the learning rate "
                f"(c = {a.change_rate}, l = {a.learning_rate}); the only other action is the correct one"
            )


def _validate_system(system: SystemConfig, diags):
    if not system.agents:
        diags.append("system.agents: at least one [[system.agents]] table is required")
    _validate_agents(system, diags)
    n = system.n_agents
    if system.impact is not None and system.impacts is not None:
        diags.append("system: give either `impact` or `impacts`, not both")
    if system.impact is not None:
        _in_unit(system.impact, "system.impact", diags)
    if system.impacts is not None:
        m = system.impacts
        if len(m) != n or any(len(row) != n for row in m):
            diags.append(f"system.impacts: must be a {n}x{n} matrix for {n} agents")
        else:
            for j in range(n):
                for i in range(n):
                    _in_unit(m[j][i], f"system.impacts[{j}][{i}]", diags)
                if m[j][j] != 0.0:
                    diags.append(f"system.impacts[{j}][{j}]: diagonal must be 0 (an agent cannot move its own target)")
    if system.volatility is not None:
        _in_unit(system.volatility, "system.volatility", diags)
    if system.world_count < 1:
        diags.append("system.world_count: must be >= 1")
    if system.identical:
        first = system.agents[0] if system.agents else None
        if first is not None and any(
            (a.action_count, a.change_rate, a.learning_rate, a.retention_rate)
            != (first.action_count, first.change_rate, first.learning_rate, first.retention_rate)
            for a in system.agents
        ):
            diags.append("system.identical: all agents must share action count and rates")
        if system.impacts is not None:
            diags.append("system.identical: use a single `impact`, not an `impacts` matrix")


def _validate_game(cfg: ExperimentConfig, diags):
    g = cfg.game
    o = g.options
    if g.variant == "market":
        for name in ("alpha_i", "alpha_j"):
            if name in o:
                _in_unit(o[name], f"game.{name}", diags, open_low=True)
        for name in ("exploration_start", "exploration_decay"):
            if name in o:
                _in_unit(o[name], f"game.{name}", diags)
        if o.get("price_count", 20) < 2:
            diags.append("game.price_count: must be >= 2")
        if cfg.system is not None and cfg.system.n_agents != 2:
            diags.append("system: the market game has exactly two sellers")
    elif g.variant == "coordination":
        n = o.get("n_agents", 100)
        if n < 2 or n % 2:
            diags.append(f"game.n_agents: must be an even number >= 2, got {n}")
        if o.get("delay", 0) < 0:
            diags.append("game.delay: must be >= 0")
        pairs = o.get("pairs_per_step", 1)
        if not 1 <= pairs <= max(1, n // 2):
            diags.append(f"game.pairs_per_step: must lie in [1, {n // 2}]")
        if "threshold" in o:
            _in_unit(o["threshold"], "game.threshold", diags)
    elif g.variant == "matching":
        s = cfg.system
        if s is None or s.n_agents != 2:
            diags.append("system: the matching game needs exactly two agents")
        elif len({a.action_count for a in s.agents}) != 1:
            diags.append("system.agents: matching agents must have the same action_count")
    elif g.variant == "synthetic" and cfg.system is None:
        diags.append("system: the synthetic game needs a [system] section")


def _validate_pac(p: PacConfig, diags):
    if p.hypothesis_count is None and (p.action_count is None or p.world_count is None):
        diags.append("pac: give hypothesis_count, or both action_count and world_count")
    if p.hypothesis_count is not None and p.hypothesis_count < 1:
        diags.append("pac.hypothesis_count: must be >= 1")
    if p.action_count is not None and p.action_count < 1:
        diags.append("pac.action_count: must be >= 1")
    if p.world_count is not None and p.world_count < 0:
        diags.append("pac.world_count: must be >= 0")
    _in_unit(p.epsilon, "pac.epsilon", diags, open_low=True, open_high=True)
    _in_unit(p.gamma, "pac.gamma", diags, open_low=True, open_high=True)
    _in_unit(p.initial_error, "pac.initial_error", diags)
    if p.m is not None and p.m < 1:
        diags.append("pac.m: must be >= 1")


_NEEDS_SYSTEM = {"predict", "surface", "field"}


def validate(cfg: ExperimentConfig) -> list[str]:
    """Every problem with ``cfg``, as human-readable diagnostics (empty if valid)."""
    diags: list[str] = []
    if cfg.mode not in MODES:
        diags.append(f"mode: unknown mode {cfg.mode!r} (choose from {', '.join(MODES)})")
        return diags
    for name in ("runs", "resolution", "workers", "max_iter"):
        if getattr(cfg, name) < 1:
            diags.append(f"{name}: must be >= 1")
    if cfg.resolution < 2:
        diags.append("resolution: must be >= 2")
    if cfg.steps < 0 or (cfg.mode in ("simulate", "compare", "estimate") and cfg.steps < 1):
        diags.append("steps: must be >= 1")
    if not cfg.tolerance > 0.0:
        diags.append("tolerance: must be > 0")
    if cfg.seed < 0:
        diags.append("seed: must be >= 0")

    if cfg.mode == "preset":
        from .repro import PRESETS  # local import: repro builds configs

        if cfg.preset is None:
            diags.append("preset: mode 'preset' needs a preset name")
        elif cfg.preset not in PRESETS:
            diags.append(f"preset: unknown preset {cfg.preset!r} (choose from {', '.join(PRESETS)})")
        return diags

    if cfg.system is not None:
        _validate_system(cfg.system, diags)
    if cfg.mode in _NEEDS_SYSTEM and cfg.system is None:
        diags.append(f"system: mode {cfg.mode!r} needs a [system] section")
    if cfg.mode in ("surface", "field") and cfg.system is not None and cfg.system.n_agents != 2:
        diags.append(f"system.agents: mode {cfg.mode!r} needs exactly two agents")
    if cfg.mode in ("simulate", "compare"):
        if cfg.game is None and cfg.system is None:
            diags.append(f"game: mode {cfg.mode!r} needs a [game] or [system] section")
        if cfg.mode == "compare" and cfg.system is None and (cfg.game is None or cfg.game.variant != "coordination"):
            diags.append("system: mode 'compare' needs a [system] section for the theory side")
    if cfg.game is not None:
        _validate_game(cfg, diags)
    if cfg.mode == "pac":
        if cfg.pac is None:
            diags.append("pac: mode 'pac' needs a [pac] section")
        else:
            _validate_pac(cfg.pac, diags)
    if cfg.mode == "estimate":
        est = cfg.estimate or EstimateConfig()
        if est.trace is None and cfg.system is None:
            diags.append("estimate.trace: give a trace file or a [system] to simulate one")
        if est.since < 0:
            diags.append("estimate.since: must be >= 0")
    if cfg.mapping is not None:
        m = cfg.mapping
        if not m.p > 0.0:
            diags.append("mapping.p: must be > 0")
        if m.samples < 2:
            diags.append("mapping.samples: must be >= 2")
        if any(d < 0 for d in m.spot_check_delays):
            diags.append("mapping.spot_check_delays: delays must be >= 0")
        if m.spot_check_runs < 1:
            diags.append("mapping.spot_check_runs: must be >= 1")
    return diags


def build_system(system: SystemConfig) -> SystemSpec:
    """Turn a validated system section into a :class:`SystemSpec`."""
    agents = []
    for a in system.agents:
        spec = AgentSpec(a.action_count, LearningParams(a.change_rate, a.learning_rate, a.retention_rate), a.initial_error)
        agents.extend([spec] * a.count)
    n = len(agents)
    if system.impacts is not None:
        impacts = np.array(system.impacts, dtype=float)
    else:
        impacts = np.full((n, n), system.impact or 0.0)
        np.fill_diagonal(impacts, 0.0)
    try:
        return SystemSpec(tuple(agents), impacts, system.identical)
    except DomainError as exc:
        raise ConfigError([f"system: {exc}"]) from None
