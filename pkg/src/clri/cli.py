"""Command-line front end.

Exit status: 0 on success, 2 when the configuration is invalid, 3 when a file
cannot be read or written.  Artifacts are computed first and written at the
end, so a failed run leaves no partial output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, MappingConfig, build_system, load_config, validate
from .estimate import estimate_impact, estimate_rates
from .io import HEADERS, read_trace, write_csv, write_trace
from .pac import PacProblem, hypothesis_count, learning_rate_lower_bound, sample_complexity
from .repro import (
    PRESETS,
    ShohamMapping,
    experiment_final_error,
    learning_rate_from_delay,
    preset,
    shoham_comparison,
)
from .sim import GameDef, WorldModel, monte_carlo, run_seed
from .theory import (
    AgentSpec,
    DomainError,
    LearningParams,
    coupled_trajectory,
    error_surface,
    fixed_point,
    matching_trajectory,
    vector_field,
)

__all__ = ["ENV_OUT_DIR", "DEFAULT_OUT_DIR", "Artifacts", "execute", "run", "main", "build_parser"]

ENV_OUT_DIR = "CLRI_OUT_DIR"
DEFAULT_OUT_DIR = "clri-out"


class Artifacts:
    """Tables and a summary produced by one run, not yet written to disk."""

    def __init__(self):
        self.tables: list[tuple[str, tuple, list]] = []
        self.traces: list[tuple[str, object]] = []
        self.summary: dict = {}
        self.lines: list[str] = []

    def table(self, name, kind, rows):
        self.tables.append((name, HEADERS[kind], rows))

    def say(self, line: str):
        self.lines.append(line)


# ---------------------------------------------------------------------------
# Mode handlers
# ---------------------------------------------------------------------------


def _per_agent_rows(values_a, values_b, values_c=None):
    steps, n = values_a.shape
    rows = []
    for t in range(steps):
        for i in range(n):
            row = [t, i, values_a[t, i], values_b[t, i]]
            if values_c is not None:
                row.append(values_c[t, i])
            rows.append(row)
    return rows


def _predict(cfg: ExperimentConfig, out: Artifacts):
    spec = build_system(cfg.system)
    vol = cfg.system.volatility
    traj = coupled_trajectory(spec, steps=cfg.steps, volatility=vol)
    out.table("predict.csv", "predict", _per_agent_rows(traj.errors, traj.volatility))
    fp = fixed_point(spec, tol=cfg.tolerance, max_iter=cfg.max_iter, volatility=vol)
    out.summary.update(
        final_error=traj.final.tolist(),
        fixed_point_kind=fp.kind,
        fixed_point=np.asarray(fp.values).tolist(),
        fixed_point_iterations=fp.iterations,
        clamped_steps=int(traj.clamped.any(axis=1).sum()),
    )
    out.say(f"final expected error: {', '.join(f'{x:.6g}' for x in traj.final)}")
    out.say(f"fixed point ({fp.kind} after {fp.iterations} iterations): {np.round(fp.values, 6).tolist()}")


def _game(cfg: ExperimentConfig) -> GameDef:
    g = cfg.game
    variant = g.variant if g is not None else "synthetic"
    opts = dict(g.options) if g is not None else {}
    steps = cfg.steps
    if variant == "synthetic":
        s = cfg.system
        return GameDef(
            "synthetic",
            dict(
                spec=build_system(s),
                world=WorldModel(s.world_count),
                steps=steps,
                external_volatility=s.volatility or 0.0,
            ),
        )
    if variant == "matching":
        spec = build_system(cfg.system)
        ai, aj = spec.agents
        opts.pop("exact_conditioning", None)
        return GameDef(
            "matching",
            dict(
                params_i=ai.params,
                params_j=aj.params,
                action_count=ai.action_count,
                world=WorldModel(cfg.system.world_count),
                steps=steps,
                initial_error=ai.initial_error,
            ),
        )
    return GameDef(variant, dict(opts, steps=steps))


def _simulate(cfg: ExperimentConfig, out: Artifacts):
    game = _game(cfg)
    mc = monte_carlo(game, cfg.runs, cfg.seed, cfg.workers)
    out.table("simulate.csv", "simulate", _per_agent_rows(mc.mean, mc.stderr))
    out.traces.append(("trace.csv", game.run(run_seed(cfg.seed, 0))))
    out.summary.update(runs=mc.n_runs, final_mean_error=mc.mean[-1].tolist(), final_stderr=mc.stderr[-1].tolist())
    if mc.success_rate is not None:
        out.summary["success_rate"] = mc.success_rate
        out.say(f"success rate: {mc.success_rate:.4g}")
    out.say(f"final mean error over {mc.n_runs} runs: {', '.join(f'{x:.6g}' for x in mc.mean[-1])}")
    return mc


def _theory_for_compare(cfg: ExperimentConfig):
    if cfg.game is not None and cfg.game.variant == "matching":
        spec = build_system(cfg.system)
        exact = cfg.game.options.get("exact_conditioning", False)
        return matching_trajectory(spec.agents[0], spec.agents[1], cfg.steps, exact_conditioning=exact)
    return coupled_trajectory(build_system(cfg.system), steps=cfg.steps, volatility=cfg.system.volatility)


def _compare_convention(cfg: ExperimentConfig, out: Artifacts):
    m = cfg.mapping or MappingConfig()
    opts = cfg.game.options
    n_agents = opts.get("n_agents", 100)
    e0 = cfg.system.agents[0].initial_error if cfg.system is not None else 0.5
    mapping = ShohamMapping(p=m.p, horizon=cfg.steps, agent_count=n_agents)
    cmp = shoham_comparison(mapping, samples=m.samples, initial_error=e0)
    out.table(
        "shoham.csv",
        "shoham",
        [list(r) for r in zip(cmp.learning_rate, cmp.delay, cmp.theory, cmp.experiment, cmp.deviation)],
    )
    rows = []
    for k, d in enumerate(m.spot_check_delays):
        game = GameDef("coordination", dict(opts, delay=d, steps=cfg.steps))
        mc = monte_carlo(game, m.spot_check_runs, run_seed(cfg.seed, k), cfg.workers)
        l = learning_rate_from_delay(d, m.p)
        fit = experiment_final_error(l, mapping) if d <= 200 else None
        rows.append([d, l, m.spot_check_runs, mc.success_rate, 1.0 - mc.success_rate, fit])
    out.table("spot_check.csv", "spot_check", rows)
    out.summary.update(max_deviation=cmp.max_deviation, samples=int(cmp.learning_rate.size))
    out.summary["spot_check"] = {str(r[0]): r[3] for r in rows}
    out.say(f"max |theory - experiment fit| over {cmp.learning_rate.size} learning rates: {cmp.max_deviation:.6g}")
    for r in rows:
        out.say(f"delay {r[0]}: success rate {r[3]:.3g} over {r[2]} runs")


def _compare(cfg: ExperimentConfig, out: Artifacts):
    if cfg.game is not None and cfg.game.variant == "coordination":
        return _compare_convention(cfg, out)
    theory = _theory_for_compare(cfg)
    game = _game(cfg)
    mc = monte_carlo(game, cfg.runs, cfg.seed, cfg.workers)
    if mc.mean.shape != theory.errors.shape:
        raise DomainError(f"theory has shape {theory.errors.shape} but simulation {mc.mean.shape}")
    out.table("compare.csv", "compare", _per_agent_rows(theory.errors, mc.mean, mc.stderr))
    dev = np.abs(theory.errors - mc.mean)
    with np.errstate(divide="ignore", invalid="ignore"):
        within = (dev <= 3.0 * mc.stderr) | (dev == 0.0)
    out.summary.update(
        runs=mc.n_runs,
        max_abs_deviation=float(dev.max()),
        fraction_within_3_stderr=float(within.mean()),
        final_theory_error=theory.final.tolist(),
        final_mean_error=mc.mean[-1].tolist(),
    )
    out.say(f"max |theory - simulation|: {dev.max():.6g}")
    out.say(f"fraction of (step, agent) points within 3 standard errors: {within.mean():.4g}")


def _surface(cfg: ExperimentConfig, out: Artifacts):
    spec = build_system(cfg.system)
    s = error_surface(spec, cfg.resolution, tol=cfg.tolerance, max_iter=cfg.max_iter)
    rows = [
        [s.impact_ij[a], s.impact_ji[b], s.final_error[a, b]]
        for a in range(s.impact_ij.size)
        for b in range(s.impact_ji.size)
    ]
    out.table("surface.csv", "surface", rows)
    out.summary.update(unconverged_points=int((~s.converged).sum()), max_final_error=float(s.final_error.max()))
    out.say(f"surface {s.final_error.shape[0]}x{s.final_error.shape[1]}: final error in "
            f"[{s.final_error.min():.4g}, {s.final_error.max():.4g}]")


def _field(cfg: ExperimentConfig, out: Artifacts):
    f = vector_field(build_system(cfg.system), cfg.resolution)
    rows = [list(r) for r in zip(f.e_i.ravel(), f.e_j.ravel(), f.e_i_next.ravel(), f.e_j_next.ravel())]
    out.table("field.csv", "field", rows)
    out.summary["max_displacement"] = float(f.displacement.max())
    out.say(f"field {cfg.resolution}x{cfg.resolution} written")


def _pac(cfg: ExperimentConfig, out: Artifacts):
    p = cfg.pac
    h = p.hypothesis_count if p.hypothesis_count is not None else hypothesis_count(p.action_count, p.world_count)
    prob = PacProblem(h, p.epsilon, p.gamma, p.initial_error)
    m = sample_complexity(prob)
    budget = p.m if p.m is not None else max(m, 1)
    if p.initial_error > 0.0:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            bound = learning_rate_lower_bound(p.initial_error, p.epsilon, budget, p.gamma)
        for w in caught:
            out.say(f"warning: {w.message}")
    else:
        bound = 0.0
    out.table("pac.csv", "pac", [[h, p.epsilon, p.gamma, m, p.initial_error, budget, bound]])
    out.summary.update(sample_complexity=m, learning_rate_bound=bound)
    out.say(f"m={m}")
    out.say(f"learning rate lower bound for e0={p.initial_error} within {budget} steps: {bound:.6g}")


def _estimate(cfg: ExperimentConfig, out: Artifacts):
    est = cfg.estimate
    since = est.since if est is not None else 0
    if est is not None and est.trace is not None:
        trace = read_trace(est.trace)
    else:
        trace = _game(replace(cfg, game=None)).run(run_seed(cfg.seed, 0))
        out.traces.append(("trace.csv", trace))
    rows = []
    for a in range(trace.n_agents):
        rates = estimate_rates(trace, a, since)
        for name, r in (("c", rates.change), ("l", rates.learning), ("r", rates.retention)):
            lo, hi = r.interval or (None, None)
            rows.append([name, a, None, r.successes, r.count, r.value, lo, hi])
    for j in range(trace.n_agents):
        for i in range(trace.n_agents):
            if i != j:
                r = estimate_impact(trace, j, i, since)
                lo, hi = r.interval or (None, None)
                rows.append(["I", i, j, r.successes, r.count, r.value, lo, hi])
    out.table("estimate.csv", "estimate", rows)
    for row in rows:
        q, a, j, _, n, v = row[:6]
        who = f"agent {a}" if j is None else f"{j}->{a}"
        out.say(f"{q} {who}: {'undefined' if v is None else f'{v:.4g}'} (n={n})")


_HANDLERS = {
    "predict": _predict,
    "simulate": _simulate,
    "compare": _compare,
    "surface": _surface,
    "field": _field,
    "pac": _pac,
    "estimate": _estimate,
}


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------


def execute(cfg: ExperimentConfig) -> Artifacts:
    """Compute every artifact of ``cfg`` in memory (raises ConfigError if invalid)."""
    if cfg.mode == "preset":
        base = preset(cfg.preset) if cfg.preset in PRESETS else None
        if base is None:
            raise ConfigError(validate(cfg))
        cfg = replace(base, seed=cfg.seed, output=cfg.output, preset=cfg.preset)
    diags = validate(cfg)
    if diags:
        raise ConfigError(diags)
    out = Artifacts()
    with np.errstate(all="ignore"):
        _HANDLERS[cfg.mode](cfg, out)
    out.summary = {"mode": cfg.mode, "preset": cfg.preset, "seed": cfg.seed, **out.summary}
    return out


def _write(out: Artifacts, out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [write_csv(out_dir / name, header, rows) for name, header, rows in out.tables]
    paths += [write_trace(out_dir / name, trace) for name, trace in out.traces]
    summary = out_dir / "summary.json"
    summary.write_text(json.dumps(out.summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths + [summary]


def resolve_out_dir(cli_value: str | None, cfg: ExperimentConfig) -> Path:
    if cli_value:
        return Path(cli_value)
    if cfg.output.dir:
        return Path(cfg.output.dir)
    return Path(os.environ.get(ENV_OUT_DIR) or DEFAULT_OUT_DIR)


def run(cfg: ExperimentConfig, out_dir=None, quiet: bool = False, stream=None) -> int:
    """Run ``cfg`` and write its artifacts; returns the process exit status."""
    stream = stream or sys.stdout
    err = sys.stderr

    def say(msg):
        if not quiet:
            print(msg, file=stream)

    try:
        out = execute(cfg)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"error: {d}", file=err)
        return 2
    except DomainError as exc:
        print(f"error: {exc}", file=err)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=err)
        return 3
    except ValueError as exc:  # malformed input file (e.g. a trace)
        print(f"error: {exc}", file=err)
        return 3
    target = Path(out_dir) if out_dir is not None else resolve_out_dir(None, cfg)
    try:
        paths = _write(out, target)
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=err)
        return 3
    say(f"mode: {out.summary['mode']}" + (f" (preset {out.summary['preset']})" if out.summary["preset"] else ""))
    say(f"seed: {out.summary['seed']}")
    for line in out.lines:
        say(line)
    for p in paths:
        say(f"wrote {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="clri",
        description="Predict and simulate the error dynamics of learning agents.",
        epilog=f"Presets: {', '.join(PRESETS)}.  Output directory: --out, else [output] dir, "
        f"else ${ENV_OUT_DIR}, else ./{DEFAULT_OUT_DIR}.",
    )
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", metavar="PATH", help="TOML experiment configuration")
    src.add_argument("--preset", metavar="NAME", help=f"named experiment ({', '.join(PRESETS)})")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--runs", type=int, help="Monte Carlo runs")
    p.add_argument("--steps", type=int, help="time steps")
    p.add_argument("--workers", type=int, help="worker processes for Monte Carlo runs")
    p.add_argument("--mapping-p", type=float, dest="mapping_p", help="scaling constant p of the delay/learning-rate mapping")
    p.add_argument("--validate", action="store_true", help="only check the configuration")
    p.add_argument("--quiet", action="store_true", help="suppress the summary")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def _load(args) -> ExperimentConfig:
    if args.preset is not None:
        if args.preset not in PRESETS:
            raise ConfigError([f"preset: unknown preset {args.preset!r} (choose from {', '.join(PRESETS)})"])
        cfg = replace(preset(args.preset), preset=args.preset)
    else:
        cfg = load_config(args.config)
        if cfg.mode == "preset" and cfg.preset in PRESETS:
            cfg = replace(preset(cfg.preset), seed=cfg.seed, output=cfg.output, preset=cfg.preset)
    cfg = cfg.with_overrides(seed=args.seed, runs=args.runs, steps=args.steps, workers=args.workers)
    if args.mapping_p is not None:
        cfg = replace(cfg, mapping=replace(cfg.mapping or MappingConfig(), p=args.mapping_p))
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"error: {d}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 3
    if args.validate:
        diags = validate(cfg)
        for d in diags:
            print(f"error: {d}", file=sys.stderr)
        if not diags and not args.quiet:
            print("configuration is valid")
        return 2 if diags else 0
    return run(cfg, resolve_out_dir(args.out, cfg), quiet=args.quiet)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
