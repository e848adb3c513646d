"""Acceptance criteria, each checked at its stated tolerance.

Every test records a one-line PASS/FAIL verdict (shown in the terminal
summary) and then asserts it.
"""

import time

import numpy as np

from clri.cli import main
from clri.estimate import estimate_impact, estimate_rates
from clri.pac import fixed_target_error, learning_rate_lower_bound
from clri.repro import PRESETS, ShohamMapping, preset, shoham_comparison
from clri.sim import GameDef, WorldModel, monte_carlo, run_seed, run_synthetic
from clri.theory import (
    AgentSpec,
    SystemSpec,
    coupled_trajectory,
    error_surface,
    fixed_point,
    flat_coupling,
    matching_coupling,
    step_general,
    step_matching,
    step_simplified,
)
from clri.config import build_system


def test_criterion_01_fig3_fixed_point(acceptance_report):
    agent = AgentSpec.make(20, 1.0, 0.3, 1.0, 0.95)
    start = time.perf_counter()
    res = fixed_point(SystemSpec((agent,), [[0.0]]), initial=[0.95], volatility=0.2, max_iter=10**4)
    elapsed = time.perf_counter() - start
    value = float(res.values[0])
    ok = res.kind == "converged" and abs(value - 0.44) <= 0.005 and elapsed < 1.0
    acceptance_report(
        1, ok, f"fixed point {value:.6f} ({res.kind}, {res.iterations} iterations, {elapsed:.3f}s); need 0.44 +/- 0.005 in < 1 s"
    )
    assert ok


def test_criterion_02_matching_identities(acceptance_report):
    rng = np.random.default_rng(2)
    worst_identity = worst_scaling = 0.0
    for _ in range(1000):
        a = int(rng.integers(3, 51))
        ci = float(rng.random())
        li = float(rng.random()) * ci
        e = float(rng.random())
        ones = AgentSpec.make(a, 1.0, 1.0, 1.0)
        worst_identity = max(worst_identity, abs(step_matching(ones, ones, 1 - e) - e))
        ai = AgentSpec.make(a, ci, li, 1.0)
        aj = AgentSpec.make(a, 1.0, 1.0, 1.0)
        worst_scaling = max(worst_scaling, abs(step_matching(ai, aj, 1 - e) - ci * e))
    ok = worst_identity < 1e-12 and worst_scaling < 1e-12
    acceptance_report(
        2, ok, f"max |E[e']-e| = {worst_identity:.2e}, max |E[e']-c_i e| = {worst_scaling:.2e} over 1000 draws; need < 1e-12"
    )
    assert ok


def _random_agent(rng, min_actions=2):
    a = int(rng.integers(min_actions, 51))
    c = float(rng.random())
    l = c if a == 2 else float(rng.random()) * c
    return AgentSpec.make(a, c, l, float(rng.random()))


def test_criterion_03_specialisations(acceptance_report):
    rng = np.random.default_rng(3)
    worst_flat = worst_match = 0.0
    for _ in range(10**4):
        agent = _random_agent(rng)
        e, v = float(rng.random()), float(rng.random())
        worst_flat = max(worst_flat, abs(step_general(agent, e, flat_coupling(agent, v)) - step_simplified(agent, e, v)))
        ai = _random_agent(rng)
        aj = AgentSpec.make(ai.action_count, 1.0, 1.0, 1.0) if ai.action_count == 2 else _random_agent(rng, 3)
        if aj.action_count != ai.action_count:
            aj = AgentSpec(ai.action_count, aj.params)
        worst_match = max(worst_match, abs(step_general(ai, e, matching_coupling(ai, aj)) - step_matching(ai, aj, 1 - e)))
    ok = worst_flat < 1e-12 and worst_match < 1e-12
    acceptance_report(
        3, ok, f"max |general-simplified| = {worst_flat:.2e}, max |general-matching| = {worst_match:.2e} over 10^4 draws; need < 1e-12"
    )
    assert ok


def test_criterion_04_theory_vs_simulation(acceptance_report):
    agent = AgentSpec.make(20, 0.5, 0.2, 0.95, 1.0)
    spec = SystemSpec.two_agent(agent, agent, 0.1, 0.1)
    start = time.perf_counter()
    theory = coupled_trajectory(spec, steps=200).errors
    mc = monte_carlo(GameDef("synthetic", dict(spec=spec, world=WorldModel(50), steps=200)), 1000, master_seed=0)
    elapsed = time.perf_counter() - start
    dev = np.abs(mc.mean - theory)[1:]
    within = np.all(dev <= 3.0 * mc.stderr[1:] + 1e-12, axis=1)
    frac = float(within.mean())
    ok = frac >= 0.95 and elapsed < 60.0
    acceptance_report(
        4, ok, f"{within.sum()}/200 steps within 3 standard errors ({frac:.1%}, {elapsed:.1f}s); need >= 95% in < 1 min"
    )
    assert ok


def test_criterion_05_surface_shape(acceptance_report):
    a = AgentSpec.make(20, 1.0, 0.2, 1.0, 1.0)
    base = SystemSpec.two_agent(a, a, 0.0, 0.0)
    grid = [0.0, 0.1, 0.9, 1.0]
    s = error_surface(base, impact_ij=grid, impact_ji=grid)
    f = {(x, y): float(s.final_error[i, j]) for i, x in enumerate(grid) for j, y in enumerate(grid)}
    high, low = f[1.0, 1.0], f[0.0, 0.0]
    asym_ij, asym_ji = f[0.9, 0.1], f[0.1, 0.9]
    ok = high >= 0.9 and low <= 0.01 and asym_ij > asym_ji
    acceptance_report(
        5,
        ok,
        f"final(1,1) = {high:.4f} (need >= 0.9), final(0,0) = {low:.1e} (need <= 0.01), "
        f"final(0.9,0.1) = {asym_ij:.4f} vs final(0.1,0.9) = {asym_ji:.4f} (need the first larger)",
    )
    assert ok


def test_criterion_06_market(acceptance_report):
    cfg = preset("market")
    start = time.perf_counter()
    game = GameDef("market", dict(cfg.game.options, steps=cfg.steps))
    mc = monte_carlo(game, cfg.runs, master_seed=0)
    theory = coupled_trajectory(build_system(cfg.system), steps=cfg.steps).errors
    elapsed = time.perf_counter() - start
    # With equal learning rates the sellers are exchangeable; the market's
    # error curve is the mean over both sellers.  (A single seller's 100-run
    # mean has standard error ~0.05; the two sellers' errors are almost
    # perfectly anti-correlated, so their mean is far less noisy.)
    market = mc.mean.mean(axis=1)
    first, last, th_last = market[0], market[-1], theory[-1]
    ok = abs(first - 0.5) <= 0.05 and last < 0.1 and np.all(th_last < 0.1) and elapsed < 120.0
    acceptance_report(
        6,
        ok,
        f"simulated start {first:.3f} (per seller {np.round(mc.mean[0], 3).tolist()}; need 0.5 +/- 0.05), "
        f"end {last:.3f} (need < 0.1), theory end {np.round(th_last, 4).tolist()} (need < 0.1), "
        f"{cfg.runs} runs x {cfg.steps} steps in {elapsed:.1f}s",
    )
    assert ok


def test_criterion_07_convention_mapping(acceptance_report):
    start = time.perf_counter()
    cmp = shoham_comparison(ShohamMapping(), samples=50)
    elapsed = time.perf_counter() - start
    ok = cmp.learning_rate.size == 50 and cmp.max_deviation <= 0.08 and elapsed < 10.0
    acceptance_report(7, ok, f"max deviation {cmp.max_deviation:.4f} over 50 learning rates ({elapsed:.1f}s); need <= 0.08 in < 10 s")
    assert ok


def test_criterion_08_pac_round_trip(acceptance_report):
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(1000):
        e0 = float(rng.uniform(1e-3, 1.0))
        eps = float(rng.uniform(0.0, e0))
        if eps == 0.0:
            continue
        m = int(rng.integers(1, 10**4 + 1))
        l = learning_rate_lower_bound(e0, eps, m)
        worst = max(worst, abs(fixed_target_error(e0, l, m) - eps))
    ok = worst < 1e-9
    acceptance_report(8, ok, f"max |e0 (1-l)^m - eps| = {worst:.2e} over 1000 draws; need < 1e-9")
    assert ok


def test_criterion_09_rate_estimation_coverage(acceptance_report):
    truth = dict(c=0.5, l=0.2, r=0.9, I=0.3)
    agent = AgentSpec.make(10, truth["c"], truth["l"], truth["r"], 0.5)
    spec = SystemSpec.two_agent(agent, agent, truth["I"], truth["I"])
    world = WorldModel(500)  # 500 worlds x 200 steps = 10^5 samples per agent
    hits = dict(c=0, l=0, r=0, I=0)
    for k in range(100):
        tr = run_synthetic(spec, world, seed=run_seed(9, k), steps=200)
        est = estimate_rates(tr, 0)
        hits["c"] += est.change.covers(truth["c"])
        hits["l"] += est.learning.covers(truth["l"])
        hits["r"] += est.retention.covers(truth["r"])
        hits["I"] += estimate_impact(tr, 1, 0).covers(truth["I"])
    ok = all(v >= 90 for v in hits.values())
    acceptance_report(9, ok, f"95% interval coverage out of 100 repetitions: {hits}; need >= 90 each")
    assert ok


def test_criterion_10_determinism(acceptance_report, tmp_path):
    differing = []
    for name in PRESETS:
        a, b = tmp_path / f"{name}-a", tmp_path / f"{name}-b"
        assert main(["--preset", name, "--out", str(a), "--quiet"]) == 0
        assert main(["--preset", name, "--out", str(b), "--quiet"]) == 0
        for f in sorted(a.glob("*.csv")):
            if f.read_bytes() != (b / f.name).read_bytes():
                differing.append(f"{name}/{f.name}")
    ok = not differing
    acceptance_report(10, ok, f"{len(PRESETS)} presets run twice with seed 0; differing CSVs: {differing or 'none'}")
    assert ok
