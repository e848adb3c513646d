"""CSV artifacts: fixed headers per table, floats written with full round-trip precision."""

from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np

from .sim import Trace

__all__ = ["HEADERS", "format_value", "write_csv", "write_trace", "read_trace"]

HEADERS = {
    "predict": ("step", "agent", "expected_error", "volatility"),
    "simulate": ("step", "agent", "mean_error", "stderr"),
    "surface": ("I_ij", "I_ji", "final_error_i"),
    "field": ("e_i", "e_j", "e_i_next", "e_j_next"),
    "compare": ("step", "agent", "theory_error", "mean_error", "stderr"),
    "shoham": ("learning_rate", "delay", "theory_error", "experiment_error", "deviation"),
    "spot_check": ("delay", "learning_rate", "runs", "success_rate", "error", "experiment_error"),
    "pac": ("hypothesis_count", "epsilon", "gamma", "sample_complexity", "initial_error", "m", "learning_rate_bound"),
    "estimate": ("quantity", "agent", "from_agent", "successes", "count", "value", "lower", "upper"),
    "trace": (
        "step",
        "agent",
        "error",
        "delta_changed",
        "target_changed",
        "world",
        "weight",
        "decision",
        "target",
        "correct",
    ),
}


def format_value(x) -> str:
    """Integers as integers, floats via repr (shortest round-trip form), None as empty."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows) -> Path:
    """Write ``rows`` under ``header`` with LF line endings; returns the path."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
            w.writerow([format_value(x) for x in row])
    return path


def _trace_rows(trace: Trace):
    errors = trace.errors
    dchg = trace.delta_changed
    tchg = trace.target_changed
    weights = trace.weights
    for t in range(trace.steps + 1):
        last = t == trace.steps
        for a in range(trace.n_agents):
            for w in range(trace.world_count):
                yield (
                    t,
                    a,
                    errors[t, a],
                    None if last else bool(dchg[t, a, w]),
                    None if last else bool(tchg[t, a, w]),
                    w,
                    weights[w],
                    trace.decisions[t, a, w],
                    trace.targets[t, a, w],
                    bool(trace.correct[t, a, w]),
                )


def write_trace(path, trace: Trace) -> Path:
    """One row per (step, agent, world).  Change flags refer to step -> step + 1
    and are empty on the final step."""
    return write_csv(path, HEADERS["trace"], _trace_rows(trace))


def read_trace(path) -> Trace:
    """Rebuild a :class:`Trace` from :func:`write_trace` output."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != HEADERS["trace"]:
            raise ValueError(f"{os.fspath(path)}: not a trace file (header {header!r})")
        rows = [r for r in reader if r]
    if not rows:
        raise ValueError(f"{os.fspath(path)}: trace has no rows")
    data = np.array([[r[0], r[1], r[5], r[7], r[8], r[9]] for r in rows], dtype=np.int64)
    t, a, w = data[:, 0], data[:, 1], data[:, 2]
    shape = (t.max() + 1, a.max() + 1, w.max() + 1)
    if len(rows) != shape[0] * shape[1] * shape[2]:
        raise ValueError(f"{os.fspath(path)}: trace is not a complete (step, agent, world) grid")
    decisions = np.empty(shape, dtype=np.int64)
    targets = np.empty(shape, dtype=np.int64)
    correct = np.empty(shape, dtype=bool)
    decisions[t, a, w] = data[:, 3]
    targets[t, a, w] = data[:, 4]
    correct[t, a, w] = data[:, 5].astype(bool)
    weights = np.empty(shape[2])
    weights[w] = [float(r[6]) for r in rows]
    correct_if = "equal" if np.array_equal(correct, decisions == targets) else "at_most"
    return Trace(None, weights, np.zeros(shape[0] - 1, dtype=np.int64), decisions, targets, correct, correct_if=correct_if)
