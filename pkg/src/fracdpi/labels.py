"""Monte Carlo regression labels for one Picard step.

A label at (t_i, x_i) is the path average of the terminal payoff plus a
quadrature of f(t_l, u(t_l, x_l), x_l) over the accepted pre-stopping states.
``u`` is any frozen predictor ``u(t, x) -> array``; it is never differentiated
here.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .trajectory import SPATIAL_EXIT, TrajectoryOutcome, evaluate_payoff, payoff_values, simulate_paths

QUAD_RULES = ("trapezoid", "rectangle")

Predictor = Callable[[np.ndarray, np.ndarray], np.ndarray]


def quad_rectangle(f_values: Sequence[float], ds: float) -> float:
    """Right-point rule: ds * sum(f_1..f_N)."""
    return ds * math.fsum(f_values)


def quad_trapezoid(f_values: Sequence[float], ds: float) -> float:
    """Trapezoid over f_0..f_N: ds * sum((f_{l-1} + f_l) / 2)."""
    f = list(f_values)
    if len(f) < 2:
        return 0.0
    return ds * math.fsum((f[i - 1] + f[i]) / 2.0 for i in range(1, len(f)))


def _check_quad(quad: str) -> None:
    if quad not in QUAD_RULES:
        raise ValueError(f"unknown quadrature rule {quad!r}; expected one of {QUAD_RULES}")


def path_integrand(outcome: TrajectoryOutcome, u: Predictor, problem) -> np.ndarray:
    """f along the pre-stopping states of one path, index 0 being the start point."""
    t = outcome.pre_stop_t
    x = outcome.pre_stop_x
    return problem.f(t, u(t, x), x)


def make_label(point, outcomes: Sequence[TrajectoryOutcome], u: Predictor, problem, quad: str, ds: float):
    """(raw label, unbiased variance over paths) from recorded outcomes of one point."""
    _check_quad(quad)
    if not outcomes:
        raise ValueError("need at least one path")
    vals = []
    for out in outcomes:
        f = path_integrand(out, u, problem)
        integral = quad_trapezoid(f, ds) if quad == "trapezoid" else quad_rectangle(f[1:], ds)
        vals.append(evaluate_payoff(out, problem) + integral)
    vals = np.asarray(vals)
    var = float(vals.var(ddof=1)) if vals.size > 1 else 0.0
    return float(vals.mean()), var


def relax_labels(raw, u_at_points, eta: float) -> np.ndarray:
    """(1 - eta) * u_k(points) + eta * raw; eta = 1 returns ``raw`` unchanged."""
    if not (0.0 < eta <= 1.0) or not math.isfinite(eta):
        raise ValueError(f"relaxation eta must lie in (0, 1], got {eta}")
    raw = np.asarray(raw, dtype=np.float64)
    if eta == 1.0:
        return raw.copy()
    return (1.0 - eta) * np.asarray(u_at_points, dtype=np.float64) + eta * raw


@dataclass
class LabelBatch:
    t: np.ndarray
    x: np.ndarray
    raw: np.ndarray
    relaxed: np.ndarray
    variance: np.ndarray
    truncated: np.ndarray  # per-point count of budget-truncated paths
    exit_fraction: np.ndarray = field(default=None)
    n_paths: int = 1

    def __len__(self) -> int:
        return self.raw.size

    @property
    def total_truncated(self) -> int:
        return int(self.truncated.sum())


class _KahanPaths:
    """Per-path compensated sums."""

    def __init__(self, n: int):
        self.s = np.zeros(n)
        self.c = np.zeros(n)

    def add(self, idx: np.ndarray, v: np.ndarray) -> None:
        y = v - self.c[idx]
        s = self.s[idx]
        t = s + y
        self.c[idx] = (t - s) - y
        self.s[idx] = t


def path_values(
    t0: np.ndarray,
    x0: np.ndarray,
    problem,
    u: Predictor,
    ds: float,
    key: int,
    stream_ids: np.ndarray,
    quad: str = "trapezoid",
    max_steps: Optional[int] = None,
    jump_law: str = "stable",
):
    """Payoff + path quadrature for a batch of paths simulated in lockstep.

    Returns ``(values, batch)`` with ``batch`` the raw stopping information.
    """
    _check_quad(quad)
    n = t0.size
    acc = _KahanPaths(n)
    f_prev = problem.f(t0, u(t0, x0), x0) if quad == "trapezoid" else None

    def on_accept(step, idx, t, x):
        f = problem.f(t, u(t, x), x)
        if f_prev is None:
            acc.add(idx, f)
        else:
            acc.add(idx, 0.5 * (f_prev[idx] + f))
            f_prev[idx] = f

    batch = simulate_paths(
        t0, x0, problem.domain, problem.orders, ds, key, stream_ids,
        max_steps=max_steps, on_accept=on_accept, jump_law=jump_law,
    )
    values = payoff_values(problem, batch.cause, batch.stop_t, batch.stop_x) + ds * acc.s
    return values, batch


def _label_chunk(t, x, point_ids, problem, u, M, ds, key, quad, max_steps, jump_law):
    n, d = x.shape
    t_rep = np.repeat(t, M)
    x_rep = np.repeat(x, M, axis=0)
    sids = (np.repeat(point_ids.astype(np.uint64), M) * np.uint64(M)
            + np.tile(np.arange(M, dtype=np.uint64), n))
    vals, batch = path_values(t_rep, x_rep, problem, u, ds, key, sids, quad, max_steps, jump_law)
    vals = vals.reshape(n, M)
    # fixed path order
    total = np.zeros(n)
    for m in range(M):
        total += vals[:, m]
    mean = total / M
    var = vals.var(axis=1, ddof=1) if M > 1 else np.zeros(n)
    trunc = batch.truncated.reshape(n, M).sum(axis=1)
    exits = (batch.cause.reshape(n, M) == SPATIAL_EXIT).mean(axis=1)
    return mean, var, trunc, exits


def generate_labels(
    t: np.ndarray,
    x: np.ndarray,
    problem,
    u: Predictor,
    *,
    M: int,
    ds: float,
    key: int,
    eta: float = 1.0,
    quad: str = "trapezoid",
    point_offset: int = 0,
    chunk_size: int = 256,
    workers: int = 1,
    max_steps: Optional[int] = None,
    jump_law: str = "stable",
) -> LabelBatch:
    """Labels for all points; path m of point i uses stream (point_offset + i) * M + m.

    Points are split into fixed chunks of ``chunk_size`` regardless of
    ``workers``, so results do not depend on the worker count.
    """
    _check_quad(quad)
    if M < 1:
        raise ValueError("need at least one path per point")
    t = np.asarray(t, dtype=np.float64)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = t.size
    ids = np.arange(point_offset, point_offset + n, dtype=np.uint64)
    bounds = [(s, min(s + chunk_size, n)) for s in range(0, n, chunk_size)]

    def job(b):
        s, e = b
        return _label_chunk(t[s:e], x[s:e], ids[s:e], problem, u, M, ds, key, quad, max_steps, jump_law)

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(job, bounds))
    else:
        parts = [job(b) for b in bounds]

    raw = np.concatenate([p[0] for p in parts])
    var = np.concatenate([p[1] for p in parts])
    trunc = np.concatenate([p[2] for p in parts])
    exits = np.concatenate([p[3] for p in parts])
    relaxed = relax_labels(raw, u(t, x) if eta < 1.0 else raw, eta)
    return LabelBatch(t, x, raw, relaxed, var, trunc, exits, M)


def write_labels_csv(path, batch: LabelBatch) -> None:
    """Columns: point_id, t, x0..x{d-1}, raw, relaxed, variance, truncated_paths."""
    d = batch.x.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["point_id", "t"] + [f"x{j}" for j in range(d)] + ["raw", "relaxed", "variance", "truncated_paths"])
        for i in range(len(batch)):
            w.writerow(
                [i, repr(float(batch.t[i]))]
                + [repr(float(v)) for v in batch.x[i]]
                + [repr(float(batch.raw[i])), repr(float(batch.relaxed[i])), repr(float(batch.variance[i])),
                   int(batch.truncated[i])]
            )
