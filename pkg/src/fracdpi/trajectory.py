"""Coupled operational-time chain: stable subordinator clock + walk-on-spheres jumps.

Step ``l`` of path ``p`` always reads the uniforms at indices
``(l - 1) * step_width(d) + j`` of stream ``p``: two for the subordinator
increment, one for the jump radius, the rest for the Gaussian direction.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .domains import DomainSpec
from .rng import RngStream, box_muller, uniforms
from .sampler import WosStepRule, jump_distance_from_uniforms, positive_stable_from_uniforms
from .specfun import FracOrders

TIME_CROSSING = 0
SPATIAL_EXIT = 1
CAUSE_NAMES = {TIME_CROSSING: "time_crossing", SPATIAL_EXIT: "spatial_exit"}


def step_width(d: int) -> int:
    w = 3 + d + (d % 2)
    return w + (w % 2)


def max_steps_for(T: float, ds: float) -> int:
    return int(math.ceil(8.0 * T / ds)) + 10_000


@dataclass
class PathBatch:
    """Stopping information for a batch of coupled paths."""

    stop_t: np.ndarray
    stop_x: np.ndarray
    cause: np.ndarray
    n_pre: np.ndarray
    truncated: np.ndarray


@dataclass
class TrajectoryOutcome:
    pre_stop_t: np.ndarray  # starts with the start point
    pre_stop_x: np.ndarray
    stop_cause: str
    stop_t: float
    stop_x: np.ndarray
    n_pre: int
    truncated: bool = False

    @property
    def pre_stop_states(self):
        return list(zip(self.pre_stop_t.tolist(), self.pre_stop_x))


AcceptHook = Callable[[int, np.ndarray, np.ndarray, np.ndarray], None]


def _directions(u: np.ndarray, d: int, key: int, sids: np.ndarray, base: np.ndarray) -> np.ndarray:
    width = d + (d % 2)
    g = box_muller(u[:, 3 : 3 + width])[:, :d]
    norm = np.linalg.norm(g, axis=1)
    zero = ~(norm > 0)
    redraw = 1
    while zero.any():
        extra = uniforms(key, sids[zero], base[zero] + np.uint64(2**40 * redraw), width)
        g[zero] = box_muller(extra)[:, :d]
        norm = np.linalg.norm(g, axis=1)
        zero = ~(norm > 0)
        redraw += 1
    return g / norm[:, None]


def simulate_paths(
    t0: np.ndarray,
    x0: np.ndarray,
    domain: DomainSpec,
    orders: FracOrders,
    ds: float,
    key: int,
    stream_ids: np.ndarray,
    *,
    max_steps: Optional[int] = None,
    on_accept: Optional[AcceptHook] = None,
    jump_law: str = "stable",
) -> PathBatch:
    """Advance all paths in lockstep until each one stops.

    ``on_accept(step, path_idx, t, x)`` sees every accepted pre-stopping state
    (step >= 1), in step order. Time crossing is checked before spatial exit.
    """
    t0 = np.asarray(t0, dtype=np.float64)
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    n, d = x0.shape
    if d != domain.d:
        raise ValueError("start points do not match the domain dimension")
    if ds <= 0:
        raise ValueError("operational step must be positive")
    sids = np.asarray(stream_ids, dtype=np.uint64)
    if max_steps is None:
        max_steps = max_steps_for(float(t0.max()) if n else 1.0, ds)
    rule = WosStepRule.from_step(ds, d, orders.alpha, jump_law)
    scale = ds ** (1.0 / orders.beta)
    width = step_width(d)

    Y = np.zeros(n)
    x = x0.copy()
    stop_t = np.zeros(n)
    stop_x = x0.copy()
    cause = np.full(n, TIME_CROSSING, dtype=np.int8)
    n_pre = np.zeros(n, dtype=np.int64)
    truncated = np.zeros(n, dtype=bool)
    active = np.arange(n)

    for step in range(1, max_steps + 1):
        if active.size == 0:
            break
        a_sids = sids[active]
        base = np.full(active.size, (step - 1) * width, dtype=np.uint64)
        u = uniforms(key, a_sids, base, width)
        y_new = Y[active] + scale * positive_stable_from_uniforms(orders.beta, u[:, 0], u[:, 1])
        t_new = t0[active] - y_new
        jump = jump_distance_from_uniforms(rule, u[:, 2])
        x_new = x[active] + jump[:, None] * _directions(u, d, key, a_sids, base)

        crossed = t_new <= 0.0
        exited = ~crossed & ~domain.contains(x_new)
        stopped = crossed | exited
        if stopped.any():
            idx = active[stopped]
            stop_t[idx] = t_new[stopped]
            stop_x[idx] = x_new[stopped]
            cause[idx] = np.where(exited[stopped], SPATIAL_EXIT, TIME_CROSSING)
        keep = ~stopped
        active = active[keep]
        Y[active] = y_new[keep]
        x[active] = x_new[keep]
        n_pre[active] = step
        if on_accept is not None and active.size:
            on_accept(step, active, t_new[keep], x_new[keep])

    if active.size:
        # step budget exhausted: stop at the current state with the clock clamped
        truncated[active] = True
        stop_t[active] = 0.0
        stop_x[active] = x[active]
        cause[active] = TIME_CROSSING
    return PathBatch(stop_t, stop_x, cause, n_pre, truncated)


def simulate_trajectory(
    start: tuple,
    domain: DomainSpec,
    orders: FracOrders,
    ds: float,
    stream: RngStream,
    max_steps: Optional[int] = None,
    jump_law: str = "stable",
) -> TrajectoryOutcome:
    """One recorded path from ``start = (t, x)``."""
    t_start, x_start = float(start[0]), np.asarray(start[1], dtype=np.float64).ravel()
    ts = [t_start]
    xs = [x_start.copy()]

    def record(step, idx, t, x):
        ts.append(float(t[0]))
        xs.append(x[0].copy())

    batch = simulate_paths(
        np.array([t_start]),
        x_start[None, :],
        domain,
        orders,
        ds,
        stream.seed,
        np.array([stream.stream_id], dtype=np.uint64),
        max_steps=max_steps,
        on_accept=record,
        jump_law=jump_law,
    )
    return TrajectoryOutcome(
        pre_stop_t=np.array(ts),
        pre_stop_x=np.array(xs),
        stop_cause=CAUSE_NAMES[int(batch.cause[0])],
        stop_t=float(batch.stop_t[0]),
        stop_x=batch.stop_x[0].copy(),
        n_pre=int(batch.n_pre[0]),
        truncated=bool(batch.truncated[0]),
    )


def payoff_values(problem, cause: np.ndarray, stop_t: np.ndarray, stop_x: np.ndarray) -> np.ndarray:
    """Terminal payoff: u0 at the crossing state, g at the exit state."""
    out = np.zeros(cause.shape)
    tc = cause == TIME_CROSSING
    if tc.any():
        out[tc] = problem.u0(stop_x[tc])
    ex = ~tc
    if ex.any():
        out[ex] = problem.g(stop_t[ex], stop_x[ex])
    return out


def evaluate_payoff(outcome: TrajectoryOutcome, problem) -> float:
    cause = np.array([TIME_CROSSING if outcome.stop_cause == "time_crossing" else SPATIAL_EXIT])
    return float(
        payoff_values(problem, cause, np.array([outcome.stop_t]), outcome.stop_x[None, :])[0]
    )


def clock_kernel_sums(
    t: float, beta: float, ds: float, lam, key: int, stream_ids: np.ndarray, max_steps: Optional[int] = None
) -> np.ndarray:
    """Per-path sum over pre-crossing indices of exp(-lam * Y(s_l)) * ds.

    Pure time-crossing paths (no spatial stopping). ``lam`` may be a sequence;
    the result then has shape (len(lam), n_paths).
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    sids = np.asarray(stream_ids, dtype=np.uint64)
    n = sids.size
    if max_steps is None:
        max_steps = max_steps_for(t, ds)
    scale = ds ** (1.0 / beta)
    Y = np.zeros(n)
    sums = np.full((lam.size, n), ds)  # l = 0 term, Y = 0
    active = np.arange(n)
    for step in range(1, max_steps + 1):
        if active.size == 0:
            break
        u = uniforms(key, sids[active], (step - 1) * 2, 2)
        y_new = Y[active] + scale * positive_stable_from_uniforms(beta, u[:, 0], u[:, 1])
        keep = y_new < t
        active = active[keep]
        Y[active] = y_new[keep]
        sums[:, active] += np.exp(-lam[:, None] * Y[active][None, :]) * ds
    return sums


DUMP_FIELDS = ["point_id", "path_id", "step", "t_phys"]


def write_path_dump(path, records, d: int) -> None:
    """CSV dump of recorded trajectories.

    ``records`` yields ``(point_id, path_id, TrajectoryOutcome)``. One row per
    pre-stopping state (stopped_flag 0) plus one row for the stopping state
    (stopped_flag 1, cause time_crossing | spatial_exit | truncated).
    """
    header = DUMP_FIELDS + [f"x{j}" for j in range(d)] + ["stopped_flag", "cause"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for point_id, path_id, out in records:
            for step, (t, x) in enumerate(zip(out.pre_stop_t, out.pre_stop_x)):
                w.writerow([point_id, path_id, step, repr(float(t))] + [repr(float(v)) for v in x] + [0, ""])
            cause = "truncated" if out.truncated else out.stop_cause
            w.writerow(
                [point_id, path_id, out.n_pre + 1, repr(out.stop_t)]
                + [repr(float(v)) for v in out.stop_x]
                + [1, cause]
            )
