"""Terminal-slice and space-time RMSE, and log-log convergence slopes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import RngStream
from .sampler import collocation_from_uniforms, collocation_width
from .specfun import DomainError


class UnsupportedMetric(ValueError):
    pass


@dataclass(frozen=True)
class EvalGrid:
    """Fixed evaluation nodes with cached exact values."""

    kind: str
    t: np.ndarray
    x: np.ndarray
    exact: np.ndarray

    def rmse(self, u) -> float:
        err = u(self.t, self.x) - self.exact
        return float(np.sqrt(np.mean(err * err)))


def _require_exact(problem):
    if problem.exact is None:
        raise UnsupportedMetric(f"problem {problem.name!r} has no exact solution")


def terminal_slice_grid(problem, resolution: int = 201) -> EvalGrid:
    """Uniform resolution^2 grid in coordinates (x1, x2), rest zero, restricted to the domain, at t = T."""
    _require_exact(problem)
    dom = problem.domain
    if dom.kind == "box":
        lo, hi = dom.lo[:2], dom.hi[:2]
    else:
        lo, hi = np.array([-1.0, -1.0]), np.array([1.0, 1.0])
    g0 = np.linspace(lo[0], hi[0], resolution)
    g1 = np.linspace(lo[1], hi[1], resolution)
    X0, X1 = np.meshgrid(g0, g1, indexing="ij")
    x = np.zeros((X0.size, dom.d))
    x[:, 0] = X0.ravel()
    if dom.d > 1:
        x[:, 1] = X1.ravel()
    else:
        x = x[: resolution]
        x[:, 0] = g0
    x = x[dom.contains(x)]
    t = np.full(x.shape[0], problem.T)
    return EvalGrid("terminal_slice", t, x, problem.exact(t, x))


def spacetime_grid(problem, stream: RngStream, times: int = 10, pts: int = 1000) -> EvalGrid:
    """``times`` equally spaced levels in [0.1 T, T], ``pts`` uniform points of the domain per level."""
    _require_exact(problem)
    levels = np.linspace(0.1 * problem.T, problem.T, times)
    width = collocation_width(problem.domain)
    u = stream.uniforms(times * pts * width).reshape(times * pts, width)
    _, x = collocation_from_uniforms(problem.domain, problem.T, u)
    t = np.repeat(levels, pts)
    return EvalGrid("spacetime", t, x, problem.exact(t, x))


def slice_rmse(u, problem, resolution: int = 201) -> float:
    return terminal_slice_grid(problem, resolution).rmse(u)


def spacetime_rmse(u, problem, stream: RngStream, times: int = 10, pts: int = 1000) -> float:
    return spacetime_grid(problem, stream, times, pts).rmse(u)


def fit_convergence_order(xs, errs) -> float:
    """Least-squares slope of log(err) against log(x)."""
    xs = np.asarray(xs, dtype=np.float64)
    errs = np.asarray(errs, dtype=np.float64)
    if xs.shape != errs.shape or xs.ndim != 1 or xs.size < 2:
        raise DomainError("need two equal-length lists with at least two entries")
    if np.any(xs <= 0) or np.any(errs <= 0):
        raise DomainError("convergence fit needs positive values")
    lx, le = np.log(xs), np.log(errs)
    lx = lx - lx.mean()
    return float(np.dot(lx, le - le.mean()) / np.dot(lx, lx))
