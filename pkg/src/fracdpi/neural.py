"""Residual tanh MLP with a hard boundary factor, manual backprop and Adam.

Layout of the flat parameter vector, in order:
  W_in (width, d+1), b_in (width,)
  per block: W1 (width, width), b1, W2 (width, width), b2
  w_out (width,), b_out (1,)

v(t, x) = w_out . h_B + b_out with h_0 = W_in z + b_in and
h_{k+1} = h_k + tanh(W2 tanh(W1 h_k + b1) + b2); the model is u = phi(x) v.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

CHECKPOINT_VERSION = 1


class NumericError(ArithmeticError):
    pass


class TrainingDivergence(RuntimeError):
    def __init__(self, msg: str, step: int, loss: float, initial_loss: float):
        super().__init__(msg)
        self.step = step
        self.loss = loss
        self.initial_loss = initial_loss


@dataclass(frozen=True)
class NetArchitecture:
    d: int
    width: int = 64
    n_blocks: int = 2
    boundary_factor: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)

    def __post_init__(self):
        if self.d < 1 or self.width < 1 or self.n_blocks < 1:
            raise ValueError("d, width and n_blocks must all be >= 1")

    @property
    def input_dim(self) -> int:
        return self.d + 1

    def shapes(self):
        w, k = self.width, self.input_dim
        out = [(w, k), (w,)]
        for _ in range(self.n_blocks):
            out += [(w, w), (w,), (w, w), (w,)]
        return out + [(w,), (1,)]

    @property
    def n_params(self) -> int:
        return sum(math.prod(s) for s in self.shapes())

    def phi(self, x: np.ndarray) -> np.ndarray:
        if self.boundary_factor is None:
            return np.ones(x.shape[0])
        return self.boundary_factor(x)

    def to_dict(self) -> dict:
        return {"d": self.d, "width": self.width, "n_blocks": self.n_blocks, "activation": "tanh"}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 512
    n_steps: int = 8000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    divergence_factor: float = 1e6

    def __post_init__(self):
        if not (self.learning_rate > 0 and self.batch_size >= 1 and self.n_steps >= 0):
            raise ValueError("learning_rate, batch_size must be positive and n_steps >= 0")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1 and self.adam_eps > 0):
            raise ValueError("invalid Adam hyperparameters")


@dataclass
class NetworkState:
    params: np.ndarray
    adam_m: np.ndarray
    adam_v: np.ndarray
    step_count: int = 0

    def copy(self) -> "NetworkState":
        return NetworkState(self.params.copy(), self.adam_m.copy(), self.adam_v.copy(), self.step_count)

    def reset_moments(self) -> "NetworkState":
        z = np.zeros_like(self.params)
        return NetworkState(self.params.copy(), z, z.copy(), 0)


def unpack(params: np.ndarray, arch: NetArchitecture):
    views, pos = [], 0
    for s in arch.shapes():
        n = math.prod(s)
        views.append(params[pos : pos + n].reshape(s))
        pos += n
    return views


def init_network(arch: NetArchitecture, rng: np.random.Generator, zero_head: bool = True) -> NetworkState:
    """Fan-in uniform weights, zero biases; a zero head makes the initial output identically 0."""
    params = np.zeros(arch.n_params)
    views = unpack(params, arch)
    for v in views:
        if v.ndim == 2:
            bound = 1.0 / math.sqrt(v.shape[1])
            v[...] = rng.uniform(-bound, bound, size=v.shape)
    if not zero_head:
        views[-2][...] = rng.uniform(-1.0, 1.0, size=views[-2].shape) / math.sqrt(arch.width)
    return NetworkState(params, np.zeros_like(params), np.zeros_like(params), 0)


def _inputs(t, x) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return np.concatenate([t[:, None], x], axis=1)


def _forward_v(params: np.ndarray, arch: NetArchitecture, z: np.ndarray, keep: bool = False):
    views = unpack(params, arch)
    W_in, b_in = views[0], views[1]
    h = z @ W_in.T + b_in
    cache = []
    for k in range(arch.n_blocks):
        W1, b1, W2, b2 = views[2 + 4 * k : 6 + 4 * k]
        a = np.tanh(h @ W1.T + b1)
        c = np.tanh(a @ W2.T + b2)
        if keep:
            cache.append((h, a, c))
        h = h + c
    v = h @ views[-2] + views[-1][0]
    return v, h, cache


def forward(state: NetworkState, arch: NetArchitecture, t, x) -> np.ndarray:
    """u(t, x) = phi(x) v(t, x) for a batch; t shape (n,), x shape (n, d)."""
    if not np.all(np.isfinite(state.params)):
        raise NumericError("non-finite network parameter")
    z = _inputs(t, x)
    v, _, _ = _forward_v(state.params, arch, z)
    phi = arch.phi(z[:, 1:])
    return np.where(phi == 0.0, 0.0, phi * v)


def predictor(state: NetworkState, arch: NetArchitecture):
    """Frozen read-only u(t, x) callable."""
    frozen = NetworkState(state.params.copy(), state.adam_m, state.adam_v, state.step_count)
    frozen.params.setflags(write=False)
    return lambda t, x: forward(frozen, arch, t, x)


def loss_and_gradient(state: NetworkState, arch: NetArchitecture, t, x, target):
    """Mean squared error and its exact gradient w.r.t. the flat parameters."""
    z = _inputs(t, x)
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    n = z.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    v, hB, cache = _forward_v(state.params, arch, z, keep=True)
    phi = arch.phi(z[:, 1:])
    resid = phi * v - target
    loss = float(np.mean(resid * resid))
    if not math.isfinite(loss):
        raise NumericError(
            f"non-finite loss on batch of {n}: max|target|={np.max(np.abs(target)):.3g}, "
            f"max|v|={np.max(np.abs(v)):.3g}"
        )
    grad = np.zeros_like(state.params)
    g = unpack(grad, arch)
    views = unpack(state.params, arch)
    dv = (2.0 / n) * resid * phi
    g[-2][...] = hB.T @ dv
    g[-1][0] = dv.sum()
    dh = np.outer(dv, views[-2])
    for k in reversed(range(arch.n_blocks)):
        W1, _, W2, _ = views[2 + 4 * k : 6 + 4 * k]
        h, a, c = cache[k]
        dpre2 = dh * (1.0 - c * c)
        g[4 + 4 * k][...] = dpre2.T @ a
        g[5 + 4 * k][...] = dpre2.sum(axis=0)
        dpre1 = (dpre2 @ W2) * (1.0 - a * a)
        g[2 + 4 * k][...] = dpre1.T @ h
        g[3 + 4 * k][...] = dpre1.sum(axis=0)
        dh = dh + dpre1 @ W1
    g[0][...] = dh.T @ z
    g[1][...] = dh.sum(axis=0)
    return loss, grad


def _adam_inplace(state: NetworkState, grad: np.ndarray, cfg: TrainConfig) -> None:
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    state.step_count += 1
    k = state.step_count
    state.adam_m *= b1
    state.adam_m += (1.0 - b1) * grad
    state.adam_v *= b2
    state.adam_v += (1.0 - b2) * grad * grad
    mhat = state.adam_m / (1.0 - b1**k)
    vhat = state.adam_v / (1.0 - b2**k)
    state.params -= cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.adam_eps)


def adam_step(state: NetworkState, grad: np.ndarray, cfg: TrainConfig) -> NetworkState:
    """One bias-corrected Adam update; returns a new state."""
    if grad.shape != state.params.shape:
        raise ValueError("gradient shape does not match parameters")
    new = state.copy()
    _adam_inplace(new, grad, cfg)
    return new


@dataclass
class TrainResult:
    state: NetworkState
    losses: np.ndarray
    initial_loss: float
    final_loss: float


def dataset_mse(state: NetworkState, arch: NetArchitecture, t, x, target) -> float:
    r = forward(state, arch, t, x) - np.asarray(target)
    return float(np.mean(r * r))


def train_regression(
    state: NetworkState,
    arch: NetArchitecture,
    t,
    x,
    target,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> TrainResult:
    """Adam on minibatches drawn uniformly with replacement; warm start from ``state``.

    The state is not modified; a trained copy is returned.
    """
    t = np.asarray(t, dtype=np.float64)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    target = np.asarray(target, dtype=np.float64)
    n = t.size
    if n == 0:
        raise ValueError("empty training set")
    work = state.copy()
    initial = dataset_mse(work, arch, t, x, target)
    limit = cfg.divergence_factor * max(initial, 1e-30)
    losses = np.empty(cfg.n_steps)
    for s in range(cfg.n_steps):
        idx = rng.integers(0, n, size=cfg.batch_size)
        loss, grad = loss_and_gradient(work, arch, t[idx], x[idx], target[idx])
        losses[s] = loss
        if loss > limit:
            raise TrainingDivergence(
                f"training diverged at step {s}: batch loss {loss:.3e} > {cfg.divergence_factor:g} x initial {initial:.3e}",
                s, loss, initial,
            )
        _adam_inplace(work, grad, cfg)
    final = dataset_mse(work, arch, t, x, target)
    return TrainResult(work, losses, initial, final)


def save_checkpoint(path, state: NetworkState, arch: NetArchitecture, meta: Optional[dict] = None) -> None:
    header = {
        "format": "fracdpi-checkpoint",
        "version": CHECKPOINT_VERSION,
        "architecture": arch.to_dict(),
        "n_params": arch.n_params,
        "step_count": state.step_count,
        "meta": meta or {},
    }
    with open(path, "wb") as fh:
        np.savez(
            fh,
            header=np.array(json.dumps(header, sort_keys=True)),
            params=state.params,
            adam_m=state.adam_m,
            adam_v=state.adam_v,
        )


def load_checkpoint(path, boundary_factor=None):
    """Returns (state, arch, header)."""
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        if header.get("format") != "fracdpi-checkpoint" or header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint header in {path}")
        a = header["architecture"]
        arch = NetArchitecture(a["d"], a["width"], a["n_blocks"], boundary_factor)
        state = NetworkState(z["params"].copy(), z["adam_m"].copy(), z["adam_v"].copy(), int(header["step_count"]))
    if state.params.size != arch.n_params:
        raise ValueError("checkpoint parameter count does not match its architecture")
    return state, arch, header
