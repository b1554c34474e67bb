"""Run configuration schema (JSON) and its translation to library objects."""
from __future__ import annotations

import os
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .neural import TrainConfig
from .picard import PicardConfig
from .problems import (
    DOUBLE_BUMP_DEFAULTS,
    ForcingGrid,
    default_forcing,
    make_ball_problem,
    make_disk_problem,
    make_double_bump_problem,
    make_square_problem,
    make_zero_problem,
)
from .specfun import FracOrders

ENV_OUTPUT_DIR = "FRACDPI_OUTPUT_DIR"
ENV_THREADS = "FRACDPI_THREADS"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ProblemConfig(_Strict):
    name: Literal["disk", "square", "ball", "double_bump", "zero"] = "disk"
    setting: Literal["A", "B"] = "A"
    d: int = Field(2, ge=1)
    alpha: float = Field(1.5, gt=0.0, lt=2.0)
    beta: float = Field(0.6, gt=0.0, lt=1.0)
    T: float = Field(1.0, gt=0.0)
    forcing_path: Optional[str] = None
    forcing_n: int = Field(1024, ge=64)
    bump_c1: Tuple[float, float] = DOUBLE_BUMP_DEFAULTS["c1"]
    bump_c2: Tuple[float, float] = DOUBLE_BUMP_DEFAULTS["c2"]
    bump_radius: float = Field(DOUBLE_BUMP_DEFAULTS["radius"], gt=0.0)
    bump_amplitude: float = DOUBLE_BUMP_DEFAULTS["amplitude"]

    @model_validator(mode="after")
    def _dims(self):
        if self.name in ("disk", "square", "double_bump") and self.d != 2:
            raise ValueError(f"problem {self.name!r} is two-dimensional; got d={self.d}")
        if self.name == "double_bump" and self.setting != "A":
            raise ValueError("double_bump uses the quadratic reaction (setting A) only")
        return self


class PicardSection(_Strict):
    K: int = Field(10, ge=1)
    N: int = Field(4096, ge=1)
    M: int = Field(8, ge=1)
    ds: float = Field(2e-2, gt=0.0)
    eta: float = Field(0.6, gt=0.0, le=1.0)
    quad: Literal["trapezoid", "rectangle"] = "trapezoid"
    seed: int = Field(0, ge=0, lt=2**63)
    reset_adam: bool = True
    chunk_size: int = Field(256, ge=1)
    jump_law: Literal["stable", "printed"] = "stable"
    max_steps: Optional[int] = Field(None, ge=1)


class NetworkSection(_Strict):
    width: int = Field(64, ge=1)
    n_blocks: int = Field(2, ge=1)


class TrainSection(_Strict):
    learning_rate: float = Field(1e-4, gt=0.0)
    batch_size: int = Field(512, ge=1)
    n_steps: int = Field(3000, ge=0)
    adam_beta1: float = Field(0.9, ge=0.0, lt=1.0)
    adam_beta2: float = Field(0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(1e-8, gt=0.0)


class EvalSection(_Strict):
    times: int = Field(10, ge=1)
    points: int = Field(1000, ge=1)
    slice_resolution: int = Field(101, ge=2)
    slice_dump: bool = False


class RunConfig(_Strict):
    problem: ProblemConfig = ProblemConfig()
    picard: PicardSection = PicardSection()
    network: NetworkSection = NetworkSection()
    train: TrainSection = TrainSection()
    eval: EvalSection = EvalSection()
    output_dir: str = "runs/default"
    threads: int = Field(1, ge=1)
    save_labels: bool = False
    dump_paths: int = Field(0, ge=0, description="record full trajectories for this many collocation points")


def apply_env(cfg: RunConfig, environ=None) -> RunConfig:
    """Only the output directory and the thread count may come from the environment."""
    env = os.environ if environ is None else environ
    upd = {}
    if env.get(ENV_OUTPUT_DIR):
        upd["output_dir"] = env[ENV_OUTPUT_DIR]
    if env.get(ENV_THREADS):
        n = int(env[ENV_THREADS])
        if n < 1:
            raise ValueError(f"{ENV_THREADS} must be >= 1")
        upd["threads"] = n
    return cfg.model_copy(update=upd) if upd else cfg


def build_problem(pc: ProblemConfig):
    orders = FracOrders(pc.alpha, pc.beta)
    if pc.name == "disk":
        return make_disk_problem(pc.setting, orders, pc.T)
    if pc.name == "ball":
        return make_ball_problem(pc.d, pc.setting, orders, pc.T)
    if pc.name == "zero":
        return make_zero_problem(pc.d, orders, pc.T)
    bump = {"c1": tuple(pc.bump_c1), "c2": tuple(pc.bump_c2), "radius": pc.bump_radius, "amplitude": pc.bump_amplitude}
    profile = "square_phi_R" if pc.name == "square" else "double_bump"
    if pc.forcing_path:
        grid = ForcingGrid.load(pc.forcing_path)
    else:
        grid = default_forcing(profile, pc.alpha, n=pc.forcing_n, params=bump if profile == "double_bump" else None)
    if pc.name == "square":
        return make_square_problem(pc.setting, grid, orders, pc.T)
    return make_double_bump_problem(grid, orders, pc.T, **bump)


def picard_config(cfg: RunConfig) -> PicardConfig:
    p, tr = cfg.picard, cfg.train
    return PicardConfig(
        K=p.K, N=p.N, M=p.M, ds=p.ds, eta=p.eta, quad=p.quad, seed=p.seed,
        width=cfg.network.width, n_blocks=cfg.network.n_blocks,
        train=TrainConfig(tr.learning_rate, tr.batch_size, tr.n_steps, tr.adam_beta1, tr.adam_beta2, tr.adam_eps),
        reset_adam=p.reset_adam, threads=cfg.threads, chunk_size=p.chunk_size,
        eval_times=cfg.eval.times, eval_points=cfg.eval.points, slice_resolution=cfg.eval.slice_resolution,
        jump_law=p.jump_law, max_steps=p.max_steps,
    )


def config_errors(exc) -> List[str]:
    return [f"{'.'.join(str(p) for p in e['loc']) or '<root>'}: {e['msg']}" for e in exc.errors()]
