"""Deep Picard driver: collocation, path labels, relaxation, warm-started regression."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np
from threadpoolctl import threadpool_limits

from .labels import QUAD_RULES, LabelBatch, generate_labels, write_labels_csv
from .metrics import EvalGrid, spacetime_grid, terminal_slice_grid
from .neural import (
    NetArchitecture,
    NetworkState,
    TrainConfig,
    TrainingDivergence,
    init_network,
    predictor,
    save_checkpoint,
    train_regression,
)
from .rng import RngStream, derive_key
from .sampler import sample_collocation
from .trajectory import max_steps_for

log = logging.getLogger(__name__)

METRIC_FIELDS = [
    "iteration",
    "slice_rmse",
    "spacetime_rmse",
    "mean_label_var",
    "max_label_var",
    "truncations",
    "exit_fraction",
    "train_loss_initial",
    "train_loss_final",
]
TRUNCATION_WARN = 0.01


@dataclass(frozen=True)
class PicardConfig:
    K: int = 10
    N: int = 4096
    M: int = 8
    ds: float = 2e-2
    eta: float = 0.6
    quad: str = "trapezoid"
    seed: int = 0
    width: int = 64
    n_blocks: int = 2
    train: TrainConfig = TrainConfig(n_steps=3000)
    reset_adam: bool = True
    threads: int = 1
    chunk_size: int = 256
    eval_times: int = 10
    eval_points: int = 1000
    slice_resolution: int = 101
    jump_law: str = "stable"
    max_steps: Optional[int] = None

    def __post_init__(self):
        if self.K < 1 or self.N < 1 or self.M < 1:
            raise ValueError("K, N and M must be >= 1")
        if not self.ds > 0:
            raise ValueError("ds must be positive")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must lie in (0, 1]")
        if self.quad not in QUAD_RULES:
            raise ValueError(f"quad must be one of {QUAD_RULES}")
        if self.threads < 1 or self.chunk_size < 1:
            raise ValueError("threads and chunk_size must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class IterationRecord:
    iteration: int
    slice_rmse: Optional[float]
    spacetime_rmse: Optional[float]
    mean_label_var: float
    max_label_var: float
    truncations: int
    exit_fraction: float
    train_loss_initial: float
    train_loss_final: float
    seconds: float = 0.0
    loss_trace: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass
class PicardRun:
    config: PicardConfig
    problem_name: str
    records: List[IterationRecord]
    state: NetworkState
    arch: NetArchitecture
    warnings: List[str] = field(default_factory=list)
    completed: bool = True
    initial_metrics: Optional[dict] = None

    @property
    def final(self) -> Optional[IterationRecord]:
        return self.records[-1] if self.records else None

    def predictor(self):
        return predictor(self.state, self.arch)


class PicardDivergence(RuntimeError):
    def __init__(self, msg: str, run: PicardRun):
        super().__init__(msg)
        self.run = run


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_metrics_csv(path, records: List[IterationRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_FIELDS)
        for r in records:
            w.writerow([_fmt(getattr(r, k)) for k in METRIC_FIELDS])


def write_timing_csv(path, records: List[IterationRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "seconds"])
        for r in records:
            w.writerow([r.iteration, f"{r.seconds:.3f}"])


def _evaluate(u, slice_grid: Optional[EvalGrid], st_grid: Optional[EvalGrid]):
    s = slice_grid.rmse(u) if slice_grid is not None else None
    st = st_grid.rmse(u) if st_grid is not None else None
    return s, st


def run_picard(
    problem,
    config: PicardConfig,
    out_dir=None,
    *,
    on_iteration: Optional[Callable[[IterationRecord], None]] = None,
    save_labels: bool = False,
) -> PicardRun:
    """Run K relaxed Picard iterations starting from the zero network.

    With ``out_dir`` set, metrics.csv, timing.csv and checkpoints/iter_XXX.npz
    are written as the run progresses. BLAS is pinned to one thread; label
    generation uses ``config.threads`` workers over a fixed chunk partition,
    so every number written is independent of the thread count.
    """
    with threadpool_limits(limits=1):
        return _run(problem, config, out_dir, on_iteration, save_labels)


def _run(problem, cfg: PicardConfig, out_dir, on_iteration, save_labels) -> PicardRun:
    arch = NetArchitecture(problem.d, cfg.width, cfg.n_blocks, problem.phi)
    init_rng = np.random.default_rng(derive_key(cfg.seed, "init"))
    state = init_network(arch, init_rng, zero_head=True)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        (out / "checkpoints").mkdir(parents=True, exist_ok=True)

    slice_grid = st_grid = None
    if problem.exact is not None:
        slice_grid = terminal_slice_grid(problem, cfg.slice_resolution)
        st_grid = spacetime_grid(problem, RngStream(derive_key(cfg.seed, "eval")), cfg.eval_times, cfg.eval_points)

    run = PicardRun(cfg, problem.name, [], state, arch)
    s0, st0 = _evaluate(predictor(state, arch), slice_grid, st_grid)
    run.initial_metrics = {"slice_rmse": s0, "spacetime_rmse": st0}
    max_steps = cfg.max_steps or max_steps_for(problem.T, cfg.ds)

    for k in range(cfg.K):
        tic = time.perf_counter()
        u_k = predictor(state, arch)
        t, x = sample_collocation(problem.domain, problem.T, cfg.N, RngStream(derive_key(cfg.seed, "collocation", k)))
        batch: LabelBatch = generate_labels(
            t, x, problem, u_k,
            M=cfg.M, ds=cfg.ds, key=derive_key(cfg.seed, "paths", k), eta=cfg.eta, quad=cfg.quad,
            chunk_size=cfg.chunk_size, workers=cfg.threads, max_steps=max_steps, jump_law=cfg.jump_law,
        )
        if save_labels and out is not None:
            write_labels_csv(out / f"labels_iter_{k:03d}.csv", batch)
        frac = batch.total_truncated / (cfg.N * cfg.M)
        if frac > TRUNCATION_WARN:
            msg = f"iteration {k}: {100 * frac:.2f}% of paths hit the step budget"
            log.warning(msg)
            run.warnings.append(msg)

        start = state.reset_moments() if cfg.reset_adam else state
        train_rng = np.random.default_rng(derive_key(cfg.seed, "train", k))
        try:
            res = train_regression(start, arch, batch.t, batch.x, batch.relaxed, cfg.train, train_rng)
        except TrainingDivergence as exc:
            run.completed = False
            run.warnings.append(str(exc))
            if out is not None:
                _write_outputs(out, run, problem)
            raise PicardDivergence(f"iteration {k}: {exc}", run) from exc
        state = res.state
        run.state = state

        s, st = _evaluate(predictor(state, arch), slice_grid, st_grid)
        rec = IterationRecord(
            iteration=k + 1,
            slice_rmse=s,
            spacetime_rmse=st,
            mean_label_var=float(batch.variance.mean()),
            max_label_var=float(batch.variance.max()),
            truncations=batch.total_truncated,
            exit_fraction=float(batch.exit_fraction.mean()),
            train_loss_initial=res.initial_loss,
            train_loss_final=res.final_loss,
            seconds=time.perf_counter() - tic,
            loss_trace=res.losses,
        )
        run.records.append(rec)
        log.info("iter %d: slice %s spacetime %s (%.1fs)", rec.iteration, _fmt(s), _fmt(st), rec.seconds)
        if out is not None:
            save_checkpoint(out / "checkpoints" / f"iter_{k + 1:03d}.npz", state, arch,
                            {"iteration": k + 1, "problem": problem.name, "seed": cfg.seed})
            write_metrics_csv(out / "metrics.csv", run.records)
            write_timing_csv(out / "timing.csv", run.records)
        if on_iteration is not None:
            on_iteration(rec)

    if out is not None:
        _write_outputs(out, run, problem)
    return run


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def run_summary(run: PicardRun, problem=None) -> dict:
    fin = run.final
    return {
        "problem": run.problem_name,
        "problem_metadata": _jsonable(problem.metadata) if problem is not None else {},
        "orders": {"alpha": problem.orders.alpha, "beta": problem.orders.beta} if problem is not None else None,
        "picard": _jsonable(run.config.to_dict()),
        "architecture": run.arch.to_dict(),
        "completed": run.completed,
        "iterations": len(run.records),
        "initial_metrics": run.initial_metrics,
        "final_metrics": None if fin is None else {
            "slice_rmse": fin.slice_rmse,
            "spacetime_rmse": fin.spacetime_rmse,
            "mean_label_var": fin.mean_label_var,
            "truncations": fin.truncations,
        },
        "total_truncations": int(sum(r.truncations for r in run.records)),
        "warnings": list(run.warnings),
        "wall_seconds": float(sum(r.seconds for r in run.records)),
    }


def _write_outputs(out: Path, run: PicardRun, problem) -> None:
    write_metrics_csv(out / "metrics.csv", run.records)
    write_timing_csv(out / "timing.csv", run.records)
    summary = run_summary(run, problem)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def label_noise_report(run: PicardRun) -> List[dict]:
    """Per-iteration label variance and its ratio to the squared spacetime RMSE."""
    rows = []
    single = run.config.M == 1
    for r in run.records:
        row = {"iteration": r.iteration, "variance_available": not single}
        if single:
            row.update(mean_label_var=None, max_label_var=None, var_to_rmse2=None)
        else:
            st = r.spacetime_rmse
            ratio = r.mean_label_var / st**2 if st not in (None, 0.0) and math.isfinite(st) else None
            row.update(mean_label_var=r.mean_label_var, max_label_var=r.max_label_var, var_to_rmse2=ratio)
        rows.append(row)
    return rows
