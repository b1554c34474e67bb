"""Benchmark suites: config matrices whose results are written as one comparison CSV each."""
from __future__ import annotations

import csv
import logging
import traceback
from pathlib import Path
from typing import Dict, List

from .config import RunConfig, build_problem, picard_config
from .metrics import fit_convergence_order
from .picard import run_picard

log = logging.getLogger(__name__)

SCALES = {
    "smoke": {"picard": {"K": 2, "N": 256, "M": 4}, "network": {"width": 16, "n_blocks": 1},
              "train": {"n_steps": 200, "batch_size": 128}, "eval": {"points": 200, "slice_resolution": 41},
              "problem": {"forcing_n": 256}},
    "desk": {"picard": {"K": 8, "N": 4096, "M": 8}, "network": {"width": 64, "n_blocks": 2},
             "train": {"n_steps": 3000}, "eval": {"points": 1000, "slice_resolution": 101}},
}
DS_LIST = [4e-2, 2e-2, 1e-2, 5e-3]


def _merge(base: dict, over: dict) -> dict:
    out = {k: (dict(v) if isinstance(v, dict) else v) for k, v in base.items()}
    for k, v in over.items():
        if isinstance(v, dict):
            out[k] = {**out.get(k, {}), **v}
        else:
            out[k] = v
    return out


def _cases(suite: str) -> List[Dict]:
    """(row label fields, config overrides) per run."""
    if suite == "disk_relaxation":
        return [({"setting": s, "eta": e}, {"problem": {"name": "disk", "setting": s}, "picard": {"eta": e}})
                for s in ("A", "B") for e in (1.0, 0.6)]
    if suite == "disk_ds_sweep":
        return [({"ds": ds}, {"problem": {"name": "disk"}, "picard": {"ds": ds}}) for ds in DS_LIST]
    if suite == "disk_mc_sweep":
        return [({"M": m}, {"problem": {"name": "disk"}, "picard": {"M": m, "ds": 1e-2}}) for m in (4, 8, 16, 32)]
    if suite == "quad_compare":
        return [({"ds": ds, "quad": q}, {"problem": {"name": "disk"}, "picard": {"ds": ds, "quad": q}})
                for ds in DS_LIST for q in ("rectangle", "trapezoid")]
    if suite == "square":
        return [({"setting": s}, {"problem": {"name": "square", "setting": s}}) for s in ("A", "B")]
    if suite == "double_bump":
        return [({"setting": "A"}, {"problem": {"name": "double_bump"}})]
    if suite == "highdim_smoke":
        return [({"d": 20, "setting": s}, {"problem": {"name": "ball", "d": 20, "setting": s},
                                            "network": {"width": 128}, "picard": {"K": 5, "N": 2048}})
                for s in ("A", "B")]
    raise KeyError(suite)


SUITES = ("disk_relaxation", "disk_ds_sweep", "disk_mc_sweep", "quad_compare", "square", "double_bump", "highdim_smoke")


def run_suite(suite: str, scale: str, out_dir, threads: int = 1, seed: int = 0) -> int:
    """Run every case; returns the number of failed runs."""
    if suite not in SUITES:
        raise KeyError(f"unknown suite {suite!r}")
    if scale not in SCALES:
        raise KeyError(f"unknown scale {scale!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, failed = [], 0
    for i, (label, over) in enumerate(_cases(suite)):
        raw = _merge(_merge({"picard": {"seed": seed}}, SCALES[scale]), over)
        if scale == "smoke" and suite == "highdim_smoke":
            raw = _merge(raw, {"picard": {"N": 256, "K": 2}, "network": {"width": 16}})
        run_dir = out / f"run_{i:02d}"
        raw.update(output_dir=str(run_dir), threads=threads)
        row = dict(label)
        try:
            cfg = RunConfig.model_validate(raw)
            problem = build_problem(cfg.problem)
            run = run_picard(problem, picard_config(cfg), run_dir)
            fin = run.final
            row.update(slice_rmse=fin.slice_rmse, spacetime_rmse=fin.spacetime_rmse, status="ok")
        except Exception as exc:  # recorded, suite continues
            failed += 1
            log.error("%s case %d failed: %s", suite, i, exc)
            log.debug(traceback.format_exc())
            row.update(slice_rmse=None, spacetime_rmse=None, status=f"failed: {type(exc).__name__}: {exc}")
        rows.append(row)

    table = _tabulate(suite, rows)
    with open(out / f"{suite}.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(table[0].keys()), lineterminator="\n")
        w.writeheader()
        w.writerows(table)
    return failed


def _tabulate(suite: str, rows: List[dict]) -> List[dict]:
    if suite == "quad_compare":
        out = []
        for ds in DS_LIST:
            r = {q: next(x for x in rows if x["ds"] == ds and x["quad"] == q) for q in ("rectangle", "trapezoid")}
            a, b = r["rectangle"]["spacetime_rmse"], r["trapezoid"]["spacetime_rmse"]
            diff = abs(a - b) / max(a, b) if a is not None and b is not None else None
            status = "ok" if r["rectangle"]["status"] == r["trapezoid"]["status"] == "ok" else "failed"
            out.append({"ds": ds, "rectangle_rmse": a, "trapezoid_rmse": b, "relative_difference": diff, "status": status})
        return out
    if suite == "disk_ds_sweep":
        ok = [r for r in rows if r["spacetime_rmse"]]
        slope = fit_convergence_order([r["ds"] for r in ok], [r["spacetime_rmse"] for r in ok]) if len(ok) >= 2 else None
        for r in rows:
            r["fitted_order"] = slope
    return rows
