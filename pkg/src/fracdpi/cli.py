"""fracdpi command line: run, bench, sample-check, precompute-forcing.

Exit codes: 0 ok, 1 check failure, 2 invalid input, 3 divergence, 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError
from scipy import stats
from threadpoolctl import threadpool_limits

EXIT_OK, EXIT_CHECK, EXIT_INVALID, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3, 4

log = logging.getLogger("fracdpi")


def _err(msg: str) -> None:
    print(f"fracdpi: {msg}", file=sys.stderr)


# ------------------------------------------------------------------ run


def _load_config(path):
    from .config import RunConfig, apply_env, config_errors

    try:
        text = Path(path).read_text()
    except OSError as exc:
        _err(f"cannot read config {path}: {exc.strerror or exc}")
        return None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        _err(f"config {path} is not valid JSON: {exc}")
        return None
    try:
        return apply_env(RunConfig.model_validate(raw))
    except ValidationError as exc:
        _err(f"invalid config {path}:")
        for line in config_errors(exc):
            print(f"  {line}", file=sys.stderr)
        return None
    except ValueError as exc:
        _err(str(exc))
        return None


def _write_slice_dump(path, run, problem, resolution):
    from .metrics import terminal_slice_grid

    grid = terminal_slice_grid(problem, resolution)
    pred = run.predictor()(grid.t, grid.x)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x0", "x1", "predicted", "exact", "error"])
        for xi, p, e in zip(grid.x, pred, grid.exact):
            w.writerow([repr(float(xi[0])), repr(float(xi[1] if xi.size > 1 else 0.0)), repr(float(p)), repr(float(e)), repr(float(p - e))])


def _write_path_dump(path, problem, pc, n_points):
    from .rng import RngStream, derive_key
    from .sampler import sample_collocation
    from .trajectory import simulate_trajectory, write_path_dump

    t, x = sample_collocation(problem.domain, problem.T, pc.N, RngStream(derive_key(pc.seed, "collocation", 0)))
    key = derive_key(pc.seed, "paths", 0)
    records = []
    for i in range(min(n_points, pc.N)):
        for m in range(pc.M):
            out = simulate_trajectory((t[i], x[i]), problem.domain, problem.orders, pc.ds,
                                      RngStream(key, i * pc.M + m), pc.max_steps, pc.jump_law)
            records.append((i, m, out))
    write_path_dump(path, records, problem.d)


def cmd_run(args) -> int:
    from .config import build_problem, picard_config
    from .picard import PicardDivergence, run_picard, run_summary

    cfg = _load_config(args.config)
    if cfg is None:
        return EXIT_INVALID
    upd = {}
    if args.output_dir:
        upd["output_dir"] = args.output_dir
    if args.threads:
        upd["threads"] = args.threads
    cfg = cfg.model_copy(update=upd)
    try:
        problem = build_problem(cfg.problem)
        pc = picard_config(cfg)
    except (ValueError, OSError) as exc:
        _err(f"invalid problem setup: {exc}")
        return EXIT_INVALID
    out = Path(cfg.output_dir)
    code = EXIT_OK
    try:
        out.mkdir(parents=True, exist_ok=True)
        if cfg.dump_paths:
            _write_path_dump(out / "paths.csv", problem, pc, cfg.dump_paths)
        try:
            run = run_picard(problem, pc, out, save_labels=cfg.save_labels)
        except PicardDivergence as exc:
            _err(str(exc))
            run, code = exc.run, EXIT_DIVERGED
        summary = run_summary(run, problem)
        summary["effective_config"] = json.loads(cfg.model_dump_json())
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        if cfg.eval.slice_dump and problem.exact is not None and run.records:
            _write_slice_dump(out / "slice.csv", run, problem, cfg.eval.slice_resolution)
    except OSError as exc:
        _err(f"I/O error: {exc}")
        return EXIT_IO
    fin = summary["final_metrics"] or {}
    print(json.dumps({"output_dir": str(out), "final": fin, "completed": summary["completed"]}))
    return code


# ------------------------------------------------------------------ sample-check


def sample_checks(alpha: float, beta: float, d: int, n: int, seed: int):
    """Rows of (name, statistic, threshold, passed)."""
    from .rng import RngStream, derive_key
    from .sampler import (
        WosStepRule,
        jump_distance_cdf,
        laplace_transform_check,
        sample_jump_distance,
        sample_positive_stable,
        sample_sphere_direction,
    )

    key = derive_key(seed, "check")
    rows = []
    eta = sample_positive_stable(beta, RngStream(key, 0), n)
    for lam in (0.5, 1.0, 2.0):
        est, exact, se = laplace_transform_check(eta, lam, beta)
        rows.append((f"laplace lambda={lam:g}", abs(est - exact) / se, 3.0, abs(est - exact) < 3 * se))
    th = sample_sphere_direction(d, RngStream(key, 1), n)
    z = np.abs(th.mean(axis=0)) / (th.std(axis=0, ddof=1) / math.sqrt(n))
    rows.append(("sphere mean (max |z|)", float(z.max()), 3.0 + 0.5 * math.log(max(d, 1)), bool(z.max() < 3.0 + 0.5 * math.log(max(d, 1)))))
    sq = th[:, 0] ** 2
    zq = abs(sq.mean() - 1.0 / d) / (sq.std(ddof=1) / math.sqrt(n)) if d > 1 else 0.0
    rows.append(("sphere theta1^2 vs 1/d (|z|)", float(zq), 3.0, bool(zq < 3.0)))
    rule = WosStepRule(1.0, d, alpha)
    J = sample_jump_distance(rule, RngStream(key, 2), n)
    ks = stats.kstest(J, lambda g: jump_distance_cdf(g, rule)).statistic
    bound = max(0.006, 1.63 / math.sqrt(n))
    rows.append(("jump KS statistic", float(ks), bound, bool(ks < bound)))
    return rows


def cmd_sample_check(args) -> int:
    from .specfun import FracOrders

    if args.n_samples < 2 or args.d < 1:
        _err("n-samples must be >= 2 and d >= 1")
        return EXIT_INVALID
    try:
        FracOrders(args.alpha, args.beta)
    except ValueError as exc:
        _err(str(exc))
        return EXIT_INVALID
    rows = sample_checks(args.alpha, args.beta, args.d, args.n_samples, args.seed)
    print(f"{'check':34s} {'statistic':>12s} {'threshold':>10s}  result")
    for name, stat, thr, ok in rows:
        print(f"{name:34s} {stat:12.5g} {thr:10.4g}  {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if all(r[3] for r in rows) else EXIT_CHECK


# ------------------------------------------------------------------ precompute-forcing


def cmd_precompute_forcing(args) -> int:
    from .problems import ConfigurationError, named_profile, precompute_forcing_fft

    try:
        prof, params = named_profile(args.profile, args.alpha)
    except ConfigurationError as exc:
        _err(str(exc))
        return EXIT_INVALID
    box = tuple(args.box) if args.box else (-2.0, 2.0, -2.0, 2.0)
    h = args.h if args.h else (box[1] - box[0]) / 1024
    try:
        grid = precompute_forcing_fft(prof, h, box, args.alpha, args.profile, params)
    except ConfigurationError as exc:
        _err(str(exc))
        return EXIT_INVALID
    except ArithmeticError as exc:
        _err(str(exc))
        return EXIT_CHECK
    try:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        grid.save(args.out)
    except OSError as exc:
        _err(f"cannot write {args.out}: {exc}")
        return EXIT_IO
    centre = float(grid.interpolator()(np.zeros((1, 2)))[0])
    print(json.dumps({"out": args.out, "n": grid.n, "h": grid.h, "imag_residue": grid.imag_residue,
                      "value_at_origin": centre, "checksum": grid.checksum}))
    return EXIT_OK


# ------------------------------------------------------------------ bench


def cmd_bench(args) -> int:
    from .bench import run_suite

    out = args.output_dir or os.environ.get("FRACDPI_OUTPUT_DIR") or f"runs/bench/{args.suite}"
    threads = args.threads or int(os.environ.get("FRACDPI_THREADS", "1"))
    try:
        failed = run_suite(args.suite, args.scale, out, threads, args.seed)
    except OSError as exc:
        _err(f"I/O error: {exc}")
        return EXIT_IO
    print(json.dumps({"suite": args.suite, "csv": str(Path(out) / f"{args.suite}.csv"), "failed_runs": failed}))
    return EXIT_OK if failed == 0 else EXIT_CHECK


# ------------------------------------------------------------------ entry


def build_parser() -> argparse.ArgumentParser:
    from .bench import SCALES, SUITES

    p = argparse.ArgumentParser(prog="fracdpi", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a Picard experiment from a JSON config")
    r.add_argument("config")
    r.add_argument("--output-dir")
    r.add_argument("--threads", type=int)
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("bench", help="run a benchmark suite")
    b.add_argument("suite", choices=SUITES)
    b.add_argument("--scale", choices=sorted(SCALES), default="desk")
    b.add_argument("--output-dir")
    b.add_argument("--threads", type=int)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("sample-check", help="statistical checks of the samplers")
    s.add_argument("--alpha", type=float, default=1.5)
    s.add_argument("--beta", type=float, default=0.6)
    s.add_argument("--d", type=int, default=2)
    s.add_argument("--n-samples", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_sample_check)

    f = sub.add_parser("precompute-forcing", help="FFT fractional Laplacian of a profile onto a grid file")
    f.add_argument("profile")
    f.add_argument("--out", required=True)
    f.add_argument("--h", type=float)
    f.add_argument("--box", type=float, nargs=4, metavar=("X0", "X1", "Y0", "Y1"))
    f.add_argument("--alpha", type=float, default=1.5)
    f.set_defaults(func=cmd_precompute_forcing)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    if getattr(args, "threads", None) is not None and args.threads < 1:
        _err("--threads must be >= 1")
        return EXIT_INVALID
    with threadpool_limits(limits=1):
        return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
