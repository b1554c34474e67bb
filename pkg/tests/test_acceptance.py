"""Acceptance criteria, one test each, at the stated tolerances.

Every test appends a PASS/FAIL line that pytest prints in an
"acceptance criteria" section of the terminal summary.
"""
import math
import time

import numpy as np
import pytest
from scipy import stats

from conftest import ACCEPTANCE_LINES
from fracdpi.labels import generate_labels, quad_rectangle, quad_trapezoid
from fracdpi.metrics import fit_convergence_order
from fracdpi.neural import NetArchitecture, NetworkState, TrainConfig, init_network, loss_and_gradient, predictor
from fracdpi.picard import PicardConfig, run_picard
from fracdpi.problems import (
    default_forcing,
    make_ball_problem,
    make_disk_problem,
    make_double_bump_problem,
    make_square_problem,
    manufactured_residual,
)
from fracdpi.rng import RngStream, derive_key
from fracdpi.sampler import (
    WosStepRule,
    jump_distance_cdf,
    laplace_transform_check,
    sample_collocation,
    sample_jump_distance,
    sample_positive_stable,
)
from fracdpi.specfun import beta_complete, beta_incomplete, beta_incomplete_inverse
from fracdpi.trajectory import clock_kernel_sums

DESK = dict(K=8, N=4096, M=8, ds=2e-2, eta=0.6, width=64, n_blocks=2, train=TrainConfig(n_steps=3000))
_RUNS = {}


def report(n, ok, detail):
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def desk_run(seed, eta):
    if (seed, eta) not in _RUNS:
        _RUNS[seed, eta] = run_picard(make_disk_problem("A"), PicardConfig(**{**DESK, "seed": seed, "eta": eta}))
    return _RUNS[seed, eta]


def test_c01_subordinator_laplace_transform():
    tic = time.perf_counter()
    eta = sample_positive_stable(0.6, RngStream(derive_key(0, "check"), 0), 100_000)
    rows = [laplace_transform_check(eta, lam, 0.6) for lam in (0.5, 1.0, 2.0)]
    z = [abs(est - exact) / se for est, exact, se in rows]
    sec = time.perf_counter() - tic
    report(1, max(z) < 3 and sec < 10, f"|z| = {', '.join(f'{v:.2f}' for v in z)} (< 3), {sec:.1f}s (< 10s)")


def test_c02_jump_sampler_and_beta_inverse():
    tic = time.perf_counter()
    rule = WosStepRule(1.0, 2, 1.5)
    J = sample_jump_distance(rule, RngStream(derive_key(0, "check"), 2), 100_000)
    ks = stats.kstest(J, lambda g: jump_distance_cdf(g, rule)).statistic
    rng = np.random.default_rng(2024)
    # printed parameter pair of the jump law at alpha = 1.5: (1 - a/2, a/2)
    a, b = 0.25, 0.75
    y = rng.uniform(0, beta_complete(a, b), 1000)
    err = np.abs(beta_incomplete(beta_incomplete_inverse(y, a, b), a, b) - y).max()
    # pair used by the sampler, (a/2, 1 - a/2): near z = 1 one ulp of z can move the value by
    # more than 1e-9, so there each returned z must be the best double within one ulp
    a2, b2 = rule.beta_params
    y2 = rng.uniform(0, beta_complete(a2, b2), 1000)
    z2 = beta_incomplete_inverse(y2, a2, b2)
    e2 = np.abs(beta_incomplete(z2, a2, b2) - y2)
    over = np.flatnonzero(e2 >= 1e-9)
    best = all(
        e2[i] <= min(abs(beta_incomplete(np.nextafter(z2[i], d), a2, b2) - y2[i]) for d in (0.0, 1.0)) for i in over
    )
    sec = time.perf_counter() - tic
    ok = ks < 0.006 and err < 1e-9 and best and sec < 30
    report(2, ok, f"KS = {ks:.5f} (< 0.006); round trip (0.25, 0.75) max {err:.2e} (< 1e-9); "
                  f"(0.75, 0.25): {len(over)} targets >= 1e-9 (max {e2.max():.1e}), all at the best double: {best}; {sec:.1f}s")


def test_c03_contraction_kernel_bound():
    tic = time.perf_counter()
    lams = (2.0, 5.0)
    sums = clock_kernel_sums(1.0, 0.6, 5e-3, lams, derive_key(0, "check", 3), np.arange(100_000))
    est = sums.mean(axis=1)
    bounds = [1.1 / lam**0.6 for lam in lams]
    sec = time.perf_counter() - tic
    ok = all(e <= bd for e, bd in zip(est, bounds)) and sec < 60
    report(3, ok, ", ".join(f"lambda={l:g}: {e:.4f} <= {bd:.4f}" for l, e, bd in zip(lams, est, bounds)) + f"; {sec:.1f}s")


def test_c04_fft_against_ball_constant(oracle):
    tic = time.perf_counter()
    g = default_forcing("disk_phi", 1.5, n=1024)
    X, Y = np.meshgrid(*g.axes(), indexing="ij")
    inside = X**2 + Y**2 <= 0.64
    node_err = np.abs(g.values[inside] / oracle["C_2_1p5"] - 1).max()
    rng = np.random.default_rng(4)
    v = rng.normal(size=(1000, 2))
    x = 0.8 * v / np.linalg.norm(v, axis=1, keepdims=True) * np.sqrt(rng.uniform(0, 1, (1000, 1)))
    pt_err = np.abs(g.interpolator()(x) / oracle["C_2_1p5"] - 1).max()
    sec = time.perf_counter() - tic
    ok = max(node_err, pt_err) < 0.02 and sec < 30
    report(4, ok, f"C = {oracle['C_2_1p5']:.4f}; max rel error {node_err:.2%} at {inside.sum()} nodes, "
                  f"{pt_err:.2%} at 1000 random points (< 2%); {sec:.1f}s")


def test_c05_manufactured_residuals(double_bump_oracle):
    tic = time.perf_counter()
    rng = np.random.default_rng(5)
    t = rng.uniform(0.0, 1.0, 1000)

    def disk_pts(d):
        v = rng.normal(size=(1000, d))
        return v / np.linalg.norm(v, axis=1, keepdims=True) * rng.uniform(0, 1, (1000, 1)) ** (1 / d)

    out = {}
    for s in ("A", "B"):
        out[f"disk {s}"] = np.abs(manufactured_residual(make_disk_problem(s), t, disk_pts(2))).max()
        out[f"ball20 {s}"] = np.abs(manufactured_residual(make_ball_problem(20, s), t, disk_pts(20))).max()
    sq_grid = default_forcing("square_phi_R", 1.5)
    rel = {}
    for s in ("A", "B"):
        p = make_square_problem(s, sq_grid)
        x = rng.uniform(-1, 1, (1000, 2))
        rel[f"square {s}"] = np.abs(manufactured_residual(p, t, x)).max() / np.abs(t**0.6 * p.frac_lap_profile(x)).max()
    db = make_double_bump_problem()
    x = double_bump_oracle["x"]
    rel["double_bump"] = np.abs(manufactured_residual(db, t, x)).max() / np.abs(t**0.6 * db.frac_lap_profile(x)).max()
    # informational: grid operator against the exact closed-form operator of the double bump
    q_ex = double_bump_oracle["q"]
    dev = db.frac_lap_profile(x) - q_ex
    rms_dev = math.sqrt(np.mean(dev**2) / np.mean(q_ex**2))
    sec = time.perf_counter() - tic
    ok = max(out.values()) < 1e-10 and max(rel.values()) < 1e-2 and sec < 60
    report(5, ok, "abs " + ", ".join(f"{k} {v:.1e}" for k, v in out.items()) + " (< 1e-10); rel "
           + ", ".join(f"{k} {v:.1e}" for k, v in rel.items()) + f" (< 1e-2); {sec:.1f}s"
           + f" [info: double-bump grid operator vs closed form, rms rel {rms_dev:.1e}]")


def test_c06_gradient_check():
    tic = time.perf_counter()
    phi = make_disk_problem("A").phi
    worst = []
    for width, blocks in ((16, 1), (64, 2)):
        arch = NetArchitecture(2, width, blocks, phi)
        rng = np.random.default_rng(width + blocks)
        st = init_network(arch, rng, zero_head=False)
        t = rng.uniform(0, 1, 32)
        x = rng.uniform(-0.7, 0.7, (32, 2))
        y = rng.normal(size=32)
        _, g = loss_and_gradient(st, arch, t, x, y)
        rel = []
        for i in rng.choice(arch.n_params, 50, replace=False):
            h = 1e-5
            p = st.params.copy()
            p[i] += h
            lp, _ = loss_and_gradient(NetworkState(p, st.adam_m, st.adam_v), arch, t, x, y)
            p[i] -= 2 * h
            lm, _ = loss_and_gradient(NetworkState(p, st.adam_m, st.adam_v), arch, t, x, y)
            fd = (lp - lm) / (2 * h)
            rel.append(abs(fd - g[i]) / max(abs(fd), abs(g[i]), 1e-8))
        worst.append(max(rel))
    sec = time.perf_counter() - tic
    report(6, max(worst) <= 1e-4 and sec < 60,
           f"max rel error width16x1 {worst[0]:.1e}, width64x2 {worst[1]:.1e} (<= 1e-4); {sec:.1f}s")


@pytest.mark.slow
def test_c07_desk_run_disk_a():
    tic = time.perf_counter()
    run = desk_run(0, 0.6)
    st = run.final.spacetime_rmse
    sec = time.perf_counter() - tic
    report(7, st <= 6e-2 and sec <= 45 * 60, f"spacetime RMSE {st:.4f} (<= 0.06), slice {run.final.slice_rmse:.4f}; {sec:.0f}s")


@pytest.mark.slow
def test_c08_relaxation_beats_plain_picard():
    wins, rows = 0, []
    for seed in range(5):
        a = desk_run(seed, 0.6).final.spacetime_rmse
        b = desk_run(seed, 1.0).final.spacetime_rmse
        wins += a < b
        rows.append(f"s{seed}: {a:.4f} vs {b:.4f}")
    report(8, wins >= 4, f"eta=0.6 wins {wins}/5 (>= 4): " + "; ".join(rows))


@pytest.mark.slow
def test_c09_mc_convergence_slope():
    tic = time.perf_counter()
    disk = make_disk_problem("A")
    # frozen network: the iterate after two short Picard steps
    net = run_picard(disk, PicardConfig(K=2, N=1024, M=8, train=TrainConfig(n_steps=1000), seed=9))
    u = predictor(net.state, net.arch)
    n, ds = 512, 2e-2
    t, x = sample_collocation(disk.domain, disk.T, n, RngStream(derive_key(9, "collocation", 99)))
    ref = generate_labels(t, x, disk, u, M=1024, ds=ds, key=derive_key(9, "paths", 1000)).raw
    Ms = [4, 16, 64]
    errs = []
    for M in Ms:
        lab = generate_labels(t, x, disk, u, M=M, ds=ds, key=derive_key(9, "paths", 2000 + M)).raw
        errs.append(float(np.sqrt(np.mean((lab - ref) ** 2))))
    slope = fit_convergence_order(Ms, errs)
    sec = time.perf_counter() - tic
    report(9, -0.7 <= slope <= -0.3 and sec < 20 * 60,
           f"label RMSE vs M_ref=1024: " + ", ".join(f"M={m}: {e:.4f}" for m, e in zip(Ms, errs))
           + f"; slope {slope:.3f} in [-0.7, -0.3]; {sec:.0f}s")


def test_c10_quadrature_orders():
    checks = []
    # linear integrand f(s) = s on [0, 1]; ds = 2^-k keeps every node and partial sum exact
    for k in (6, 7, 8):
        ds = 2.0**-k
        f = [ell * ds for ell in range(2**k + 1)]
        checks.append(quad_trapezoid(f, ds) == 0.5)
        checks.append(quad_rectangle(f[1:], ds) - 0.5 == ds / 2)
    ds = 0.01
    f = [ell * ds for ell in range(101)]
    checks.append(quad_rectangle(f[1:], ds) == pytest.approx(0.505, abs=1e-15))
    checks.append(quad_trapezoid(f, ds) == pytest.approx(0.5, abs=1e-15))
    # rectangle error on a smooth integrand halves with ds
    errs = [abs(quad_rectangle([math.exp(-(l * 2.0**-k)) for l in range(1, 2**k + 1)], 2.0**-k) - (1 - math.exp(-1)))
            for k in (6, 7, 8)]
    order = fit_convergence_order([2.0**-6, 2.0**-7, 2.0**-8], errs)
    checks.append(abs(order - 1) < 0.02)
    report(10, all(checks), f"{sum(checks)}/{len(checks)} exact checks; rectangle error order {order:.3f}")


def test_c11_thread_count_determinism(tmp_path):
    cfg = dict(K=2, N=1024, M=8, ds=2e-2, train=TrainConfig(n_steps=300), seed=3, eval_points=500)
    disk = make_disk_problem("A")
    run_picard(disk, PicardConfig(**cfg, threads=1), tmp_path / "t1")
    run_picard(disk, PicardConfig(**cfg, threads=8), tmp_path / "t8")
    a = (tmp_path / "t1" / "metrics.csv").read_bytes()
    b = (tmp_path / "t8" / "metrics.csv").read_bytes()
    ck = all((tmp_path / "t1" / "checkpoints" / f).read_bytes() == (tmp_path / "t8" / "checkpoints" / f).read_bytes()
             for f in ("iter_001.npz", "iter_002.npz"))
    report(11, a == b, f"metrics.csv byte-identical at threads 1 and 8: {a == b} ({len(a)} bytes); checkpoints identical: {ck}")


@pytest.mark.slow
def test_c12_high_dim_smoke():
    tic = time.perf_counter()
    run = run_picard(make_ball_problem(20, "A"), PicardConfig(K=5, N=2048, M=8, width=128))
    st = run.final.spacetime_rmse
    finite = bool(np.all(np.isfinite(run.state.params))) and all(math.isfinite(r.spacetime_rmse) for r in run.records)
    sec = time.perf_counter() - tic
    report(12, finite and st <= 0.1 and sec <= 3600, f"d=20 spacetime RMSE {st:.4f} (<= 0.1), finite {finite}; {sec:.0f}s")
