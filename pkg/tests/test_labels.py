import math

import numpy as np
import pytest

from fracdpi.domains import DomainSpec
from fracdpi.labels import generate_labels, make_label, path_values, quad_rectangle, quad_trapezoid, relax_labels, write_labels_csv
from fracdpi.problems import ProblemSpec, make_disk_problem
from fracdpi.rng import RngStream
from fracdpi.specfun import FracOrders
from fracdpi.trajectory import simulate_trajectory

ORD = FracOrders(1.5, 0.6)
DISK = DomainSpec.unit_ball(2)


def _zero(x):
    return np.zeros(np.atleast_2d(x).shape[0])


def _const_f_problem(c=1.0, u0=None):
    return ProblemSpec("const", ORD, DISK, 1.0, u0 or _zero, lambda t, x: _zero(x),
                       lambda t, u, x: np.full(np.atleast_2d(x).shape[0], c), _zero)


def test_quadrature_rules():
    assert quad_rectangle([], 0.1) == 0.0
    assert quad_trapezoid([], 0.1) == 0.0 and quad_trapezoid([3.0], 0.1) == 0.0
    assert quad_rectangle([2.0] * 7, 0.5) == 7.0
    assert quad_trapezoid([2.0] * 8, 0.5) == 7.0
    ds = 0.01
    f = [ell * ds for ell in range(101)]
    assert quad_rectangle(f[1:], ds) == pytest.approx(0.505, abs=1e-15)
    assert quad_trapezoid(f, ds) == pytest.approx(0.5, abs=1e-15)


def test_trapezoid_rectangle_identity():
    rng = np.random.default_rng(0)
    for n in (1, 5, 50):
        f = rng.normal(size=n + 1)
        ds = 0.02
        diff = quad_trapezoid(f, ds) - quad_rectangle(f[1:], ds)
        assert diff == pytest.approx(ds * (f[0] - f[-1]) / 2, abs=1e-15)


def test_relax():
    raw = np.array([4.0, 1.0])
    np.testing.assert_array_equal(relax_labels(raw, np.array([2.0, 0.0]), 1.0), raw)
    assert relax_labels(np.array([4.0]), np.array([2.0]), 0.5)[0] == 3.0
    for bad in (0.0, -0.1, 1.5, float("nan")):
        with pytest.raises(ValueError):
            relax_labels(raw, raw, bad)


def _outcomes(point, M, seed=1, ds=1e-2):
    return [simulate_trajectory(point, DISK, ORD, ds, RngStream(seed, m)) for m in range(M)]


def test_make_label_trivial_cases():
    u = lambda t, x: _zero(x)
    ones = _const_f_problem(0.0, u0=lambda x: np.ones(np.atleast_2d(x).shape[0]))
    out = simulate_trajectory((1e-12, np.zeros(2)), DISK, ORD, 1e-2, RngStream(1, 0))
    assert make_label(None, [out], u, ones, "trapezoid", 1e-2) == (1.0, 0.0)
    disk = make_disk_problem("A")
    homog = ProblemSpec("h", ORD, DISK, 1.0, _zero, lambda t, x: _zero(x), lambda t, u, x: _zero(x), _zero)
    outs = _outcomes((0.7, np.array([0.2, 0.1])), 16)
    assert make_label(None, outs, u, homog, "trapezoid", 1e-2)[0] == 0.0


def test_unit_forcing_counts_steps():
    ds = 1e-2
    outs = _outcomes((0.7, np.array([0.2, 0.1])), 32, ds=ds)
    label, _ = make_label(None, outs, lambda t, x: _zero(x), _const_f_problem(1.0), "rectangle", ds)
    assert label == np.mean([o.n_pre * ds for o in outs])


def test_fused_engine_matches_reference():
    disk = make_disk_problem("A")
    u = lambda t, x: 0.5 * disk.exact(t, x)
    t = np.array([0.9, 0.3, 0.6])
    x = np.array([[0.1, 0.1], [0.7, -0.2], [0.0, 0.0]])
    M, ds = 6, 1e-2
    key = 1234
    for quad in ("trapezoid", "rectangle"):
        lb = generate_labels(t, x, disk, u, M=M, ds=ds, key=key, quad=quad)
        for i in range(3):
            outs = [simulate_trajectory((t[i], x[i]), DISK, ORD, ds, RngStream(key, i * M + m)) for m in range(M)]
            raw, var = make_label(None, outs, u, disk, quad, ds)
            assert lb.raw[i] == pytest.approx(raw, rel=1e-12, abs=1e-14)
            assert lb.variance[i] == pytest.approx(var, rel=1e-10, abs=1e-14)


def test_worker_count_does_not_change_labels():
    disk = make_disk_problem("A")
    u = lambda t, x: 0.3 * disk.exact(t, x)
    rng = np.random.default_rng(0)
    n = 40
    r = np.sqrt(rng.uniform(0, 0.8, n))
    x = np.column_stack([r, np.zeros(n)])
    t = rng.uniform(0.1, 1, n)
    a = generate_labels(t, x, disk, u, M=4, ds=2e-2, key=9, eta=0.6, chunk_size=7, workers=1)
    b = generate_labels(t, x, disk, u, M=4, ds=2e-2, key=9, eta=0.6, chunk_size=7, workers=4)
    np.testing.assert_array_equal(a.raw, b.raw)
    np.testing.assert_array_equal(a.relaxed, b.relaxed)
    np.testing.assert_array_equal(a.relaxed, 0.4 * u(t, x) + 0.6 * a.raw)


def test_label_variance_scales_with_M():
    disk = make_disk_problem("A")
    u = lambda t, x: _zero(x)
    reps = 1000
    t = np.full(reps, 0.8)
    x = np.tile([0.3, 0.0], (reps, 1))
    v = []
    for M in (4, 16):
        lb = generate_labels(t, x, disk, u, M=M, ds=2e-2, key=77 + M, chunk_size=reps)
        v.append(lb.raw.var(ddof=1))
    assert v[0] / v[1] == pytest.approx(4.0, rel=0.3)


def test_lipschitz_bound():
    """|label(u1) - label(u2)| <= L_f * stopping time * sup|u1 - u2| per path (Setting A, |u| <= 1)."""
    disk = make_disk_problem("A")
    u1 = lambda t, x: 0.5 * disk.exact(t, x)
    u2 = lambda t, x: 0.5 * disk.exact(t, x) + 0.1 * disk.phi(x)
    n = 500
    t0 = np.full(n, 0.9)
    x0 = np.tile([0.2, 0.2], (n, 1))
    ds = 1e-2
    v1, b = path_values(t0, x0, disk, u1, ds, 5, np.arange(n), "rectangle")
    v2, _ = path_values(t0, x0, disk, u2, ds, 5, np.arange(n), "rectangle")
    lip = 2 * 1.1  # |d/du lam u^2| <= 2 |u| with |u| <= 0.6
    assert np.all(np.abs(v1 - v2) <= lip * b.n_pre * ds * 0.1 + 1e-14)


def test_labels_csv(tmp_path):
    disk = make_disk_problem("A")
    lb = generate_labels(np.array([0.5, 0.6]), np.zeros((2, 2)), disk, lambda t, x: _zero(x), M=2, ds=5e-2, key=1)
    f = tmp_path / "labels.csv"
    write_labels_csv(f, lb)
    rows = f.read_text().splitlines()
    assert rows[0] == "point_id,t,x0,x1,raw,relaxed,variance,truncated_paths" and len(rows) == 3
