import numpy as np
import pytest

from fracdpi.metrics import UnsupportedMetric, fit_convergence_order, slice_rmse, spacetime_grid, terminal_slice_grid
from fracdpi.problems import make_ball_problem, make_disk_problem, make_zero_problem
from fracdpi.rng import RngStream
from fracdpi.specfun import DomainError


def test_exact_solution_has_zero_error():
    p = make_disk_problem("A")
    assert slice_rmse(p.exact, p, 51) == 0.0
    g = spacetime_grid(p, RngStream(1), 10, 100)
    assert g.rmse(p.exact) == 0.0
    assert g.t.min() == pytest.approx(0.1) and g.t.max() == 1.0 and len(g.t) == 1000


def test_constant_offset_error():
    p = make_disk_problem("A")
    g = terminal_slice_grid(p, 41)
    assert g.rmse(lambda t, x: p.exact(t, x) + 0.25) == pytest.approx(0.25, rel=1e-14)
    assert np.all(np.linalg.norm(g.x, axis=1) < 1) and np.all(g.t == 1.0)


def test_zero_prediction_rmse_matches_direct_formula():
    p = make_disk_problem("A")
    g = terminal_slice_grid(p, 101)
    direct = np.sqrt(np.mean(p.exact(g.t, g.x) ** 2))
    assert g.rmse(lambda t, x: np.zeros(len(t))) == pytest.approx(direct, rel=1e-15)


def test_high_dim_slice():
    p = make_ball_problem(20, "A")
    g = terminal_slice_grid(p, 21)
    assert g.x.shape[1] == 20 and np.all(g.x[:, 2:] == 0.0)


def test_no_exact_solution():
    z = make_zero_problem(2)
    z = type(z)(**{**z.__dict__, "exact": None})
    with pytest.raises(UnsupportedMetric):
        terminal_slice_grid(z)


def test_fit_convergence_order():
    ds = np.array([4e-2, 2e-2, 1e-2, 5e-3])
    assert fit_convergence_order(ds, 3 * ds**0.5) == pytest.approx(0.5, abs=1e-12)
    assert fit_convergence_order([4, 16, 64], [1.0, 0.5, 0.25]) == pytest.approx(-0.5, abs=1e-12)
    with pytest.raises(DomainError):
        fit_convergence_order([1.0], [1.0])
    with pytest.raises(DomainError):
        fit_convergence_order([1.0, 2.0], [0.0, 1.0])
