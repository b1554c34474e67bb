"""Manufactured benchmark problems and the Fourier-multiplier forcing precompute.

Every benchmark has u_ex(t, x) = t^beta psi(x), u0 = 0 and g = 0, so the
forcing is Gamma(beta + 1) psi + t^beta (-Delta)^{alpha/2} psi minus the
reaction evaluated at u_ex. The operator term is the closed-form constant
C_{d,alpha} on the unit ball, or an FFT-precomputed grid otherwise.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .domains import DomainSpec
from .specfun import FracOrders, frac_laplacian_ball_constant

GRID_FORMAT = "fracdpi-forcing"
GRID_VERSION = 1

DOUBLE_BUMP_DEFAULTS = {"c1": (-0.35, 0.0), "c2": (0.35, 0.0), "radius": 0.55, "amplitude": 0.8}


class ConfigurationError(ValueError):
    pass


def caputo_power(gamma_exp: float, beta: float, t):
    """Caputo derivative of order beta of t^gamma: Gamma(g+1)/Gamma(g+1-beta) t^(g-beta)."""
    t = np.asarray(t, dtype=np.float64)
    if gamma_exp == 0:
        return np.zeros_like(t)
    return math.exp(math.lgamma(gamma_exp + 1) - math.lgamma(gamma_exp + 1 - beta)) * t ** (gamma_exp - beta)


# ---------------------------------------------------------------- profiles


def ball_profile(x: np.ndarray, alpha: float) -> np.ndarray:
    """(1 - |x|^2)_+^{alpha/2}."""
    r2 = np.einsum("ij,ij->i", x, x)
    return np.maximum(1.0 - r2, 0.0) ** (alpha / 2.0)


def square_profile(x: np.ndarray) -> np.ndarray:
    """(1 - x1^2)_+^2 (1 - x2^2)_+^2."""
    a = np.maximum(1.0 - x[:, 0] ** 2, 0.0)
    b = np.maximum(1.0 - x[:, 1] ** 2, 0.0)
    return a * a * b * b


def bump(x: np.ndarray, center, radius: float, alpha: float) -> np.ndarray:
    dx = x - np.asarray(center, dtype=np.float64)
    return np.maximum(1.0 - np.einsum("ij,ij->i", dx, dx) / radius**2, 0.0) ** (1.0 + alpha / 2.0)


def double_bump_profile(x, alpha: float, c1, c2, radius: float, amplitude: float) -> np.ndarray:
    return bump(x, c1, radius, alpha) + amplitude * bump(x, c2, radius, alpha)


def box_factor(lo: np.ndarray, hi: np.ndarray):
    """prod_j ((x_j - lo_j)(hi_j - x_j) / half_j^2)_+, equal to prod (1 - x_j^2)_+ on (-1, 1)^d."""
    half2 = ((hi - lo) / 2.0) ** 2

    def phi(x):
        return np.prod(np.maximum((x - lo) * (hi - x), 0.0) / half2, axis=1)

    return phi


# ---------------------------------------------------------------- FFT forcing


@dataclass(frozen=True)
class ForcingGrid:
    """(-Delta)^{alpha/2} of a 2D profile sampled on a periodic node grid.

    Node (i, j) sits at (box[0] + i h, box[2] + j h); the grid has n x n nodes.
    """

    values: np.ndarray
    h: float
    box: tuple
    alpha: float
    profile: str
    profile_params: dict = field(default_factory=dict)
    imag_residue: float = 0.0

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def checksum(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.values, dtype="<f8").tobytes()).hexdigest()

    def axes(self):
        n = self.n
        return (self.box[0] + self.h * np.arange(n), self.box[2] + self.h * np.arange(n))

    def interpolator(self) -> Callable[[np.ndarray], np.ndarray]:
        interp = RegularGridInterpolator(self.axes(), self.values, method="linear", bounds_error=False, fill_value=None)
        return lambda x: interp(np.atleast_2d(x)[:, :2])

    def header(self) -> dict:
        return {
            "format": GRID_FORMAT,
            "version": GRID_VERSION,
            "h": self.h,
            "box": list(self.box),
            "n": self.n,
            "alpha": self.alpha,
            "profile": self.profile,
            "profile_params": self.profile_params,
            "imag_residue": self.imag_residue,
            "checksum": self.checksum,
        }

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            np.savez(fh, header=np.array(json.dumps(self.header(), sort_keys=True)), values=self.values)

    @classmethod
    def load(cls, path) -> "ForcingGrid":
        with np.load(path, allow_pickle=False) as z:
            head = json.loads(str(z["header"]))
            values = z["values"].copy()
        if head.get("format") != GRID_FORMAT or head.get("version") != GRID_VERSION:
            raise ConfigurationError(f"{path}: not a forcing grid file")
        grid = cls(values, head["h"], tuple(head["box"]), head["alpha"], head["profile"],
                   head.get("profile_params", {}), head.get("imag_residue", 0.0))
        if grid.checksum != head["checksum"]:
            raise ConfigurationError(f"{path}: checksum mismatch")
        return grid


def precompute_forcing_fft(
    profile: Callable[[np.ndarray], np.ndarray],
    h: float,
    box,
    alpha: float,
    name: str = "custom",
    params: Optional[dict] = None,
    residue_tol: float = 1e-8,
) -> ForcingGrid:
    """Apply the |xi|^alpha multiplier to a compactly supported profile on a square periodic grid."""
    x0, x1, y0, y1 = (float(b) for b in box)
    L = x1 - x0
    if abs((y1 - y0) - L) > 1e-12 * L:
        raise ConfigurationError("FFT box must be square")
    n = int(round(L / h))
    if abs(n * h - L) > 1e-9 * L:
        raise ConfigurationError("box length must be a multiple of h")
    gx = x0 + h * np.arange(n)
    gy = y0 + h * np.arange(n)
    X, Y = np.meshgrid(gx, gy, indexing="ij")
    vals = profile(np.column_stack([X.ravel(), Y.ravel()])).reshape(n, n)
    edge = max(np.abs(vals[0]).max(), np.abs(vals[:, 0]).max())
    if edge > 0:
        raise ConfigurationError("profile support touches the FFT box edge")
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=h)
    mult = (k[:, None] ** 2 + k[None, :] ** 2) ** (alpha / 2.0)
    q = np.fft.ifft2(mult * np.fft.fft2(vals))
    scale = max(np.abs(q.real).max(), 1e-300)
    residue = float(np.abs(q.imag).max() / scale)
    if residue > residue_tol:
        raise ArithmeticError(f"imaginary residue {residue:.2e} exceeds {residue_tol:g}")
    return ForcingGrid(q.real.copy(), float(h), (x0, x1, y0, y1), float(alpha), name, dict(params or {}), residue)


def named_profile(name: str, alpha: float, params: Optional[dict] = None):
    """Profile callable and its parameters for the precompute subcommand."""
    if name == "square_phi_R":
        return square_profile, {}
    if name == "double_bump":
        p = dict(DOUBLE_BUMP_DEFAULTS)
        p.update(params or {})
        return (lambda x: double_bump_profile(x, alpha, p["c1"], p["c2"], p["radius"], p["amplitude"])), p
    if name == "disk_phi":
        return (lambda x: ball_profile(x, alpha)), {}
    raise ConfigurationError(f"unknown profile {name!r}; expected square_phi_R, double_bump or disk_phi")


def default_forcing(name: str, alpha: float, n: int = 1024, half_width: float = 2.0, params=None) -> ForcingGrid:
    prof, p = named_profile(name, alpha, params)
    L = 2.0 * half_width
    return precompute_forcing_fft(prof, L / n, (-half_width, half_width, -half_width, half_width), alpha, name, p)


# ---------------------------------------------------------------- problems


@dataclass(frozen=True)
class ProblemSpec:
    """Vectorized data: u0(x), g(t, x), f(t, u, x), exact(t, x), phi(x) with x of shape (n, d)."""

    name: str
    orders: FracOrders
    domain: DomainSpec
    T: float
    u0: Callable
    g: Callable
    f: Callable
    phi: Callable
    exact: Optional[Callable] = None
    profile: Optional[Callable] = None  # psi with u_ex = t^beta psi
    frac_lap_profile: Optional[Callable] = None  # (-Delta)^{alpha/2} psi inside the domain
    metadata: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.domain.d


def _zero_x(x):
    return np.zeros(np.atleast_2d(x).shape[0])


def _zero_tx(t, x):
    return np.zeros(np.atleast_2d(x).shape[0])


def _reaction(setting: str, lam: float, kappa: float):
    if setting == "A":
        return lambda u: lam * u * u
    if setting == "B":
        return lambda u: kappa * (u - u**3)
    raise ConfigurationError(f"unknown setting {setting!r}; expected 'A' or 'B'")


def _manufactured(name, orders, domain, T, setting, psi, lap_psi, phi, lam=1.0, kappa=1.0, metadata=None):
    """Problem with u_ex = t^beta psi and forcing obtained by substitution."""
    beta = orders.beta
    gb = math.gamma(beta + 1.0)
    react = _reaction(setting, lam, kappa)

    def exact(t, x):
        return np.asarray(t) ** beta * psi(x)

    def forcing(t, x):
        p = psi(x)
        tb = np.asarray(t) ** beta
        return gb * p + tb * lap_psi(x) - react(tb * p)

    def f(t, u, x):
        return react(u) + forcing(t, x)

    meta = {"setting": setting, "lambda": lam, "kappa": kappa}
    meta.update(metadata or {})
    return ProblemSpec(name, orders, domain, T, _zero_x, _zero_tx, f, phi, exact, psi, lap_psi, meta)


def make_ball_problem(d: int, setting: str = "A", orders: FracOrders = FracOrders(), T: float = 1.0) -> ProblemSpec:
    """u_ex = t^beta (1 - |x|^2)_+^{alpha/2} on the unit ball of R^d."""
    alpha = orders.alpha
    C = frac_laplacian_ball_constant(d, alpha)

    def psi(x):
        return ball_profile(x, alpha)

    def lap(x):
        return np.full(np.atleast_2d(x).shape[0], C)

    return _manufactured(f"ball{d}_{setting}", orders, DomainSpec.unit_ball(d), T, setting, psi, lap, psi,
                         metadata={"C_d_alpha": C})


def make_disk_problem(setting: str = "A", orders: FracOrders = FracOrders(), T: float = 1.0) -> ProblemSpec:
    p = make_ball_problem(2, setting, orders, T)
    return ProblemSpec(**{**p.__dict__, "name": f"disk_{setting}"})


def _check_grid(grid: ForcingGrid, profile: str, alpha: float, params: Optional[dict] = None):
    if grid is None:
        raise ConfigurationError(f"a forcing grid for profile {profile!r} is required")
    if grid.profile != profile:
        raise ConfigurationError(f"forcing grid is for profile {grid.profile!r}, expected {profile!r}")
    if abs(grid.alpha - alpha) > 1e-12:
        raise ConfigurationError(f"forcing grid alpha {grid.alpha} does not match problem alpha {alpha}")
    if params is not None:
        got = {k: (list(v) if isinstance(v, (tuple, list)) else v) for k, v in grid.profile_params.items()}
        want = {k: (list(v) if isinstance(v, (tuple, list)) else v) for k, v in params.items()}
        if got != want:
            raise ConfigurationError(f"forcing grid parameters {got} do not match {want}")
    if grid.box[0] > -1.0 or grid.box[1] < 1.0 or grid.box[2] > -1.0 or grid.box[3] < 1.0:
        raise ConfigurationError("forcing grid does not cover [-1, 1]^2")


def make_square_problem(setting: str = "A", forcing: Optional[ForcingGrid] = None,
                        orders: FracOrders = FracOrders(), T: float = 1.0) -> ProblemSpec:
    """u_ex = t^beta phi_R on (-1, 1)^2 with the operator term read from ``forcing``."""
    _check_grid(forcing, "square_phi_R", orders.alpha)
    domain = DomainSpec.box([-1.0, -1.0], [1.0, 1.0])
    q = forcing.interpolator()
    return _manufactured(f"square_{setting}", orders, domain, T, setting, square_profile, q,
                         box_factor(domain.lo, domain.hi), metadata={"forcing_checksum": forcing.checksum})


def make_double_bump_problem(forcing: Optional[ForcingGrid] = None, orders: FracOrders = FracOrders(),
                             T: float = 1.0, **bump_params) -> ProblemSpec:
    """Quadratic reaction with u_ex = t^beta (phi_1 + amplitude phi_2) on the unit disk.

    Bump centres, radius and amplitude are artifact defaults (DOUBLE_BUMP_DEFAULTS).
    """
    p = dict(DOUBLE_BUMP_DEFAULTS)
    p.update(bump_params)
    c1, c2 = np.asarray(p["c1"], float), np.asarray(p["c2"], float)
    if max(np.linalg.norm(c1), np.linalg.norm(c2)) + p["radius"] >= 1.0:
        raise ConfigurationError("bump supports must lie inside the unit disk")
    if forcing is None:
        forcing = default_forcing("double_bump", orders.alpha, params=p)
    _check_grid(forcing, "double_bump", orders.alpha, p)
    alpha = orders.alpha

    def psi(x):
        return double_bump_profile(x, alpha, c1, c2, p["radius"], p["amplitude"])

    meta = {"bump_params": {k: (list(v) if isinstance(v, tuple) else v) for k, v in p.items()},
            "bump_params_source": "artifact default, not from the reference experiments",
            "forcing_checksum": forcing.checksum}
    return _manufactured("double_bump", orders, DomainSpec.unit_ball(2), T, "A", psi, forcing.interpolator(),
                         lambda x: ball_profile(x, alpha), metadata=meta)


def make_zero_problem(d: int = 2, orders: FracOrders = FracOrders(), T: float = 1.0) -> ProblemSpec:
    """f = u0 = g = 0 on the unit ball; the fixed point is u = 0."""
    alpha = orders.alpha
    return ProblemSpec(
        f"zero{d}", orders, DomainSpec.unit_ball(d), T, _zero_x, _zero_tx,
        lambda t, u, x: np.zeros(np.atleast_2d(x).shape[0]),
        lambda x: ball_profile(x, alpha), _zero_tx, _zero_x, _zero_x, {"setting": "zero"},
    )


def manufactured_residual(problem: ProblemSpec, t, x, frac_lap_profile: Optional[Callable] = None) -> np.ndarray:
    """d_t^beta u_ex + (-Delta)^{alpha/2} u_ex - f(t, u_ex, x) at the given points.

    The time term uses the Caputo power identity; the space term uses
    ``frac_lap_profile`` when supplied (an independent oracle) and the
    problem's own operator otherwise.
    """
    if problem.exact is None or problem.profile is None:
        raise ConfigurationError("problem has no manufactured solution")
    t = np.asarray(t, dtype=np.float64)
    x = np.atleast_2d(x)
    lap = frac_lap_profile or problem.frac_lap_profile
    beta = problem.orders.beta
    psi = problem.profile(x)
    u = problem.exact(t, x)
    return caputo_power(beta, beta, t) * psi + t**beta * lap(x) - problem.f(t, u, x)
