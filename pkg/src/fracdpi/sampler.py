"""Random variates for the coupled subordinator / walk-on-spheres dynamics.

Each sampler has a pure transform from uniforms (``*_from_uniforms``) and a
stream-driven wrapper. The trajectory engine calls the transforms directly on
counter-addressed uniforms so that one step of one path always consumes the
same random numbers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domains import DomainSpec
from .rng import RngStream, box_muller
from .specfun import DomainError, betainc_regularized, betainc_regularized_inverse, kappa_d_alpha

OMEGA_EPS = 1e-12

# Radial exit law from the centre of a ball of radius r: z = r^2 / J^2 is
# Beta(alpha/2, 1 - alpha/2) distributed ("stable"). "printed" swaps the two
# shape parameters; it is kept only to reproduce that variant, whose paths
# leave the domain roughly twenty times too early (see tests/test_sampler.py).
JUMP_LAWS = ("stable", "printed")


@dataclass(frozen=True)
class WosStepRule:
    """Ball radius matched so that the mean exit time equals ``ds``."""

    radius: float
    d: int
    alpha: float
    law: str = "stable"

    def __post_init__(self):
        if self.law not in JUMP_LAWS:
            raise DomainError(f"unknown jump law {self.law!r}")

    @classmethod
    def from_step(cls, ds: float, d: int, alpha: float, law: str = "stable") -> "WosStepRule":
        if ds <= 0:
            raise DomainError("operational step must be positive")
        return cls((ds / kappa_d_alpha(d, alpha)) ** (1.0 / alpha), d, alpha, law)

    @property
    def beta_params(self) -> tuple[float, float]:
        half = self.alpha / 2.0
        return (half, 1.0 - half) if self.law == "stable" else (1.0 - half, half)


def positive_stable_from_uniforms(beta: float, u, e_u):
    """Kanter's representation of the one-sided stable law, E[exp(-l X)] = exp(-l^beta).

    ``u`` gives the angle, ``e_u`` is mapped to a unit exponential.
    """
    ang = np.pi * np.asarray(u)
    e = -np.log(e_u)
    a = np.sin(beta * ang) / np.sin(ang) ** (1.0 / beta)
    b = (np.sin((1.0 - beta) * ang) / e) ** ((1.0 - beta) / beta)
    return a * b


def sample_positive_stable(beta: float, stream: RngStream, n: int = 1, start: int = 0):
    if not 0.0 < beta < 1.0:
        raise DomainError("beta must lie in (0, 1)")
    u = stream.uniforms(2 * n, start).reshape(n, 2)
    return positive_stable_from_uniforms(beta, u[:, 0], u[:, 1])


def subordinator_increment(ds: float, beta: float, stream: RngStream, n: int = 1, start: int = 0):
    """Increment of Y^beta over operational time ds: ds^(1/beta) * eta."""
    if ds <= 0:
        raise DomainError("operational step must be positive")
    return ds ** (1.0 / beta) * sample_positive_stable(beta, stream, n, start)


def sphere_from_normals(g: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(g, axis=-1, keepdims=True)
    return g / norm


def sample_sphere_direction(d: int, stream: RngStream, n: int = 1, start: int = 0) -> np.ndarray:
    """Uniform points on S^(d-1) via normalized Gaussians, shape (n, d)."""
    if d < 1:
        raise DomainError("dimension must be >= 1")
    width = d + (d % 2)
    g = box_muller(stream.uniforms(n * width, start).reshape(n, width))[:, :d]
    zero = ~(np.linalg.norm(g, axis=1) > 0)
    redraw = 1
    while zero.any():
        # redraws live far above any index the main sequence reaches
        offset = start + (2**40) * redraw
        g2 = box_muller(stream.uniforms(n * width, offset).reshape(n, width))[:, :d]
        g[zero] = g2[zero]
        zero = ~(np.linalg.norm(g, axis=1) > 0)
        redraw += 1
    return sphere_from_normals(g)


def jump_distance_from_uniforms(rule: WosStepRule, omega):
    """Radial exit distance J = r / sqrt(I^-1(1 - omega; p, q)) with (p, q) = rule.beta_params.

    The complete Beta B(p, q) equals pi / sin(pi alpha / 2), so the
    non-regularized argument B - pi omega / sin(pi alpha / 2) is (1 - omega) B.
    """
    a, b = rule.beta_params
    omega = np.clip(np.asarray(omega, dtype=np.float64), OMEGA_EPS, 1.0 - OMEGA_EPS)
    z = betainc_regularized_inverse(1.0 - omega, a, b)
    return rule.radius / np.sqrt(z)


def sample_jump_distance(rule: WosStepRule, stream: RngStream, n: int = 1, start: int = 0):
    return jump_distance_from_uniforms(rule, stream.uniforms(n, start))


def jump_distance_cdf(gamma, rule: WosStepRule):
    """P(J < gamma) for the radial exit law, zero below the radius."""
    gamma = np.asarray(gamma, dtype=np.float64)
    a, b = rule.beta_params
    inside = gamma > rule.radius
    z = np.where(inside, (rule.radius / np.where(inside, gamma, 1.0)) ** 2, 1.0)
    return np.where(inside, 1.0 - betainc_regularized(z, a, b), 0.0)


def collocation_from_uniforms(domain: DomainSpec, T: float, u: np.ndarray):
    """Map uniforms of shape (n, 1 + k) to (t, x) with t in (0, T], x uniform in the domain."""
    t = T * (1.0 - u[:, 0])
    if domain.kind == "ball":
        d = domain.d
        width = d + (d % 2)
        g = box_muller(u[:, 1 : 1 + width])[:, :d]
        radius = u[:, 1 + width] ** (1.0 / d)
        x = sphere_from_normals(g) * radius[:, None]
    elif domain.kind == "box":
        lo, hi = domain.lo, domain.hi
        x = lo + (hi - lo) * u[:, 1 : 1 + domain.d]
    else:
        raise DomainError(f"unsupported domain kind {domain.kind!r}")
    return t, x


def collocation_width(domain: DomainSpec) -> int:
    if domain.kind == "ball":
        return 1 + domain.d + (domain.d % 2) + 1
    if domain.kind == "box":
        return 1 + domain.d
    raise DomainError(f"unsupported domain kind {domain.kind!r}")


def sample_collocation(domain: DomainSpec, T: float, n: int, stream: RngStream):
    """n space-time points, t ~ U(0, T] and x ~ U(domain); returns (t, x)."""
    if n < 1:
        raise DomainError("need at least one collocation point")
    if T <= 0:
        raise DomainError("time horizon must be positive")
    width = collocation_width(domain)
    u = stream.uniforms(n * width).reshape(n, width)
    return collocation_from_uniforms(domain, T, u)


def radius_for_step(ds: float, d: int, alpha: float) -> float:
    return (ds / kappa_d_alpha(d, alpha)) ** (1.0 / alpha)


def laplace_transform_check(samples: np.ndarray, lam: float, beta: float):
    """Empirical E[exp(-lam X)] against exp(-lam^beta); returns (estimate, exact, standard error)."""
    vals = np.exp(-lam * samples)
    se = vals.std(ddof=1) / math.sqrt(vals.size)
    return float(vals.mean()), math.exp(-(lam**beta)), float(se)
