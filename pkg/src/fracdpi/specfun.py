"""Special functions for the samplers and the benchmark constants.

Everything here is vectorized over numpy arrays and pure. Gamma-ratio
constants are assembled in log space so that d=100 does not overflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


class QuadratureError(ArithmeticError):
    """Numerical quadrature failed to reach the requested tolerance."""


@dataclass(frozen=True)
class FracOrders:
    alpha: float = 1.5  # spatial order, (0, 2)
    beta: float = 0.6  # temporal order, (0, 1)

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise DomainError(f"alpha must lie in (0, 2), got {self.alpha}")
        if not 0.0 < self.beta < 1.0:
            raise DomainError(f"beta must lie in (0, 1), got {self.beta}")


def log_gamma(x):
    """ln Gamma(x) for x > 0."""
    arr = np.asarray(x, dtype=np.float64)
    if np.any(~(arr > 0)):
        raise DomainError("log_gamma requires x > 0")
    if arr.ndim == 0:
        return math.lgamma(float(arr))
    return gammaln(arr)


def log_beta(a, b):
    return log_gamma(a) + log_gamma(b) - log_gamma(np.add(a, b))


def beta_complete(a, b):
    """B(a, b) = Gamma(a) Gamma(b) / Gamma(a + b)."""
    if np.any(~(np.asarray(a) > 0)) or np.any(~(np.asarray(b) > 0)):
        raise DomainError("beta_complete requires a > 0 and b > 0")
    return np.exp(log_beta(a, b))


_CF_TINY = 1e-300
_CF_EPS = 1e-16
_CF_MAXITER = 500


def _betacf(z, a, b):
    """Modified Lentz evaluation of the incomplete-Beta continued fraction."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(z)
    d = 1.0 - qab * z / qap
    d = np.where(np.abs(d) < _CF_TINY, _CF_TINY, d)
    d = 1.0 / d
    h = d.copy()
    active = np.ones(z.shape, dtype=bool)
    for m in range(1, _CF_MAXITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * z / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _CF_TINY, _CF_TINY, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _CF_TINY, _CF_TINY, c)
        d = 1.0 / d
        h = np.where(active, h * d * c, h)
        aa = -(a + m) * (qab + m) * z / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _CF_TINY, _CF_TINY, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _CF_TINY, _CF_TINY, c)
        d = 1.0 / d
        delta = d * c
        h = np.where(active, h * delta, h)
        active &= np.abs(delta - 1.0) > _CF_EPS
        if not active.any():
            return h
    raise QuadratureError("incomplete Beta continued fraction did not converge")


def _betainc_reg_both(z, a, b, zc=None):
    """Regularized I_z(a,b) and its complement 1 - I_z(a,b).

    ``zc`` optionally supplies 1 - z computed without cancellation.
    """
    z = np.asarray(z, dtype=np.float64)
    zc = 1.0 - z if zc is None else np.asarray(zc, dtype=np.float64)
    a = np.broadcast_to(np.asarray(a, dtype=np.float64), z.shape)
    b = np.broadcast_to(np.asarray(b, dtype=np.float64), z.shape)
    lower = np.zeros(z.shape)
    upper = np.ones(z.shape)
    interior = (z > 0.0) & (zc > 0.0)
    if interior.any():
        zi, zci, ai, bi = z[interior], zc[interior], a[interior], b[interior]
        with np.errstate(divide="ignore"):
            front = np.exp(ai * np.log(zi) + bi * np.log(zci) - log_beta(ai, bi))
        direct = zi < ai / (ai + bi)
        val = np.empty(zi.shape)
        if direct.any():
            val[direct] = front[direct] * _betacf(zi[direct], ai[direct], bi[direct]) / ai[direct]
        flip = ~direct
        if flip.any():
            val[flip] = front[flip] * _betacf(zci[flip], bi[flip], ai[flip]) / bi[flip]
        # val is I_z on the direct branch and 1 - I_z on the flipped one
        lo = np.where(direct, val, 1.0 - val)
        hi = np.where(direct, 1.0 - val, val)
        lower[interior] = lo
        upper[interior] = hi
    lower = np.where(zc <= 0.0, 1.0, lower)
    upper = np.where(zc <= 0.0, 0.0, upper)
    return lower, upper


def betainc_regularized(z, a, b):
    """Regularized lower incomplete Beta I_z(a, b)."""
    z = np.asarray(z, dtype=np.float64)
    if np.any((z < 0.0) | (z > 1.0)) or np.any(np.isnan(z)):
        raise DomainError("incomplete Beta requires 0 <= z <= 1")
    lower, _ = _betainc_reg_both(z, a, b)
    return lower[()] if lower.ndim == 0 else lower


def beta_incomplete(z, a, b):
    """Non-regularized lower incomplete Beta, integral of t^(a-1)(1-t)^(b-1) over [0, z]."""
    if np.any(~(np.asarray(a) > 0)) or np.any(~(np.asarray(b) > 0)):
        raise DomainError("beta_incomplete requires a > 0 and b > 0")
    return betainc_regularized(z, a, b) * beta_complete(a, b)


def _logit_to_z(x):
    # z = 1/(1+e^-x) and 1-z = 1/(1+e^x), both without cancellation
    return np.exp(-np.logaddexp(0.0, -x)), np.exp(-np.logaddexp(0.0, x))


def betainc_regularized_inverse(p, a, b, tol: float = 1e-13, maxiter: int = 200):
    """Solve I_z(a, b) = p for z.

    Safeguarded Newton on the logit of z inside a shrinking bracket; a step
    that leaves the bracket is replaced by bisection of the bracket. Working
    in logit space keeps Newton stable at both endpoint singularities when
    a, b < 1.
    """
    p = np.asarray(p, dtype=np.float64)
    if np.any((p < 0.0) | (p > 1.0)) or np.any(np.isnan(p)):
        raise DomainError("inverse incomplete Beta requires 0 <= p <= 1")
    shape = p.shape
    p = p.ravel()
    a_arr = np.broadcast_to(np.asarray(a, dtype=np.float64), shape).ravel()
    b_arr = np.broadcast_to(np.asarray(b, dtype=np.float64), shape).ravel()
    out = np.empty_like(p)
    out[p <= 0.0] = 0.0
    out[p >= 1.0] = 1.0
    idx = np.flatnonzero((p > 0.0) & (p < 1.0))
    if idx.size:
        out[idx] = _inverse_interior(p[idx], a_arr[idx], b_arr[idx], tol, maxiter)
    out = out.reshape(shape)
    return out[()] if out.ndim == 0 else out


def _inverse_interior(p, a, b, tol, maxiter):
    lbeta = log_beta(a, b)
    # logit bracket covering every representable z in (0, 1)
    lo = np.full(p.shape, -745.0)
    hi = np.full(p.shape, 37.0)
    # start from the small-z asymptote I ~ z^a / (a B), clipped into the bracket
    with np.errstate(divide="ignore", over="ignore"):
        z0 = np.exp((np.log(p) + np.log(a) + lbeta) / a)
    z0 = np.clip(z0, 1e-300, 0.5)
    x = np.log(z0) - np.log1p(-z0)
    x = np.clip(x, lo + 1.0, hi - 1.0)
    active = np.arange(p.size)
    result = np.empty_like(p)
    for _ in range(maxiter):
        xa, pa, aa, ba = x[active], p[active], a[active], b[active]
        z, zc = _logit_to_z(xa)
        val_lo, val_hi = _betainc_reg_both(z, aa, ba, zc)
        resid = np.where(val_lo <= 0.5, val_lo - pa, (1.0 - pa) - val_hi)
        # d I / d logit(z) = z^a (1-z)^b / B(a, b)
        with np.errstate(divide="ignore"):
            slope = np.exp(aa * np.log(z) + ba * np.log(zc) - lbeta[active])
        below = resid < 0.0
        lo[active] = np.where(below, np.maximum(lo[active], xa), lo[active])
        hi[active] = np.where(~below, np.minimum(hi[active], xa), hi[active])
        with np.errstate(divide="ignore", invalid="ignore"):
            x_new = xa - resid / slope
        l, h = lo[active], hi[active]
        bad = ~np.isfinite(x_new) | (x_new <= l) | (x_new >= h)
        x_new = np.where(bad, 0.5 * (l + h), x_new)
        done = (np.abs(resid) <= tol) | (np.abs(x_new - xa) <= 1e-14 * np.maximum(1.0, np.abs(xa)))
        done |= (h - l) <= 1e-14 * np.maximum(1.0, np.abs(xa))
        x[active] = x_new
        if done.any():
            fin = active[done]
            result[fin] = _logit_to_z(np.where(np.abs(resid[done]) <= tol, xa[done], x_new[done]))[0]
            active = active[~done]
        if active.size == 0:
            return result
    raise QuadratureError("inverse incomplete Beta did not converge")


def beta_incomplete_inverse(y, a, b):
    """z in [0, 1] with beta_incomplete(z, a, b) = y, for 0 <= y <= B(a, b)."""
    if np.any(~(np.asarray(a) > 0)) or np.any(~(np.asarray(b) > 0)):
        raise DomainError("beta_incomplete_inverse requires a > 0 and b > 0")
    y = np.asarray(y, dtype=np.float64)
    full = beta_complete(a, b)
    if np.any(y < 0.0) or np.any(y > full * (1.0 + 1e-15)):
        raise DomainError("beta_incomplete_inverse requires 0 <= y <= B(a, b)")
    return betainc_regularized_inverse(np.minimum(y / full, 1.0), a, b)


def _tanh_sinh_nodes(h: float, tmax: float):
    k = np.arange(-int(math.ceil(tmax / h)), int(math.ceil(tmax / h)) + 1)
    t = k * h
    v = np.pi * np.sinh(t)
    log_xi = -np.logaddexp(0.0, -v)
    log_xic = -np.logaddexp(0.0, v)
    # d xi / dt = pi cosh(t) xi (1 - xi); returned in log form
    log_jac = np.log(np.pi * np.cosh(t)) + log_xi + log_xic
    return log_xi, log_xic, log_jac


def tanh_sinh_01(log_integrand, tol: float = 1e-10, min_exponent: float = 0.1, max_level: int = 9):
    """Double-exponential quadrature on (0, 1).

    ``log_integrand(log_xi, log_1mxi)`` returns the log of a positive
    integrand, which may carry algebraic endpoint singularities. ``min_exponent`` is the smallest endpoint exponent
    (integrand ~ xi^(e-1)), used to size the truncation of the t axis.
    Results broadcast over any leading axes of the integrand.
    """
    tmax = math.asinh(60.0 / (math.pi * max(min_exponent, 1e-3))) + 0.5
    prev = None
    err = float("inf")
    h = 0.5
    for level in range(max_level):
        lx, lxc, lj = _tanh_sinh_nodes(h, tmax)
        with np.errstate(over="ignore"):
            total = h * np.sum(np.exp(log_integrand(lx, lxc) + lj), axis=-1)
        if prev is not None and level >= 2:
            err = np.max(np.abs(total - prev) / np.maximum(np.abs(total), 1e-300))
            if err <= tol:
                return total
        prev = total
        h *= 0.5
    raise QuadratureError(f"tanh-sinh quadrature stalled at relative change {err:.3e}")


def _hyp2f1_euler(a, b, c, z, zc, tol):
    z = np.atleast_1d(np.asarray(z, dtype=np.float64))
    zc = np.atleast_1d(np.asarray(zc, dtype=np.float64))

    def log_g(lx, lxc):
        # 1 - z xi = (1 - z) + z (1 - xi)
        one_minus = zc[:, None] + z[:, None] * np.exp(lxc)[None, :]
        return ((b - 1.0) * lx + (c - b - 1.0) * lxc)[None, :] - a * np.log(one_minus)

    integral = tanh_sinh_01(log_g, tol=tol, min_exponent=min(b, c - b))
    return integral * np.exp(-log_beta(b, c - b))


def gauss_2f1(a: float, b: float, c: float, z, tol: float = 1e-10):
    """Gauss hypergeometric 2F1(a, b; c; z) for c > b > 0 and 0 <= z < 1.

    Evaluates the Euler integral with tanh-sinh quadrature.
    """
    if not (b > 0.0 and c > b):
        raise DomainError("Euler representation needs c > b > 0")
    z_arr = np.asarray(z, dtype=np.float64)
    if np.any((z_arr < 0.0) | (z_arr >= 1.0)) or np.any(np.isnan(z_arr)):
        raise DomainError("gauss_2f1 requires 0 <= z < 1")
    out = _hyp2f1_euler(a, b, c, z_arr.ravel(), 1.0 - z_arr.ravel(), tol).reshape(z_arr.shape)
    return out[()] if out.ndim == 0 else out


def _check_d_alpha(d, alpha):
    if int(d) != d or d < 1:
        raise DomainError("dimension must be a positive integer")
    if not 0.0 < alpha < 2.0:
        raise DomainError("alpha must lie in (0, 2)")


def log_kappa(d: int, alpha: float) -> float:
    _check_d_alpha(d, alpha)
    return (
        log_gamma(d / 2.0)
        - alpha * math.log(2.0)
        - log_gamma(1.0 + alpha / 2.0)
        - log_gamma((d + alpha) / 2.0)
    )


def kappa_d_alpha(d: int, alpha: float) -> float:
    """Mean exit time of the unit ball for the isotropic alpha-stable process."""
    return math.exp(log_kappa(d, alpha))


def frac_laplacian_ball_constant(d: int, alpha: float) -> float:
    """C with (-Delta)^(alpha/2) (1-|x|^2)_+^(alpha/2) = C on the unit ball of R^d."""
    _check_d_alpha(d, alpha)
    return math.exp(
        alpha * math.log(2.0)
        + log_gamma(1.0 + alpha / 2.0)
        + log_gamma((d + alpha) / 2.0)
        - log_gamma(d / 2.0)
    )


def mean_exit_time(r: float, d: int, alpha: float) -> float:
    if r < 0:
        raise DomainError("radius must be nonnegative")
    return r**alpha * kappa_d_alpha(d, alpha)


def second_exit_moment(r: float, d: int, alpha: float, tol: float = 1e-8) -> float:
    """E[tau_r^2] for the ball of radius r (diagnostic only).

    After nu = r^2 w the radial integral becomes
    alpha r^(2 alpha) kappa^2 * int_0^1 w^(alpha/2 - 1) 2F1(-alpha/2, d/2; (d+alpha)/2; w) dw.
    """
    if r < 0:
        raise DomainError("radius must be nonnegative")
    if r == 0:
        return 0.0
    _check_d_alpha(d, alpha)
    a, b, c = -alpha / 2.0, d / 2.0, (d + alpha) / 2.0

    def log_outer(lw, lwc):
        w = np.exp(lw)
        wc = np.exp(lwc)
        inner = _hyp2f1_euler(a, b, c, np.exp(lw), np.exp(lwc), tol * 1e-2)
        return (alpha / 2.0 - 1.0) * lw + np.log(inner)

    integral = tanh_sinh_01(log_outer, tol=tol, min_exponent=min(alpha / 2.0, 1.0))
    k = kappa_d_alpha(d, alpha)
    return float(alpha * r ** (2 * alpha) * k * k * integral)
