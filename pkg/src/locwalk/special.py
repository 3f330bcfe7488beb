"""Standard normal distribution and regularized incomplete gamma functions.

The incomplete gamma uses the power series for ``x < a + 1`` and the modified
Lentz continued fraction otherwise, giving about 1e-14 relative accuracy over
the ranges the experiments touch (``a`` up to a few thousand).
"""

from __future__ import annotations

import math

import numpy as np

_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 100_000


def normal_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x - _LOG_SQRT_2PI)


def normal_cdf(x: float) -> float:
    """P(Z <= x), accurate in the left tail."""
    return 0.5 * math.erfc(-x / _SQRT2)


def normal_sf(x: float) -> float:
    """P(Z >= x), accurate in the right tail."""
    return 0.5 * math.erfc(x / _SQRT2)


def normal_interval(a: float, b: float) -> float:
    """P(a <= Z <= b) without cancellation when both ends sit in one tail."""
    if a > b:
        raise ValueError("empty interval")
    if a >= 0.0:
        return normal_sf(a) - normal_sf(b)
    if b <= 0.0:
        return normal_cdf(b) - normal_cdf(a)
    return 1.0 - normal_cdf(a) - normal_sf(b)


def _gamma_series(a: float, x: float) -> float:
    # returns log of sum_{k>=0} x^k / (a (a+1) ... (a+k))
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            return math.log(total)
    raise ArithmeticError(f"incomplete gamma series did not converge (a={a}, x={x})")


def _gamma_cfrac(a: float, x: float) -> float:
    # log of the continued fraction for Q(a, x) * Gamma(a) * e^x * x^-a
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return math.log(h)
    raise ArithmeticError(f"incomplete gamma continued fraction did not converge (a={a}, x={x})")


def log_gammainc_lower(a: float, x: float) -> float:
    """log P(a, x) for the regularized lower incomplete gamma function."""
    if a <= 0.0:
        raise ValueError("a must be positive")
    if x < 0.0:
        raise ValueError("x must be nonnegative")
    if x == 0.0:
        return -math.inf
    if math.isinf(x):
        return 0.0
    prefix = -x + a * math.log(x) - math.lgamma(a)
    if x < a + 1.0:
        return prefix + _gamma_series(a, x)
    q = math.exp(prefix + _gamma_cfrac(a, x))
    return math.log1p(-q)


def gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    return math.exp(log_gammainc_lower(a, x))


def gammainc_upper(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x)."""
    if a <= 0.0:
        raise ValueError("a must be positive")
    if x < 0.0:
        raise ValueError("x must be nonnegative")
    if x == 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    prefix = -x + a * math.log(x) - math.lgamma(a)
    if x < a + 1.0:
        return -math.expm1(prefix + _gamma_series(a, x))
    return math.exp(prefix + _gamma_cfrac(a, x))


def chi2_cdf(x: float, k: float) -> float:
    """P(chi^2_k <= x)."""
    if x <= 0.0:
        return 0.0
    return gammainc_lower(0.5 * k, 0.5 * x)


def log_chi2_cdf(x: float, k: float) -> float:
    if x <= 0.0:
        return -math.inf
    return log_gammainc_lower(0.5 * k, 0.5 * x)


normal_cdf_array = np.vectorize(normal_cdf, otypes=[float])
normal_sf_array = np.vectorize(normal_sf, otypes=[float])
