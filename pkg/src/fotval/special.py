"""Numerical kernels: Poisson CDF and the regularized incomplete gamma function."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from .errors import NumericalError, ValidationError

__all__ = ["poisson_cdf", "regularized_gamma_p", "regularized_gamma_q", "gamma_cdf"]

GAMMA_TOL = 1e-14
_MAX_ITER = 100_000
_TINY = 1e-300


def _check_count(k) -> int:
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k < 0:
        raise ValidationError(f"k must be a nonnegative integer, got {k!r}")
    return int(k)


def poisson_cdf(k: int, lam: float) -> float:
    """P(X <= k) for X ~ Poisson(lam).

    Terms are formed in log space (``-lam + i ln lam - ln i!``) and summed
    relative to the largest one, so neither factorials nor ``e^-lam`` overflow
    or underflow prematurely. When ``lam < k + 1`` the result is near one and
    is taken as one minus the upper tail ``P(k + 1, lam)``, which keeps it
    monotone in ``lam`` up to the last bit.
    """
    k = _check_count(k)
    lam = float(lam)
    if not lam >= 0 or math.isinf(lam):
        raise ValidationError(f"lambda must be finite and >= 0, got {lam!r}")
    if lam == 0.0:
        return 1.0
    if k == 0:
        return math.exp(-lam)
    if lam < k + 1.0:
        return max(0.0, 1.0 - _gamma_series(k + 1.0, lam))
    i = np.arange(k + 1, dtype=float)
    logt = i * math.log(lam) - gammaln(i + 1.0)
    m = float(logt.max())
    s = float(np.exp(logt - m).sum())
    return min(1.0, math.exp(m - lam + math.log(s)))


def _gamma_series(a: float, x: float) -> float:
    # P(a, x) by the power series; converges fast for x < a + 1.
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * GAMMA_TOL:
            return total * math.exp(-x + a * math.log(x) - math.lgamma(a))
    raise NumericalError(f"incomplete gamma series did not converge (a={a}, x={x})")


def _gamma_cfrac(a: float, x: float) -> float:
    # Q(a, x) by the Legendre continued fraction, modified Lentz evaluation.
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
        if abs(delta - 1.0) < GAMMA_TOL:
            return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h
    raise NumericalError(f"incomplete gamma continued fraction did not converge (a={a}, x={x})")


def _check_gamma_args(a: float, x: float) -> tuple[float, float]:
    a, x = float(a), float(x)
    if not a > 0 or math.isinf(a):
        raise ValidationError(f"gamma shape must be finite and > 0, got {a!r}")
    if not x >= 0:
        raise ValidationError(f"gamma argument must be >= 0, got {x!r}")
    return a, x


def regularized_gamma_p(a: float, x: float) -> float:
    """Lower regularized incomplete gamma P(a, x); series below x = a + 1."""
    a, x = _check_gamma_args(a, x)
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return min(1.0, _gamma_series(a, x))
    return max(0.0, 1.0 - _gamma_cfrac(a, x))


def regularized_gamma_q(a: float, x: float) -> float:
    """Upper regularized incomplete gamma Q(a, x) = 1 - P(a, x)."""
    a, x = _check_gamma_args(a, x)
    if x == 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _gamma_series(a, x))
    return min(1.0, _gamma_cfrac(a, x))


def gamma_cdf(x: float, shape: float, rate: float) -> float:
    """CDF at ``x`` of a gamma distribution with the given shape and rate."""
    rate = float(rate)
    if not rate >= 0:
        raise ValidationError(f"gamma rate must be >= 0, got {rate!r}")
    if x < 0:
        return 0.0
    return regularized_gamma_p(shape, rate * float(x))
