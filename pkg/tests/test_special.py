import math

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fotval.errors import ValidationError
from fotval.special import gamma_cdf, poisson_cdf, regularized_gamma_p, regularized_gamma_q


def test_poisson_cdf_fixed_points():
    assert poisson_cdf(0, 0.0) == 1.0
    assert poisson_cdf(5, 0.0) == 1.0
    assert poisson_cdf(0, math.log(20)) == pytest.approx(0.05, rel=1e-15)
    # four-term sum evaluated at 50 digits
    assert poisson_cdf(3, 2.0) == pytest.approx(0.857123460498547, rel=1e-14)


def test_poisson_cdf_deep_tail_keeps_relative_precision():
    mpmath.mp.dps = 60
    got = poisson_cdf(2, 400.0)
    lam = mpmath.mpf(400)
    want = mpmath.exp(-lam) * (1 + lam + lam**2 / 2)
    assert got > 0
    assert abs(got - float(want)) / float(want) < 1e-12


@pytest.mark.parametrize("k, lam", [(-1, 1.0), (1.5, 1.0), (1, -0.1), (1, math.inf), (1, math.nan)])
def test_poisson_cdf_rejects_bad_input(k, lam):
    with pytest.raises(ValidationError):
        poisson_cdf(k, lam)


@settings(max_examples=200, deadline=None)
@given(k=st.integers(0, 60), lam=st.floats(0, 150), dl=st.floats(0, 20))
def test_poisson_cdf_monotone(k, lam, dl):
    assert poisson_cdf(k, lam + dl) <= poisson_cdf(k, lam)
    assert poisson_cdf(k + 1, lam) >= poisson_cdf(k, lam)
    assert 0.0 <= poisson_cdf(k, lam) <= 1.0


@pytest.mark.parametrize("a", [0.3, 1.0, 2.5, 7.0, 40.0])
@pytest.mark.parametrize("x", [0.01, 0.5, 1.0, 3.0, 10.0, 60.0])
def test_gamma_p_matches_density_quadrature(a, x):
    # brute-force integration of the gamma density, independent of any special function
    f = lambda t: math.exp((a - 1) * math.log(t) - t - math.lgamma(a))
    split = min(x, max(a - 1, 1e-3))
    lo, _ = integrate.quad(f, 0, split, epsabs=1e-13, epsrel=1e-13, limit=200)
    hi, _ = integrate.quad(f, split, x, epsabs=1e-13, epsrel=1e-13, limit=200) if x > split else (0.0, 0.0)
    assert abs(regularized_gamma_p(a, x) - (lo + hi)) < 1e-9


@pytest.mark.parametrize("a, x", [(0.5, 0.2), (3.0, 2.0), (3.0, 4.0), (50.0, 49.0), (50.0, 80.0), (1e-3, 1e-4)])
def test_gamma_p_q_against_mpmath(a, x):
    mpmath.mp.dps = 40
    p = float(mpmath.gammainc(a, 0, x, regularized=True))
    q = float(mpmath.gammainc(a, x, mpmath.inf, regularized=True))
    assert regularized_gamma_p(a, x) == pytest.approx(p, rel=1e-12, abs=1e-300)
    assert regularized_gamma_q(a, x) == pytest.approx(q, rel=1e-12, abs=1e-300)


def test_gamma_edges():
    assert regularized_gamma_p(2.0, 0.0) == 0.0
    assert regularized_gamma_q(2.0, 0.0) == 1.0
    # shape 1 is exponential
    assert gamma_cdf(3e6, 1.0, 1e-6) == pytest.approx(1 - math.exp(-3.0), rel=1e-14)
    with pytest.raises(ValidationError):
        regularized_gamma_p(0.0, 1.0)
    with pytest.raises(ValidationError):
        regularized_gamma_p(1.0, -1.0)


def test_gamma_q_equals_poisson_cdf():
    # P(N <= k) for N ~ Poisson(lam) is Q(k+1, lam)
    for k in (0, 1, 4, 20):
        for lam in (0.3, 5.0, 30.0):
            assert regularized_gamma_q(k + 1, lam) == pytest.approx(poisson_cdf(k, lam), rel=1e-12)
