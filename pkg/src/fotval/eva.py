"""Peaks-over-threshold estimation of the hazardous-behavior rate.

Performance-measure (PM) extrema recorded per interval are thresholded at
``u``; exceedances are declustered, their excesses fitted with a generalized
Pareto distribution (GPD), and the tail is extrapolated to the critical PM
level that is equated with the hazardous behavior:

    rate = zeta * S(xcrit - u),   S(z) = (1 + xi z / sigma) ** (-1 / xi)

Threshold choice is left to the user on purpose.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.stats import chi2

from .core import AcceptanceCriterion, EventLog, Verdict
from .errors import DegenerateDataError, InsufficientDataError, NumericalError, ValidationError

__all__ = [
    "Direction",
    "PotConfig",
    "Exceedances",
    "extract_exceedances",
    "decluster",
    "GpdFit",
    "fit_gpd",
    "gpd_survival",
    "gpd_loglik",
    "sample_gpd",
    "Extrapolation",
    "extrapolate_rate",
    "rate_upper_bound",
    "eva_verdict",
    "rates_across_thresholds",
]

MIN_EXCESSES = 30
LOGLIK_TOL = 1e-10
# |xi| below this is treated as the exponential limit
XI_ZERO = 1e-12


class Direction(str, enum.Enum):
    EXCEED_HIGH = "exceed_high"
    EXCEED_LOW = "exceed_low"


@dataclass(frozen=True)
class PotConfig:
    """Threshold ``u`` and critical level ``xcrit`` on one PM channel.

    ``xcrit`` must lie at or beyond ``u`` in ``direction``. Exceedances
    closer together than ``decluster_gap`` km form one cluster.
    """

    threshold_u: float
    critical_value_xcrit: float
    direction: Direction = Direction.EXCEED_HIGH
    decluster_gap: float = 1.0
    confidence: float = 0.95
    min_excesses: int = MIN_EXCESSES

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        u, x = float(self.threshold_u), float(self.critical_value_xcrit)
        if not (math.isfinite(u) and math.isfinite(x)):
            raise ValidationError("threshold and critical value must be finite")
        if self.sign * (x - u) < 0:
            raise ValidationError(
                f"critical value {x!r} is not beyond threshold {u!r} for {self.direction.value}"
            )
        if not self.decluster_gap >= 0:
            raise ValidationError("decluster gap must be >= 0")
        if not 0 < self.confidence < 1:
            raise ValidationError("confidence must lie in (0, 1)")
        object.__setattr__(self, "threshold_u", u)
        object.__setattr__(self, "critical_value_xcrit", x)

    @property
    def sign(self) -> float:
        return 1.0 if self.direction is Direction.EXCEED_HIGH else -1.0

    @property
    def critical_excess(self) -> float:
        return self.sign * (self.critical_value_xcrit - self.threshold_u)


class Exceedances(NamedTuple):
    excesses: np.ndarray
    zeta: float
    distances: np.ndarray


def decluster(distances: np.ndarray, excesses: np.ndarray, gap: float) -> tuple[np.ndarray, np.ndarray]:
    """Runs declustering: keep the largest excess of each run closer than ``gap``."""
    if distances.size == 0 or gap <= 0:
        return distances, excesses
    starts = np.concatenate(([True], np.diff(distances) >= gap))
    ids = np.cumsum(starts) - 1
    order = np.lexsort((-excesses, ids))
    first = np.concatenate(([True], np.diff(ids[order]) != 0))
    keep = np.sort(order[first])
    return distances[keep], excesses[keep]


def extract_exceedances(log: EventLog, config: PotConfig) -> Exceedances:
    """Sign-normalized excesses over ``u`` and the cluster rate per km."""
    pm = log.performance_samples
    if pm is None or pm.shape[0] == 0:
        raise ValidationError("event log has no performance samples")
    if not log.total_distance > 0:
        raise ValidationError("event log must cover a positive distance")
    z = config.sign * (pm[:, 1] - config.threshold_u)
    mask = z > 0
    d, exc = decluster(pm[mask, 0], z[mask], config.decluster_gap)
    return Exceedances(exc, exc.size / log.total_distance, d)


def gpd_survival(z, xi: float, sigma: float):
    """P(excess > z). Zero beyond the finite endpoint when ``xi < 0``."""
    z = np.asarray(z, dtype=float)
    if abs(xi) < XI_ZERO:
        out = np.exp(-np.maximum(z, 0.0) / sigma)
    else:
        base = 1.0 + xi * np.maximum(z, 0.0) / sigma
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(base > 0, np.power(np.where(base > 0, base, 1.0), -1.0 / xi), 0.0)
    return out if out.ndim else float(out)


def gpd_loglik(z: np.ndarray, xi: float, sigma: float) -> float:
    """Sum of GPD log densities; ``-inf`` outside the support."""
    if sigma <= 0:
        return -math.inf
    n = z.size
    if abs(xi) < XI_ZERO:
        return -n * math.log(sigma) - float(z.sum()) / sigma
    arg = xi * z / sigma
    if np.any(arg <= -1.0):
        return -math.inf
    return -n * math.log(sigma) - (1.0 + 1.0 / xi) * float(np.log1p(arg).sum())


def sample_gpd(rng: np.random.Generator, n: int, xi: float, sigma: float) -> np.ndarray:
    """Inverse-CDF draws from GPD(xi, sigma)."""
    e = rng.standard_exponential(n)  # -ln(1 - U)
    if abs(xi) < XI_ZERO:
        return sigma * e
    return sigma * np.expm1(xi * e) / xi


@dataclass(frozen=True)
class GpdFit:
    shape_xi: float
    scale_sigma: float
    exceedance_rate_zeta: float
    n_exceedances: int
    log_likelihood: float
    endpoint: Optional[float] = None
    flags: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not self.scale_sigma > 0:
            raise ValidationError("GPD scale must be > 0")
        if self.shape_xi < 0 and self.endpoint is None:
            object.__setattr__(self, "endpoint", -self.scale_sigma / self.shape_xi)

    def to_dict(self) -> dict:
        return {
            "xi": self.shape_xi,
            "sigma": self.scale_sigma,
            "zeta_per_km": self.exceedance_rate_zeta,
            "n_exceedances": self.n_exceedances,
            "log_likelihood": self.log_likelihood,
            "endpoint_excess": self.endpoint,
            "flags": list(self.flags),
        }


def _profile_theta(z: np.ndarray, theta: float) -> tuple[float, float, float]:
    # For fixed theta = xi / sigma the likelihood is maximized by
    # xi = mean(log1p(theta z)), sigma = xi / theta; returns (loglik, xi, sigma).
    n = z.size
    if abs(theta) * z[-1] < 1e-9:
        s = float(z.mean())
        return -n * math.log(s) - n, 0.0, s
    xi = float(np.log1p(theta * z).mean())
    sigma = xi / theta
    if not sigma > 0:
        return -math.inf, xi, sigma
    return -n * math.log(sigma) - n * xi - n, xi, sigma


def fit_gpd(
    excesses: Sequence[float] | np.ndarray,
    zeta: float = 0.0,
    min_excesses: int = MIN_EXCESSES,
) -> GpdFit:
    """Maximum-likelihood GPD fit to positive excesses.

    The scale is profiled out analytically by writing the likelihood in
    ``theta = xi / sigma``; the one-dimensional profile is scanned on a grid
    spanning ``xi`` in (-1, ~15) and refined by golden-section search until the
    log-likelihood changes by less than 1e-10. ``theta = 0`` is the exponential
    case, evaluated in closed form.
    """
    z = np.sort(np.asarray(excesses, dtype=float))
    if z.size < min_excesses:
        raise InsufficientDataError(f"need at least {min_excesses} excesses, got {z.size}")
    if np.any(~np.isfinite(z)) or np.any(z <= 0):
        raise ValidationError("excesses must be finite and > 0")
    if z[0] == z[-1]:
        raise DegenerateDataError("all excesses are identical; GPD fit is undefined")
    zmax = z[-1]

    # grid on s = theta * zmax, the support constraint being s > -1
    neg = -(1.0 - np.logspace(-12, -0.05, 40))
    pos = np.logspace(-8, 7, 60)
    grid = np.unique(np.concatenate((neg, -np.logspace(-8, -0.06, 25), [0.0], pos)))

    def objective(s: float) -> float:
        ll, xi, _ = _profile_theta(z, s / zmax)
        # xi < -1 gives an unbounded likelihood at the endpoint; not a fit
        return ll if xi > -1.0 else -math.inf

    values = np.array([objective(s) for s in grid])
    if not np.isfinite(values).any():
        raise NumericalError("GPD likelihood is not finite anywhere on the search grid")
    i = int(np.nanargmax(values))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid.size - 1)]

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = objective(c), objective(d)
    best_s, best_f = grid[i], values[i]
    for _ in range(300):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = objective(d)
        for s, f in ((c, fc), (d, fd)):
            if f > best_f:
                best_s, best_f = s, f
        if b - a <= 1e-14 * max(1.0, abs(a)) or (
            abs(fc - fd) < LOGLIK_TOL and b - a <= 1e-9 * max(1.0, abs(a))
        ):
            break

    ll, xi, sigma = _profile_theta(z, best_s / zmax)
    flags = []
    if np.unique(z).size <= 2:
        flags.append("few-distinct-values")
    if best_s in (grid[0], grid[-1]):
        flags.append("xi-at-search-boundary")
    if xi < -0.5:
        flags.append("xi-below-minus-half-nonregular")
    return GpdFit(float(xi), float(sigma), float(zeta), int(z.size), ll, flags=tuple(flags))


class Extrapolation(NamedTuple):
    rate: float
    beyond_endpoint: bool


def extrapolate_rate(fit: GpdFit, config: PotConfig) -> Extrapolation:
    """HB rate per km at ``xcrit`` from the fitted tail and exceedance rate."""
    zc = config.critical_excess
    if fit.shape_xi < 0 and fit.endpoint is not None and zc >= fit.endpoint:
        return Extrapolation(0.0, True)
    return Extrapolation(fit.exceedance_rate_zeta * gpd_survival(zc, fit.shape_xi, fit.scale_sigma), False)


def _sigma_for_tail(zc: float, lnp: float, xi: np.ndarray) -> np.ndarray:
    # scale giving survival p = exp(lnp) at excess zc
    x = -xi * lnp
    small = np.abs(x) < 1e-12
    with np.errstate(over="ignore"):
        denom = np.expm1(np.where(small, 1.0, x))
    return np.where(small, zc / -lnp, xi * zc / denom)


_XI_GRID = np.linspace(-0.95, 3.0, 80)


def _gpd_profile_at_tail(z: np.ndarray, zc: float, lnp: float) -> float:
    """max over xi of the GPD loglik subject to S(zc) = exp(lnp)."""

    def ll(xi: float) -> float:
        sigma = float(_sigma_for_tail(zc, lnp, np.array([xi]))[0])
        return gpd_loglik(z, xi, sigma)

    vals = np.array([ll(x) for x in _XI_GRID])
    if not np.isfinite(vals).any():
        return -math.inf
    i = int(np.argmax(vals))
    lo = _XI_GRID[max(i - 1, 0)]
    hi = _XI_GRID[min(i + 1, _XI_GRID.size - 1)]
    res = minimize_scalar(lambda x: -ll(x), bounds=(lo, hi), method="bounded", options={"xatol": 1e-8})
    return max(float(-res.fun), float(vals[i]))


def _profile_rate_loglik(z: np.ndarray, distance: float, zc: float, rate: float, zeta_hat: float) -> float:
    # max over (zeta, xi) of  n ln zeta - zeta D + GPD loglik, with zeta * S(zc) = rate
    n = z.size
    lo = math.log(rate) + 1e-12
    width = 10.0 / math.sqrt(n)
    lo = max(lo, math.log(zeta_hat) - width)
    hi = max(lo + 1e-9, math.log(zeta_hat) + width)

    def neg(lz: float) -> float:
        zeta = math.exp(lz)
        lnp = math.log(rate) - lz
        if lnp >= 0:
            return math.inf
        v = n * lz - zeta * distance + _gpd_profile_at_tail(z, zc, lnp)
        return -v if math.isfinite(v) else math.inf

    res = minimize_scalar(neg, bounds=(lo, hi), method="bounded", options={"xatol": 1e-9})
    return -float(res.fun)


def rate_upper_bound(
    excesses: Sequence[float] | np.ndarray,
    total_distance: float,
    config: PotConfig,
    fit: Optional[GpdFit] = None,
    method: str = "profile",
    n_boot: int = 500,
    seed: int = 0,
) -> float:
    """One-sided upper confidence bound on the extrapolated rate.

    ``method="profile"`` (default) inverts the profile likelihood of the
    rate, with the Poisson exceedance count and the GPD tail profiled
    jointly; the cut-off is the chi-square(1) quantile at ``2c - 1``.
    ``method="bootstrap"`` resamples counts and excesses and is meant only
    for cross-checks.
    """
    z = np.sort(np.asarray(excesses, dtype=float))
    if fit is None:
        fit = fit_gpd(z, z.size / total_distance, config.min_excesses)
    zc = config.critical_excess
    if method == "bootstrap":
        return _bootstrap_upper(z, total_distance, config, n_boot, seed)
    if method != "profile":
        raise ValidationError(f"unknown confidence method {method!r}")

    n = z.size
    zeta_hat = n / total_distance
    ll_hat = n * math.log(zeta_hat) - n + fit.log_likelihood
    cut = float(chi2.ppf(2.0 * config.confidence - 1.0, 1))
    r_hat = extrapolate_rate(fit, config).rate
    if zc == 0:
        # pure Poisson count: profile over zeta alone
        def dev0(lr: float) -> float:
            r = math.exp(lr)
            return 2.0 * (ll_hat - (n * lr - r * total_distance + fit.log_likelihood)) - cut

        return math.exp(brentq(dev0, math.log(zeta_hat), math.log(zeta_hat) + 50.0 / math.sqrt(n) + 5))

    def dev(lr: float) -> float:
        return 2.0 * (ll_hat - _profile_rate_loglik(z, total_distance, zc, math.exp(lr), zeta_hat)) - cut

    top = math.log(zeta_hat) + 50.0
    lo = max(math.log(r_hat) if r_hat > 0 else -math.inf, math.log(zeta_hat) - 700.0)
    if dev(lo) > 0:
        # numerical slack at the MLE; the MLE rate is the best available bound
        return max(r_hat, 0.0)
    step = 1.0
    hi = min(lo + step, top)
    while dev(hi) <= 0:
        if hi >= top:
            raise NumericalError("profile likelihood bound could not be bracketed")
        lo, hi = hi, min(hi + step, top)
        step *= 2.0
    return math.exp(brentq(dev, lo, hi, xtol=1e-8))


def _bootstrap_upper(z, distance, config, n_boot, seed) -> float:
    rng = np.random.default_rng(seed)
    rates = []
    for _ in range(n_boot):
        m = int(rng.poisson(z.size))
        if m < config.min_excesses:
            continue
        sample = rng.choice(z, size=m, replace=True)
        if sample.min() == sample.max():
            continue
        f = fit_gpd(sample, m / distance, config.min_excesses)
        rates.append(extrapolate_rate(f, config).rate)
    if not rates:
        raise InsufficientDataError("no bootstrap replicate had enough excesses")
    return float(np.quantile(rates, config.confidence))


def eva_verdict(rate_estimate: float, rate_upper_ci: float, criterion: AcceptanceCriterion) -> Verdict:
    """Pass iff the upper confidence bound is at most A_H (ties pass)."""
    if rate_estimate > rate_upper_ci:
        raise ValidationError("rate estimate exceeds its own upper confidence bound")
    return Verdict.PASS if rate_upper_ci <= criterion.rate_AH else Verdict.FAIL


def rates_across_thresholds(log: EventLog, config: PotConfig, thresholds: Sequence[float]) -> list[float]:
    """Extrapolated rate at the same ``xcrit`` for several thresholds.

    A heuristic stability diagnostic: under a valid POT model the rate should
    not drift much with the threshold.
    """
    out = []
    for u in thresholds:
        cfg = PotConfig(
            u, config.critical_value_xcrit, config.direction, config.decluster_gap,
            config.confidence, config.min_excesses,
        )
        exc = extract_exceedances(log, cfg)
        out.append(extrapolate_rate(fit_gpd(exc.excesses, exc.zeta, cfg.min_excesses), cfg).rate)
    return out
