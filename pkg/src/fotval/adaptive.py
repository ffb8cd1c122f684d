"""Adaptive stopping: Wald's SPRT for Poisson rates and gamma-Poisson updating.

Neither procedure is prescribed by the base model. The SPRT uses Wald's
classic boundaries ``ln((1-beta)/alpha)`` and ``ln(beta/(1-alpha))``; the
Bayesian route uses the conjugate gamma prior on the hazardous-behavior rate.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .core import AcceptanceCriterion, EventLog, Verdict
from .errors import NumericalError, ProtocolError, ValidationError
from .special import regularized_gamma_q

__all__ = [
    "SprtDecision",
    "SprtConfig",
    "SprtState",
    "sprt_update",
    "sprt_advance",
    "run_sprt",
    "sprt_oc",
    "sprt_expected_distance",
    "GammaPrior",
    "bayes_posterior",
    "posterior_probability_acceptable",
    "bayes_required_distance",
    "bayes_decision",
]

# Boundary comparisons tolerate this much round-off, so a step computed to
# land exactly on a boundary is not missed by one ulp.
BOUNDARY_ATOL = 1e-12
# Same convention for the posterior credibility check.
CREDIBILITY_RTOL = 1e-12


class SprtDecision(str, enum.Enum):
    CONTINUE = "Continue"
    ACCEPT_SAFE = "AcceptSafe"
    REJECT_SAFE = "RejectSafe"


@dataclass(frozen=True)
class SprtConfig:
    """H0: rate = ``rate_H0`` (unacceptable, normally A_H) vs H1: ``rate_H1``.

    ``max_distance`` optionally truncates the test; at truncation the
    boundary closest to the current log-likelihood ratio decides.
    """

    rate_H0: float
    rate_H1: float
    alpha: float = 0.05
    beta: float = 0.05
    max_distance: Optional[float] = None

    def __post_init__(self):
        r0, r1 = float(self.rate_H0), float(self.rate_H1)
        if not (0 < r1 < r0) or math.isinf(r0):
            raise ValidationError(f"SPRT needs 0 < rate_H1 < rate_H0, got H0={r0!r}, H1={r1!r}")
        a, b = float(self.alpha), float(self.beta)
        if not (0 < a < 1 and 0 < b < 1) or a + b >= 1:
            raise ValidationError(f"SPRT needs alpha, beta in (0,1) with alpha+beta < 1, got {a}, {b}")
        object.__setattr__(self, "rate_H0", r0)
        object.__setattr__(self, "rate_H1", r1)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)
        if self.max_distance is not None:
            m = float(self.max_distance)
            if not m > 0:
                raise ValidationError("max_distance must be > 0")
            object.__setattr__(self, "max_distance", m)

    @classmethod
    def for_criterion(cls, criterion: AcceptanceCriterion, ratio: float = 0.5, **kw) -> "SprtConfig":
        return cls(criterion.rate_AH, ratio * criterion.rate_AH, **kw)

    @property
    def upper(self) -> float:
        return math.log((1 - self.beta) / self.alpha)

    @property
    def lower(self) -> float:
        return math.log(self.beta / (1 - self.alpha))

    @property
    def event_step(self) -> float:
        """LLR change per observed event, ``ln(r1/r0)`` (negative)."""
        return math.log(self.rate_H1 / self.rate_H0)

    @property
    def distance_slope(self) -> float:
        """LLR change per kilometre without events, ``r0 - r1``."""
        return self.rate_H0 - self.rate_H1

    @property
    def indifference_rate(self) -> float:
        return self.distance_slope / -self.event_step

    def to_dict(self) -> dict:
        return {
            "rate_H0": self.rate_H0,
            "rate_H1": self.rate_H1,
            "alpha": self.alpha,
            "beta": self.beta,
            "max_distance": self.max_distance,
        }


@dataclass(frozen=True)
class SprtState:
    llr: float = 0.0
    distance_so_far: float = 0.0
    events_so_far: int = 0
    decision: SprtDecision = SprtDecision.CONTINUE


def _classify(config: SprtConfig, llr: float, distance: float) -> SprtDecision:
    if llr >= config.upper - BOUNDARY_ATOL * max(1.0, abs(config.upper)):
        return SprtDecision.ACCEPT_SAFE
    if llr <= config.lower + BOUNDARY_ATOL * max(1.0, abs(config.lower)):
        return SprtDecision.REJECT_SAFE
    if config.max_distance is not None and distance >= config.max_distance:
        if config.upper - llr <= llr - config.lower:
            return SprtDecision.ACCEPT_SAFE
        return SprtDecision.REJECT_SAFE
    return SprtDecision.CONTINUE


def sprt_update(config: SprtConfig, state: SprtState, increment: float, new_events: int = 0) -> SprtState:
    """Add ``increment`` km and ``new_events`` events to the state.

    A zero increment is accepted so that an event can be booked at the
    current position.
    """
    if state.decision is not SprtDecision.CONTINUE:
        raise ProtocolError(f"SPRT already decided {state.decision.value}; start a new test")
    increment = float(increment)
    if not increment >= 0 or math.isinf(increment):
        raise ValidationError(f"distance increment must be finite and >= 0, got {increment!r}")
    if isinstance(new_events, bool) or int(new_events) != new_events or new_events < 0:
        raise ValidationError(f"new_events must be a nonnegative integer, got {new_events!r}")
    llr = state.llr + new_events * config.event_step + config.distance_slope * increment
    distance = state.distance_so_far + increment
    return SprtState(llr, distance, state.events_so_far + int(new_events), _classify(config, llr, distance))


def _advance_quiet(config: SprtConfig, state: SprtState, until: float) -> SprtState:
    # Event-free stretch: the LLR rises linearly, so the upper crossing (or
    # truncation) point is known exactly.
    span = until - state.distance_so_far
    if span <= 0:
        return state
    to_upper = (config.upper - state.llr) / config.distance_slope
    stop = span
    if to_upper < stop:
        stop = max(to_upper, 0.0)
    if config.max_distance is not None:
        stop = min(stop, config.max_distance - state.distance_so_far)
    new = sprt_update(config, state, stop, 0)
    if new.decision is SprtDecision.CONTINUE and stop < span:
        # round-off left the LLR a hair under the boundary
        new = replace(new, llr=config.upper, decision=SprtDecision.ACCEPT_SAFE)
    return new


def sprt_advance(
    config: SprtConfig, state: SprtState, event_stamps: Sequence[float], until: float
) -> SprtState:
    """Monitor continuously through the events in ``(state.distance, until]``.

    Stops at the exact distance a boundary is first crossed. Events at or
    before the current position are ignored.
    """
    for stamp in event_stamps:
        if state.decision is not SprtDecision.CONTINUE:
            return state
        if stamp <= state.distance_so_far:
            continue
        if stamp > until:
            break
        state = _advance_quiet(config, state, stamp)
        if state.decision is not SprtDecision.CONTINUE:
            return state
        state = sprt_update(config, state, 0.0, 1)
    if state.decision is SprtDecision.CONTINUE:
        state = _advance_quiet(config, state, until)
    return state


def run_sprt(config: SprtConfig, log: EventLog) -> SprtState:
    return sprt_advance(config, SprtState(), log.events, log.total_distance)


def _wald_h(config: SprtConfig, rate: float) -> float:
    # Nonzero root h of  rate * ((r1/r0)^h - 1) + h (r0 - r1) = 0,
    # i.e. rate(h) = h (r0 - r1) / (1 - (r1/r0)^h), increasing in h.
    lq = config.event_step

    def rate_of(h: float) -> float:
        if abs(h * lq) < 1e-12:
            return config.indifference_rate
        return h * config.distance_slope / -math.expm1(h * lq)

    if math.isclose(rate, config.indifference_rate, rel_tol=1e-12):
        return 0.0
    lo, hi = -1.0, 1.0
    for _ in range(200):
        if rate_of(lo) <= rate <= rate_of(hi):
            break
        if rate < rate_of(lo):
            lo *= 2.0
        else:
            hi *= 2.0
    else:
        raise NumericalError(f"could not bracket the Wald exponent for rate {rate!r}")
    return brentq(lambda h: rate_of(h) - rate, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)


def sprt_oc(config: SprtConfig, true_rate: float) -> float:
    """Wald's approximation of P(RejectSafe) at the given true rate."""
    if true_rate < 0:
        raise ValidationError("true rate must be >= 0")
    ln_a, ln_b = config.upper, config.lower
    if true_rate == 0:
        return 0.0
    h = _wald_h(config, true_rate)
    if h == 0.0:
        return ln_a / (ln_a - ln_b)
    # L = (A^h - 1) / (A^h - B^h), rearranged to avoid overflow
    if h > 0:
        return -math.expm1(-h * ln_a) / -math.expm1(h * (ln_b - ln_a))
    return (math.exp(h * (ln_a - ln_b)) - math.exp(-h * ln_b)) / math.expm1(h * (ln_a - ln_b))


def sprt_expected_distance(config: SprtConfig, true_rate: float) -> float:
    """Wald's average-sample-number approximation of E[distance to decision].

    Ignores overshoot at the lower boundary (events are discrete jumps), so it
    is an approximation, not a bound. At the indifference rate the drift is
    zero and the second-moment form ``-ln A ln B / E[Z^2]`` is used instead.
    """
    ln_a, ln_b = config.upper, config.lower
    if true_rate == 0:
        return ln_a / config.distance_slope
    drift = true_rate * config.event_step + config.distance_slope
    if abs(drift) <= 1e-9 * config.distance_slope:
        return -ln_a * ln_b / (true_rate * config.event_step**2)
    oc = sprt_oc(config, true_rate)
    return (oc * ln_b + (1 - oc) * ln_a) / drift


@dataclass(frozen=True)
class GammaPrior:
    """Gamma(shape ``a``, rate ``b``) belief on the rate, b in km.

    ``a`` acts as a pseudo-event count and ``b`` as pseudo-distance driven.
    """

    shape_a: float
    rate_b: float = 0.0

    def __post_init__(self):
        a, b = float(self.shape_a), float(self.rate_b)
        if not a > 0 or math.isinf(a):
            raise ValidationError(f"prior shape must be finite and > 0, got {a!r}")
        if not b >= 0 or math.isinf(b):
            raise ValidationError(f"prior rate (pseudo-distance) must be finite and >= 0, got {b!r}")
        object.__setattr__(self, "shape_a", a)
        object.__setattr__(self, "rate_b", b)

    def to_dict(self) -> dict:
        return {"a": self.shape_a, "b_km": self.rate_b}


def bayes_posterior(prior: GammaPrior, log: EventLog) -> GammaPrior:
    return GammaPrior(prior.shape_a + log.n_events, prior.rate_b + log.total_distance)


def _upper_tail(dist: GammaPrior, rate: float) -> float:
    # P(R > rate); Q keeps full relative precision where 1 - alpha is close to 1
    return regularized_gamma_q(dist.shape_a, dist.rate_b * rate)


def posterior_probability_acceptable(posterior: GammaPrior, criterion: AcceptanceCriterion) -> float:
    """P(R <= A_H) under the given gamma belief."""
    return 1.0 - _upper_tail(posterior, criterion.rate_AH)


def bayes_required_distance(
    prior: GammaPrior, criterion: AcceptanceCriterion, alpha: float, assumed_events: int = 0
) -> float:
    """Smallest additional distance after which P(R <= A_H) >= 1 - alpha.

    Assumes ``assumed_events`` events will be seen. The credibility grows
    monotonically with distance, so bisection on the gamma argument
    ``A_H * (b + t)`` finds the unique crossing.
    """
    if not 0 < alpha < 1:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha!r}")
    if isinstance(assumed_events, bool) or int(assumed_events) != assumed_events or assumed_events < 0:
        raise ValidationError("assumed_events must be a nonnegative integer")
    a = prior.shape_a + assumed_events
    ah = criterion.rate_AH
    if regularized_gamma_q(a, ah * prior.rate_b) <= alpha:
        return 0.0
    lo, hi = ah * prior.rate_b, max(1.0, 2.0 * a)
    while regularized_gamma_q(a, hi) > alpha:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise NumericalError("credibility bound could not be bracketed")
    while hi - lo > 1e-15 * hi:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if regularized_gamma_q(a, mid) > alpha:
            lo = mid
        else:
            hi = mid
    return max(0.0, hi / ah - prior.rate_b)


def bayes_decision(posterior: GammaPrior, criterion: AcceptanceCriterion, alpha: float) -> Verdict:
    """Pass iff P(R <= A_H) >= 1 - alpha (round-off slack 1e-12 relative)."""
    if not 0 < alpha < 1:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha!r}")
    if _upper_tail(posterior, criterion.rate_AH) <= alpha * (1 + CREDIBILITY_RTOL):
        return Verdict.PASS
    return Verdict.INCOMPLETE
