"""Structural reductions: criterion budgets, precursor decomposition, redundancy."""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.special import bdtr

from .core import AcceptanceCriterion, HazardousBehavior, TestParameters, ValidationTarget
from .errors import PreconditionError, ValidationError
from .frequentist import validation_target

__all__ = [
    "CriterionBudget",
    "split_criterion",
    "HbDecomposition",
    "decomposed_target",
    "bound_conditional_p",
    "RedundancyModel",
    "redundancy_rate",
    "channel_allocation",
]

# Budget shares may exceed 1 by at most this much float round-off.
SHARE_SUM_ATOL = 1e-12

INDEPENDENCE_CAVEAT = (
    "the product rule is only valid if the channels (or precursor and outcome) "
    "fail independently; no method is established yet for justifying that when "
    "system dependence cannot be ruled out"
)


@dataclass(frozen=True)
class CriterionBudget:
    """Allocation of a parent criterion to sub-behaviors by rate fraction."""

    parent: AcceptanceCriterion
    shares: tuple

    def __post_init__(self):
        shares = tuple((str(sid), float(f)) for sid, f in self.shares)
        if not shares:
            raise ValidationError("budget needs at least one share")
        ids = [sid for sid, _ in shares]
        if len(set(ids)) != len(ids):
            raise ValidationError("budget share ids must be unique")
        for sid, f in shares:
            if not 0 < f <= 1:
                raise ValidationError(f"share for {sid!r} must lie in (0, 1], got {f!r}")
        total = math.fsum(f for _, f in shares)
        if total > 1 + SHARE_SUM_ATOL:
            raise ValidationError(f"budget shares sum to {total:.12g} > 1 (over-allocation)")
        object.__setattr__(self, "shares", shares)


def split_criterion(budget: CriterionBudget) -> list[AcceptanceCriterion]:
    parent = budget.parent
    return [
        AcceptanceCriterion(
            fraction * parent.rate_AH,
            HazardousBehavior(sid, f"{fraction:g} share of {parent.hb.id}"),
            parent.rationale,
        )
        for sid, fraction in budget.shares
    ]


@dataclass(frozen=True)
class HbDecomposition:
    """HB = precursor followed by an outcome with probability ``conditional_p``.

    ``conditional_p_upper_confidence`` is the upper confidence bound actually
    used for planning; ``confidence`` records its level, if known.
    """

    precursor_id: str
    conditional_p: float
    conditional_p_upper_confidence: float
    independence_assumed: bool = True
    confidence: float | None = None

    def __post_init__(self):
        p, pbar = float(self.conditional_p), float(self.conditional_p_upper_confidence)
        if not 0 <= p <= 1:
            raise ValidationError(f"conditional probability must lie in [0, 1], got {p!r}")
        if pbar <= 0:
            raise ValidationError(
                "upper confidence bound of the conditional probability must be > 0 "
                "(zero would allow an unbounded precursor rate)"
            )
        if not p <= pbar <= 1:
            raise ValidationError(f"need conditional_p <= upper bound <= 1, got {p!r}, {pbar!r}")
        object.__setattr__(self, "conditional_p", p)
        object.__setattr__(self, "conditional_p_upper_confidence", pbar)

    @classmethod
    def from_trials(cls, precursor_id: str, trials: int, occurrences: int, confidence: float):
        pbar = bound_conditional_p(trials, occurrences, confidence)
        return cls(precursor_id, occurrences / trials, pbar, True, confidence)


def decomposed_target(
    criterion: AcceptanceCriterion, decomp: HbDecomposition, params: TestParameters
) -> ValidationTarget:
    """Validation target for the precursor at rate ``A_H / p_upper``.

    The driving requirement shrinks by exactly the factor ``p_upper``. The
    confidence of the bound on ``p_upper`` is not folded into ``params``.
    """
    if not decomp.independence_assumed:
        raise PreconditionError(f"decomposition refused: {INDEPENDENCE_CAVEAT}")
    pre = AcceptanceCriterion(
        criterion.rate_AH / decomp.conditional_p_upper_confidence,
        HazardousBehavior(decomp.precursor_id, f"precursor of {criterion.hb.id}"),
        criterion.rationale,
    )
    return validation_target(pre, params)


def _check_trials(trials, occurrences):
    for name, v in (("trials", trials), ("occurrences", occurrences)):
        if isinstance(v, bool) or int(v) != v or v < 0:
            raise ValidationError(f"{name} must be a nonnegative integer, got {v!r}")
    if trials <= 0:
        raise ValidationError("trials must be > 0")
    if occurrences > trials:
        raise ValidationError("occurrences cannot exceed trials")
    return int(trials), int(occurrences)


def bound_conditional_p(trials: int, occurrences: int, confidence: float) -> float:
    """One-sided exact (Clopper-Pearson) upper confidence bound on a proportion.

    Returns the ``p`` at which seeing at most ``occurrences`` in ``trials`` has
    probability exactly ``1 - confidence``.

    >>> round(bound_conditional_p(299, 0, 0.95), 5)
    0.00997
    """
    n, x = _check_trials(trials, occurrences)
    if not 0 < confidence < 1:
        raise ValidationError(f"confidence must lie in (0, 1), got {confidence!r}")
    if x == n:
        return 1.0
    if x == 0:
        return -math.expm1(math.log1p(-confidence) / n)
    target = 1.0 - confidence
    lo, hi = x / n, 1.0
    # binomial CDF is strictly decreasing in p
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if bdtr(x, n, mid) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return hi


@dataclass(frozen=True)
class RedundancyModel:
    channel_probabilities: tuple
    demand_rate: float
    independence_assumed: bool = True

    def __post_init__(self):
        probs = tuple(float(p) for p in self.channel_probabilities)
        if not probs:
            raise ValidationError("redundancy model needs at least one channel")
        for p in probs:
            if not 0 < p <= 1:
                raise ValidationError(f"channel failure probability must lie in (0, 1], got {p!r}")
        d = float(self.demand_rate)
        if not d > 0 or math.isinf(d):
            raise ValidationError("demand rate must be finite and > 0")
        object.__setattr__(self, "channel_probabilities", probs)
        object.__setattr__(self, "demand_rate", d)


def redundancy_rate(model: RedundancyModel) -> float:
    """HB rate when every channel must fail on the same demand."""
    if not model.independence_assumed:
        raise PreconditionError(f"redundancy product refused: {INDEPENDENCE_CAVEAT}")
    return model.demand_rate * math.prod(model.channel_probabilities)


def channel_allocation(criterion: AcceptanceCriterion, demand_rate: float, n_channels: int) -> float:
    """Equal per-channel failure probability meeting ``A_H`` under independence.

    Solves ``demand_rate * p**n_channels = A_H``; capped at 1.
    """
    if n_channels < 1:
        raise ValidationError("need at least one channel")
    if not demand_rate > 0:
        raise ValidationError("demand rate must be > 0")
    return min(1.0, (criterion.rate_AH / demand_rate) ** (1.0 / n_channels))

