"""Benchmark and acceptance-criterion derivation from traffic statistics."""

from __future__ import annotations

from .core import (
    AcceptanceCriterion,
    Benchmark,
    FactorSet,
    FactorTrail,
    HazardousBehavior,
    Rationale,
    TrafficStatistic,
    combine_factors,
)
from .errors import IntegrityError

__all__ = ["derive_benchmark", "derive_acceptance_criterion", "recombine_trail"]


def derive_benchmark(stat: TrafficStatistic) -> Benchmark:
    """Average distance between benchmark events, ``B = M / A``."""
    return Benchmark(stat.total_distance_M / stat.event_count_A, stat)


def derive_acceptance_criterion(
    benchmark: Benchmark,
    factors: FactorSet | None = None,
    hb: HazardousBehavior | str = "HB",
    rationale: Rationale | str = Rationale.PRB,
) -> AcceptanceCriterion:
    """Acceptance rate ``A_H = kappa2 * epsilon / (kappa1 * B)`` with its trail.

    >>> stat = TrafficStatistic(1.5e6, 1.0)
    >>> c = derive_acceptance_criterion(derive_benchmark(stat), FactorSet(10, 0.8))
    >>> round(c.rate_AH * 1e8, 4)
    5.3333
    """
    factors = FactorSet() if factors is None else factors
    if isinstance(hb, str):
        hb = HazardousBehavior(hb)
    rate = combine_factors(benchmark.distance_between_events_B, factors)
    return AcceptanceCriterion(rate, hb, Rationale(rationale), FactorTrail(factors, benchmark))


def recombine_trail(criterion: AcceptanceCriterion) -> float:
    """Recompute ``A_H`` from the stored benchmark and factors.

    Raises IntegrityError when the result differs from the stored rate in any
    bit. Criteria entered directly as a rate carry no trail and return their
    stored rate.
    """
    if criterion.factor_trail is None:
        return criterion.rate_AH
    rate = criterion.factor_trail.recombine()
    if rate != criterion.rate_AH:
        raise IntegrityError(
            f"criterion for {criterion.hb.id!r} is corrupted: trail gives {rate!r}, "
            f"stored {criterion.rate_AH!r}"
        )
    return rate
