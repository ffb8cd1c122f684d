"""Domain types shared by every computation module.

Rates are per kilometre and distances are kilometres throughout. Every type
is a frozen dataclass that validates itself on construction and round-trips
through ``to_dict`` / ``from_dict`` (plain JSON-compatible values).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .errors import IntegrityError, ValidationError
from .special import poisson_cdf

__all__ = [
    "HazardousBehavior",
    "TrafficStatistic",
    "Benchmark",
    "FactorSet",
    "Rationale",
    "FactorTrail",
    "AcceptanceCriterion",
    "TestParameters",
    "Model",
    "ValidationTarget",
    "EventLog",
    "Verdict",
    "combine_factors",
]

# Relative slack allowed when checking the Poisson bound of a stored target;
# the closed form -ln(alpha)/A_H can land one ulp on the wrong side.
TARGET_BOUND_RTOL = 1e-12


def _finite(name: str, value: Any) -> float:
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{name} must be a real number, got {value!r}") from None
    if not math.isfinite(x):
        raise ValidationError(f"{name} must be finite, got {value!r}")
    return x


def _positive(name: str, value: Any) -> float:
    x = _finite(name, value)
    if x <= 0:
        raise ValidationError(f"{name} must be > 0, got {x!r}")
    return x


def _unit_interval(name: str, value: Any) -> float:
    """Value in the half-open interval (0, 1]."""
    x = _finite(name, value)
    if not 0 < x <= 1:
        raise ValidationError(f"{name} must lie in (0, 1], got {x!r}")
    return x


def _open_probability(name: str, value: Any) -> float:
    x = _finite(name, value)
    if not 0 < x < 1:
        raise ValidationError(f"{name} must lie in (0, 1), got {x!r}")
    return x


class Verdict(str, enum.Enum):
    PASS = "Pass"
    FAIL = "Fail"
    INCOMPLETE = "Incomplete"


class Rationale(str, enum.Enum):
    """Risk acceptance rationale recorded with a criterion (not enforced)."""

    ALARP = "ALARP"
    MEM = "MEM"
    PRB = "PRB"
    GAME_GAMAB = "GAME_GAMAB"
    ENFLI = "ENFLI"
    OTHER = "other"


class Model(str, enum.Enum):
    POISSON_NHST = "PoissonNHST"
    SPRT = "SPRT"
    BAYES = "BayesGammaPoisson"
    EVA = "EVA"


@dataclass(frozen=True)
class HazardousBehavior:
    id: str
    description: str = ""
    severity_note: str = ""

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id.strip():
            raise ValidationError("hazardous behavior id must be a nonempty string")

    def to_dict(self) -> dict:
        return {"id": self.id, "description": self.description, "severity_note": self.severity_note}

    @classmethod
    def from_dict(cls, d: dict) -> "HazardousBehavior":
        return cls(d["id"], d.get("description", ""), d.get("severity_note", ""))


@dataclass(frozen=True)
class TrafficStatistic:
    """Yearly fleet distance ``M`` and yearly benchmark-event count ``A``.

    For a worst-case benchmark ``M`` should be an upper-bound estimate and
    ``A`` a lower-bound estimate; the direction actually used is recorded.
    """

    total_distance_M: float
    event_count_A: float
    source: str = ""
    m_bound: str = "upper"
    a_bound: str = "lower"

    def __post_init__(self):
        object.__setattr__(self, "total_distance_M", _positive("M (km/year)", self.total_distance_M))
        object.__setattr__(self, "event_count_A", _positive("A (events/year)", self.event_count_A))
        for name in ("m_bound", "a_bound"):
            if getattr(self, name) not in ("upper", "lower", "point"):
                raise ValidationError(f"{name} must be 'upper', 'lower' or 'point'")

    @property
    def worst_case(self) -> bool:
        return self.m_bound == "upper" and self.a_bound == "lower"

    def to_dict(self) -> dict:
        return {
            "M_km_per_year": self.total_distance_M,
            "A_events_per_year": self.event_count_A,
            "source": self.source,
            "m_bound": self.m_bound,
            "a_bound": self.a_bound,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrafficStatistic":
        return cls(
            d["M_km_per_year"],
            d["A_events_per_year"],
            d.get("source", ""),
            d.get("m_bound", "upper"),
            d.get("a_bound", "lower"),
        )


@dataclass(frozen=True)
class Benchmark:
    distance_between_events_B: float
    statistic: TrafficStatistic

    def __post_init__(self):
        b = _positive("B (km/event)", self.distance_between_events_B)
        if b != self.statistic.total_distance_M / self.statistic.event_count_A:
            raise ValidationError("benchmark distance must equal M/A exactly")
        object.__setattr__(self, "distance_between_events_B", b)

    def to_dict(self) -> dict:
        return {"B_km": self.distance_between_events_B, "statistic": self.statistic.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "Benchmark":
        return cls(d["B_km"], TrafficStatistic.from_dict(d["statistic"]))


@dataclass(frozen=True)
class FactorSet:
    """Multiplicative refinements applied to the benchmark rate.

    ``kappa1_safety`` (>= 1) tightens the criterion, ``kappa2_justified``
    removes justified manoeuvres from the reference data, and
    ``epsilon_effectiveness`` credits the function with not preventing every
    benchmark event in the field.
    """

    kappa1_safety: float = 1.0
    kappa2_justified: float = 1.0
    epsilon_effectiveness: float = 1.0

    def __post_init__(self):
        k1 = _finite("kappa1", self.kappa1_safety)
        if k1 < 1:
            raise ValidationError(f"kappa1 (safety factor) must be >= 1, got {k1!r}")
        object.__setattr__(self, "kappa1_safety", k1)
        object.__setattr__(self, "kappa2_justified", _unit_interval("kappa2", self.kappa2_justified))
        object.__setattr__(
            self, "epsilon_effectiveness", _unit_interval("epsilon", self.epsilon_effectiveness)
        )

    @property
    def y(self) -> float:
        return self.kappa1_safety

    def to_dict(self) -> dict:
        return {
            "kappa1": self.kappa1_safety,
            "kappa2": self.kappa2_justified,
            "epsilon": self.epsilon_effectiveness,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FactorSet":
        return cls(d.get("kappa1", 1.0), d.get("kappa2", 1.0), d.get("epsilon", 1.0))


def combine_factors(benchmark_distance: float, factors: FactorSet) -> float:
    """Acceptance rate ``kappa2 * epsilon / (kappa1 * B)``.

    The one composition where kappa1 tightens and kappa2, epsilon relax.
    The evaluation order is fixed so recombination is bit-exact.
    """
    return (factors.kappa2_justified * factors.epsilon_effectiveness) / (
        factors.kappa1_safety * benchmark_distance
    )


@dataclass(frozen=True)
class FactorTrail:
    factors: FactorSet
    benchmark: Benchmark

    def recombine(self) -> float:
        return combine_factors(self.benchmark.distance_between_events_B, self.factors)

    def to_dict(self) -> dict:
        return {"factors": self.factors.to_dict(), "benchmark": self.benchmark.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "FactorTrail":
        return cls(FactorSet.from_dict(d["factors"]), Benchmark.from_dict(d["benchmark"]))


@dataclass(frozen=True)
class AcceptanceCriterion:
    """Maximum acceptable rate ``A_H`` (events/km) of one hazardous behavior.

    ``factor_trail`` is None for criteria entered directly as a rate; otherwise
    it must reproduce ``rate_AH`` exactly.
    """

    rate_AH: float
    hb: HazardousBehavior
    rationale: Rationale = Rationale.OTHER
    factor_trail: Optional[FactorTrail] = None

    def __post_init__(self):
        object.__setattr__(self, "rate_AH", _positive("acceptance rate A_H", self.rate_AH))
        object.__setattr__(self, "rationale", Rationale(self.rationale))
        if self.factor_trail is not None and self.factor_trail.recombine() != self.rate_AH:
            raise IntegrityError(
                f"factor trail recombines to {self.factor_trail.recombine()!r}, "
                f"stored rate is {self.rate_AH!r}"
            )

    @classmethod
    def from_rate(cls, rate: float, hb: HazardousBehavior | str = "HB", rationale=Rationale.OTHER):
        if isinstance(hb, str):
            hb = HazardousBehavior(hb)
        return cls(rate, hb, rationale)

    def to_dict(self) -> dict:
        return {
            "rate_AH": self.rate_AH,
            "hb": self.hb.to_dict(),
            "rationale": self.rationale.value,
            "factor_trail": None if self.factor_trail is None else self.factor_trail.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AcceptanceCriterion":
        trail = d.get("factor_trail")
        return cls(
            d["rate_AH"],
            HazardousBehavior.from_dict(d["hb"]),
            Rationale(d.get("rationale", "other")),
            None if trail is None else FactorTrail.from_dict(trail),
        )


@dataclass(frozen=True)
class TestParameters:
    significance_alpha: float
    allowed_events_k: int = 0

    __test__ = False  # not a pytest class

    def __post_init__(self):
        object.__setattr__(
            self, "significance_alpha", _open_probability("alpha", self.significance_alpha)
        )
        k = self.allowed_events_k
        if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k < 0:
            raise ValidationError(f"allowed events k must be a nonnegative integer, got {k!r}")
        object.__setattr__(self, "allowed_events_k", int(k))

    @property
    def alpha(self) -> float:
        return self.significance_alpha

    @property
    def k(self) -> int:
        return self.allowed_events_k

    def to_dict(self) -> dict:
        return {"alpha": self.significance_alpha, "k": self.allowed_events_k}

    @classmethod
    def from_dict(cls, d: dict) -> "TestParameters":
        return cls(d["alpha"], d.get("k", 0))


@dataclass(frozen=True)
class ValidationTarget:
    distance_tau: float
    params: TestParameters
    criterion: AcceptanceCriterion
    model: Model = Model.POISSON_NHST

    def __post_init__(self):
        object.__setattr__(self, "distance_tau", _positive("distance tau", self.distance_tau))
        object.__setattr__(self, "model", Model(self.model))
        if self.model is Model.POISSON_NHST:
            lam = self.criterion.rate_AH * self.distance_tau
            p = poisson_cdf(self.params.k, lam)
            if p > self.params.alpha * (1 + TARGET_BOUND_RTOL):
                raise ValidationError(
                    f"tau={self.distance_tau!r} km does not bound the type I error: "
                    f"P(X <= {self.params.k}) = {p!r} > alpha = {self.params.alpha!r}"
                )

    @property
    def expected_events(self) -> float:
        return self.criterion.rate_AH * self.distance_tau

    def to_dict(self) -> dict:
        return {
            "tau_km": self.distance_tau,
            "params": self.params.to_dict(),
            "criterion": self.criterion.to_dict(),
            "model": self.model.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ValidationTarget":
        return cls(
            d["tau_km"],
            TestParameters.from_dict(d["params"]),
            AcceptanceCriterion.from_dict(d["criterion"]),
            Model(d.get("model", "PoissonNHST")),
        )


def _frozen_array(values, name: str, ndim: int = 1) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.size == 0:
        arr = arr.reshape((0,) if ndim == 1 else (0, 2))
    if arr.ndim != ndim or (ndim == 2 and arr.shape[1] != 2):
        raise ValidationError(f"{name} has the wrong shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EventLog:
    """Distance-stamped observations from one test campaign.

    ``events`` holds strictly increasing stamps in ``[0, total_distance]``.
    ``performance_samples`` is an optional ``(m, 2)`` array of
    ``(interval distance, PM extremum)`` rows; ``stratum_labels`` optionally
    tags each event with the route stratum it was observed in.
    """

    total_distance: float
    events: np.ndarray = field(default_factory=lambda: np.empty(0))
    performance_samples: Optional[np.ndarray] = None
    stratum_labels: Optional[tuple] = None

    def __post_init__(self):
        total = _finite("total distance", self.total_distance)
        if total < 0:
            raise ValidationError("total distance must be >= 0")
        object.__setattr__(self, "total_distance", total)
        ev = _frozen_array(self.events, "event stamps")
        if ev.size:
            if np.any(np.diff(ev) <= 0):
                raise ValidationError("event stamps must be strictly increasing")
            if ev[0] < 0 or ev[-1] > total:
                raise ValidationError("event stamps must lie within [0, total distance]")
        object.__setattr__(self, "events", ev)
        if self.performance_samples is not None:
            pm = _frozen_array(self.performance_samples, "performance samples", ndim=2)
            if pm.size:
                d = pm[:, 0]
                if np.any(np.diff(d) <= 0):
                    raise ValidationError("performance sample distances must be strictly increasing")
                if d[0] < 0 or d[-1] > total:
                    raise ValidationError("performance sample distances must lie within [0, total distance]")
            object.__setattr__(self, "performance_samples", pm)
        if self.stratum_labels is not None:
            labels = tuple(str(s) for s in self.stratum_labels)
            if len(labels) != ev.size:
                raise ValidationError("one stratum label is required per event")
            object.__setattr__(self, "stratum_labels", labels)

    @property
    def n_events(self) -> int:
        return int(self.events.size)

    def events_until(self, distance: float) -> int:
        return int(np.searchsorted(self.events, distance, side="right"))

    def __eq__(self, other):
        if not isinstance(other, EventLog):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def to_dict(self) -> dict:
        return {
            "total_distance_km": self.total_distance,
            "events_km": self.events.tolist(),
            "performance_samples": None
            if self.performance_samples is None
            else self.performance_samples.tolist(),
            "stratum_labels": None if self.stratum_labels is None else list(self.stratum_labels),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EventLog":
        pm = d.get("performance_samples")
        labels = d.get("stratum_labels")
        return cls(
            d["total_distance_km"],
            d.get("events_km", []),
            None if pm is None else pm,
            None if labels is None else tuple(labels),
        )

