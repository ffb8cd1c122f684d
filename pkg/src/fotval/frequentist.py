"""Poisson zero/low-failure demonstration tests with a fixed driving distance."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

from .core import (
    AcceptanceCriterion,
    EventLog,
    Model,
    TestParameters,
    ValidationTarget,
    Verdict,
)
from .errors import NumericalError, ProtocolError, ValidationError
from .special import poisson_cdf

__all__ = [
    "poisson_cdf",
    "invert_poisson_cdf",
    "validation_target",
    "decide",
    "evaluate",
    "FieldTest",
    "OperatingCharacteristic",
    "pass_probability",
    "sensitivity_table",
]

LAMBDA_RTOL = 1e-12


def invert_poisson_cdf(k: int, alpha: float) -> float:
    """Unique ``lam`` with ``poisson_cdf(k, lam) == alpha``, by bisection.

    The returned value is the upper end of the final bracket, so
    ``poisson_cdf(k, result) <= alpha`` holds.
    """
    if not 0 < alpha < 1:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha!r}")
    lo = 0.0
    hi = k + 50.0 * (math.sqrt(k) + 1.0)
    for _ in range(64):
        if poisson_cdf(k, hi) <= alpha:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise NumericalError(f"could not bracket the Poisson quantile for k={k}, alpha={alpha}")
    while hi - lo > LAMBDA_RTOL * hi:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if poisson_cdf(k, mid) > alpha:
            lo = mid
        else:
            hi = mid
    return hi


def validation_target(criterion: AcceptanceCriterion, params: TestParameters) -> ValidationTarget:
    """Shortest distance whose Poisson test bounds the type I error by alpha.

    For ``k = 0`` this is the closed form ``-ln(alpha) / A_H``; otherwise the
    expected event count is found by bisection and divided by ``A_H``.
    """
    if params.k == 0:
        tau = -math.log(params.alpha) / criterion.rate_AH
    else:
        tau = invert_poisson_cdf(params.k, params.alpha) / criterion.rate_AH
    return ValidationTarget(tau, params, criterion, Model.POISSON_NHST)


class Decision(NamedTuple):
    verdict: Verdict
    distance: Optional[float]


def decide(target: ValidationTarget, log: EventLog) -> Decision:
    """Verdict plus the distance at which it was reached (None if running).

    The test fails at the stamp of the ``(k+1)``-th event inside ``[0, tau]``
    and passes at ``tau``. Anything logged after ``tau`` is ignored.
    """
    k = target.params.k
    tau = target.distance_tau
    if log.events_until(tau) > k:
        return Decision(Verdict.FAIL, float(log.events[k]))
    if log.total_distance >= tau:
        return Decision(Verdict.PASS, tau)
    return Decision(Verdict.INCOMPLETE, None)


def evaluate(target: ValidationTarget, log: EventLog) -> Verdict:
    return decide(target, log).verdict


class FieldTest:
    """Single-shot evaluation of one validation target.

    Once a Pass or Fail has been issued the test is closed; presenting any
    other log afterwards (for example the same campaign driven further)
    raises ProtocolError, since continuing after a verdict inflates the type I
    error above alpha.
    """

    def __init__(self, target: ValidationTarget):
        self.target = target
        self._closed: Optional[tuple[EventLog, Verdict]] = None

    @property
    def concluded(self) -> bool:
        return self._closed is not None

    @property
    def verdict(self) -> Optional[Verdict]:
        return None if self._closed is None else self._closed[1]

    def evaluate(self, log: EventLog) -> Verdict:
        if self._closed is not None:
            closed_log, verdict = self._closed
            if log == closed_log:
                return verdict
            raise ProtocolError(
                f"test already concluded with {verdict.value} at "
                f"{closed_log.total_distance:g} km; extending it would inflate the "
                "type I error above alpha. Modify the system and start a new test."
            )
        verdict = evaluate(self.target, log)
        if verdict is not Verdict.INCOMPLETE:
            self._closed = (log, verdict)
        return verdict

    def to_record(self) -> dict:
        rec = {"target": self.target.to_dict(), "verdict": None, "log": None}
        if self._closed is not None:
            rec["log"] = self._closed[0].to_dict()
            rec["verdict"] = self._closed[1].value
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "FieldTest":
        test = cls(ValidationTarget.from_dict(rec["target"]))
        if rec.get("verdict") is not None:
            test._closed = (EventLog.from_dict(rec["log"]), Verdict(rec["verdict"]))
        return test


@dataclass(frozen=True)
class OperatingCharacteristic:
    true_rate_R: float
    pass_probability: float


def pass_probability(target: ValidationTarget, true_rate_R: float) -> OperatingCharacteristic:
    """Probability that a system with true rate R passes the target."""
    r = float(true_rate_R)
    if not r >= 0 or math.isinf(r):
        raise ValidationError(f"true rate must be finite and >= 0, got {true_rate_R!r}")
    return OperatingCharacteristic(r, poisson_cdf(target.params.k, r * target.distance_tau))


def sensitivity_table(
    criterion: AcceptanceCriterion, alphas: Sequence[float], ks: Sequence[int]
) -> list[list[ValidationTarget]]:
    """Targets for every (alpha, k) pair; rows follow ``alphas``, columns ``ks``."""
    if len(alphas) == 0 or len(ks) == 0:
        raise ValidationError("sensitivity table needs at least one alpha and one k")
    return [[validation_target(criterion, TestParameters(a, k)) for k in ks] for a in alphas]
