import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fotval.core import AcceptanceCriterion, EventLog, TestParameters, Verdict
from fotval.errors import ProtocolError, ValidationError
from fotval.frequentist import (
    FieldTest,
    decide,
    evaluate,
    invert_poisson_cdf,
    pass_probability,
    sensitivity_table,
    validation_target,
)
from fotval.special import poisson_cdf


def _target(rate=1e-6, alpha=0.05, k=0):
    return validation_target(AcceptanceCriterion.from_rate(rate), TestParameters(alpha, k))


def test_zero_event_target():
    assert _target().distance_tau == pytest.approx(2.9957323e6, rel=1e-7)


def test_one_event_target():
    t = _target(k=1)
    lam = t.distance_tau * 1e-6
    assert lam == pytest.approx(4.743865, rel=1e-6)
    assert math.exp(-lam) * (1 + lam) == pytest.approx(0.05, rel=1e-11)


def test_alpha_near_one_gives_short_target():
    assert _target(alpha=1 - 1e-9).distance_tau < 1e-2


def test_bisection_agrees_with_closed_form_for_k0():
    for alpha in (1e-6, 0.01, 0.05, 0.3, 0.9):
        assert invert_poisson_cdf(0, alpha) == pytest.approx(-math.log(alpha), rel=1e-10)


@pytest.mark.parametrize("k", [0, 1, 5, 50, 1000, 10**6])
def test_inverted_mean_satisfies_bound(k):
    lam = invert_poisson_cdf(k, 0.05)
    assert poisson_cdf(k, lam) <= 0.05 * (1 + 1e-12)
    assert poisson_cdf(k, lam * (1 - 1e-9)) > 0.05


def test_bad_alpha():
    with pytest.raises(ValidationError):
        invert_poisson_cdf(0, 1.0)


@pytest.mark.parametrize(
    "total, events, verdict",
    [(3e6, [], Verdict.PASS), (3e6, [1.2e6], Verdict.FAIL), (2e6, [], Verdict.INCOMPLETE)],
)
def test_evaluate_examples(total, events, verdict):
    target = _target(rate=-math.log(0.05) / 3e6)
    assert evaluate(target, EventLog(total, events)) is verdict


def test_fail_is_reported_at_the_excess_event():
    target = _target(k=1)
    d = decide(target, EventLog(4e6, [1e6, 2e6, 3e6]))
    assert d == (Verdict.FAIL, 2e6)


def test_events_beyond_tau_do_not_count():
    target = _target()
    log = EventLog(target.distance_tau + 10, [target.distance_tau + 5])
    assert evaluate(target, log) is Verdict.PASS


@settings(max_examples=200, deadline=None)
@given(k=st.integers(0, 4), stamps=st.lists(st.floats(0, 1e7), max_size=12, unique=True), extra=st.floats(0, 1e7))
def test_never_pass_with_too_many_events(k, stamps, extra):
    stamps = sorted(stamps)
    total = (stamps[-1] if stamps else 0.0) + extra + 1.0
    log = EventLog(total, stamps)
    target = _target(k=k)
    if log.events_until(target.distance_tau) > k:
        assert evaluate(target, log) is Verdict.FAIL
    if log.n_events > k:
        assert evaluate(target, log) is not Verdict.PASS or log.events_until(target.distance_tau) <= k


def test_field_test_is_single_shot():
    test = FieldTest(_target())
    assert test.evaluate(EventLog(1e6, [])) is Verdict.INCOMPLETE
    log = EventLog(3e6, [])
    assert test.evaluate(log) is Verdict.PASS
    assert test.evaluate(EventLog(3e6, [])) is Verdict.PASS  # same log again is harmless
    with pytest.raises(ProtocolError) as info:
        test.evaluate(EventLog(5e6, [4e6]))
    assert info.value.exit_code == 4
    restored = FieldTest.from_record(test.to_record())
    assert restored.concluded and restored.verdict is Verdict.PASS
    with pytest.raises(ProtocolError):
        restored.evaluate(EventLog(6e6, []))


def test_pass_probability_examples():
    t = _target()
    assert pass_probability(t, 1e-6).pass_probability == pytest.approx(0.05, rel=1e-12)
    assert pass_probability(t, 0.0).pass_probability == 1.0
    assert pass_probability(t, 2e-6).pass_probability == pytest.approx(0.0025, rel=1e-11)


@pytest.mark.parametrize("k", [0, 1, 3])
def test_type_one_bound_over_rates(k):
    t = _target(k=k)
    at = pass_probability(t, 1e-6).pass_probability
    assert at <= 0.05 * (1 + 1e-12)
    for r in np.geomspace(1.0001e-6, 1e-3, 40):
        assert pass_probability(t, r).pass_probability < 0.05


def test_sensitivity_examples():
    crit = AcceptanceCriterion.from_rate(1e-6)
    grid = sensitivity_table(crit, [0.05, 0.10, 0.5], [0, 1])
    assert [row[0].distance_tau for row in grid] == pytest.approx([2.9957e6, 2.3026e6, 6.9315e5], rel=1e-4)
    assert all(row[1].distance_tau > row[0].distance_tau for row in grid)
    with pytest.raises(ValidationError):
        sensitivity_table(crit, [], [0])
    with pytest.raises(ValidationError):
        sensitivity_table(crit, [0.05], [])
