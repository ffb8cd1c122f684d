import math

import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import beta

from fotval.core import AcceptanceCriterion, TestParameters
from fotval.errors import PreconditionError, ValidationError
from fotval.frequentist import validation_target
from fotval.structure import (
    INDEPENDENCE_CAVEAT,
    CriterionBudget,
    HbDecomposition,
    RedundancyModel,
    bound_conditional_p,
    channel_allocation,
    decomposed_target,
    redundancy_rate,
    split_criterion,
)

CRIT = AcceptanceCriterion.from_rate(1e-6)
PARAMS = TestParameters(0.05, 0)
TAU0 = validation_target(CRIT, PARAMS).distance_tau


def test_split_examples():
    halves = split_criterion(CriterionBudget(CRIT, (("a", 0.5), ("b", 0.5))))
    assert [c.rate_AH for c in halves] == [5e-7, 5e-7]
    assert split_criterion(CriterionBudget(CRIT, (("all", 1.0),)))[0].rate_AH == 1e-6
    with pytest.raises(ValidationError):
        CriterionBudget(CRIT, (("a", 0.9), ("b", 0.2)))
    with pytest.raises(ValidationError):
        CriterionBudget(CRIT, (("a", 0.5), ("a", 0.1)))


@given(st.lists(st.floats(0.01, 1), min_size=1, max_size=6), st.data())
def test_budget_soundness(raw, data):
    total = sum(raw)
    shares = tuple((f"s{i}", f / total) for i, f in enumerate(raw))
    subs = split_criterion(CriterionBudget(CRIT, shares))
    # each sub-system at or below its share keeps the parent within bound
    observed = [c.rate_AH * data.draw(st.floats(0, 1)) for c in subs]
    assert math.fsum(observed) <= CRIT.rate_AH * (1 + 1e-12)


def test_decomposed_target_examples():
    assert decomposed_target(CRIT, HbDecomposition("p", 0.005, 0.01), PARAMS).distance_tau == pytest.approx(2.9957e4, rel=1e-4)
    assert decomposed_target(CRIT, HbDecomposition("p", 1.0, 1.0), PARAMS).distance_tau == TAU0
    half = decomposed_target(CRIT, HbDecomposition("p", 0.5, 0.5), PARAMS).distance_tau
    assert TAU0 / half == pytest.approx(2.0, rel=1e-12)


def test_decomposition_validation():
    with pytest.raises(ValidationError):
        HbDecomposition("p", 0.0, 0.0)
    with pytest.raises(ValidationError):
        HbDecomposition("p", 0.5, 0.4)
    with pytest.raises(PreconditionError, match="independ"):
        decomposed_target(CRIT, HbDecomposition("p", 0.1, 0.1, independence_assumed=False), PARAMS)


def _binom_tail_le(n, k, p):
    return math.fsum(math.comb(n, i) * p**i * (1 - p) ** (n - i) for i in range(k + 1))


def test_bound_examples():
    assert bound_conditional_p(299, 0, 0.95) == pytest.approx(1 - 0.05 ** (1 / 299), rel=1e-10)
    assert bound_conditional_p(299, 0, 0.95) == pytest.approx(0.00997, abs=1e-5)
    assert bound_conditional_p(100, 1, 0.95) == pytest.approx(0.04656, abs=1e-5)
    assert bound_conditional_p(20, 20, 0.95) == 1.0
    with pytest.raises(ValidationError):
        bound_conditional_p(10, 11, 0.95)
    with pytest.raises(ValidationError):
        bound_conditional_p(0, 0, 0.95)


@pytest.mark.parametrize("n", [1, 7, 50, 200])
@pytest.mark.parametrize("k_frac", [0.0, 0.1, 0.5, 0.9])
@pytest.mark.parametrize("c", [0.8, 0.95, 0.99])
def test_bound_satisfies_tail_equation(n, k_frac, c):
    k = int(k_frac * n)
    if k == n:
        return
    p = bound_conditional_p(n, k, c)
    assert abs(_binom_tail_le(n, k, p) - (1 - c)) < 1e-9
    assert p == pytest.approx(beta.ppf(c, k + 1, n - k), rel=1e-8)


@given(st.integers(1, 300), st.integers(0, 20), st.floats(0.5, 0.999))
def test_bound_monotone(n, k, c):
    k = min(k, n - 1) if n > 1 else 0
    p = bound_conditional_p(n, k, c)
    assert bound_conditional_p(n + 1, k, c) <= p * (1 + 1e-9)
    if k + 1 <= n:
        assert bound_conditional_p(n, k + 1, c) >= p * (1 - 1e-9)
    assert bound_conditional_p(n, k, min(c + 0.0005, 0.9995)) >= p * (1 - 1e-9)


def test_from_trials_records_confidence():
    d = HbDecomposition.from_trials("pre", 299, 0, 0.95)
    assert d.conditional_p == 0.0 and d.confidence == 0.95
    assert d.conditional_p_upper_confidence == pytest.approx(0.0099691, rel=1e-4)


def test_redundancy_examples():
    assert redundancy_rate(RedundancyModel((1e-2, 1e-2), 1e-3)) == pytest.approx(1e-7, rel=1e-14)
    assert redundancy_rate(RedundancyModel((0.3,), 1e-3)) == pytest.approx(3e-4)
    assert redundancy_rate(RedundancyModel((1.0, 1.0), 1e-3)) == 1e-3
    with pytest.raises(PreconditionError) as info:
        redundancy_rate(RedundancyModel((0.1, 0.1), 1e-3, independence_assumed=False))
    assert INDEPENDENCE_CAVEAT in str(info.value)
    with pytest.raises(ValidationError):
        RedundancyModel((), 1e-3)
    with pytest.raises(ValidationError):
        RedundancyModel((0.0,), 1e-3)


def test_channel_allocation():
    p = channel_allocation(CRIT, 1e-3, 2)
    assert redundancy_rate(RedundancyModel((p, p), 1e-3)) == pytest.approx(1e-6, rel=1e-12)
    assert channel_allocation(CRIT, 1e-7, 2) == 1.0
