"""Monte Carlo simulation of field-test campaigns.

Ground truth is a piecewise-homogeneous Poisson process: each route stratum
has its own rate, and strata are driven back to back in declaration order.
Every replication gets its own generator seeded by ``splitmix64(seed ^ i)``,
so results do not depend on how replications are scheduled across workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from scipy import stats

from .adaptive import (
    GammaPrior,
    SprtConfig,
    SprtDecision,
    SprtState,
    bayes_decision,
    bayes_posterior,
    bayes_required_distance,
    sprt_advance,
)
from .core import AcceptanceCriterion, EventLog, Model, ValidationTarget, Verdict
from .errors import CoverageError, FotvalError, ValidationError
from .eva import PotConfig, eva_verdict, extract_exceedances, extrapolate_rate, fit_gpd, rate_upper_bound, sample_gpd
from .frequentist import decide

__all__ = [
    "splitmix64",
    "replication_seed",
    "Stratum",
    "PmModel",
    "GroundTruth",
    "BayesPlan",
    "EvaPlan",
    "CampaignPlan",
    "CampaignResult",
    "generate_log",
    "run_campaign",
    "is_corrected_rate",
    "ImportanceResult",
    "importance_campaign",
]

_MASK64 = (1 << 64) - 1
PASS_LABELS = frozenset({Verdict.PASS.value, SprtDecision.ACCEPT_SAFE.value})


def splitmix64(x: int) -> int:
    """One step of the SplitMix64 generator: a bijective 64-bit mixer."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def replication_seed(seed: int, index: int) -> int:
    return splitmix64((int(seed) ^ int(index)) & _MASK64)


@dataclass(frozen=True)
class Stratum:
    id: str
    rate: float
    natural_share: float

    def __post_init__(self):
        if not self.rate >= 0 or math.isinf(self.rate):
            raise ValidationError(f"stratum {self.id!r}: rate must be finite and >= 0")
        if not 0 <= self.natural_share <= 1:
            raise ValidationError(f"stratum {self.id!r}: natural share must lie in [0, 1]")


@dataclass(frozen=True)
class PmModel:
    """Distribution of the per-interval PM extremum (high values are critical).

    ``family`` is ``"gpd"`` (``loc`` + GPD(``shape``, ``scale``)),
    ``"exponential"`` (``loc`` + Exp(``scale``)) or ``"normal"``.
    """

    family: str
    scale: float = 1.0
    loc: float = 0.0
    shape: float = 0.0
    interval_km: float = 1.0

    def __post_init__(self):
        if self.family not in ("gpd", "exponential", "normal"):
            raise ValidationError(f"unknown PM family {self.family!r}")
        if not self.scale > 0 or not self.interval_km > 0:
            raise ValidationError("PM scale and interval must be > 0")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.family == "normal":
            return self.loc + self.scale * rng.standard_normal(n)
        xi = self.shape if self.family == "gpd" else 0.0
        return self.loc + sample_gpd(rng, n, xi, self.scale)

    def exceedance_probability(self, x: float) -> float:
        if self.family == "normal":
            return float(stats.norm.sf(x, self.loc, self.scale))
        xi = self.shape if self.family == "gpd" else 0.0
        return float(stats.genpareto.sf(x, xi, self.loc, self.scale))

    def critical_rate(self, x: float) -> float:
        """True per-km rate of intervals whose PM exceeds ``x``."""
        return self.exceedance_probability(x) / self.interval_km


@dataclass(frozen=True)
class GroundTruth:
    strata: tuple
    pm_model: Optional[PmModel] = None

    def __post_init__(self):
        strata = tuple(self.strata)
        if not strata:
            raise ValidationError("ground truth needs at least one stratum")
        ids = [s.id for s in strata]
        if len(set(ids)) != len(ids):
            raise ValidationError("stratum ids must be unique")
        if not math.isclose(math.fsum(s.natural_share for s in strata), 1.0, abs_tol=1e-9):
            raise ValidationError("natural exposure shares must sum to 1")
        object.__setattr__(self, "strata", strata)

    @classmethod
    def homogeneous(cls, rate: float, pm_model: Optional[PmModel] = None) -> "GroundTruth":
        return cls((Stratum("all", float(rate), 1.0),), pm_model)

    @property
    def is_homogeneous(self) -> bool:
        return len(self.strata) == 1

    @property
    def natural_rate(self) -> float:
        return math.fsum(s.rate * s.natural_share for s in self.strata)

    def natural_shares(self) -> dict[str, float]:
        return {s.id: s.natural_share for s in self.strata}

    def shares(self, exposures: Optional[Mapping[str, float]]) -> list[float]:
        if exposures is None:
            return [s.natural_share for s in self.strata]
        unknown = set(exposures) - {s.id for s in self.strata}
        if unknown:
            raise ValidationError(f"exposure given for unknown strata {sorted(unknown)}")
        out = [float(exposures.get(s.id, 0.0)) for s in self.strata]
        if any(x < 0 for x in out) or not math.isclose(math.fsum(out), 1.0, abs_tol=1e-9):
            raise ValidationError("test exposure shares must be >= 0 and sum to 1")
        return out


def _poisson_stamps(rng: np.random.Generator, rate: float, start: float, length: float) -> np.ndarray:
    # homogeneous Poisson arrivals on (start, start + length] via exponential gaps
    if rate == 0 or length <= 0:
        return np.empty(0)
    expected = rate * length
    chunks = []
    pos = 0.0
    batch = int(expected + 6.0 * math.sqrt(expected) + 16)
    while True:
        gaps = rng.standard_exponential(batch) / rate
        t = pos + np.cumsum(gaps)
        if t[-1] >= length:
            chunks.append(t[t < length])
            break
        chunks.append(t)
        pos = float(t[-1])
    stamps = start + np.concatenate(chunks)
    return stamps[stamps < start + length]


def _draw_segment(rng, truth: GroundTruth, shares: Sequence[float], start: float, length: float):
    stamps, labels = [], []
    pos = start
    for stratum, share in zip(truth.strata, shares):
        seg = share * length
        s = _poisson_stamps(rng, stratum.rate, pos, seg)
        stamps.append(s)
        labels.extend([stratum.id] * s.size)
        pos += seg
    return np.concatenate(stamps), labels


def generate_log(
    truth: GroundTruth,
    distance: float,
    stratum_exposures: Optional[Mapping[str, float]] = None,
    seed: int = 0,
    rng: Optional[np.random.Generator] = None,
) -> EventLog:
    """One simulated campaign of ``distance`` km.

    Strata are driven consecutively with the given test exposure shares
    (natural shares by default). PM extrema are drawn once per
    ``pm_model.interval_km`` when a PM model is present.
    """
    if not distance > 0:
        raise ValidationError("distance must be > 0")
    if rng is None:
        rng = np.random.default_rng(seed)
    shares = truth.shares(stratum_exposures)
    stamps, labels = _draw_segment(rng, truth, shares, 0.0, float(distance))
    pm = None
    if truth.pm_model is not None:
        step = truth.pm_model.interval_km
        n = int(math.floor(distance / step + 1e-9))
        pm = np.column_stack((step * np.arange(1, n + 1), truth.pm_model.sample(rng, n)))
    explicit = stratum_exposures is not None or not truth.is_homogeneous
    return EventLog(float(distance), stamps, pm, tuple(labels) if explicit else None)


@dataclass(frozen=True)
class BayesPlan:
    prior: GammaPrior
    criterion: AcceptanceCriterion
    alpha: float
    assumed_events: int = 0


@dataclass(frozen=True)
class EvaPlan:
    pot: PotConfig
    distance: float
    criterion: AcceptanceCriterion


MethodConfig = Union[ValidationTarget, SprtConfig, BayesPlan, EvaPlan]
_CONFIG_TYPES = {
    Model.POISSON_NHST: ValidationTarget,
    Model.SPRT: SprtConfig,
    Model.BAYES: BayesPlan,
    Model.EVA: EvaPlan,
}


@dataclass(frozen=True)
class CampaignPlan:
    method: Model
    method_config: MethodConfig
    replications: int
    seed: int = 0
    sampling_profile: Optional[Mapping[str, float]] = None

    def __post_init__(self):
        object.__setattr__(self, "method", Model(self.method))
        if not isinstance(self.method_config, _CONFIG_TYPES[self.method]):
            raise ValidationError(
                f"method {self.method.value} needs a {_CONFIG_TYPES[self.method].__name__}, "
                f"got {type(self.method_config).__name__}"
            )
        if int(self.replications) < 1:
            raise ValidationError("replications must be >= 1")
        if not 0 <= int(self.seed) <= _MASK64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        if self.sampling_profile is not None:
            prof = dict(self.sampling_profile)
            if not math.isclose(math.fsum(prof.values()), 1.0, abs_tol=1e-9):
                raise ValidationError("sampling profile shares must sum to 1")
            object.__setattr__(self, "sampling_profile", prof)


@dataclass(frozen=True)
class CampaignResult:
    method: Model
    replications: int
    pass_fraction: float
    mc_standard_error: float
    mean_distance_to_decision: float
    verdicts: tuple = field(repr=False)
    decision_distances: tuple = field(repr=False)

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for v in self.verdicts:
            out[v] = out.get(v, 0) + 1
        return dict(sorted(out.items()))

    def fraction(self, label: str) -> float:
        return self.counts().get(label, 0) / self.replications


def _sprt_replicate(config: SprtConfig, truth: GroundTruth, shares, rng) -> tuple[str, float]:
    chunk = 2.0 * config.upper / config.distance_slope
    state = SprtState()
    start = 0.0
    while state.decision is SprtDecision.CONTINUE:
        stamps, _ = _draw_segment(rng, truth, shares, start, chunk)
        state = sprt_advance(config, state, stamps, start + chunk)
        start += chunk
    return state.decision.value, state.distance_so_far


def _replicate(plan: CampaignPlan, truth: GroundTruth, index: int) -> tuple[str, float]:
    rng = np.random.default_rng(replication_seed(plan.seed, index))
    cfg = plan.method_config
    if plan.method is Model.POISSON_NHST:
        log = generate_log(truth, cfg.distance_tau, plan.sampling_profile, rng=rng)
        verdict, dist = decide(cfg, log)
        return verdict.value, float(dist)
    if plan.method is Model.SPRT:
        return _sprt_replicate(cfg, truth, truth.shares(plan.sampling_profile), rng)
    if plan.method is Model.BAYES:
        t = bayes_required_distance(cfg.prior, cfg.criterion, cfg.alpha, cfg.assumed_events)
        if t == 0:
            return bayes_decision(cfg.prior, cfg.criterion, cfg.alpha).value, 0.0
        log = generate_log(truth, t, plan.sampling_profile, rng=rng)
        return bayes_decision(bayes_posterior(cfg.prior, log), cfg.criterion, cfg.alpha).value, t
    # EVA
    log = generate_log(truth, cfg.distance, plan.sampling_profile, rng=rng)
    try:
        exc = extract_exceedances(log, cfg.pot)
        fit = fit_gpd(exc.excesses, exc.zeta, cfg.pot.min_excesses)
        estimate = extrapolate_rate(fit, cfg.pot).rate
        upper = rate_upper_bound(exc.excesses, log.total_distance, cfg.pot, fit)
    except FotvalError:
        return Verdict.INCOMPLETE.value, cfg.distance
    return eva_verdict(estimate, max(upper, estimate), cfg.criterion).value, cfg.distance


def _run_block(plan: CampaignPlan, truth: GroundTruth, start: int, stop: int):
    return [_replicate(plan, truth, i) for i in range(start, stop)]


def _blocks(n: int, workers: int) -> list[tuple[int, int]]:
    size = max(1, math.ceil(n / (4 * workers)))
    return [(i, min(i + size, n)) for i in range(0, n, size)]


def _map_replications(fn, args, n: int, workers: int):
    if workers <= 1:
        return fn(*args, 0, n)
    out = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *args, a, b) for a, b in _blocks(n, workers)]
        for f in futures:  # submission order == replication order
            out.extend(f.result())
    return out


def run_campaign(plan: CampaignPlan, truth: GroundTruth, workers: int = 1) -> CampaignResult:
    """Run ``plan.replications`` independent simulated tests against ``truth``."""
    if plan.sampling_profile is not None:
        truth.shares(plan.sampling_profile)
    if plan.method is Model.EVA and truth.pm_model is None:
        raise ValidationError("EVA campaigns need a ground truth with a PM model")
    n = int(plan.replications)
    rows = _map_replications(_run_block, (plan, truth), n, workers)
    verdicts = tuple(v for v, _ in rows)
    distances = tuple(float(d) for _, d in rows)
    p = sum(v in PASS_LABELS for v in verdicts) / n
    return CampaignResult(
        plan.method,
        n,
        p,
        math.sqrt(p * (1 - p) / n),
        math.fsum(distances) / n,
        verdicts,
        distances,
    )


def is_corrected_rate(
    log: EventLog,
    stratum_labels: Optional[Sequence[str]],
    natural_shares: Mapping[str, float],
    test_shares: Mapping[str, float],
) -> tuple[float, float]:
    """Reweight a biased-exposure campaign to the natural route mix.

    Returns ``(sum_s w_s n_s / D_s, sqrt(sum_s w_s^2 n_s / D_s^2))`` with
    ``w_s`` the natural share and ``D_s = test_share_s * total_distance``.
    A simulation-level demonstration only: how to justify such a translation
    for a real fleet is an open problem.
    """
    labels = log.stratum_labels if stratum_labels is None else tuple(stratum_labels)
    if labels is None or len(labels) != log.n_events:
        raise ValidationError("every event needs a stratum label")
    unknown = set(labels) - set(natural_shares)
    if unknown:
        raise ValidationError(f"events labeled with unknown strata {sorted(unknown)}")
    counts: dict[str, int] = {}
    for lab in labels:
        counts[lab] = counts.get(lab, 0) + 1
    est_terms, var_terms = [], []
    for sid, w in natural_shares.items():
        if w <= 0:
            continue
        d = float(test_shares.get(sid, 0.0)) * log.total_distance
        if d <= 0:
            raise CoverageError(
                f"stratum {sid!r} has natural share {w} but was not driven; "
                "its contribution cannot be recovered by reweighting"
            )
        n = counts.get(sid, 0)
        est_terms.append(w * n / d)
        var_terms.append(w * w * n / (d * d))
    return math.fsum(est_terms), math.sqrt(math.fsum(var_terms))


@dataclass(frozen=True)
class ImportanceResult:
    true_rate: float
    estimates: np.ndarray = field(repr=False)
    standard_errors: np.ndarray = field(repr=False)

    @property
    def mean(self) -> float:
        return float(self.estimates.mean())

    @property
    def standard_error_of_mean(self) -> float:
        return float(self.estimates.std(ddof=1) / math.sqrt(self.estimates.size))

    @property
    def bias_z(self) -> float:
        return (self.mean - self.true_rate) / self.standard_error_of_mean


def _importance_block(truth, test_shares, distance, seed, start, stop):
    nat = truth.natural_shares()
    out = []
    for i in range(start, stop):
        rng = np.random.default_rng(replication_seed(seed, i))
        log = generate_log(truth, distance, test_shares, rng=rng)
        out.append(is_corrected_rate(log, None, nat, test_shares))
    return out


def importance_campaign(
    truth: GroundTruth,
    test_shares: Mapping[str, float],
    distance: float,
    replications: int,
    seed: int = 0,
    workers: int = 1,
) -> ImportanceResult:
    """Replicate biased-exposure campaigns and reweight each to natural exposure."""
    truth.shares(test_shares)
    rows = _map_replications(_importance_block, (truth, dict(test_shares), float(distance), seed), replications, workers)
    arr = np.array(rows, dtype=float)
    return ImportanceResult(truth.natural_rate, arr[:, 0], arr[:, 1])
