"""Study configuration and the per-subcommand report builders.

A study is one YAML file describing the hazardous behavior, the traffic
statistic (or a direct acceptance rate), the base test parameters, and any
reduction approaches to compare. Relative file paths are resolved against
the directory holding the config.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .acceptance import derive_acceptance_criterion, derive_benchmark
from .adaptive import (
    GammaPrior,
    SprtConfig,
    bayes_decision,
    bayes_posterior,
    bayes_required_distance,
    posterior_probability_acceptable,
    run_sprt,
    sprt_expected_distance,
    sprt_oc,
)
from .core import (
    AcceptanceCriterion,
    EventLog,
    FactorSet,
    HazardousBehavior,
    Model,
    Rationale,
    TestParameters,
    TrafficStatistic,
)
from .errors import PreconditionError, ValidationError
from .eva import Direction, PotConfig, extract_exceedances, extrapolate_rate, eva_verdict, fit_gpd, rate_upper_bound
from .frequentist import sensitivity_table, validation_target
from .ingest import ingest_event_log_csv, ingest_traffic_csv
from .report import Table
from .simulate import (
    BayesPlan,
    CampaignPlan,
    EvaPlan,
    GroundTruth,
    PmModel,
    Stratum,
    importance_campaign,
    run_campaign,
)
from .structure import (
    INDEPENDENCE_CAVEAT,
    CriterionBudget,
    HbDecomposition,
    channel_allocation,
    decomposed_target,
    split_criterion,
)

METHODS = ("certainty", "sprt", "bayes", "decomposition", "budget", "redundancy", "eva")
_TOP_KEYS = {
    "hb", "traffic", "traffic_csv", "factors", "rationale", "criterion", "test",
    "sensitivity", "methods", "simulation", "log",
}

# caveat flags attached to report rows
CAVEATS = {
    "certainty": "reduced-certainty",
    "sprt": "expected-distance;wald-approximation",
    "bayes_informative": "prior-not-validated",
    "decomposition": "independence-assumed;confidences-reported-separately",
    "budget": "per-subbehavior-share",
    "redundancy": "independence-assumed",
    "eva": "pm-validity-unestablished",
    "importance": "reweighting-method-not-validated",
}


def _section(raw: dict, key: str) -> dict:
    value = raw.get(key) or {}
    if not isinstance(value, dict):
        raise ValidationError(f"config section {key!r} must be a mapping")
    return value


@dataclass
class StudyConfig:
    hb: HazardousBehavior
    criterion: AcceptanceCriterion
    params: TestParameters
    statistic: Optional[TrafficStatistic] = None
    factors: FactorSet = field(default_factory=FactorSet)
    sensitivity: dict = field(default_factory=dict)
    methods: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)
    log_path: Optional[Path] = None
    base_dir: Path = Path(".")

    @classmethod
    def from_mapping(cls, raw: Any, base_dir: Path | str = ".") -> "StudyConfig":
        if not isinstance(raw, dict):
            raise ValidationError("study config must be a mapping at top level")
        unknown = set(raw) - _TOP_KEYS
        if unknown:
            raise ValidationError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        base_dir = Path(base_dir)
        hb_raw = raw.get("hb", {"id": "HB"})
        hb = HazardousBehavior(hb_raw) if isinstance(hb_raw, str) else HazardousBehavior.from_dict(hb_raw)
        rationale = Rationale(raw.get("rationale", "PRB"))
        factors = FactorSet.from_dict(_section(raw, "factors"))

        stat = None
        if "traffic_csv" in raw:
            stat = ingest_traffic_csv(base_dir / raw["traffic_csv"])
        elif "traffic" in raw:
            stat = TrafficStatistic.from_dict(_section(raw, "traffic"))
        if stat is not None:
            if "criterion" in raw:
                raise ValidationError("give either traffic data or a direct criterion, not both")
            criterion = derive_acceptance_criterion(derive_benchmark(stat), factors, hb, rationale)
        elif "criterion" in raw:
            criterion = AcceptanceCriterion(_section(raw, "criterion")["rate_AH"], hb, rationale)
        else:
            raise ValidationError("config needs 'traffic', 'traffic_csv' or 'criterion'")

        test = _section(raw, "test")
        params = TestParameters(test.get("alpha", 0.05), test.get("k", 0))
        methods = _section(raw, "methods")
        bad = set(methods) - set(METHODS)
        if bad:
            raise ValidationError(f"unknown method(s) {', '.join(sorted(bad))}; known: {', '.join(METHODS)}")
        log_path = base_dir / raw["log"] if raw.get("log") else None
        return cls(
            hb, criterion, params, stat, factors, _section(raw, "sensitivity"), methods,
            _section(raw, "simulation"), log_path, base_dir,
        )

    @classmethod
    def load(cls, path) -> "StudyConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ValidationError(f"{path}: cannot read config ({exc.strerror})") from None
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ValidationError(f"{path}: invalid YAML: {exc}") from None
        return cls.from_mapping(raw, path.parent)

    def path(self, value) -> Path:
        return self.base_dir / value

    @property
    def base_target(self):
        return validation_target(self.criterion, self.params)

    def sprt_config(self, cfg: Optional[dict] = None) -> SprtConfig:
        cfg = self.methods.get("sprt", {}) if cfg is None else cfg
        return SprtConfig.for_criterion(
            self.criterion,
            cfg.get("rate_H1_ratio", 0.5),
            alpha=cfg.get("alpha", self.params.alpha),
            beta=cfg.get("beta", 0.05),
            max_distance=cfg.get("max_distance"),
        )

    def gamma_prior(self) -> GammaPrior:
        cfg = self.methods.get("bayes", {})
        return GammaPrior(cfg.get("prior_a", 1.0), cfg.get("prior_b_km", 0.0))

    def pot_config(self, cfg: Optional[dict] = None) -> PotConfig:
        cfg = self.methods.get("eva", {}) if cfg is None else cfg
        try:
            return PotConfig(
                cfg["threshold"],
                cfg["critical"],
                Direction(cfg.get("direction", "exceed_high")),
                cfg.get("decluster_gap_km", 1.0),
                cfg.get("confidence", 0.95),
                cfg.get("min_excesses", 30),
            )
        except KeyError as exc:
            raise ValidationError(f"eva method needs {exc.args[0]!r}") from None

    def decomposition(self) -> HbDecomposition:
        cfg = self.methods["decomposition"]
        pid = cfg.get("precursor_id", f"{self.hb.id}_precursor")
        if "trials" in cfg:
            return HbDecomposition.from_trials(pid, cfg["trials"], cfg.get("occurrences", 0), cfg.get("confidence", 0.95))
        if "p_upper" not in cfg:
            raise ValidationError("decomposition needs 'p_upper' or 'trials'/'occurrences'")
        p_upper = cfg["p_upper"]
        return HbDecomposition(
            pid, cfg.get("p_point", p_upper), p_upper, cfg.get("independence_assumed", True), cfg.get("confidence")
        )


def derive_table(study: StudyConfig) -> Table:
    t = Table(f"Acceptance criterion for {study.hb.id}", ("quantity", "value", "unit"))
    trail = study.criterion.factor_trail
    if trail is not None:
        stat = trail.benchmark.statistic
        t.add("M", stat.total_distance_M, "km/year")
        t.add("A", stat.event_count_A, "events/year")
        t.add("B", trail.benchmark.distance_between_events_B, "km/event")
        t.add("kappa1", trail.factors.kappa1_safety, "-")
        t.add("kappa2", trail.factors.kappa2_justified, "-")
        t.add("epsilon", trail.factors.epsilon_effectiveness, "-")
        t.notes.append(f"source: {stat.source}" if stat.source else "source: (not given)")
    t.add("A_H", study.criterion.rate_AH, "events/km")
    t.notes.append(f"rationale: {study.criterion.rationale.value}")
    return t


def target_table(study: StudyConfig) -> Table:
    tg = study.base_target
    t = Table("Base-model validation target", ("A_H_per_km", "alpha", "k", "expected_events", "tau_km"))
    t.add(study.criterion.rate_AH, tg.params.alpha, tg.params.k, tg.expected_events, tg.distance_tau)
    return t


def sensitivity_tables(study: StudyConfig) -> Table:
    alphas = study.sensitivity.get("alphas", [0.01, 0.05, 0.1, 0.2])
    ks = study.sensitivity.get("ks", [0, 1, 2, 5])
    tau0 = study.base_target.distance_tau
    grid = sensitivity_table(study.criterion, alphas, ks)
    t = Table("Certainty-requirement sensitivity", ("alpha", "k", "tau_km", "reduction_factor"))
    for row in grid:
        for tg in row:
            t.add(tg.params.alpha, tg.params.k, tg.distance_tau, tau0 / tg.distance_tau)
    return t


def sprt_table(study: StudyConfig, log: Optional[EventLog] = None) -> list[Table]:
    cfg = study.sprt_config()
    ratios = study.methods.get("sprt", {}).get("true_rate_ratios", [0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0])
    tau0 = study.base_target.distance_tau
    t = Table(
        "SPRT operating characteristics (Wald approximations)",
        ("true_rate_per_km", "p_reject_safe", "expected_distance_km", "reduction_factor"),
    )
    for r in ratios:
        rate = r * study.criterion.rate_AH
        ed = sprt_expected_distance(cfg, rate)
        t.add(rate, sprt_oc(cfg, rate), ed, tau0 / ed)
    t.notes.append(
        f"H0 rate {cfg.rate_H0:.6g}/km, H1 rate {cfg.rate_H1:.6g}/km, alpha {cfg.alpha:g}, beta {cfg.beta:g}; "
        f"accept-safe boundary {cfg.upper:.6g}, reject-safe boundary {cfg.lower:.6g}"
    )
    tables = [t]
    if log is not None:
        st = run_sprt(cfg, log)
        e = Table("SPRT evaluation", ("distance_km", "events", "llr", "decision"))
        e.add(st.distance_so_far, st.events_so_far, st.llr, st.decision.value)
        tables.append(e)
    return tables


def bayes_table(study: StudyConfig, log: Optional[EventLog] = None) -> list[Table]:
    prior = study.gamma_prior()
    cfg = study.methods.get("bayes", {})
    alpha = cfg.get("alpha", study.params.alpha)
    t = Table(
        "Bayesian required distance",
        ("prior_a", "prior_b_km", "assumed_events", "credibility", "required_distance_km"),
    )
    for n in cfg.get("assumed_events_list", [cfg.get("assumed_events", 0)]):
        t.add(prior.shape_a, prior.rate_b, int(n), 1 - alpha, bayes_required_distance(prior, study.criterion, alpha, int(n)))
    tables = [t]
    if log is not None:
        post = bayes_posterior(prior, log)
        e = Table("Bayesian evaluation", ("posterior_a", "posterior_b_km", "p_rate_acceptable", "verdict"))
        e.add(post.shape_a, post.rate_b, posterior_probability_acceptable(post, study.criterion),
              bayes_decision(post, study.criterion, alpha).value)
        tables.append(e)
    return tables


def decompose_table(study: StudyConfig) -> Table:
    tau0 = study.base_target.distance_tau
    t = Table("Structural decompositions", ("item", "rate_per_km", "tau_km", "reduction_factor", "note"))
    t.add("base", study.criterion.rate_AH, tau0, 1.0, "")
    if "decomposition" in study.methods:
        d = study.decomposition()
        tg = decomposed_target(study.criterion, d, study.params)
        conf = "" if d.confidence is None else f"p_upper at confidence {d.confidence:g}"
        t.add(f"precursor:{d.precursor_id}", tg.criterion.rate_AH, tg.distance_tau, tau0 / tg.distance_tau, conf)
    if "budget" in study.methods:
        shares = study.methods["budget"].get("shares", {})
        for crit in split_criterion(CriterionBudget(study.criterion, tuple(shares.items()))):
            tg = validation_target(crit, study.params)
            t.add(f"budget:{crit.hb.id}", crit.rate_AH, tg.distance_tau, tau0 / tg.distance_tau, "")
    if "redundancy" in study.methods:
        cfg = study.methods["redundancy"]
        tg, p = _redundancy_target(study, cfg)
        t.add("redundancy:channel", tg.criterion.rate_AH, tg.distance_tau, tau0 / tg.distance_tau,
              f"per-channel failure probability {p:.6g} per demand")
    return t


def _redundancy_target(study: StudyConfig, cfg: dict):
    if not cfg.get("independence_assumed", True):
        raise PreconditionError(f"redundancy credit refused: {INDEPENDENCE_CAVEAT}")
    demand = cfg["demand_rate"]
    p = channel_allocation(study.criterion, demand, int(cfg.get("channels", 2)))
    crit = AcceptanceCriterion(demand * p, HazardousBehavior(f"{study.hb.id}_channel"), study.criterion.rationale)
    return validation_target(crit, study.params), p


def _eva_result(study: StudyConfig, log: EventLog):
    pot = study.pot_config()
    exc = extract_exceedances(log, pot)
    fit = fit_gpd(exc.excesses, exc.zeta, pot.min_excesses)
    ext = extrapolate_rate(fit, pot)
    upper = max(rate_upper_bound(exc.excesses, log.total_distance, pot, fit), ext.rate)
    return pot, fit, ext, upper, eva_verdict(ext.rate, upper, study.criterion)


def eva_table(study: StudyConfig, log: EventLog) -> Table:
    pot, fit, ext, upper, verdict = _eva_result(study, log)
    t = Table(
        "Extreme value analysis (peaks over threshold)",
        ("xi", "sigma", "zeta_per_km", "n_exceedances", "rate_per_km", "rate_upper_per_km", "A_H_per_km", "verdict"),
    )
    t.add(fit.shape_xi, fit.scale_sigma, fit.exceedance_rate_zeta, fit.n_exceedances, ext.rate, upper,
          study.criterion.rate_AH, verdict.value)
    if ext.beyond_endpoint:
        t.notes.append("critical level lies beyond the fitted finite endpoint; point estimate is 0")
    if fit.flags:
        t.notes.append("fit flags: " + ", ".join(fit.flags))
    t.notes.append(f"upper bound: one-sided profile likelihood at confidence {pot.confidence:g}")
    return t


def _truth(study: StudyConfig, sim: dict) -> GroundTruth:
    pm = None
    if "pm_model" in sim:
        pm = PmModel(**sim["pm_model"])
    if "strata" in sim:
        strata = tuple(Stratum(s["id"], float(s["rate"]), float(s["natural_share"])) for s in sim["strata"])
        return GroundTruth(strata, pm)
    rate = sim.get("true_rate", sim.get("true_rate_ratio", 1.0) * study.criterion.rate_AH)
    return GroundTruth.homogeneous(rate, pm)


def simulate_table(study: StudyConfig, seed: Optional[int] = None, replications: Optional[int] = None,
                   workers: int = 1) -> Table:
    sim = study.simulation
    seed = int(sim.get("seed", 0) if seed is None else seed)
    reps = int(sim.get("replications", 1000) if replications is None else replications)
    truth = _truth(study, sim)
    methods = sim.get("methods", ["PoissonNHST"])
    t = Table(
        "Monte Carlo campaign verification",
        ("method", "true_rate_per_km", "replications", "pass_fraction", "mc_se", "mean_distance_km"),
    )
    for i, name in enumerate(methods):
        method = Model(name) if name != "Bayes" else Model.BAYES
        if method is Model.POISSON_NHST:
            cfg = study.base_target
        elif method is Model.SPRT:
            cfg = study.sprt_config()
        elif method is Model.BAYES:
            bcfg = study.methods.get("bayes", {})
            cfg = BayesPlan(study.gamma_prior(), study.criterion, bcfg.get("alpha", study.params.alpha),
                            int(bcfg.get("assumed_events", 0)))
        else:
            cfg = EvaPlan(study.pot_config(), float(sim.get("eva_distance_km", 1e5)), study.criterion)
        plan = CampaignPlan(method, cfg, reps, (seed + i) & ((1 << 64) - 1), sim.get("sampling_profile"))
        res = run_campaign(plan, truth, workers)
        t.add(method.value, truth.natural_rate, reps, res.pass_fraction, res.mc_standard_error,
              res.mean_distance_to_decision)
    if sim.get("sampling_profile") and not truth.is_homogeneous:
        imp = importance_campaign(truth, sim["sampling_profile"], float(sim.get("importance_distance_km", 1e6)),
                                  reps, seed, workers)
        t.notes.append(
            f"importance-weighted rate: mean {imp.mean:.6g}/km over {reps} campaigns "
            f"(SE {imp.standard_error_of_mean:.3g}), natural-exposure truth {imp.true_rate:.6g}/km "
            f"[{CAVEATS['importance']}]"
        )
    return t


REPORT_COLUMNS = ("method", "tau_km", "alpha", "beta_or_credibility", "reduction_factor", "caveats")


@dataclass(frozen=True)
class ReportRow:
    method: str
    tau_km: float
    alpha: Optional[float]
    beta_or_credibility: Optional[float]
    reduction_factor: float
    caveats: str = ""


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple

    def __post_init__(self):
        if not self.rows or self.rows[0].method != "base":
            raise ValidationError("comparison report must start with the base-model row")

    def row(self, method: str) -> ReportRow:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)

    def table(self) -> Table:
        t = Table("Reduction approaches vs base-model driving requirement", REPORT_COLUMNS)
        for r in self.rows:
            t.add(r.method, r.tau_km, r.alpha, r.beta_or_credibility, r.reduction_factor, r.caveats)
        return t


def compare(study: StudyConfig) -> ComparisonReport:
    """One row per enabled approach; reduction factor = tau0 / tau_method."""
    base = study.base_target
    tau0 = base.distance_tau
    alpha = study.params.alpha
    rows = [ReportRow("base", tau0, alpha, None, 1.0)]
    m = study.methods
    if "certainty" in m:
        cfg = m["certainty"]
        tg = validation_target(study.criterion, TestParameters(cfg.get("alpha", alpha), cfg.get("k", study.params.k)))
        rows.append(ReportRow("lowered_certainty", tg.distance_tau, tg.params.alpha, None,
                              tau0 / tg.distance_tau, CAVEATS["certainty"]))
    if "sprt" in m:
        cfg = study.sprt_config()
        rate = m["sprt"].get("true_rate_ratio", cfg.rate_H1 / cfg.rate_H0) * study.criterion.rate_AH
        ed = sprt_expected_distance(cfg, rate)
        rows.append(ReportRow("sprt_expected", ed, cfg.alpha, cfg.beta, tau0 / ed, CAVEATS["sprt"]))
    if "bayes" in m:
        prior = study.gamma_prior()
        a = m["bayes"].get("alpha", alpha)
        t = bayes_required_distance(prior, study.criterion, a, int(m["bayes"].get("assumed_events", 0)))
        informative = prior.shape_a != 1.0 or prior.rate_b != 0.0
        rows.append(ReportRow("bayes", t, a, 1 - a, tau0 / t if t > 0 else math.inf,
                              CAVEATS["bayes_informative"] if informative else ""))
    if "decomposition" in m:
        d = study.decomposition()
        tg = decomposed_target(study.criterion, d, study.params)
        rows.append(ReportRow("hb_decomposition", tg.distance_tau, alpha, d.confidence,
                              tau0 / tg.distance_tau, CAVEATS["decomposition"]))
    if "budget" in m:
        shares = m["budget"].get("shares", {})
        for crit in split_criterion(CriterionBudget(study.criterion, tuple(shares.items()))):
            tg = validation_target(crit, study.params)
            rows.append(ReportRow(f"criterion_budget:{crit.hb.id}", tg.distance_tau, alpha, None,
                                  tau0 / tg.distance_tau, CAVEATS["budget"]))
    if "redundancy" in m:
        tg, _ = _redundancy_target(study, m["redundancy"])
        rows.append(ReportRow("redundancy_channel", tg.distance_tau, alpha, None,
                              tau0 / tg.distance_tau, CAVEATS["redundancy"]))
    if "eva" in m:
        log_file = m["eva"].get("log")
        if log_file is None and study.log_path is None:
            raise ValidationError("eva method needs an event log with PM values ('log')")
        log = ingest_event_log_csv(study.path(log_file) if log_file else study.log_path)
        pot, _, _, upper, verdict = _eva_result(study, log)
        rows.append(ReportRow("eva", log.total_distance, 1 - pot.confidence, None,
                              tau0 / log.total_distance, f"{CAVEATS['eva']};verdict:{verdict.value}"))
    return ComparisonReport(tuple(rows))
