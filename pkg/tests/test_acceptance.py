"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion NN PASS|FAIL`` line (also collected in
the terminal summary) and then asserts on the same condition.
"""

import json
import math
import time

import mpmath
import numpy as np
import pytest

from fotval import cli
from fotval.adaptive import GammaPrior, SprtConfig, SprtDecision, bayes_required_distance
from fotval.core import AcceptanceCriterion, EventLog, Model, TestParameters, Verdict
from fotval.errors import ProtocolError
from fotval.eva import GpdFit, PotConfig, extrapolate_rate, fit_gpd, sample_gpd
from fotval.frequentist import FieldTest, validation_target
from fotval.simulate import (
    CampaignPlan,
    GroundTruth,
    Stratum,
    importance_campaign,
    replication_seed,
    run_campaign,
)
from fotval.special import poisson_cdf
from fotval.structure import HbDecomposition, decomposed_target

pytestmark = pytest.mark.acceptance


def _crit(rate):
    return AcceptanceCriterion.from_rate(rate)


def test_base_model_closed_form(criterion_report, tmp_path):
    t0 = time.perf_counter()
    target = validation_target(_crit(1e-6), TestParameters(0.05, 0))
    expected = -math.log(0.05) / 1e-6
    rel = abs(target.distance_tau - expected) / expected
    # the CLI path must report the same figure
    cfg = tmp_path / "study.yaml"
    cfg.write_text("criterion: {rate_AH: 1.0e-6}\ntest: {alpha: 0.05, k: 0}\n")
    out = tmp_path / "target.json"
    assert cli.main(["target", "--config", str(cfg), "--format", "json", "--digits", "12", "--out", str(out)]) == 0
    reported = json.loads(out.read_text())["rows"][0]["tau_km"]
    elapsed = time.perf_counter() - t0
    ok = rel <= 1e-9 and abs(reported - 2.9957323e6) / 2.9957323e6 <= 1e-7 and elapsed < 1.0
    criterion_report(1, "base-model closed form", ok, f"tau={target.distance_tau:.10g} km rel={rel:.2e} t={elapsed:.3f}s")
    assert ok


def test_poisson_cdf_oracle_grid(criterion_report):
    t0 = time.perf_counter()
    mpmath.mp.dps = 50
    lams = [0.0, 1e-6, 0.01, 0.1, 0.5, 1.0, 2.5, 5.0, 10.0, 20.0, 33.3, 50.0, 75.0, 100.0]
    worst = 0.0
    for k in range(51):
        for lam in lams:
            got = poisson_cdf(k, lam)
            lm = mpmath.mpf(lam)
            want = mpmath.fsum(mpmath.exp(-lm) * lm**i / mpmath.factorial(i) for i in range(k + 1))
            worst = max(worst, float(abs(got - want) / want))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 10.0
    criterion_report(2, "poisson_cdf oracle equivalence", ok, f"max rel err {worst:.2e} over 51x{len(lams)} grid t={elapsed:.2f}s")
    assert ok


def test_type_one_error_contract(criterion_report):
    t0 = time.perf_counter()
    rate = 1e-6
    target = validation_target(_crit(rate), TestParameters(0.05, 0))
    plan = CampaignPlan(Model.POISSON_NHST, target, 100_000, seed=20240001)
    res = run_campaign(plan, GroundTruth.homogeneous(rate))
    elapsed = time.perf_counter() - t0
    ok = abs(res.pass_fraction - 0.05) <= 0.0021 and elapsed < 60.0
    criterion_report(3, "type-I error contract", ok, f"pass fraction {res.pass_fraction:.5f} (0.05 +/- 0.0021) t={elapsed:.1f}s")
    assert ok


def test_bayes_frequentist_bridge(criterion_report):
    t0 = time.perf_counter()
    worst = 0.0
    for alpha in (0.01, 0.05, 0.1, 0.2, 0.3):
        for rate in (1e-9, 1e-8, 1e-7, 1e-6, 1e-5):
            crit = _crit(rate)
            tau0 = validation_target(crit, TestParameters(alpha, 0)).distance_tau
            t = bayes_required_distance(GammaPrior(1.0, 0.0), crit, alpha)
            worst = max(worst, abs(t - tau0) / tau0)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 1.0
    criterion_report(4, "Bayes-frequentist bridge", ok, f"max rel diff {worst:.2e} over 5x5 grid t={elapsed:.3f}s")
    assert ok


def test_sprt_error_contract(criterion_report):
    t0 = time.perf_counter()
    r0 = 1e-6
    n = 10_000
    details, ok = [], True
    for alpha, beta in ((0.05, 0.05), (0.1, 0.2)):
        cfg = SprtConfig(r0, r0 / 2, alpha, beta)
        at_r0 = run_campaign(CampaignPlan(Model.SPRT, cfg, n, seed=7001), GroundTruth.homogeneous(r0))
        at_r1 = run_campaign(CampaignPlan(Model.SPRT, cfg, n, seed=7002), GroundTruth.homogeneous(r0 / 2))
        acc = at_r0.fraction(SprtDecision.ACCEPT_SAFE.value)
        rej = at_r1.fraction(SprtDecision.REJECT_SAFE.value)
        lim_a = alpha + 3 * math.sqrt(alpha * (1 - alpha) / n)
        lim_b = beta + 3 * math.sqrt(beta * (1 - beta) / n)
        ok &= acc <= lim_a and rej <= lim_b
        details.append(f"({alpha},{beta}): accept@r0 {acc:.4f}<={lim_a:.4f} reject@r1 {rej:.4f}<={lim_b:.4f}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 120.0
    criterion_report(5, "SPRT error contract", ok, "; ".join(details) + f" t={elapsed:.1f}s")
    assert ok


def test_decomposition_linearity(criterion_report):
    t0 = time.perf_counter()
    crit = _crit(1e-7)
    params = TestParameters(0.05, 0)
    tau0 = validation_target(crit, params).distance_tau
    worst = 0.0
    for pbar in (1.0, 0.5, 0.01):
        tg = decomposed_target(crit, HbDecomposition("precursor", pbar, pbar), params)
        # the precursor requirement shrinks by exactly pbar: tau_dec / pbar == tau0
        worst = max(worst, abs(tg.distance_tau / pbar - tau0) / tau0)
    hundredfold = decomposed_target(crit, HbDecomposition("precursor", 0.01, 0.01), params).distance_tau
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and abs(hundredfold - 2.9957e5) / 2.9957e5 < 1e-4 and elapsed < 1.0
    criterion_report(6, "decomposition linearity", ok, f"max rel diff of tau_dec/pbar vs tau0 {worst:.2e} t={elapsed:.3f}s")
    assert ok


def test_gpd_generate_and_recover(criterion_report):
    t0 = time.perf_counter()
    counts = {}
    for j, xi in enumerate((-0.3, 0.0, 0.3)):
        hits = 0
        for i in range(100):
            rng = np.random.default_rng(replication_seed(9000 + j, i))
            fit = fit_gpd(sample_gpd(rng, 100_000, xi, 1.0))
            hits += abs(fit.shape_xi - xi) <= 0.03 and abs(fit.scale_sigma - 1.0) <= 0.03
        counts[xi] = hits
    elapsed = time.perf_counter() - t0
    ok = all(h >= 95 for h in counts.values()) and elapsed < 120.0
    detail = ", ".join(f"xi={xi:+.1f}: {h}/100" for xi, h in counts.items())
    criterion_report(7, "GPD generate-and-recover", ok, f"{detail} t={elapsed:.1f}s")
    assert ok


def test_eva_exponential_closed_form(criterion_report):
    t0 = time.perf_counter()
    fit = GpdFit(0.0, 0.5, 1e-3, 100, 0.0)
    rate = extrapolate_rate(fit, PotConfig(2.0, 7.0)).rate
    rel = abs(rate - 4.5400e-8) / 4.5400e-8
    exact = 1e-3 * math.exp(-10.0)
    elapsed = time.perf_counter() - t0
    ok = rel <= 1.1e-5 and abs(rate - exact) / exact <= 1e-6 and elapsed < 1.0
    criterion_report(8, "EVA exponential closed form", ok, f"rate {rate:.6e}/km (exact {exact:.6e}) t={elapsed:.3f}s")
    assert ok


IS_TRUTH = GroundTruth(
    (
        Stratum("motorway", 2e-7, 0.6),
        Stratum("rural", 1e-6, 0.3),
        Stratum("urban", 4e-6, 0.1),
    )
)
IS_PROFILES = (
    {"motorway": 0.2, "rural": 0.3, "urban": 0.5},
    {"motorway": 0.1, "rural": 0.1, "urban": 0.8},
    {"motorway": 0.5, "rural": 0.4, "urban": 0.1},
)


def test_importance_weighting_unbiased(criterion_report):
    t0 = time.perf_counter()
    zs = []
    for j, profile in enumerate(IS_PROFILES):
        res = importance_campaign(IS_TRUTH, profile, 5e6, 10_000, seed=4400 + j)
        # combined SE: spread of the campaign estimates and the mean of their own SEs
        combined = math.hypot(res.standard_error_of_mean, float(res.standard_errors.mean()) / math.sqrt(10_000))
        zs.append((res.mean - res.true_rate) / combined)
    elapsed = time.perf_counter() - t0
    ok = all(abs(z) <= 3.0 for z in zs) and elapsed < 60.0
    criterion_report(9, "importance-weighting unbiasedness", ok, "z = " + ", ".join(f"{z:+.2f}" for z in zs) + f" t={elapsed:.1f}s")
    assert ok


def test_determinism(criterion_report, tmp_path):
    cfg = tmp_path / "study.yaml"
    cfg.write_text(
        "criterion: {rate_AH: 1.0e-6}\n"
        "methods:\n  sprt: {alpha: 0.05, beta: 0.05}\n  bayes: {prior_a: 1.0, prior_b_km: 0.0}\n"
        "simulation:\n  seed: 123456789\n  replications: 400\n"
        "  strata:\n    - {id: a, rate: 5.0e-7, natural_share: 0.7}\n    - {id: b, rate: 2.0e-6, natural_share: 0.3}\n"
        "  sampling_profile: {a: 0.4, b: 0.6}\n"
        "  methods: [PoissonNHST, SPRT, BayesGammaPoisson]\n"
    )
    outputs = []
    for workers in ("1", "1", "3"):
        out = tmp_path / f"sim_{len(outputs)}.csv"
        rc = cli.main(["simulate", "--config", str(cfg), "--format", "csv", "--workers", workers, "--out", str(out)])
        assert rc == 0
        outputs.append(out.read_bytes())
    ok = outputs[0] == outputs[1] == outputs[2]
    criterion_report(10, "determinism", ok, f"3 runs (workers 1,1,3), {len(outputs[0])} bytes, identical={ok}")
    assert ok


def test_protocol_guard(criterion_report, tmp_path):
    target = validation_target(_crit(1e-6), TestParameters(0.05, 0))
    test = FieldTest(target)
    first = test.evaluate(EventLog(3.5e6, []))
    raised = False
    try:
        test.evaluate(EventLog(4.0e6, [3.8e6]))
    except ProtocolError as exc:
        raised = exc.exit_code == 4

    cfg = tmp_path / "study.yaml"
    cfg.write_text("criterion: {rate_AH: 1.0e-6}\n")
    rec = tmp_path / "record.json"
    short, longer = tmp_path / "a.csv", tmp_path / "b.csv"
    short.write_text("distance_km,event\n0,0\n3.5e6,0\n")
    longer.write_text("distance_km,event\n0,0\n3.5e6,0\n3.8e6,1\n4.0e6,0\n")
    base = ["target", "--config", str(cfg), "--record", str(rec), "--out", str(tmp_path / "o.txt"), "--log"]
    rc1 = cli.main(base + [str(short)])
    rc2 = cli.main(base + [str(longer)])
    ok = first is Verdict.PASS and raised and rc1 == 0 and rc2 == 4
    criterion_report(11, "protocol guard", ok, f"first verdict {first.value}, extension raised={raised}, CLI exit codes {rc1},{rc2}")
    assert ok
