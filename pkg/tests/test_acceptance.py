"""Acceptance suite: ten end-to-end properties of the caliper sweep.

The shipped desk-scale scenarios (1000 replicates each, seeds fixed in the
scenario files) are run once per session and shared by the criteria.
Each test prints exactly one PASS/FAIL line; the lines are repeated in the
terminal summary.
"""
import math
import time

import numpy as np
import pytest

from oracles import greedy_trace, hc1_loop, logistic_nelder_mead, ols_pinv
from psmlab.balance import standardized_mean_difference
from psmlab.datagen import generate_dataset, linear_outcome
from psmlab.errors import SeparationDetected
from psmlab.estimation import ols_fit, sandwich_cov
from psmlab.harness import load_scenario, run_scenario
from psmlab.harness.export import export_results
from psmlab.harness.simulate import resolve_coefficients
from psmlab.matching import greedy_match
from psmlab.numerics import RandomStream
from psmlab.propensity import fit_logistic

pytestmark = pytest.mark.slow

LINEAR = ("figure1", "figure2")


@pytest.fixture(scope="session")
def shipped(tmp_path_factory):
    """Run each shipped scenario once and export it."""
    mp = pytest.MonkeyPatch()
    mp.delenv("PSMLAB_SEED", raising=False)
    out = {}
    try:
        for name in ("figure1", "figure2", "figure3"):
            cfg = load_scenario(name).replace(workers=1)
            summary = run_scenario(cfg)
            path = tmp_path_factory.mktemp(f"{name}_w1")
            export_results(summary, path)
            out[name] = (cfg, summary, path)
    finally:
        mp.undo()
    return out


def test_criterion_01_treated_fraction(verdict):
    cfg = load_scenario("figure1")
    alpha1 = resolve_coefficients(cfg).alpha1.values
    out = linear_outcome(0.5, np.zeros(cfg.p))
    start = time.perf_counter()
    fractions = [
        generate_dataset(RandomStream.substream(cfg.seed, i), 1500, -0.9, alpha1, out).treated_fraction
        for i in range(200)
    ]
    elapsed = time.perf_counter() - start
    mean = float(np.mean(fractions))
    verdict(
        1,
        0.27 <= mean <= 0.33 and elapsed < 10.0,
        f"mean treated fraction {mean:.4f} over 200 replicates (target [0.27, 0.33]), {elapsed:.2f}s",
    )


def test_criterion_02_u_shaped_mahalanobis(shipped, verdict):
    ok, parts = True, []
    for name in LINEAR:
        s = shipped[name][1]
        mid = s.balance(0.2)
        for other in (20.0, 0.002):
            row = s.balance(other)
            margin = row.mahalanobis_means - mid.mahalanobis_means
            se = math.hypot(row.mc_se_mahalanobis_means, mid.mc_se_mahalanobis_means)
            ok &= margin > 2 * se
            parts.append(f"{name} {other:g}-0.2: {margin:.4f} ({margin / se:.1f} SE)")
    verdict(2, ok, "; ".join(parts))


def test_criterion_03_chance_imbalance(shipped, verdict):
    ok, parts = True, []
    schedule = shipped["figure1"][0].caliper_multipliers
    for name in LINEAR:
        s = shipped[name][1]
        for mult in (0.2, 0.02, 0.002):
            m = s.balance(mult).mean_smd_x3
            ok &= abs(m) < 0.02
        props = [s.balance(m).prop_abs_smd_x3_gt_0_1 for m in schedule]
        argmin = int(np.argmin(props))
        at = schedule.index(0.2)
        monotone = all(a >= b for a, b in zip(props, props[1:])) or all(
            a <= b for a, b in zip(props, props[1:])
        )
        ok &= (not monotone) and abs(argmin - at) <= 1
        smds = ", ".join(f"{s.balance(m).mean_smd_x3:+.4f}" for m in (0.2, 0.02, 0.002))
        parts.append(
            f"{name} SMD(X3) at 0.2/0.02/0.002 = {smds}; "
            f"prop>0.1 min at {schedule[argmin]:g} ({', '.join(f'{p:.3f}' for p in props)})"
        )
    verdict(3, ok, "; ".join(parts))


def test_criterion_04_bias_elimination(shipped, verdict):
    ok, parts = True, []
    for name in LINEAR:
        cfg, s, _ = shipped[name]
        assert cfg.beta1 == 0.5 and cfg.outcome_kind == "Linear"
        for spec in ("MA", "MAX45"):
            wide, opt = s.estimate(20.0, spec).bias, s.estimate(0.2, spec).bias
            ok &= abs(wide) > 0.05 and abs(opt) < 0.02
            parts.append(f"{name} {spec} bias@20 {wide:+.4f} bias@0.2 {opt:+.4f}")
        worst = 0.0
        for mult in cfg.caliper_multipliers:
            row = s.estimate(mult, "MFull")
            z = abs(row.bias) / row.mc_se_estimate
            worst = max(worst, z)
            ok &= abs(row.bias) < 2 * row.mc_se_estimate
        parts.append(f"{name} MFull max |bias|/MC-SE {worst:.2f}")
    verdict(4, ok, "; ".join(parts))


def test_criterion_05_model_dependence_reduction(shipped, verdict):
    cfg, s, _ = shipped["figure3"]
    assert cfg.outcome_kind == "Complex" and cfg.beta1 == 1.0
    un, wide, opt = s.estimate("unmatched", "MFull"), s.estimate(20.0, "MFull"), s.estimate(0.2, "MFull")
    gap1 = abs(un.bias) - abs(wide.bias)
    gap2 = abs(wide.bias) - abs(opt.bias)
    se1 = math.hypot(un.mc_se_estimate, wide.mc_se_estimate)
    se2 = math.hypot(wide.mc_se_estimate, opt.mc_se_estimate)
    ok = gap1 > 2 * se1 and gap2 > 2 * se2
    verdict(
        5,
        ok,
        f"MFull |bias| unmatched {abs(un.bias):.4f}, @20 {abs(wide.bias):.4f}, @0.2 {abs(opt.bias):.4f}; "
        f"gaps {gap1:+.4f} ({gap1 / se1:+.1f} SE), {gap2:+.4f} ({gap2 / se2:+.1f} SE)",
    )


def test_criterion_06_se_concordance(shipped, verdict):
    ok, parts = True, []
    for name in ("figure1", "figure2", "figure3"):
        cfg, s, _ = shipped[name]
        ratios = []
        for mult in (m for m in cfg.caliper_multipliers if m <= 0.2):
            row = s.estimate(mult, "MFull")
            rel = abs(row.mean_se_model - row.empirical_se) / row.empirical_se
            ratios.append(rel)
            ok &= rel <= 0.10
        parts.append(f"{name} rel. gap {', '.join(f'{r:.4f}' for r in ratios)}")
    verdict(6, ok, "; ".join(parts))


def test_criterion_07_sampling_law(verdict):
    ok, parts = True, []
    out = linear_outcome(0.0, np.zeros(3))
    for n in (50, 200, 800):
        d = []
        for r in range(1000):
            ds = generate_dataset(RandomStream.substream(7007, n, r), 2 * n, 0.0, np.zeros(3), out)
            x = ds.x[:, 2]
            d.append(standardized_mean_difference(x[ds.a == 1], x[ds.a == 0]))
        sd, target = float(np.std(d, ddof=1)), math.sqrt(2 / n)
        rel = sd / target - 1
        ok &= abs(rel) <= 0.15
        parts.append(f"n={n}: SD {sd:.4f} vs {target:.4f} ({rel:+.1%})")
    verdict(7, ok, "; ".join(parts))


def test_criterion_08_micro_oracles(verdict):
    rng = np.random.default_rng(808)
    worst_lr, done = 0.0, 0
    while done < 20:
        x = rng.standard_normal((20, 2))
        a = rng.binomial(1, 1 / (1 + np.exp(-(0.2 + x @ np.array([0.9, -0.6])))))
        if a.min() == a.max():
            continue
        try:
            fit = fit_logistic(x, a)
        except SeparationDetected:
            continue
        beta = np.r_[fit.intercept, fit.coefs]
        worst_lr = max(worst_lr, float(np.max(np.abs(beta - logistic_nelder_mead(x, a)))))
        done += 1

    worst_ols = 0.0
    for _ in range(20):
        n = int(rng.integers(8, 30))
        design = np.column_stack([np.ones(n), rng.binomial(1, 0.5, n), rng.standard_normal((n, 3))])
        y = design @ rng.standard_normal(5) + rng.standard_normal(n) * rng.uniform(0.5, 2, n)
        fit = ols_fit(design, y)
        coefs, cov, _ = ols_pinv(design, y)
        hc1 = sandwich_cov(design, fit.residuals)
        oracle_hc1 = hc1_loop(design, fit.residuals)
        for got, want in ((fit.coefs, coefs), (fit.model_cov, cov), (hc1, oracle_hc1)):
            worst_ols = max(worst_ols, float(np.max(np.abs(got - want) / np.maximum(np.abs(want), 1.0))))

    mismatches = 0
    for _ in range(500):
        n = int(rng.integers(1, 13))
        score = np.round(rng.standard_normal(n), 1)  # coarse grid forces ties
        treated = rng.binomial(1, 0.5, n)
        width = float(rng.choice([0.0, 0.1, 0.5, 100.0]))
        got = greedy_match(score, treated, width).tolist()
        mismatches += got != [list(p) for p in greedy_trace(score, treated, width)]

    ok = worst_lr <= 1e-5 and worst_ols <= 1e-10 and mismatches == 0
    verdict(
        8,
        ok,
        f"logistic max dev {worst_lr:.1e} (tol 1e-5); OLS/HC1 max rel dev {worst_ols:.1e} (tol 1e-10); "
        f"greedy mismatches {mismatches}/500",
    )


def test_criterion_09_cherry_picking_bias(shipped, verdict):
    cfg, s, _ = shipped["figure1"]
    assert set(cfg.model_specs) == {"MA", "MAX45", "MFull"}
    pick = s.cherry(0.2)
    ok = pick.bias_max_estimate > 2 * pick.mc_se_max_estimate
    parts = [f"max-estimator bias {pick.bias_max_estimate:+.4f} ({pick.bias_max_estimate / pick.mc_se_max_estimate:.1f} SE)"]
    for spec in cfg.model_specs:
        row = s.estimate(0.2, spec)
        ok &= not row.bias > 2 * row.mc_se_estimate
        parts.append(f"{spec} {row.bias:+.4f} ({row.bias / row.mc_se_estimate:+.1f} SE)")
    verdict(9, ok, "; ".join(parts))


def test_criterion_10_determinism_across_workers(shipped, tmp_path, verdict, monkeypatch):
    monkeypatch.delenv("PSMLAB_SEED", raising=False)
    cfg, _, first = shipped["figure1"]
    export_results(run_scenario(cfg.replace(workers=2)), tmp_path)
    same = {
        name: (first / name).read_bytes() == (tmp_path / name).read_bytes()
        for name in ("balance.csv", "estimates.csv")
    }
    verdict(10, all(same.values()), f"workers 1 vs 2 byte-identical: {same}")
