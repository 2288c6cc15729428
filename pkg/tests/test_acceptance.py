"""Acceptance criteria, one test each, at the stated tolerances.

Each test prints a PASS/FAIL line; the lines are repeated in the terminal
summary. The Monte Carlo studies (criteria 6 to 8) are marked ``slow`` and
together take roughly ten minutes on one core.
"""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.special import expit

from npsens.dataset import impute_conservative, load_case_study
from npsens.learners import DEFAULT_LIBRARY, LearnerSpec, fit_super_learner, make_folds
from npsens.npsem import CovariateDist, LogisticEquation, NpsemConfig, default_config, ground_truth, simulate, write_config
from npsens.pipeline import AnalysisConfig, run_simulation_study
from npsens.sensitivity import SensitivitySpec, max_rejectable_delta, sens_test
from npsens.tmle import score_residuals, tmle

MAIN = (LearnerSpec("logistic_main_terms"),)
ALPHA = 0.05


def _closed_form_case_study():
    p1, p0 = 16 / 55, 1 / 28
    se = math.sqrt(p1 * (1 - p1) / 55 + p0 * (1 - p0) / 28)
    return p1, p0, p1 - p0, se


def test_01_case_study_counts(verdict_line):
    t0 = time.perf_counter()
    data = load_case_study()
    imp = impute_conservative(data)
    res = tmle(imp, MAIN)
    elapsed = time.perf_counter() - t0
    s = data.summary()
    counts_ok = (
        (s["treated"]["outcome_1"], s["treated"]["outcome_0"], s["treated"]["censored"]) == (16, 3, 36)
        and (s["control"]["outcome_1"], s["control"]["outcome_0"], s["control"]["censored"]) == (1, 27, 321)
    )
    a, c = data.a, data.c
    treated_mean = float(imp.y_star[a == 1].mean())
    control_obs_mean = float(data.y[(a == 0) & (c == 1)].mean())
    ok = (
        counts_ok
        and data.p == 0
        and abs(treated_mean - 16 / 55) <= 1e-12
        and abs(control_obs_mean - 1 / 28) <= 1e-12
        and abs(res.psi_n - 0.255195) <= 1e-6
        and elapsed < 1.0
    )
    assert verdict_line(
        1,
        "case-study reproduction",
        ok,
        f"counts={counts_ok} treated={treated_mean:.6f} control={control_obs_mean:.6f} "
        f"psi={res.psi_n:.7f} time={elapsed:.2f}s",
    )


def test_02_frontier_substitute(verdict_line):
    res = tmle(impute_conservative(load_case_study()), MAIN)
    spec = SensitivitySpec(ALPHA, "two_sided")
    frontier = max_rejectable_delta(res.psi_n, res.se, spec)
    _, _, psi_cf, se_cf = _closed_form_case_study()
    z = 1.959963984540054  # exact 0.975 normal quantile
    expected = psi_cf - z * se_cf
    err = abs(frontier - expected)
    literal_gap = abs(frontier - (psi_cf - 1.959964 * se_cf))
    ok = err <= 1e-9 and 0.0 < frontier < res.psi_n
    assert verdict_line(
        2,
        "frontier vs closed form",
        ok,
        f"frontier={frontier:.10f} closed={expected:.10f} err={err:.2e} "
        f"(gap to rounded 1.959964: {literal_gap:.2e}) psi={res.psi_n:.6f}",
    )


def test_03_sensitivity_test_equivalence(verdict_line):
    rng = np.random.default_rng(2024)
    spec = SensitivitySpec()
    worst = 0.0
    for _ in range(100):
        psi = rng.uniform(-0.3, 0.6)
        se = rng.uniform(0.005, 0.3)
        p = sens_test(psi, se, 0.0, spec).p_value
        ref = 0.5 * math.erfc(psi / se / math.sqrt(2.0))
        worst = max(worst, abs(p - ref))
    assert verdict_line(3, "p-value vs reference z-test", worst <= 1e-12, f"max |diff|={worst:.2e} over 100 pairs")


def test_04_super_learner_dominance(verdict_line):
    rng = np.random.default_rng(404)
    t0 = time.perf_counter()
    worst_gap = -math.inf
    worst_simplex = 0.0
    for _ in range(20):
        n, p = 500, int(rng.integers(1, 5))
        X = rng.normal(size=(n, p))
        eta = rng.normal(-0.5, 0.5) + X @ rng.normal(0, 1, p) + 0.5 * rng.normal() * X[:, 0] ** 2
        y = (rng.uniform(size=n) < expit(eta)).astype(float)
        fit = fit_super_learner(DEFAULT_LIBRARY, X, y, make_folds(n, 10, int(rng.integers(2**31))))
        worst_gap = max(worst_gap, fit.combined_risk - float(np.min(fit.cv_risks)))
        worst_simplex = max(worst_simplex, abs(fit.beta.sum() - 1.0), float(max(0.0, -fit.beta.min())))
    elapsed = time.perf_counter() - t0
    ok = worst_gap <= 1e-6 and worst_simplex <= 1e-12 and elapsed < 30
    assert verdict_line(
        4,
        "Super Learner dominance",
        ok,
        f"max(combined - min candidate)={worst_gap:.2e} simplex err={worst_simplex:.1e} time={elapsed:.1f}s",
    )


def test_05_tmle_score_equations(verdict_line):
    worst_ic = worst_l1 = 0.0
    nonconv = 0
    for k in range(20):
        cfg = default_config(u_a=0.5 * (k % 3), u_y=0.5 * (k % 2), seed=1000 + k)
        imp = impute_conservative(simulate(cfg, 1000))
        res = tmle(imp, DEFAULT_LIBRARY)
        nonconv += not res.converged
        l1, ic = score_residuals(imp, res)
        worst_l1, worst_ic = max(worst_l1, abs(l1)), max(worst_ic, abs(ic))
    ok = nonconv == 0 and worst_ic <= 1e-6 and worst_l1 <= 1e-6
    assert verdict_line(
        5, "TMLE score equations", ok, f"max|mean IC|={worst_ic:.2e} max|L1 resid|={worst_l1:.2e} nonconverged={nonconv}"
    )


def _study(sim, reps, n, **config):
    cfg = AnalysisConfig.from_dict({"sensitivity": {"alpha": ALPHA, "sidedness": "two_sided"}, **config})
    t0 = time.perf_counter()
    out = run_simulation_study(sim, cfg, reps, n=n)
    out["elapsed"] = time.perf_counter() - t0
    return out


@pytest.mark.slow
def test_06_calibration(verdict_line):
    out = _study(default_config(), 500, 2000)
    bias, cov, ratio = out["bias"], out["coverage"], out["se_sd_ratio"]
    ok = abs(bias) <= 0.02 and 0.92 <= cov <= 0.98 and 0.85 <= ratio <= 1.15 and out["elapsed"] < 600
    assert verdict_line(
        6,
        "estimator calibration",
        ok,
        f"bias={bias:+.4f} coverage={cov:.3f} se/sd={ratio:.3f} failures={out['failures']} "
        f"nonconverged={out['nonconverged']} time={out['elapsed']:.0f}s",
    )


@pytest.mark.slow
def test_07_double_robustness(verdict_line):
    # the correctly specified side keeps the full default library
    wrong = [{"kind": "intercept_only"}]
    regimes = {
        "Qbar correct": {"g": wrong, "phi": wrong},
        "g,phi correct": {"qbar": wrong},
    }
    parts, ok = [], True
    for name, libs in regimes.items():
        out = _study(default_config(), 200, 10_000, nuisance_libraries=libs)
        ok &= abs(out["bias"]) <= 0.02 and out["failures"] == 0
        parts.append(f"{name}: bias={out['bias']:+.4f} ({out['elapsed']:.0f}s)")
    assert verdict_line(7, "double robustness", ok, "; ".join(parts))


@pytest.mark.slow
def test_08_sensitivity_validity_under_confounding(verdict_line):
    sim = default_config(u_a=1.0, u_y=1.0, effect=0.0)
    truth = ground_truth(sim)
    out = _study(sim, 1000, 2000)
    at_true, at_zero = out["reject_rate_delta0_true"], out["reject_rate_delta0_zero"]
    ok = (
        abs(truth.psi_causal) <= 1e-12
        and truth.delta0_true > 0
        and at_true <= ALPHA + 0.02
        and at_zero >= 3 * ALPHA
    )
    assert verdict_line(
        8,
        "sensitivity validity",
        ok,
        f"psi_causal={truth.psi_causal:.1e} delta0_true={truth.delta0_true:.4f} "
        f"reject@delta0_true={at_true:.3f} reject@0={at_zero:.3f} time={out['elapsed']:.0f}s",
    )


def _random_confounded(rng, seed):
    covs = (
        CovariateDist("w1", "normal", (0.0, 1.0)),
        CovariateDist("w2", "bernoulli", (float(rng.uniform(0.2, 0.8)), 0.0)),
    )

    def eq(a=0.0):
        return LogisticEquation(float(rng.normal(-0.5, 0.7)), tuple(rng.normal(0, 0.7, 2)), a, float(rng.uniform(0.5, 2.0)))

    return NpsemConfig(covs, eq(), eq(float(rng.normal(0.5, 0.5))), eq(float(rng.normal(0.5, 1.0))), seed)


def test_09_causal_gap_bound(verdict_line):
    rng = np.random.default_rng(909)
    worst = -math.inf
    for k in range(10):
        gt = ground_truth(_random_confounded(rng, 50 + k))
        se = math.sqrt(gt.mc_se["psi_statistical"] ** 2 + gt.mc_se["psi_causal"] ** 2 + gt.mc_se["spontaneous_rate"] ** 2)
        worst = max(worst, (gt.psi_statistical - gt.psi_causal) - (gt.spontaneous_rate + 3 * se))
    assert verdict_line(9, "causal-gap bound", worst <= 0, f"max(gap - bound)={worst:.4f} over 10 configs")


def test_10_determinism(verdict_line, tmp_path):
    sim = tmp_path / "sim.json"
    write_config(default_config(u_a=0.5, u_y=0.5), sim)
    data = tmp_path / "data.csv"
    npsens = [sys.executable, "-m", "npsens"]
    subprocess.run([*npsens, "simulate", "--config", str(sim), "--n", "1500", "--out", str(data)], check=True)
    cfg = tmp_path / "analysis.json"
    cfg.write_text(json.dumps({
        "data": {"path": "data.csv", "columns": {"covariates": ["w1", "w2", "w3"]}},
        "sensitivity": {"alpha": 0.05, "sidedness": "two_sided", "delta_grid": [0.0, 0.05, 0.1]},
    }))
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        subprocess.run([*npsens, "analyze", "--config", str(cfg), "--out", str(out)], check=True)
        body = json.loads((out / "report.json").read_text())
        body.pop("timings")
        stripped = json.dumps(body, indent=2, sort_keys=True).encode()
        outputs.append((stripped, (out / "curve.csv").read_bytes(), (out / "ic.csv").read_bytes()))
    same = outputs[0] == outputs[1]
    assert verdict_line(10, "determinism", same, f"report/curve/ic byte-identical={same}")
