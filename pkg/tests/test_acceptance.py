"""Acceptance gate: ten end-to-end criteria with hard tolerances.

Each test prints a single ``ACCEPTANCE n: PASS/FAIL`` line (visible with
``pytest -s``; the per-test PASSED/FAILED status carries the same verdict)
and then asserts, so a failing criterion fails the suite.  Monte Carlo
criteria run under fixed seeds, which makes them deterministic.
"""
import dataclasses
import json
import time

import numpy as np
import pytest
import scipy.stats

from hetfx.core_data import Dataset, make_splits, rng_stream
from hetfx.estimators import estimate_blp, estimate_gates
from hetfx.learners import LearnerSpec, jitter_if_degenerate
from hetfx.pipeline import RunConfig, emit_report, run_analysis
from hetfx.sim_lab import (
    SimDesign,
    _linear_proxies,
    _standard_power_cell,
    gen_design,
    oracle_gates,
    power_study,
    proposed_het_test,
)
from hetfx.vein import SplitStats, adjusted_pvalue, summarize
from hetfx.wls_engine import fit_weighted_ols

EN_FIXED = LearnerSpec(
    kind="elastic_net", tuning="fixed", hyperparams={"lam": 0.01, "alpha_mix": 0.5}
)


def _verdict(num: int, ok: bool, detail: str) -> str:
    line = f"ACCEPTANCE {num}: {'PASS' if ok else 'FAIL'} — {detail}"
    print(line, flush=True)
    return line


def test_criterion_01_standard_power_grid():
    """Standard-test power over n x beta matches the reference table ±0.02."""
    ns = [100, 200, 400]
    betas = [0.0, 0.2, 0.4, 0.8]
    expected = np.array([
        [0.07, 0.19, 0.53, 0.97],
        [0.06, 0.30, 0.81, 1.00],
        [0.05, 0.52, 0.98, 1.00],
    ])
    reps = 2000
    start = time.perf_counter()
    got = np.empty_like(expected)
    for i, n in enumerate(ns):
        for j, beta in enumerate(betas):
            got[i, j] = _standard_power_cell(
                n, beta, reps, 0.05, rng_stream(2, 11, i, j)
            )
    elapsed = time.perf_counter() - start
    err = np.abs(got - expected)
    ok = bool(np.all(err <= 0.02)) and elapsed < 120.0
    line = _verdict(
        1, ok,
        f"max|power-table| = {err.max():.4f} (tol 0.02), {elapsed:.1f}s (< 120s)",
    )
    assert ok, line + f"\nrates:\n{got}"


def test_criterion_02_proposed_power_grid():
    """Split-robust test power over n x beta matches the reference table ±0.05."""
    ns = [100, 400]
    betas = [0.0, 0.4, 0.8]
    expected = np.array([
        [0.00, 0.17, 0.80],
        [0.00, 0.79, 1.00],
    ])
    start = time.perf_counter()
    _, proposed = power_study(ns, betas, reps=500, n_splits=50, seed=6)
    elapsed = time.perf_counter() - start
    got = np.array([[proposed.rate(n, b) for b in betas] for n in ns])
    err = np.abs(got - expected)
    ok = bool(np.all(err <= 0.05)) and elapsed < 1800.0
    line = _verdict(
        2, ok,
        f"max|power-table| = {err.max():.4f} (tol 0.05), {elapsed:.0f}s (< 1800s)",
    )
    assert ok, line + f"\nrates:\n{got}"


def test_criterion_03_perfect_proxy_identification():
    """With the true score as proxy the projection recovers (0, 1); a 2x scale
    halves the loading."""
    design = SimDesign(kind="interactive", n=50_000, alpha2=0.0, beta=1.0)
    ds, truth = gen_design(design, seed=33)
    idx = np.arange(ds.n)
    rows = []
    ok = True
    for strategy in ("weighted", "ht"):
        fit = estimate_blp(ds, idx, truth.b0_values, truth.s0_values,
                           strategy=strategy)
        ok &= abs(fit.beta1 - 0.0) <= 0.03 and abs(fit.beta2 - 1.0) <= 0.05
        rows.append(f"{strategy}: b1={fit.beta1:+.4f} b2={fit.beta2:.4f}")
        scaled = estimate_blp(ds, idx, truth.b0_values, 2.0 * truth.s0_values,
                              strategy=strategy)
        ok &= abs(scaled.beta2 - 0.5) <= 0.05
        rows.append(f"{strategy} 2x-scale: b2={scaled.beta2:.4f}")
    line = _verdict(3, ok, "; ".join(rows) + " (tols 0.03 / 0.05)")
    assert ok, line


def test_criterion_04_strategy_agreement():
    """The two regression strategies agree on the loading to well within
    sampling error in at least 90% of replications."""
    design = SimDesign(kind="interactive", n=20_000, alpha2=1.0, beta=0.5)
    close = 0
    reps = 50
    for r in range(reps):
        ds, truth = gen_design(design, seed=40_000 + r)
        idx = np.arange(ds.n)
        fw = estimate_blp(ds, idx, truth.b0_values, truth.s0_values,
                          strategy="weighted")
        fh = estimate_blp(ds, idx, truth.b0_values, truth.s0_values,
                          strategy="ht")
        close += abs(fw.beta2 - fh.beta2) < 0.5 * fw.se2
    ok = close >= int(0.9 * reps)
    line = _verdict(4, ok, f"|b2_w - b2_ht| < 0.5*se in {close}/{reps} (need >= 45)")
    assert ok, line


def test_criterion_05_gates_recovery():
    """K=5 group effects match the Monte Carlo ground truth within 0.05."""
    design = SimDesign(kind="figure_linear", n=50_000)
    oracle = oracle_gates(design, k=5, seed=3)
    ds, truth = gen_design(design, seed=55)
    idx = np.arange(ds.n)
    worst = 0.0
    ok = True
    for strategy in ("weighted", "ht"):
        fit = estimate_gates(ds, idx, truth.b0_values, truth.s0_values, k=5,
                             strategy=strategy)
        err = float(np.max(np.abs(fit.gamma - oracle)))
        worst = max(worst, err)
        ok &= err <= 0.05
    line = _verdict(
        5, ok,
        f"oracle={np.round(oracle, 3).tolist()}, max|gamma-oracle|={worst:.4f} "
        "(tol 0.05)",
    )
    assert ok, line


def test_criterion_06_adjusted_pvalue_level():
    """Doubled-median p-values stay level-alpha under dependence.

    Null p-values are correlated uniforms from an equicorrelated Gaussian
    copula; for each correlation the rejection rate of the adjusted p-value
    must not exceed alpha + 2 MC-SE.
    """
    reps, n_splits = 10_000, 100
    rows = []
    ok = True
    for rho in (0.0, 0.5, 0.9):
        rng = rng_stream(60, int(10 * rho))
        common = rng.standard_normal((reps, 1))
        idio = rng.standard_normal((reps, n_splits))
        x = np.sqrt(rho) * common + np.sqrt(1.0 - rho) * idio
        u = scipy.stats.norm.cdf(x)
        adj = np.apply_along_axis(adjusted_pvalue, 1, u)
        for alpha in (0.05, 0.10):
            rate = float(np.mean(adj <= alpha))
            bound = alpha + 2.0 * np.sqrt(alpha * (1.0 - alpha) / reps)
            ok &= rate <= bound
            rows.append(f"rho={rho} a={alpha}: {rate:.4f}<={bound:.4f}")
    line = _verdict(6, ok, "; ".join(rows))
    assert ok, line


def _target_dicts(node):
    """Yield every aggregated target summary in a report's results tree."""
    if isinstance(node, dict):
        if "ci_lo" in node and "ci_inv_lo" in node:
            yield node
        else:
            for v in node.values():
                yield from _target_dicts(v)


def test_criterion_07_inversion_ci_containment(tmp_path):
    """The inversion CI sits inside the endpoint-median CI for every target
    of a genuine pipeline run (hard invariant, no tolerance)."""
    rng = np.random.default_rng(7)
    n = 400
    z0 = rng.uniform(-1.0, 1.0, n)
    x1 = rng.normal(0.0, 1.0, n)
    d = (rng.random(n) < 0.5).astype(np.int64)
    y = z0 + z0 * d + 0.5 * rng.normal(0.0, 1.0, n)
    ds = Dataset(y=y, d=d, z=np.column_stack([z0, x1]), p=0.5,
                 z_names=("z0", "x1"))
    cfg = RunConfig(covariates=("z0", "x1"), learners=(EN_FIXED,),
                    n_splits=16, k_groups=3, strategy="both",
                    clan_vars=("z0", "x1"), seed=7)
    report = run_analysis(cfg, ds)
    checked, violations = 0, 0
    for row in _target_dicts(report.results):
        checked += 1
        if not (row["ci_lo"] <= row["ci_inv_lo"] and
                row["ci_inv_hi"] <= row["ci_hi"]):
            violations += 1
    ok = violations == 0 and checked >= 15
    line = _verdict(7, ok, f"{checked} targets checked, {violations} violations")
    assert ok, line


def test_criterion_08_split_ci_coverage():
    """Median-aggregated 90% intervals for the average effect cover the truth
    in at least 88% of replications (interactive design, beta=0.3, n=400)."""
    design = SimDesign(kind="interactive", n=400, alpha2=1.0, beta=0.3)
    reps, n_splits = 500, 100
    covered = 0
    for r in range(reps):
        data_seed = int(rng_stream(80, 8, r).integers(2**62))
        ds, _ = gen_design(design, data_seed)
        plan = make_splits(ds, n_splits, seed=data_seed + 1)
        b1 = np.empty(n_splits)
        s1 = np.empty(n_splits)
        for s, (a_idx, m_idx) in enumerate(plan):
            b_vals, s_vals = _linear_proxies(
                ds.y[a_idx], ds.d[a_idx], ds.z[a_idx], ds.z[m_idx]
            )
            if np.var(s_vals) < 1e-12:
                s_vals, _ = jitter_if_degenerate(
                    s_vals, rng_stream(data_seed + 1, s, 2)
                )
            fit = estimate_blp(ds, m_idx, b_vals, s_vals, strategy="weighted")
            b1[s], s1[s] = fit.beta1, fit.se1
        lo, hi = summarize(SplitStats.from_estimates(b1, s1, 0.05)).ci
        covered += lo <= 1.0 <= hi
    rate = covered / reps
    ok = rate >= 0.88
    line = _verdict(8, ok, f"coverage of the true average effect: {rate:.3f} (need >= 0.88)")
    assert ok, line


def test_criterion_09_wls_coverage_and_cluster_exactness():
    """Sandwich 95% intervals cover at the nominal rate, and singleton
    clusters reproduce the row-level covariance to machine precision."""
    reps, n = 2000, 2000
    truth = np.array([1.0, 2.0, -1.0])
    z95 = scipy.stats.norm.ppf(0.975)
    rng = rng_stream(90, 9)
    covered = 0
    for _ in range(reps):
        x1 = rng.standard_normal(n)
        x2 = rng.standard_normal(n)
        X = np.column_stack([np.ones(n), x1, x2])
        eps = (0.5 + 0.5 * np.abs(x1)) * rng.standard_normal(n)
        y = X @ truth + eps
        w = rng.uniform(0.5, 1.5, n)
        fit = fit_weighted_ols(X, y, w)
        se = np.sqrt(fit.cov[1, 1])
        covered += abs(fit.coef[1] - truth[1]) <= z95 * se
    rate = covered / reps
    cov_ok = 0.93 <= rate <= 0.97

    m = 300
    Xs = rng.standard_normal((m, 3))
    ys = Xs @ truth + rng.standard_normal(m)
    ws = rng.uniform(0.5, 1.5, m)
    plain = fit_weighted_ols(Xs, ys, ws)
    single = fit_weighted_ols(Xs, ys, ws, cluster=np.arange(m))
    gap = float(np.max(np.abs(plain.cov - single.cov)))
    exact_ok = gap <= 1e-12
    ok = cov_ok and exact_ok
    line = _verdict(
        9, ok,
        f"coverage {rate:.4f} in [0.93, 0.97]; singleton-cluster gap {gap:.2e} <= 1e-12",
    )
    assert ok, line


def test_criterion_10_reproducible_reports(tmp_path):
    """Two runs with the same config and seed emit byte-identical artifacts."""
    rng = np.random.default_rng(10)
    n = 300
    z0 = rng.uniform(-1.0, 1.0, n)
    d = (rng.random(n) < 0.5).astype(np.int64)
    y = z0 + (1.0 + z0) * d + 0.3 * rng.normal(0.0, 1.0, n)
    ds = Dataset(y=y, d=d, z=z0[:, None], p=0.5, z_names=("z0",))
    cfg = RunConfig(covariates=("z0",), learners=(EN_FIXED,), n_splits=6,
                    k_groups=3, clan_vars=("z0",), seed=101)
    dirs = (tmp_path / "first", tmp_path / "second")
    for out in dirs:
        emit_report(run_analysis(cfg, ds), cfg, str(out))
    same = {
        name: (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()
        for name in ("report.json", "summary.csv", "gates_band.csv")
    }
    ok = all(same.values())
    line = _verdict(10, ok, f"byte-identical: {same}")
    assert ok, line
