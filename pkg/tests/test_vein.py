from __future__ import annotations

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from hetfx import (
    ConfigError,
    SplitStats,
    adjusted_ci,
    adjusted_pvalue,
    ci_by_inversion,
    medians,
    raw_adjusted_pvalue,
    split_pvalues,
    summarize,
)

from conftest import naive_medians


class TestMedians:
    def test_even_count(self):
        assert medians([1, 2, 3, 4]) == (2.0, 3.0, 2.5)

    def test_odd_count(self):
        assert medians([1, 2, 3]) == (2.0, 2.0, 2.0)

    def test_singleton(self):
        assert medians([7]) == (7.0, 7.0, 7.0)

    def test_duplicates(self):
        assert medians([1, 1, 2, 2]) == (1.0, 2.0, 1.5)
        assert medians([3, 3, 3, 3]) == (3.0, 3.0, 3.0)

    def test_unsorted_input(self):
        assert medians([4, 1, 3, 2]) == (2.0, 3.0, 2.5)

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            medians([])

    @settings(deadline=None, max_examples=60)
    @given(
        xs=st.lists(
            st.floats(min_value=-1e6, max_value=1e6, allow_nan=False),
            min_size=1,
            max_size=25,
        ),
        a=st.floats(min_value=0.01, max_value=50.0),
        b=st.floats(min_value=-100.0, max_value=100.0),
    )
    def test_affine_equivariance_and_sorting_oracle(self, xs, a, b):
        lo, hi, mid = medians(xs)
        nlo, nhi = naive_medians(xs)
        assert lo == nlo and hi == nhi and mid == (nlo + nhi) / 2.0
        tlo, thi, _ = medians([a * x + b for x in xs])
        assert tlo == pytest.approx(a * lo + b, rel=1e-12, abs=1e-9)
        assert thi == pytest.approx(a * hi + b, rel=1e-12, abs=1e-9)


class TestSplitPvalues:
    def test_two_sided_at_zero_and_critical(self):
        p = split_pvalues([0.0, 1.959963985], [1.0, 1.0])
        assert p[0] == pytest.approx(1.0, abs=1e-12)
        assert p[1] == pytest.approx(0.05, abs=1e-9)

    def test_one_sided(self):
        right = split_pvalues([1.6448536269514722], [1.0], sided="right")
        left = split_pvalues([1.6448536269514722], [1.0], sided="left")
        assert right[0] == pytest.approx(0.05, abs=1e-9)
        assert left[0] == pytest.approx(0.95, abs=1e-9)

    def test_nonzero_null(self):
        p = split_pvalues([2.0], [1.0], null=2.0)
        assert p[0] == pytest.approx(1.0, abs=1e-12)


class TestAdjustedPvalue:
    def test_constant(self):
        assert adjusted_pvalue([0.03] * 7) == pytest.approx(0.06, abs=1e-12)

    def test_three_splits(self):
        assert adjusted_pvalue([0.01, 0.04, 0.90]) == pytest.approx(0.08, abs=1e-12)

    def test_cap_and_raw(self):
        ps = [0.9, 0.8, 0.95]
        assert adjusted_pvalue(ps) == 1.0
        assert raw_adjusted_pvalue(ps) == pytest.approx(1.8, abs=1e-12)

    def test_range_check(self):
        with pytest.raises(ConfigError):
            adjusted_pvalue([0.5, 1.5])
        with pytest.raises(ConfigError):
            adjusted_pvalue([-0.1])

    def test_independent_uniforms_keep_level(self):
        # With iid U(0,1) per-split p-values the doubled lower median is a
        # valid p-value: P(adjusted <= alpha) <= alpha.
        rng = np.random.default_rng(12)
        reps, splits = 10_000, 100
        u = rng.random((reps, splits))
        med = np.partition(u, splits // 2 - 1, axis=1)[:, splits // 2 - 1]
        adj = np.minimum(1.0, 2.0 * med)
        spot = adjusted_pvalue(u[0])  # library agrees with vectorized stand-in
        assert spot == pytest.approx(min(1.0, 2 * np.sort(u[0])[49]), abs=1e-12)
        for alpha in (0.05, 0.10):
            rate = float(np.mean(adj <= alpha))
            mc_se = np.sqrt(max(rate * (1 - rate), 1e-12) / reps)
            assert rate <= alpha + 2 * mc_se


class TestAdjustedCi:
    def test_odd_counts(self):
        assert adjusted_ci([1, 2, 3], [4, 5, 6]) == (2.0, 5.0)

    def test_even_counts(self):
        assert adjusted_ci([1, 2, 3, 4], [4, 5, 6, 7]) == (3.0, 5.0)

    def test_single_split(self):
        assert adjusted_ci([1.5], [2.5]) == (1.5, 2.5)

    def test_length_mismatch(self):
        with pytest.raises(ConfigError):
            adjusted_ci([1, 2], [3])


def _grid_inversion_oracle(thetas, sigmas, alpha, step=1e-4):
    """Brute-force membership scan of the median-t interval definition."""
    thetas = np.asarray(thetas, float)
    sigmas = np.asarray(sigmas, float)
    z = scipy.stats.norm.ppf(1 - alpha / 2)
    lo = thetas.min() - 4 * sigmas.max()
    hi = thetas.max() + 4 * sigmas.max()
    grid = np.arange(lo, hi, step)
    t = (grid[:, None] - thetas[None, :]) / sigmas[None, :]
    t.sort(axis=1)
    n = len(thetas)
    lower_med = t[:, int(np.ceil(n / 2)) - 1]
    upper_med = t[:, n - int(np.ceil(n / 2))]
    member = (upper_med < z) & (lower_med > -z)
    return float(grid[member].min()), float(grid[member].max())


class TestCiByInversion:
    def test_single_split_recovers_normal_interval(self):
        z = scipy.stats.norm.ppf(0.975)
        lo, hi = ci_by_inversion([1.0], [2.0], alpha=0.05)
        assert lo == pytest.approx(1.0 - 2 * z, abs=1e-6)
        assert hi == pytest.approx(1.0 + 2 * z, abs=1e-6)

    def test_identical_splits_degenerate(self):
        z = scipy.stats.norm.ppf(0.95)
        lo, hi = ci_by_inversion([2.0] * 5, [0.5] * 5, alpha=0.1)
        assert lo == pytest.approx(2.0 - 0.5 * z, abs=1e-6)
        assert hi == pytest.approx(2.0 + 0.5 * z, abs=1e-6)

    def test_three_split_analytic_case(self):
        # estimates {0,1,2}, unit SEs, alpha=0.1: the median t-statistic is
        # (theta - 1), so the interval is exactly 1 +/- z_{0.95}.
        z = scipy.stats.norm.ppf(0.95)
        lo, hi = ci_by_inversion([0.0, 1.0, 2.0], [1.0, 1.0, 1.0], alpha=0.1)
        assert lo == pytest.approx(1.0 - z, abs=1e-6)
        assert hi == pytest.approx(1.0 + z, abs=1e-6)
        l_adj, u_adj = adjusted_ci(
            np.array([0.0, 1.0, 2.0]) - z, np.array([0.0, 1.0, 2.0]) + z
        )
        assert lo >= l_adj - 1e-9 and hi <= u_adj + 1e-9

    def test_against_grid_search_oracle(self):
        thetas = [0.0, 0.5, 1.0, 3.0]
        sigmas = [1.0, 2.0, 0.5, 1.0]
        for alpha in (0.05, 0.1, 0.2):
            lo, hi = ci_by_inversion(thetas, sigmas, alpha)
            glo, ghi = _grid_inversion_oracle(thetas, sigmas, alpha)
            assert lo == pytest.approx(glo, abs=2e-4)
            assert hi == pytest.approx(ghi, abs=2e-4)

    def test_containment_in_adjusted_interval(self):
        # Sided containment must hold even for wildly scattered splits,
        # where either interval may legitimately come back empty
        # (endpoints crossed); emptiness nests in emptiness.
        rng = np.random.default_rng(9)
        z = scipy.stats.norm.ppf(0.975)
        for _ in range(50):
            k = int(rng.integers(1, 12))
            thetas = rng.normal(size=k) * rng.uniform(0.5, 5)
            sigmas = rng.uniform(0.1, 3.0, size=k)
            lo, hi = ci_by_inversion(thetas, sigmas, alpha=0.05)
            l_adj, u_adj = adjusted_ci(thetas - z * sigmas, thetas + z * sigmas)
            assert lo >= l_adj - 1e-9
            assert hi <= u_adj + 1e-9

    def test_concentrated_splits_give_proper_nested_interval(self):
        # When the per-split intervals overlap heavily, both intervals are
        # proper and the inversion interval nests inside the adjusted one.
        rng = np.random.default_rng(10)
        z = scipy.stats.norm.ppf(0.975)
        for _ in range(50):
            k = int(rng.integers(1, 12))
            thetas = rng.normal(scale=0.2, size=k)
            sigmas = rng.uniform(1.0, 2.0, size=k)
            lo, hi = ci_by_inversion(thetas, sigmas, alpha=0.05)
            l_adj, u_adj = adjusted_ci(thetas - z * sigmas, thetas + z * sigmas)
            assert l_adj - 1e-9 <= lo <= hi <= u_adj + 1e-9

    def test_argument_validation(self):
        with pytest.raises(ConfigError, match="alpha"):
            ci_by_inversion([0.0], [1.0], alpha=0.25)
        with pytest.raises(ConfigError, match="positive"):
            ci_by_inversion([0.0, 1.0], [1.0, 0.0], alpha=0.05)
        with pytest.raises(ConfigError):
            ci_by_inversion([0.0, 1.0], [1.0], alpha=0.05)


class TestSummarize:
    def test_fields_and_containment(self):
        rng = np.random.default_rng(3)
        thetas = rng.normal(loc=1.0, scale=0.2, size=25)
        sigmas = rng.uniform(0.1, 0.4, size=25)
        stats = SplitStats.from_estimates(thetas, sigmas, alpha=0.05)
        summary = summarize(stats)
        assert summary.level == pytest.approx(0.90)
        assert summary.n_splits == 25
        lo_m, hi_m, mid = medians(thetas)
        assert summary.estimate == pytest.approx(mid)
        assert summary.ci[0] <= summary.ci_inversion[0]
        assert summary.ci_inversion[1] <= summary.ci[1]
        assert 0.0 <= summary.p_adjusted <= 1.0
        assert 0.0 <= summary.p_adjusted_raw <= 2.0
        d = summary.as_dict()
        for key in ("estimate", "ci_lo", "ci_hi", "ci_inv_lo", "ci_inv_hi",
                    "p_adjusted", "p_adjusted_raw", "alpha", "level",
                    "n_splits"):
            assert key in d
        assert d["ci_lo"] == summary.ci[0] and d["ci_hi"] == summary.ci[1]

    def test_single_split_collapse(self):
        z = scipy.stats.norm.ppf(0.975)
        stats = SplitStats.from_estimates([2.0], [0.5], alpha=0.05)
        summary = summarize(stats)
        assert summary.estimate == pytest.approx(2.0)
        assert summary.ci[0] == pytest.approx(2.0 - 0.5 * z, abs=1e-9)
        assert summary.ci[1] == pytest.approx(2.0 + 0.5 * z, abs=1e-9)
        p_single = float(split_pvalues([2.0], [0.5])[0])
        assert summary.p_adjusted == pytest.approx(min(1.0, 2 * p_single), abs=1e-12)

    def test_positive_sigma_required(self):
        with pytest.raises(ConfigError):
            SplitStats.from_estimates([1.0, 2.0], [1.0, -1.0], alpha=0.05)
