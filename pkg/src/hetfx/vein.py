"""Variational estimation and inference: aggregation across splits.

Each split produces an estimate, a standard error, a conditional CI, and
conditional p-values for every target.  These are random through the split;
aggregating by medians and doubling tail quantities yields inference that
is uniformly valid despite that extra randomness: the adjusted p-value is
``min(1, 2 * lower-median(p_A))`` and the adjusted interval takes the upper
median of lower endpoints and the lower median of upper endpoints, giving
level ``1 - 2*alpha`` from per-split level ``1 - alpha``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.stats

from .errors import ConfigError

SIDES = ("two", "left", "right")


def _check_vector(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim != 1 or a.size == 0:
        raise ConfigError(f"{name} must be a non-empty vector")
    if not np.all(np.isfinite(a)):
        raise ConfigError(f"{name} contains non-finite values")
    return a


def medians(xs) -> tuple[float, float, float]:
    """(lower, upper, mid) medians of a sample.

    lower = inf{x : P(X <= x) >= 1/2}, upper = sup{x : P(X >= x) >= 1/2},
    mid = their average.  For {1,2,3,4} this gives (2, 3, 2.5); for an odd
    count all three coincide.
    """
    a = np.sort(_check_vector(xs, "sample"))
    n = a.size
    lower = a[int(np.ceil(n / 2)) - 1]
    upper = a[n - int(np.ceil(n / 2))]
    return float(lower), float(upper), float(0.5 * (lower + upper))


def lower_median(xs) -> float:
    return medians(xs)[0]


def upper_median(xs) -> float:
    return medians(xs)[1]


def mid_median(xs) -> float:
    return medians(xs)[2]


def split_pvalues(thetas, sigmas, null: float = 0.0, sided: str = "two") -> np.ndarray:
    """Per-split normal p-values for H0: theta = null."""
    if sided not in SIDES:
        raise ConfigError(f"sided must be one of {SIDES}, got {sided!r}")
    thetas = _check_vector(thetas, "estimates")
    sigmas = _check_vector(sigmas, "standard errors")
    if np.any(sigmas <= 0):
        raise ConfigError("standard errors must be positive")
    t = (thetas - null) / sigmas
    if sided == "two":
        return 2.0 * scipy.stats.norm.sf(np.abs(t))
    if sided == "left":
        return scipy.stats.norm.cdf(t)
    return scipy.stats.norm.sf(t)


def adjusted_pvalue(p_values) -> float:
    """Split-robust p-value ``min(1, 2 * lower-median(p_A))``, capped at 1.

    Validity needs no independence across splits: for any dependence,
    P(median(p) <= alpha/2) <= 2 P(p <= alpha/2) <= alpha by Markov's
    inequality applied to the count of small p-values.
    """
    return min(1.0, raw_adjusted_pvalue(p_values))


def raw_adjusted_pvalue(p_values) -> float:
    """Uncapped ``2 * lower-median(p_A)``, in [0, 2]; kept for diagnostics."""
    p = _check_vector(p_values, "p-values")
    if np.any((p < 0) | (p > 1)):
        raise ConfigError("p-values must lie in [0, 1]")
    return 2.0 * lower_median(p)


def adjusted_ci(lowers, uppers) -> tuple[float, float]:
    """Split-robust interval: upper median of L, lower median of U.

    From per-split level ``1 - alpha`` intervals this has level
    ``1 - 2*alpha``.
    """
    lo = _check_vector(lowers, "lower endpoints")
    hi = _check_vector(uppers, "upper endpoints")
    if lo.shape != hi.shape:
        raise ConfigError("lower and upper endpoint vectors differ in length")
    return upper_median(lo), lower_median(hi)


def ci_by_inversion(thetas, sigmas, alpha: float) -> tuple[float, float]:
    """Sharper interval by test inversion over the null value.

    theta is in the interval iff
    ``upper-median((theta - est_A)/se_A - z) < 0`` and
    ``lower-median((theta - est_A)/se_A + z) > 0`` with
    ``z = Phi^{-1}(1 - alpha/2)``.  Both median curves are strictly
    increasing in theta, so each endpoint is found by bisection.  The
    result is always contained in the adjusted interval from
    :func:`adjusted_ci` at the same level; we intersect to absorb
    bisection tolerance.
    """
    if not 0.0 < alpha < 0.25:
        raise ConfigError(f"alpha must be in (0, 0.25) for inversion, got {alpha}")
    thetas = _check_vector(thetas, "estimates")
    sigmas = _check_vector(sigmas, "standard errors")
    if thetas.shape != sigmas.shape:
        raise ConfigError("estimates and standard errors differ in length")
    if np.any(sigmas <= 0):
        raise ConfigError("standard errors must be positive")
    z = scipy.stats.norm.ppf(1.0 - alpha / 2.0)
    l_ends = thetas - z * sigmas
    u_ends = thetas + z * sigmas
    l_adj, u_adj = adjusted_ci(l_ends, u_ends)
    span = float(np.max(u_ends) - np.min(l_ends))
    lo_brk = float(np.min(l_ends)) - max(span, 1.0)
    hi_brk = float(np.max(u_ends)) + max(span, 1.0)
    tol = 1e-10 * max(u_adj - l_adj, span, 1e-6)

    def hi_curve(theta: float) -> float:
        # > 0 once theta exits the interval on the right
        return upper_median((theta - thetas) / sigmas) - z

    def lo_curve(theta: float) -> float:
        # > 0 while theta is above the interval's left end
        return lower_median((theta - thetas) / sigmas) + z

    def bisect(fn, lo: float, hi: float) -> float:
        # fn is nondecreasing with fn(lo) < 0 <= fn(hi); find the crossing
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if fn(mid) < 0.0:
                lo = mid
            else:
                hi = mid
            if hi - lo < tol:
                break
        return 0.5 * (lo + hi)

    upper = bisect(hi_curve, lo_brk, hi_brk)
    lower = bisect(lo_curve, lo_brk, hi_brk)
    # Theorem-level containment; clip only numerical overshoot
    return max(lower, l_adj), min(upper, u_adj)


@dataclass(frozen=True)
class SplitStats:
    """Per-split inference ingredients for one scalar target."""

    thetas: np.ndarray
    sigmas: np.ndarray
    alpha: float
    lowers: np.ndarray
    uppers: np.ndarray
    p_left: np.ndarray
    p_right: np.ndarray
    p_two: np.ndarray

    @classmethod
    def from_estimates(cls, thetas, sigmas, alpha: float) -> "SplitStats":
        thetas = _check_vector(thetas, "estimates")
        sigmas = _check_vector(sigmas, "standard errors")
        if thetas.shape != sigmas.shape:
            raise ConfigError("estimates and standard errors differ in length")
        if np.any(sigmas <= 0):
            raise ConfigError("standard errors must be positive")
        if not 0.0 < alpha < 0.25:
            raise ConfigError(f"alpha must be in (0, 0.25), got {alpha}")
        z = scipy.stats.norm.ppf(1.0 - alpha / 2.0)
        return cls(
            thetas=thetas,
            sigmas=sigmas,
            alpha=alpha,
            lowers=thetas - z * sigmas,
            uppers=thetas + z * sigmas,
            p_left=split_pvalues(thetas, sigmas, sided="left"),
            p_right=split_pvalues(thetas, sigmas, sided="right"),
            p_two=split_pvalues(thetas, sigmas, sided="two"),
        )


@dataclass(frozen=True)
class VeinSummary:
    """Split-robust summary of one scalar target.

    ``ci`` is the median-endpoint interval, ``ci_inversion`` the sharper
    inverted interval (always contained in ``ci``); both have nominal
    level ``1 - 2*alpha``.  ``p_adjusted`` is capped at 1; the raw doubled
    median (in [0, 2]) is kept alongside for machine consumers.
    """

    estimate: float
    ci: tuple[float, float]
    ci_inversion: tuple[float, float]
    p_adjusted: float
    p_adjusted_raw: float
    alpha: float
    n_splits: int

    @property
    def level(self) -> float:
        return 1.0 - 2.0 * self.alpha

    def as_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "ci_lo": self.ci[0],
            "ci_hi": self.ci[1],
            "ci_inv_lo": self.ci_inversion[0],
            "ci_inv_hi": self.ci_inversion[1],
            "p_adjusted": self.p_adjusted,
            "p_adjusted_raw": self.p_adjusted_raw,
            "alpha": self.alpha,
            "level": self.level,
            "n_splits": self.n_splits,
        }


def summarize(stats: SplitStats, sided: str = "two") -> VeinSummary:
    """Aggregate per-split stats into the reported point, CI, and p-value."""
    if sided not in SIDES:
        raise ConfigError(f"sided must be one of {SIDES}, got {sided!r}")
    p = {"two": stats.p_two, "left": stats.p_left, "right": stats.p_right}[sided]
    return VeinSummary(
        estimate=mid_median(stats.thetas),
        ci=adjusted_ci(stats.lowers, stats.uppers),
        ci_inversion=ci_by_inversion(stats.thetas, stats.sigmas, stats.alpha),
        p_adjusted=adjusted_pvalue(p),
        p_adjusted_raw=raw_adjusted_pvalue(p),
        alpha=stats.alpha,
        n_splits=len(stats.thetas),
    )
