"""Per-split estimators: BLP, GATES, joint bands, CLAN.

All estimators run on the main half of one split, taking proxy values as
given.  Two regression strategies are supported and are first-order
equivalent: ``weighted`` projects the outcome on orthogonalized treatment
interactions under propensity weights; ``ht`` projects the
Horvitz-Thompson transformed outcome on the same features unweighted.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.stats

from .errors import ConfigError, EstimationError
from .wls_engine import WlsFit, fit_weighted_ols

STRATEGIES = ("weighted", "ht")
BAND_DRAWS = 10_000
MIN_PROXY_VARIANCE = 1e-12


def _weighted_mean(x: np.ndarray, wt: np.ndarray) -> float:
    return float(np.sum(wt * x) / np.sum(wt))


def _weighted_var(x: np.ndarray, wt: np.ndarray) -> float:
    m = _weighted_mean(x, wt)
    return float(np.sum(wt * (x - m) ** 2) / np.sum(wt))


def _check_strategy(strategy: str):
    if strategy not in STRATEGIES:
        raise ConfigError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")


def _controls_matrix(controls, n: int) -> np.ndarray:
    if controls is None:
        return np.empty((n, 0))
    c = np.asarray(controls, dtype=float)
    if c.ndim == 1:
        c = c[:, None]
    if c.shape[0] != n:
        raise EstimationError("controls rows do not match main half")
    return c


def _design(ds, m_idx, b_vals, s_vals, target_cols, strategy, controls):
    """Assemble (X, response, weights, required indices) for one projection.

    The nuisance block X1 = [1, B, S, controls]; the target block differs
    per estimator and strategy.  In the ht strategy X1 enters multiplied by
    H and the response is Y * H.
    """
    m_idx = np.asarray(m_idx)
    n = len(m_idx)
    x1 = np.column_stack(
        [np.ones(n), np.asarray(b_vals), np.asarray(s_vals), _controls_matrix(controls, n)]
    )
    sw = ds.sweight[m_idx]
    if strategy == "weighted":
        X = np.column_stack([x1, target_cols])
        resp = ds.y[m_idx]
        wt = ds.w[m_idx] * sw
    else:
        h = ds.h[m_idx]
        X = np.column_stack([x1 * h[:, None], target_cols])
        resp = ds.y[m_idx] * h
        wt = sw
    required = list(range(x1.shape[1], X.shape[1]))
    return X, resp, wt, required


def _fit_targets(ds, m_idx, X, resp, wt, required) -> WlsFit:
    cl = ds.cluster[np.asarray(m_idx)] if ds.cluster is not None else None
    fit = fit_weighted_ols(X, resp, wt, cluster=cl)
    lost = set(fit.dropped_cols) & set(required)
    if lost:
        raise EstimationError(
            f"rank failure on target columns {sorted(lost)}; only nuisance "
            "controls may be dropped"
        )
    return fit


@dataclass(frozen=True)
class BlpFit:
    """Best linear predictor of the effect on the score proxy.

    ``beta1`` estimates the average effect, ``beta2`` the loading of the
    true effect on the (demeaned) score proxy.  ``lambda_score`` is the
    learner-selection score ``beta2^2 * Var_M(S)``.
    """

    beta1: float
    beta2: float
    cov: np.ndarray
    strategy: str
    lambda_score: float
    nuisance: np.ndarray
    dropped_cols: tuple[int, ...]
    condition: float

    @property
    def se1(self) -> float:
        return float(np.sqrt(self.cov[0, 0]))

    @property
    def se2(self) -> float:
        return float(np.sqrt(self.cov[1, 1]))


def estimate_blp(
    ds,
    m_idx,
    b_vals,
    s_vals,
    strategy: str = "weighted",
    controls=None,
) -> BlpFit:
    """Weighted linear projection of the effect on the demeaned score.

    ``weighted``: regress Y on [X1, (D - p), (D - p)(S - mean S)] with
    weight ``w * sweight``.  ``ht``: regress Y*H on [X1*H, 1, (S - mean S)]
    with weight ``sweight``.  The coefficients on the last two columns are
    (beta1, beta2) in both cases.
    """
    _check_strategy(strategy)
    m_idx = np.asarray(m_idx)
    s_vals = np.asarray(s_vals, dtype=float)
    b_vals = np.asarray(b_vals, dtype=float)
    sw = ds.sweight[m_idx]
    var_s = _weighted_var(s_vals, sw)
    if var_s < MIN_PROXY_VARIANCE:
        raise EstimationError(
            "score proxy has (near) zero variance on the main half; "
            "jitter degenerate proxies before estimation"
        )
    s_c = s_vals - _weighted_mean(s_vals, sw)
    if strategy == "weighted":
        dp = ds.d[m_idx] - ds.p[m_idx]
        target = np.column_stack([dp, dp * s_c])
    else:
        target = np.column_stack([np.ones(len(m_idx)), s_c])
    X, resp, wt, required = _design(ds, m_idx, b_vals, s_vals, target, strategy, controls)
    fit = _fit_targets(ds, m_idx, X, resp, wt, required)
    i1, i2 = required
    beta1 = float(fit.coef[i1])
    beta2 = float(fit.coef[i2])
    cov = fit.cov[np.ix_([i1, i2], [i1, i2])]
    return BlpFit(
        beta1=beta1,
        beta2=beta2,
        cov=cov,
        strategy=strategy,
        lambda_score=beta2**2 * var_s,
        nuisance=fit.coef[: required[0]].copy(),
        dropped_cols=fit.dropped_cols,
        condition=fit.condition,
    )


@dataclass(frozen=True)
class GroupScheme:
    """Quantile grouping of the main half by the score proxy.

    ``assign`` maps each main-half row to a group in 0..K-1 (group 0 is the
    least affected per the proxy).  Ties are rank-averaged so tied score
    values share a group; a mass point spanning a cut leaves a group empty,
    which is an error rather than a silent merge.
    """

    k: int
    cuts: np.ndarray
    assign: np.ndarray
    counts: np.ndarray


def build_groups(s_vals, k: int) -> GroupScheme:
    if k < 1:
        raise ConfigError(f"number of groups must be >= 1, got {k}")
    s_vals = np.asarray(s_vals, dtype=float)
    n = len(s_vals)
    if n < k:
        raise EstimationError(f"cannot form {k} groups from {n} rows")
    ranks = scipy.stats.rankdata(s_vals, method="average")
    q = (ranks - 0.5) / n
    assign = np.minimum((q * k).astype(np.int64), k - 1)
    counts = np.bincount(assign, minlength=k)
    cuts = np.quantile(s_vals, np.arange(1, k) / k) if k > 1 else np.array([])
    if np.any(counts == 0):
        kk = int(np.argmax(counts == 0))
        cut = cuts[min(kk, len(cuts) - 1)] if k > 1 else float("nan")
        raise EstimationError(
            f"quantile group {kk + 1} of {k} is empty: a mass point spans the "
            f"{(kk) / k:.2f}-{(kk + 1) / k:.2f} cut near value {cut!r}"
        )
    return GroupScheme(k=k, cuts=cuts, assign=assign, counts=counts)


@dataclass(frozen=True)
class GatesFit:
    """Sorted group average treatment effects."""

    gamma: np.ndarray
    cov: np.ndarray
    scheme: GroupScheme
    strategy: str
    lambda_bar: float
    dropped_cols: tuple[int, ...]
    condition: float

    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    @property
    def diff(self) -> float:
        """Most-vs-least affected contrast gamma_K - gamma_1."""
        return float(self.gamma[-1] - self.gamma[0])

    @property
    def diff_se(self) -> float:
        k = len(self.gamma)
        v = self.cov[k - 1, k - 1] + self.cov[0, 0] - 2.0 * self.cov[0, k - 1]
        return float(np.sqrt(max(v, 0.0)))

    def homogeneity_test(self) -> tuple[float, int, float]:
        """Wald test of gamma_1 = ... = gamma_K (chi-square, K-1 df)."""
        k = len(self.gamma)
        if k < 2:
            return 0.0, 0, 1.0
        C = np.diff(np.eye(k), axis=0)
        diffs = C @ self.gamma
        vc = C @ self.cov @ C.T
        stat = float(diffs @ np.linalg.pinv(vc) @ diffs)
        pval = float(scipy.stats.chi2.sf(stat, k - 1))
        return stat, k - 1, pval


def estimate_gates(
    ds,
    m_idx,
    b_vals,
    s_vals,
    k: int = 5,
    strategy: str = "weighted",
    controls=None,
    scheme: GroupScheme | None = None,
) -> GatesFit:
    """Group average treatment effects by score-proxy quantile group.

    ``weighted``: regress Y on [X1, (D - p) 1(G_1), ..., (D - p) 1(G_K)]
    with weight ``w * sweight``; ``ht``: regress Y*H on [X1*H, 1(G_1), ...,
    1(G_K)] with weight ``sweight``.
    """
    _check_strategy(strategy)
    m_idx = np.asarray(m_idx)
    s_vals = np.asarray(s_vals, dtype=float)
    if scheme is None:
        scheme = build_groups(s_vals, k)
    dummies = np.equal.outer(scheme.assign, np.arange(scheme.k)).astype(float)
    if strategy == "weighted":
        target = dummies * (ds.d[m_idx] - ds.p[m_idx])[:, None]
    else:
        target = dummies
    X, resp, wt, required = _design(ds, m_idx, b_vals, s_vals, target, strategy, controls)
    fit = _fit_targets(ds, m_idx, X, resp, wt, required)
    idx = np.asarray(required)
    gamma = fit.coef[idx]
    cov = fit.cov[np.ix_(idx, idx)]
    return GatesFit(
        gamma=gamma,
        cov=cov,
        scheme=scheme,
        strategy=strategy,
        lambda_bar=float(np.mean(gamma**2)),
        dropped_cols=fit.dropped_cols,
        condition=fit.condition,
    )


@dataclass(frozen=True)
class BandResult:
    """Joint (1 - alpha) confidence band over the K group effects."""

    crit: float
    lo: np.ndarray
    hi: np.ndarray


def joint_band(
    gamma,
    cov,
    alpha: float,
    rng: np.random.Generator,
    draws: int = BAND_DRAWS,
) -> BandResult:
    """Sup-t band: critical value from the Gaussian max-|t| distribution.

    Draws ``draws`` vectors from N(0, corr(cov)) and takes the empirical
    (1 - alpha) quantile of the max absolute coordinate.  A non-PSD
    covariance (possible after clustering) is repaired by clipping negative
    eigenvalues at zero, with a warning.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must be in (0, 1), got {alpha}")
    gamma = np.asarray(gamma, dtype=float)
    cov = np.asarray(cov, dtype=float)
    sd = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    safe = np.where(sd > 0, sd, 1.0)
    corr = cov / np.outer(safe, safe)
    np.fill_diagonal(corr, 1.0)
    vals, vecs = np.linalg.eigh(0.5 * (corr + corr.T))
    if vals.min() < -1e-10:
        warnings.warn(
            f"correlation matrix has negative eigenvalue {vals.min():.3e}; "
            "clipping at zero for band draws",
            RuntimeWarning,
        )
    root = vecs * np.sqrt(np.clip(vals, 0.0, None))
    norms = np.sqrt(np.sum(root**2, axis=1))
    root = root / np.where(norms > 0, norms, 1.0)[:, None]
    zs = rng.standard_normal((draws, len(gamma)))
    maxabs = np.max(np.abs(zs @ root.T), axis=1)
    crit = float(np.quantile(maxabs, 1.0 - alpha))
    return BandResult(crit=crit, lo=gamma - crit * sd, hi=gamma + crit * sd)


def rearrange_monotone(points, band: tuple | None = None):
    """Monotonize estimates (and a band) by ascending rearrangement.

    Sorting the point estimates and each band envelope separately preserves
    pointwise coverage: if ``lo <= point <= hi`` coordinatewise then the
    same holds after sorting, and the total band width is unchanged.
    """
    pts = np.sort(np.asarray(points, dtype=float))
    if band is None:
        return pts
    lo, hi = band
    return pts, (np.sort(np.asarray(lo, dtype=float)), np.sort(np.asarray(hi, dtype=float)))


@dataclass(frozen=True)
class ClanStat:
    """Most/least-affected group means of one characteristic."""

    delta1: float
    deltak: float
    se1: float
    sek: float
    diff: float
    diff_se: float


def _group_mean_var(vals, sw, cl) -> tuple[float, float]:
    mean = _weighted_mean(vals, sw)
    u = sw * (vals - mean)
    if cl is not None:
        _, codes = np.unique(cl, return_inverse=True)
        agg = np.bincount(codes, weights=u)
        var = float(np.sum(agg**2) / np.sum(sw) ** 2)
    else:
        var = float(np.sum(u**2) / np.sum(sw) ** 2)
    return mean, var


def estimate_clan(
    ds,
    m_idx,
    scheme: GroupScheme,
    g_vars: list[str],
) -> dict[str, ClanStat]:
    """Classification analysis: characteristic means in G_1 versus G_K.

    Group means use sampling weights; standard errors use the unequal-
    variance two-sample formula with HC0-style group variances, aggregated
    to cluster level when clusters are present.
    """
    if scheme.k < 2:
        raise EstimationError("CLAN needs at least 2 groups")
    m_idx = np.asarray(m_idx)
    out: dict[str, ClanStat] = {}
    lo_rows = m_idx[scheme.assign == 0]
    hi_rows = m_idx[scheme.assign == scheme.k - 1]
    for name in g_vars:
        col = ds.column(name)
        stats = []
        for rows in (lo_rows, hi_rows):
            cl = ds.cluster[rows] if ds.cluster is not None else None
            stats.append(_group_mean_var(col[rows], ds.sweight[rows], cl))
        (m1, v1), (mk, vk) = stats
        out[name] = ClanStat(
            delta1=m1,
            deltak=mk,
            se1=float(np.sqrt(v1)),
            sek=float(np.sqrt(vk)),
            diff=mk - m1,
            diff_se=float(np.sqrt(v1 + vk)),
        )
    return out


def learner_scores(blp: BlpFit, gates: GatesFit) -> tuple[float, float]:
    """Selection scores (Lambda, Lambda-bar) from one split's fits."""
    return blp.lambda_score, gates.lambda_bar
