"""Simulation designs, benchmark tests, and power studies.

The lab owns both sides of the power comparison: the conventional
interaction test (OLS of the outcome on treatment-covariate interactions
with robust standard errors, valid only under a correct linear model) and
the proposed split-robust test (linear proxies fit on the auxiliary half,
weighted projection on the main half, doubled median p-value across
splits).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.stats

from .core_data import Dataset, make_splits, rng_stream
from .errors import ConfigError, EstimationError
from .estimators import build_groups, estimate_blp
from .learners import jitter_if_degenerate
from .vein import adjusted_pvalue, split_pvalues
from .wls_engine import fit_weighted_ols

DESIGN_KINDS = ("interactive", "figure_null", "figure_linear", "custom")


@dataclass(frozen=True)
class SimDesign:
    """Data-generating process ``Y = b0(Z) + s0(Z) D + sigma * eps``.

    ``interactive``: Z ~ N(0, 1) scalar, b0 = alpha0 + alpha1 Z,
    s0 = alpha2 + beta Z.  ``figure_null`` / ``figure_linear``:
    Z ~ U(-1, 1) scalar, b0 = Z, s0 = 0 or Z.  ``custom`` supplies
    callables.  Treatment is Bernoulli(p) independent of Z.
    """

    kind: str = "interactive"
    n: int = 1000
    alpha0: float = 0.0
    alpha1: float = 0.0
    alpha2: float = 1.0
    beta: float = 0.0
    sigma: float = 1.0
    p: float = 0.5
    b0: object = None
    s0: object = None
    z_sampler: object = None

    def __post_init__(self):
        if self.kind not in DESIGN_KINDS:
            raise ConfigError(f"unknown design kind {self.kind!r}")
        if self.n < 20:
            raise ConfigError(f"design n must be >= 20, got {self.n}")
        if not 0.0 < self.p < 1.0:
            raise ConfigError(f"design p must be in (0, 1), got {self.p}")
        if self.sigma < 0:
            raise ConfigError("sigma must be non-negative")
        if self.kind == "custom" and (self.b0 is None or self.s0 is None):
            raise ConfigError("custom design requires b0 and s0 callables")

    def baseline(self, z: np.ndarray) -> np.ndarray:
        if self.kind == "interactive":
            return self.alpha0 + self.alpha1 * z[:, 0]
        if self.kind in ("figure_null", "figure_linear"):
            return z[:, 0]
        return np.asarray(self.b0(z), dtype=float)

    def effect(self, z: np.ndarray) -> np.ndarray:
        if self.kind == "interactive":
            return self.alpha2 + self.beta * z[:, 0]
        if self.kind == "figure_null":
            return np.zeros(z.shape[0])
        if self.kind == "figure_linear":
            return z[:, 0]
        return np.asarray(self.s0(z), dtype=float)

    def draw_z(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "interactive":
            return rng.standard_normal((n, 1))
        if self.kind in ("figure_null", "figure_linear"):
            return rng.uniform(-1.0, 1.0, size=(n, 1))
        if self.z_sampler is not None:
            z = np.asarray(self.z_sampler(rng, n), dtype=float)
            return z[:, None] if z.ndim == 1 else z
        return rng.uniform(-1.0, 1.0, size=(n, 1))


@dataclass(frozen=True)
class Truth:
    """Ground truth handle for tests; estimators never see this."""

    design: SimDesign
    b0_values: np.ndarray
    s0_values: np.ndarray

    @property
    def ate(self) -> float:
        return float(self.s0_values.mean())


def gen_design(design: SimDesign, seed: int) -> tuple[Dataset, Truth]:
    """Simulate one dataset from the design; truth rides alongside."""
    rng = rng_stream(seed, 101)
    z = design.draw_z(rng, design.n)
    d = (rng.random(design.n) < design.p).astype(np.int64)
    while d.sum() < 2 or (design.n - d.sum()) < 2:
        # astronomically rare for n >= 20; redraw rather than patch rows
        d = (rng.random(design.n) < design.p).astype(np.int64)
    b0 = design.baseline(z)
    s0 = design.effect(z)
    y = b0 + s0 * d + design.sigma * rng.standard_normal(design.n)
    names = tuple(f"z{j}" for j in range(z.shape[1]))
    ds = Dataset(y=y, d=d, z=z, p=design.p, z_names=names)
    return ds, Truth(design=design, b0_values=b0, s0_values=s0)


def standard_het_test(ds: Dataset) -> float:
    """Conventional heterogeneity test: OLS with robust (HC0) inference.

    Regresses Y on [1, Z, D, D*Z] and Wald-tests the joint nullity of all
    interaction coefficients; with one covariate this is the squared
    two-sided t-test on the interaction.  Valid only if the conditional
    means are truly linear.
    """
    n, kz = ds.z.shape
    X = np.column_stack([np.ones(n), ds.z, ds.d, ds.z * ds.d[:, None]])
    fit = fit_weighted_ols(X, ds.y)
    idx = np.arange(2 + kz, 2 + 2 * kz)
    if set(fit.dropped_cols) & set(idx.tolist()):
        raise EstimationError("interaction columns are collinear; test undefined")
    g = fit.coef[idx]
    vc = fit.cov[np.ix_(idx, idx)]
    stat = float(g @ np.linalg.pinv(vc) @ g)
    return float(scipy.stats.chi2.sf(stat, kz))


def _linear_proxies(y_a, d_a, z_a, z_m):
    """OLS fit of the interactive model on A; proxy values on M."""
    n_a, kz = z_a.shape
    X = np.column_stack([np.ones(n_a), z_a, d_a, z_a * d_a[:, None]])
    coef, *_ = np.linalg.lstsq(X, y_a, rcond=None)
    a0 = coef[0]
    a1 = coef[1:1 + kz]
    a2 = coef[1 + kz]
    b = coef[2 + kz:]
    b_vals = a0 + z_m @ a1
    s_vals = a2 + z_m @ b
    return b_vals, s_vals


def proposed_het_test(
    ds: Dataset,
    n_splits: int = 100,
    seed: int = 0,
) -> float:
    """Split-robust heterogeneity test via the score-loading coefficient.

    For each split, fit the linear interactive model on the auxiliary half,
    form proxies on the main half, run the weighted projection, and take
    the two-sided p-value for the loading (beta2).  Returns the doubled
    lower-median p-value across splits, capped at 1.
    """
    plan = make_splits(ds, n_splits, seed)
    pvals = np.empty(n_splits)
    for s, (a_idx, m_idx) in enumerate(plan):
        b_vals, s_vals = _linear_proxies(
            ds.y[a_idx], ds.d[a_idx], ds.z[a_idx], ds.z[m_idx]
        )
        if np.var(s_vals) < 1e-12:
            s_vals, _ = jitter_if_degenerate(s_vals, rng_stream(seed, s, 2))
        fit = estimate_blp(ds, m_idx, b_vals, s_vals, strategy="weighted")
        pvals[s] = split_pvalues([fit.beta2], [fit.se2], sided="two")[0]
    return adjusted_pvalue(pvals)


@dataclass(frozen=True)
class PowerTable:
    """Rejection rates over an (n, beta) grid."""

    method: str
    alpha: float
    reps: int
    n_splits: int | None
    rates: dict = field(default_factory=dict)

    def rate(self, n: int, beta: float) -> float:
        return self.rates[(n, beta)]

    def mc_se(self, n: int, beta: float) -> float:
        r = self.rates[(n, beta)]
        return float(np.sqrt(max(r * (1.0 - r), 1e-12) / self.reps))

    def to_csv(self, path: str):
        lines = ["n,beta,reps,power,mc_se"]
        for (n, beta) in sorted(self.rates):
            lines.append(
                f"{n},{beta},{self.reps},{self.rates[(n, beta)]:.6f},{self.mc_se(n, beta):.6f}"
            )
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def _standard_power_cell(
    n: int,
    beta: float,
    reps: int,
    alpha: float,
    rng: np.random.Generator,
    alpha2: float = 1.0,
    sigma: float = 1.0,
) -> float:
    """Vectorized standard-test power for one (n, beta) cell.

    Batches all replications: the per-rep regression Y on [1, Z, D, DZ]
    with HC0 covariance reduces to batched 4x4 solves.
    """
    z = rng.standard_normal((reps, n))
    d = (rng.random((reps, n)) < 0.5).astype(float)
    eps = rng.standard_normal((reps, n))
    y = alpha2 * d + beta * z * d + sigma * eps
    X = np.stack([np.ones((reps, n)), z, d, z * d], axis=2)
    xtx = np.einsum("rni,rnj->rij", X, X)
    xty = np.einsum("rni,rn->ri", X, y)
    coef = np.linalg.solve(xtx, xty[..., None])[..., 0]
    resid = y - np.einsum("rni,ri->rn", X, coef)
    meat = np.einsum("rni,rn,rnj->rij", X, resid**2, X)
    bread = np.linalg.inv(xtx)
    cov = bread @ meat @ bread
    t = coef[:, 3] / np.sqrt(cov[:, 3, 3])
    pv = 2.0 * scipy.stats.norm.sf(np.abs(t))
    return float(np.mean(pv <= alpha))


def power_study(
    ns,
    betas,
    reps: int = 500,
    n_splits: int = 50,
    alpha: float = 0.05,
    seed: int = 0,
    alpha2: float = 1.0,
    sigma: float = 1.0,
) -> tuple[PowerTable, PowerTable]:
    """Monte Carlo power of the standard and proposed tests.

    Uses the interactive design ``Y = alpha2 D + beta Z D + sigma eps``
    with Z ~ N(0, 1) and Bernoulli(0.5) assignment.  Returns
    ``(standard, proposed)`` tables over the (n, beta) grid.
    """
    ns = [int(v) for v in ns]
    betas = [float(v) for v in betas]
    if reps < 1 or n_splits < 1:
        raise ConfigError("reps and n_splits must be >= 1")
    std_rates: dict = {}
    prop_rates: dict = {}
    for ni, n in enumerate(ns):
        for bi, beta in enumerate(betas):
            cell_rng = rng_stream(seed, 11, ni, bi)
            std_rates[(n, beta)] = _standard_power_cell(
                n, beta, reps, alpha, cell_rng, alpha2=alpha2, sigma=sigma
            )
            design = SimDesign(
                kind="interactive", n=n, alpha2=alpha2, beta=beta, sigma=sigma
            )
            rejections = 0
            for r in range(reps):
                data_seed = int(rng_stream(seed, 13, ni, bi, r).integers(2**62))
                ds, _ = gen_design(design, data_seed)
                p_adj = proposed_het_test(ds, n_splits=n_splits, seed=data_seed + 1)
                rejections += p_adj <= alpha
            prop_rates[(n, beta)] = rejections / reps
    standard = PowerTable(
        method="standard", alpha=alpha, reps=reps, n_splits=None, rates=std_rates
    )
    proposed = PowerTable(
        method="proposed", alpha=alpha, reps=reps, n_splits=n_splits, rates=prop_rates
    )
    return standard, proposed


def oracle_gates(
    design: SimDesign,
    k: int = 5,
    mc_n: int = 1_000_000,
    seed: int = 0,
    s_fn=None,
) -> np.ndarray:
    """Monte Carlo ground truth for group average effects.

    Draws covariates fresh from the design, groups them by the score
    (``s_fn`` if given, else the true effect), and returns the true mean
    effect per group.  A constant score makes every group's mean the
    overall mean.
    """
    rng = rng_stream(seed, 17)
    z = design.draw_z(rng, mc_n)
    s0 = design.effect(z)
    score = np.asarray(s_fn(z), dtype=float) if s_fn is not None else s0
    if np.var(score) < 1e-12:
        return np.full(k, float(s0.mean()))
    scheme = build_groups(score, k)
    return np.array([float(s0[scheme.assign == g].mean()) for g in range(k)])
