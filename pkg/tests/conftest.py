"""Shared helpers: independent oracles and small dataset builders.

The oracle implementations here are deliberately naive (dense normal
equations, explicit loops) so they cannot share bugs with the library's
QR/vectorized code paths.
"""
from __future__ import annotations

import numpy as np

from hetfx import Dataset


def oracle_wls(X, y, w=None, cluster=None):
    """Textbook weighted least squares with an HC0/cluster sandwich."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    wt = np.ones(n) if w is None else np.asarray(w, dtype=float)
    xtwx = X.T @ (wt[:, None] * X)
    coef = np.linalg.solve(xtwx, X.T @ (wt * y))
    resid = y - X @ coef
    scores = (wt * resid)[:, None] * X
    if cluster is None:
        meat = scores.T @ scores
    else:
        cluster = np.asarray(cluster)
        meat = np.zeros((p, p))
        for c in np.unique(cluster):
            s = scores[cluster == c].sum(axis=0)
            meat += np.outer(s, s)
    bread = np.linalg.inv(xtwx)
    return coef, bread @ meat @ bread


def manual_dataset(
    n=40,
    seed=0,
    p=0.5,
    strata=None,
    cluster=None,
    sweight=None,
    extra=None,
    n_cov=2,
):
    """Small synthetic dataset with a guaranteed-valid treatment vector."""
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(n, n_cov))
    d = (rng.random(n) < p).astype(int)
    d[:2] = 1
    d[2:4] = 0
    y = z[:, 0] + d * (1.0 + z[:, 0]) + rng.normal(size=n)
    return Dataset(
        y=y,
        d=d,
        z=z,
        p=np.full(n, p),
        z_names=tuple(f"x{i}" for i in range(n_cov)),
        strata=strata,
        cluster=cluster,
        sweight=sweight,
        extra=extra or {},
    )


def naive_medians(xs):
    """Sort-based lower/upper medians, independent of the library code."""
    s = np.sort(np.asarray(xs, dtype=float))
    n = len(s)
    lower = s[int(np.ceil(n / 2.0)) - 1]
    upper = s[n - int(np.ceil(n / 2.0))]
    return float(lower), float(upper)
