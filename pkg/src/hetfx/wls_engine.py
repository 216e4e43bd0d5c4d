"""Weighted least squares with heteroskedasticity-robust covariance.

One numerical core serves every projection in the package: weighted OLS
solved by column-pivoted QR on the square-root-weighted design, with an
HC0 sandwich covariance (optionally clustered).  No degrees-of-freedom
correction is applied anywhere, so t-ratios are invariant to rescaling
the weights by a positive constant.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import EstimationError

PIVOT_RTOL = 1e-10


@dataclass(frozen=True)
class WlsFit:
    """Weighted OLS fit with sandwich covariance.

    ``coef`` and ``cov`` are aligned with the input columns; entries for
    dropped (collinear) columns are exactly zero and their indices are
    listed in ``dropped_cols``.
    """

    coef: np.ndarray
    cov: np.ndarray
    residuals: np.ndarray
    n_used: int
    dropped_cols: tuple[int, ...]
    condition: float

    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))


def fit_weighted_ols(
    X,
    y,
    w=None,
    cluster=None,
) -> WlsFit:
    """Solve ``min_b sum_i w_i (y_i - x_i'b)^2`` and its HC0 sandwich.

    Parameters
    ----------
    X : (n, p) design matrix.
    y : (n,) response.
    w : (n,) non-negative weights; defaults to ones.
    cluster : optional (n,) group labels; if given, the sandwich meat sums
        score contributions within groups before the outer product.

    Collinear columns are detected by the pivoted-QR diagonal (ratio below
    ``1e-10`` of the leading pivot) and dropped; coefficient and covariance
    entries for dropped columns are zero.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if y.shape != (n,):
        raise EstimationError(f"response shape {y.shape} does not match design ({n}, {p})")
    if w is None:
        w = np.ones(n)
    w = np.asarray(w, dtype=float)
    if w.shape != (n,):
        raise EstimationError("weight length does not match design")
    if np.any(w < 0):
        raise EstimationError("weights must be non-negative")
    n_used = int(np.sum(w > 0))
    if n_used == 0:
        raise EstimationError("all weights are zero")

    sw = np.sqrt(w)
    Xw = X * sw[:, None]
    yw = y * sw
    Q, R, piv = scipy.linalg.qr(Xw, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        raise EstimationError("design has no usable columns (all zero)")
    rank = int(np.sum(diag >= PIVOT_RTOL * diag[0]))
    kept = np.sort(piv[:rank])
    dropped = tuple(int(j) for j in np.sort(piv[rank:]))
    if rank >= n_used:
        raise EstimationError(
            f"{rank} retained columns with only {n_used} positively weighted rows"
        )

    # solve on the pivoted leading block
    R1 = R[:rank, :rank]
    qty = Q[:, :rank].T @ yw
    b_piv = scipy.linalg.solve_triangular(R1, qty)
    coef = np.zeros(p)
    coef[piv[:rank]] = b_piv

    resid = y - X @ coef

    # bread: (X'WX)^{-1} on kept columns, via R1 since X'WX = R1'R1
    Rinv = scipy.linalg.solve_triangular(R1, np.eye(rank))
    bread = Rinv @ Rinv.T  # in pivoted order

    # meat: sum of w_i^2 e_i^2 x_i x_i', summed within clusters if given
    Xk = X[:, piv[:rank]]
    scores = Xk * (w * resid)[:, None]
    if cluster is not None:
        cl = np.asarray(cluster)
        if cl.shape != (n,):
            raise EstimationError("cluster length does not match design")
        _, codes = np.unique(cl, return_inverse=True)
        agg = np.zeros((codes.max() + 1, rank))
        np.add.at(agg, codes, scores)
        meat = agg.T @ agg
    else:
        meat = scores.T @ scores

    cov_piv = bread @ meat @ bread
    cov = np.zeros((p, p))
    idx = piv[:rank]
    cov[np.ix_(idx, idx)] = cov_piv
    cov = 0.5 * (cov + cov.T)

    condition = float(diag[0] / diag[rank - 1]) if rank > 0 else np.inf
    return WlsFit(
        coef=coef,
        cov=cov,
        residuals=resid,
        n_used=n_used,
        dropped_cols=dropped,
        condition=condition,
    )
