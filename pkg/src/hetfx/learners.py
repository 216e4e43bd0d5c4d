"""Proxy learners: elastic net, random forest, external predictions.

A learner is a recipe (:class:`LearnerSpec`) that, given the auxiliary half
of a split, produces a frozen pair of proxy predictors (:class:`ProxyPair`):
``b`` for the baseline response and ``s`` for the treatment-effect score.
Outcomes and covariates are rescaled to [0, 1] internally before fitting and
predictions are mapped back, so hyperparameter grids behave comparably
across datasets.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from sklearn.ensemble import RandomForestRegressor

from .errors import ConfigError, DataError, EstimationError

EN_TOL = 1e-7
EN_MAX_SWEEPS = 100_000
ALPHA_MIX_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)
LAMBDA_GRID_SIZE = 20
LAMBDA_DECADES = 4.0
JITTER_VARIANCE = 0.1
JITTER_THRESHOLD = 1e-12

FOREST_DEFAULTS = {"trees": 500, "min_leaf": 5, "feature_fraction": 1.0 / 3.0}


def _soft(x: float, t: float) -> float:
    return np.sign(x) * max(abs(x) - t, 0.0)


@dataclass(frozen=True)
class ElasticNetFit:
    """Coordinate-descent solution of the elastic-net problem.

    Minimizes ``(2n)^{-1} ||y - b0 - X b||^2 +
    lam (alpha_mix ||b||_1 + (1 - alpha_mix) ||b||_2^2 / 2)`` with an
    unpenalized intercept.  ``objective_path`` records the (standardized
    scale) objective after each sweep; it is non-increasing.
    """

    coef: np.ndarray
    intercept: float
    lam: float
    alpha_mix: float
    n_sweeps: int
    objective_path: tuple[float, ...]

    def predict(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.coef + self.intercept


def solve_elastic_net(
    X,
    y,
    lam: float,
    alpha_mix: float,
    tol: float = EN_TOL,
    max_sweeps: int = EN_MAX_SWEEPS,
    warm_start: np.ndarray | None = None,
) -> ElasticNetFit:
    """Cyclic coordinate descent with soft-thresholding.

    Columns are standardized internally (zero-variance columns keep a zero
    coefficient); the reported coefficients are on the original scale.
    Convergence is declared when the largest coefficient change within a
    sweep drops below ``tol`` (standardized scale); exceeding ``max_sweeps``
    raises with the sweep count.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if y.shape != (n,):
        raise EstimationError("response length does not match design")
    if lam < 0:
        raise ConfigError(f"lam must be non-negative, got {lam}")
    if not 0.0 <= alpha_mix <= 1.0:
        raise ConfigError(f"alpha_mix must be in [0, 1], got {alpha_mix}")

    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    active = sd > 0
    scale = np.where(active, sd, 1.0)
    Xs = (X - mu) / scale
    ybar = float(y.mean())
    yc = y - ybar

    b = np.zeros(p)
    if warm_start is not None and warm_start.shape == (p,):
        b = warm_start.copy()
        b[~active] = 0.0
    r = yc - Xs @ b

    l1 = lam * alpha_mix
    l2 = lam * (1.0 - alpha_mix)
    denom = 1.0 + l2

    def objective() -> float:
        return float(
            0.5 * np.mean(r**2) + l1 * np.sum(np.abs(b)) + 0.5 * l2 * np.sum(b**2)
        )

    path = []
    cols = np.flatnonzero(active)
    for sweep in range(1, max_sweeps + 1):
        delta = 0.0
        for j in cols:
            xj = Xs[:, j]
            rho = (xj @ r) / n + b[j]
            new = _soft(rho, l1) / denom
            step = new - b[j]
            if step != 0.0:
                r -= step * xj
                b[j] = new
                delta = max(delta, abs(step))
        path.append(objective())
        if delta < tol:
            n_sweeps = sweep
            break
    else:
        raise EstimationError(
            f"elastic net failed to converge after {max_sweeps} sweeps "
            f"(last max step {delta:.3e})"
        )

    coef = np.where(active, b / scale, 0.0)
    intercept = ybar - float(mu @ coef)
    return ElasticNetFit(
        coef=coef,
        intercept=intercept,
        lam=lam,
        alpha_mix=alpha_mix,
        n_sweeps=n_sweeps,
        objective_path=tuple(path),
    )


def _lambda_grid(X: np.ndarray, y: np.ndarray, alpha_mix: float) -> np.ndarray:
    """20-point log grid from the smallest all-zero lambda down 4 decades."""
    n = X.shape[0]
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    scale = np.where(sd > 0, sd, 1.0)
    Xs = (X - mu) / scale
    yc = y - y.mean()
    lam_max = np.max(np.abs(Xs.T @ yc)) / n / max(alpha_mix, 1e-3)
    lam_max = max(lam_max, 1e-12)
    return np.geomspace(lam_max, lam_max * 10.0**-LAMBDA_DECADES, LAMBDA_GRID_SIZE)


def tune_elastic_net(
    X,
    y,
    rng: np.random.Generator,
    folds: int = 2,
    repeats: int = 2,
) -> tuple[float, float]:
    """Repeated k-fold CV over the (alpha_mix, lambda) grid.

    Returns the ``(lam, alpha_mix)`` pair with the smallest mean held-out
    MSE; ties resolve to the first candidate in declaration order.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < 2 * folds:
        raise EstimationError(f"{n} rows is too few for {folds}-fold tuning")

    plans = []
    for _ in range(repeats):
        perm = rng.permutation(n)
        plans.extend(np.array_split(perm, folds))
    # fold assignments per repeat: array_split gives `folds` chunks per repeat
    candidates: list[tuple[float, float]] = []
    losses: list[float] = []
    for alpha_mix in ALPHA_MIX_GRID:
        grid = _lambda_grid(X, y, alpha_mix)
        sse = np.zeros(len(grid))
        cnt = 0
        for rep in range(repeats):
            chunks = plans[rep * folds:(rep + 1) * folds]
            for k in range(folds):
                test = chunks[k]
                train = np.concatenate([chunks[j] for j in range(folds) if j != k])
                if np.var(y[train]) == 0.0:
                    raise EstimationError(
                        "tuning fold has zero-variance outcome; cannot cross-validate"
                    )
                warm = None
                for gi, lam in enumerate(grid):
                    fit = solve_elastic_net(
                        X[train], y[train], lam, alpha_mix, warm_start=warm
                    )
                    # warm start the next (smaller) lambda on the standardized scale
                    sd = X[train].std(axis=0)
                    warm = fit.coef * np.where(sd > 0, sd, 1.0)
                    pred = fit.predict(X[test])
                    sse[gi] += float(np.sum((y[test] - pred) ** 2))
                cnt += len(test)
        for gi, lam in enumerate(grid):
            candidates.append((float(lam), float(alpha_mix)))
            losses.append(sse[gi] / cnt)
    best = int(np.argmin(losses))
    return candidates[best]


class ForestModel:
    """Bootstrap-bagged regression forest (variance-reduction splits)."""

    def __init__(self, model: RandomForestRegressor):
        self._model = model

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        return self._model.predict(X)


def fit_forest(
    X,
    y,
    rng: np.random.Generator,
    trees: int = FOREST_DEFAULTS["trees"],
    min_leaf: int = FOREST_DEFAULTS["min_leaf"],
    feature_fraction: float = FOREST_DEFAULTS["feature_fraction"],
    sample_weight=None,
) -> ForestModel:
    """Fit a bagged regression forest; deterministic given the rng stream."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    if trees < 1:
        raise ConfigError(f"trees must be >= 1, got {trees}")
    if min_leaf < 1:
        raise ConfigError(f"min_leaf must be >= 1, got {min_leaf}")
    if not 0.0 < feature_fraction <= 1.0:
        raise ConfigError(f"feature_fraction must be in (0, 1], got {feature_fraction}")
    if len(y) < min_leaf:
        raise EstimationError(
            f"{len(y)} rows is fewer than the minimum leaf size {min_leaf}"
        )
    max_features = max(1, int(round(feature_fraction * X.shape[1])))
    model = RandomForestRegressor(
        n_estimators=int(trees),
        min_samples_leaf=int(min_leaf),
        max_features=max_features,
        bootstrap=True,
        random_state=int(rng.integers(0, 2**31 - 1)),
        n_jobs=1,
    )
    model.fit(X, y, sample_weight=sample_weight)
    return ForestModel(model)


@dataclass(frozen=True)
class LearnerSpec:
    """Declarative description of one proxy learner.

    ``kind`` is one of ``elastic_net``, ``forest``, ``external``.
    ``tuning`` is ``"fixed"`` (use ``hyperparams`` as given) or ``"cv"``
    (repeated 2-fold cross-validation; elastic net only).  ``target_mode``
    selects how the score proxy is built: ``arm_difference`` fits each arm
    of the auxiliary half and differences the fits; ``ht_joint`` minimizes
    the transformed-outcome objective ``sum (Y H - B H - S)^2`` jointly.
    ``external`` learners read frozen predictions from ``proxy_path``.
    """

    kind: str
    name: str | None = None
    hyperparams: dict = field(default_factory=dict)
    tuning: str = "cv"
    cv_folds: int = 2
    cv_repeats: int = 2
    target_mode: str = "arm_difference"
    proxy_path: str | None = None

    def __post_init__(self):
        if self.kind not in ("elastic_net", "forest", "external"):
            raise ConfigError(f"unknown learner kind {self.kind!r}")
        if self.tuning not in ("fixed", "cv"):
            raise ConfigError(f"unknown tuning mode {self.tuning!r}")
        if self.target_mode not in ("arm_difference", "ht_joint"):
            raise ConfigError(f"unknown target_mode {self.target_mode!r}")
        if self.kind == "forest" and self.tuning == "cv":
            raise ConfigError("forest learners use fixed hyperparameters")
        if self.kind == "external":
            if not self.proxy_path:
                raise ConfigError("external learner requires proxy_path")
            if self.tuning == "cv":
                raise ConfigError("external learner has nothing to tune")
        if self.kind == "elastic_net" and self.tuning == "fixed":
            if "lam" not in self.hyperparams:
                raise ConfigError("fixed elastic net requires hyperparams['lam']")
        if self.cv_folds < 2:
            raise ConfigError(f"cv_folds must be >= 2, got {self.cv_folds}")
        if self.cv_repeats < 1:
            raise ConfigError(f"cv_repeats must be >= 1, got {self.cv_repeats}")
        for key, bound in (("trees", 1), ("min_leaf", 1)):
            if key in self.hyperparams and self.hyperparams[key] < bound:
                raise ConfigError(f"hyperparam {key} must be >= {bound}")
        if "alpha_mix" in self.hyperparams and not (
            0.0 <= self.hyperparams["alpha_mix"] <= 1.0
        ):
            raise ConfigError("alpha_mix must be in [0, 1]")
        if "feature_fraction" in self.hyperparams and not (
            0.0 < self.hyperparams["feature_fraction"] <= 1.0
        ):
            raise ConfigError("feature_fraction must be in (0, 1]")

    @property
    def label(self) -> str:
        return self.name or self.kind


class _AffinePredictor:
    """Original-scale prediction ``loc + scale * f((z - x_min) / x_span)``."""

    def __init__(self, inner, x_min, x_span, loc: float, scale: float):
        self._inner = inner
        self._x_min = x_min
        self._x_span = x_span
        self._loc = loc
        self._scale = scale

    def __call__(self, z: np.ndarray) -> np.ndarray:
        u = (np.asarray(z, dtype=float) - self._x_min) / self._x_span
        return self._loc + self._scale * self._inner.predict(u)


class _DiffPredictor:
    def __init__(self, f1, f0):
        self._f1 = f1
        self._f0 = f0

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return self._f1(z) - self._f0(z)


class _LookupPredictor:
    def __init__(self, values: np.ndarray):
        self._values = values


@dataclass(frozen=True)
class ProxyPair:
    """Frozen proxy predictors trained on one auxiliary half.

    ``b_on``/``s_on`` evaluate the predictors on dataset rows; for
    model-based learners the value depends only on the covariates, for
    external learners it is a lookup keyed to the dataset row order.
    ``outcome_loc``/``outcome_scale`` record the internal outcome rescaling
    so degenerate proxies can be jittered on the rescaled scale.
    """

    learner: str
    tuned: dict
    train_hash: str
    outcome_loc: float
    outcome_scale: float
    jittered: bool = False
    _b: object = None
    _s: object = None

    def _eval(self, fn, ds, idx: np.ndarray) -> np.ndarray:
        if isinstance(fn, _LookupPredictor):
            return fn._values[np.asarray(idx)]
        return fn(ds.z[np.asarray(idx)])

    def b_on(self, ds, idx) -> np.ndarray:
        return self._eval(self._b, ds, idx)

    def s_on(self, ds, idx) -> np.ndarray:
        return self._eval(self._s, ds, idx)

    def with_jitter_flag(self) -> "ProxyPair":
        return replace(self, jittered=True)


def jitter_if_degenerate(
    values, rng: np.random.Generator
) -> tuple[np.ndarray, bool]:
    """Add N(0, 0.1) noise when the sample variance is below 1e-12.

    Returns the (possibly new) array and a flag saying whether noise was
    added.  Callers working on an affinely transformed scale should pass
    values on the scale where a unit is meaningful (here: the [0, 1]
    rescaled outcome scale).
    """
    values = np.asarray(values, dtype=float)
    if np.var(values) < JITTER_THRESHOLD:
        return values + rng.normal(0.0, np.sqrt(JITTER_VARIANCE), size=values.shape), True
    return values, False


def _rescale_covariates(z: np.ndarray, a_rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x_min = z[a_rows].min(axis=0) if len(a_rows) else np.zeros(z.shape[1])
    x_max = z[a_rows].max(axis=0) if len(a_rows) else np.ones(z.shape[1])
    span = np.where(x_max > x_min, x_max - x_min, 1.0)
    return x_min, span


def _fit_one(
    spec: LearnerSpec,
    X: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
    sample_weight=None,
):
    """Fit the spec's model class on already-rescaled data."""
    if spec.kind == "elastic_net":
        if spec.tuning == "cv":
            lam, alpha_mix = tune_elastic_net(
                X, y, rng, folds=spec.cv_folds, repeats=spec.cv_repeats
            )
        else:
            lam = float(spec.hyperparams["lam"])
            alpha_mix = float(spec.hyperparams.get("alpha_mix", 0.5))
        fit = solve_elastic_net(X, y, lam, alpha_mix)
        return fit, {"lam": lam, "alpha_mix": alpha_mix}
    if spec.kind == "forest":
        params = {**FOREST_DEFAULTS, **spec.hyperparams}
        fit = fit_forest(
            X,
            y,
            rng,
            trees=params["trees"],
            min_leaf=params["min_leaf"],
            feature_fraction=params["feature_fraction"],
            sample_weight=sample_weight,
        )
        return fit, {k: params[k] for k in ("trees", "min_leaf", "feature_fraction")}
    raise ConfigError(f"cannot fit learner kind {spec.kind!r}")


def ht_joint_objective(y, h, b_vals, s_vals) -> float:
    """Transformed-outcome objective ``sum (Y H - B H - S)^2``."""
    y = np.asarray(y, dtype=float)
    h = np.asarray(h, dtype=float)
    return float(np.sum((y * h - np.asarray(b_vals) * h - np.asarray(s_vals)) ** 2))


def weighted_blp_objective(ds, idx, b_vals, s_vals) -> float:
    """Weighted residual objective ``E_A[w (Y - B - (D - p) S)^2]``.

    The population minimizer over (B, S) is the true baseline and effect
    functions; this is a model-selection score, not an optimization target
    (no practical joint solver exists for generic learner classes).
    """
    idx = np.asarray(idx)
    resid = ds.y[idx] - np.asarray(b_vals) - (ds.d[idx] - ds.p[idx]) * np.asarray(s_vals)
    wt = ds.w[idx] * ds.sweight[idx]
    return float(np.sum(wt * resid**2) / np.sum(ds.sweight[idx]))


def _load_external(path: str, n: int) -> tuple[np.ndarray, np.ndarray]:
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError as exc:
        raise DataError(f"external proxy file not found: {path}") from exc
    cols = {c.lower(): c for c in frame.columns}
    for need in ("row_id", "b", "s"):
        if need not in cols:
            raise DataError(f"external proxy file {path} lacks column {need!r}")
    rid = frame[cols["row_id"]].to_numpy()
    if sorted(rid.tolist()) != list(range(n)):
        raise DataError(
            f"external proxy file {path} must key every dataset row 0..{n - 1} exactly once"
        )
    b = np.empty(n)
    s = np.empty(n)
    b[rid] = frame[cols["b"]].to_numpy(dtype=float)
    s[rid] = frame[cols["s"]].to_numpy(dtype=float)
    return b, s


def fit_proxies(
    spec: LearnerSpec,
    ds,
    a_idx,
    rng: np.random.Generator,
) -> ProxyPair:
    """Train the spec's proxies on the auxiliary half ``a_idx``.

    The returned predictors are frozen: they never see main-half outcomes,
    and identical covariates always map to identical values.
    """
    a_idx = np.asarray(a_idx)
    hsh = hashlib.sha256()
    hsh.update(a_idx.astype(np.int64).tobytes())
    hsh.update(ds.content_hash().encode())
    train_hash = hsh.hexdigest()[:16]

    if spec.kind == "external":
        b_all, s_all = _load_external(spec.proxy_path, ds.n)
        return ProxyPair(
            learner=spec.label,
            tuned={},
            train_hash=train_hash,
            outcome_loc=0.0,
            outcome_scale=1.0,
            _b=_LookupPredictor(b_all),
            _s=_LookupPredictor(s_all),
        )

    x_min, x_span = _rescale_covariates(ds.z, a_idx)
    y_a = ds.y[a_idx]
    y_min = float(y_a.min())
    y_span = float(y_a.max() - y_min)
    if y_span <= 0.0:
        y_span = 1.0
    u_a = (ds.z[a_idx] - x_min) / x_span
    y_til = (y_a - y_min) / y_span

    if spec.target_mode == "arm_difference":
        treated = ds.d[a_idx] == 1
        if treated.sum() == 0 or (~treated).sum() == 0:
            raise EstimationError("auxiliary half lacks one treatment arm")
        fit0, tuned0 = _fit_one(spec, u_a[~treated], y_til[~treated], rng)
        fit1, tuned1 = _fit_one(spec, u_a[treated], y_til[treated], rng)
        f0 = _AffinePredictor(fit0, x_min, x_span, y_min, y_span)
        f1 = _AffinePredictor(fit1, x_min, x_span, y_min, y_span)
        return ProxyPair(
            learner=spec.label,
            tuned={"control": tuned0, "treated": tuned1},
            train_hash=train_hash,
            outcome_loc=y_min,
            outcome_scale=y_span,
            _b=f0,
            _s=_DiffPredictor(f1, f0),
        )

    # ht_joint: minimize sum (Y H - B H - S)^2 on the rescaled scale
    h_a = ds.h[a_idx]
    if spec.kind == "elastic_net":
        design = np.column_stack([h_a, u_a * h_a[:, None], u_a])
        target = y_til * h_a
        fit, tuned = _fit_one(spec, design, target, rng)
        k = u_a.shape[1]
        b_coef = np.concatenate([[fit.coef[0]], fit.coef[1:1 + k]])
        s_coef = np.concatenate([[fit.intercept], fit.coef[1 + k:]])

        class _LinearPart:
            def __init__(self, c0, c):
                self._c0 = c0
                self._c = c

            def predict(self, u):
                return self._c0 + np.asarray(u) @ self._c

        b_inner = _LinearPart(b_coef[0], b_coef[1:])
        s_inner = _LinearPart(s_coef[0], s_coef[1:])
    else:
        b_pred = np.zeros(len(a_idx))
        tuned = {}
        for _ in range(3):
            s_fit, tuned_s = _fit_one(spec, u_a, y_til * h_a - b_pred * h_a, rng)
            s_pred = s_fit.predict(u_a)
            b_fit, tuned_b = _fit_one(
                spec,
                u_a,
                (y_til * h_a - s_pred) / h_a,
                rng,
                sample_weight=h_a**2,
            )
            b_pred = b_fit.predict(u_a)
            tuned = {"b": tuned_b, "s": tuned_s}
        b_inner = b_fit
        s_inner = s_fit
    return ProxyPair(
        learner=spec.label,
        tuned=tuned,
        train_hash=train_hash,
        outcome_loc=y_min,
        outcome_scale=y_span,
        _b=_AffinePredictor(b_inner, x_min, x_span, y_min, y_span),
        _s=_AffinePredictor(s_inner, x_min, x_span, 0.0, y_span),
    )
