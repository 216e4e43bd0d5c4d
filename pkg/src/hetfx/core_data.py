"""Dataset container, CSV ingestion, and repeated sample splitting.

The estimation code never touches raw files or random state directly; it
consumes the immutable :class:`Dataset` produced here and the index pairs
produced by :func:`make_splits`.  All randomness flows through counter-based
streams keyed by ``(seed, split index, tag)`` so that splits are reproducible
and order-independent.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DataError

DEFAULT_PROPENSITY_BOUNDS = (0.02, 0.98)

# stream tags: keep distinct so consumers never share a stream
TAG_SPLIT = 0
TAG_LEARNER = 1
TAG_JITTER = 2
TAG_BAND = 3


def rng_stream(seed: int, *path: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, *path).

    Philox is counter-based, so streams for distinct keys are independent
    and the mapping does not depend on the order in which streams are
    created.  Workers processing splits concurrently each call this with
    their own split index.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def _as_1d(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim != 1:
        raise DataError(f"{name} must be one-dimensional, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DataError(f"{name} contains non-finite values")
    return a


def _as_2d(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise DataError(f"{name} must be two-dimensional, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DataError(f"{name} contains non-finite values")
    return a


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Dataset:
    """Immutable analysis sample.

    ``w`` and ``h`` are derived from ``(d, p)`` at construction:
    ``w = 1 / (p (1 - p))`` and ``h = (d - p) / (p (1 - p))``, the
    propensity weight and the orthogonalized treatment transform.  ``h``
    satisfies ``E[h | z] = 0`` under correct ``p``.
    """

    y: np.ndarray
    d: np.ndarray
    z: np.ndarray
    p: np.ndarray
    z_names: tuple[str, ...]
    w: np.ndarray = field(init=False)
    h: np.ndarray = field(init=False)
    strata: np.ndarray | None = None
    cluster: np.ndarray | None = None
    sweight: np.ndarray | None = None
    extra: dict[str, np.ndarray] = field(default_factory=dict)
    propensity_bounds: tuple[float, float] = DEFAULT_PROPENSITY_BOUNDS

    def __post_init__(self):
        y = _freeze(_as_1d(self.y, "outcome"))
        n = y.shape[0]
        d_raw = np.asarray(self.d)
        d_vals = np.unique(d_raw)
        if not np.all(np.isin(d_vals, (0, 1))):
            raise DataError(f"treatment must be binary 0/1, found values {d_vals.tolist()}")
        d = _freeze(np.asarray(d_raw, dtype=np.int64))
        if d.shape != (n,):
            raise DataError("treatment length does not match outcome")
        if d.sum() == 0 or d.sum() == n:
            raise DataError("both treatment arms must be non-empty")
        z = _freeze(_as_2d(self.z, "covariates"))
        if z.shape[0] != n:
            raise DataError("covariate rows do not match outcome length")
        if len(self.z_names) != z.shape[1]:
            raise DataError("z_names length does not match covariate columns")
        p = _as_1d(np.broadcast_to(np.asarray(self.p, dtype=float), (n,)).copy(), "propensity")
        lo, hi = self.propensity_bounds
        if not (0.0 < lo < hi < 1.0):
            raise DataError(f"propensity bounds must satisfy 0 < lo < hi < 1, got ({lo}, {hi})")
        bad = (p < lo) | (p > hi)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise DataError(
                f"propensity {float(p[i])!r} at row {i} outside bounds [{lo}, {hi}]"
            )
        p = _freeze(p)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "z_names", tuple(self.z_names))
        pq = p * (1.0 - p)
        object.__setattr__(self, "w", _freeze(1.0 / pq))
        object.__setattr__(self, "h", _freeze((d - p) / pq))
        if self.strata is not None:
            s = np.asarray(self.strata)
            if s.shape != (n,):
                raise DataError("strata length does not match outcome")
            object.__setattr__(self, "strata", _freeze(s))
        if self.cluster is not None:
            c = np.asarray(self.cluster)
            if c.shape != (n,):
                raise DataError("cluster length does not match outcome")
            object.__setattr__(self, "cluster", _freeze(c))
        if self.sweight is None:
            object.__setattr__(self, "sweight", _freeze(np.ones(n)))
        else:
            sw = _as_1d(self.sweight, "sampling weights")
            if sw.shape != (n,):
                raise DataError("sampling weight length does not match outcome")
            if np.any(sw < 0):
                raise DataError("sampling weights must be non-negative")
            object.__setattr__(self, "sweight", _freeze(sw))
        object.__setattr__(
            self, "extra", {k: _freeze(_as_1d(v, k)) for k, v in self.extra.items()}
        )

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def column(self, name: str) -> np.ndarray:
        """Look up a named column among covariates and extra columns."""
        if name in self.z_names:
            return self.z[:, self.z_names.index(name)]
        if name in self.extra:
            return self.extra[name]
        raise DataError(f"unknown column {name!r}")

    def content_hash(self) -> str:
        """Stable digest of the sample, used for split reproducibility."""
        hsh = hashlib.sha256()
        for a in (self.y, self.d.astype(float), self.z, self.p, self.sweight):
            hsh.update(np.ascontiguousarray(a).tobytes())
        for a in (self.strata, self.cluster):
            if a is not None:
                hsh.update(np.asarray(a, dtype="U32").tobytes())
        return hsh.hexdigest()


def _coerce_numeric(raw: pd.Series, col: str) -> np.ndarray | None:
    """Return float values if every cell parses as a number, else None."""
    vals = pd.to_numeric(raw, errors="coerce")
    ok = vals.notna().to_numpy()
    if ok.all():
        return vals.to_numpy(dtype=float)
    if raw.isna().any() or (raw.astype(str).str.strip() == "").any():
        i = int(np.argmax(raw.isna().to_numpy() | (raw.astype(str).str.strip() == "").to_numpy()))
        raise DataError(f"missing value in column {col!r} at row {i}")
    # some cells parse, some do not: a numeric column with junk, reject
    if ok.any():
        i = int(np.argmax(~ok))
        raise DataError(
            f"non-numeric value {raw.iloc[i]!r} in column {col!r} at row {i}"
        )
    return None


def _expand_categorical(raw: pd.Series, col: str) -> tuple[list[str], np.ndarray]:
    """0/1 indicators for all levels except the first (sorted) reference."""
    labels = raw.astype(str)
    if (labels.str.strip() == "").any():
        i = int(np.argmax((labels.str.strip() == "").to_numpy()))
        raise DataError(f"missing value in column {col!r} at row {i}")
    levels = sorted(labels.unique())
    names = [f"{col}={lev}" for lev in levels[1:]]
    if not names:
        raise DataError(f"categorical column {col!r} has a single level")
    mat = np.column_stack([(labels == lev).to_numpy(dtype=float) for lev in levels[1:]])
    return names, mat


def load_dataset(
    path: str,
    outcome: str,
    treatment: str,
    covariates: list[str],
    propensity: float | str,
    strata: str | None = None,
    cluster: str | None = None,
    sweight: str | None = None,
    extra_numeric: list[str] | None = None,
    propensity_bounds: tuple[float, float] = DEFAULT_PROPENSITY_BOUNDS,
) -> Dataset:
    """Read a CSV and assemble a validated :class:`Dataset`.

    Covariate columns that fail numeric parsing for every cell are treated
    as categorical and expanded to 0/1 indicators with the first (sorted)
    level dropped as reference; mixed or missing cells are rejected rather
    than imputed.  ``propensity`` is either a constant or a column name.
    """
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError as exc:
        raise DataError(f"data file not found: {path}") from exc
    for col in [outcome, treatment, *covariates]:
        if col not in frame.columns:
            raise DataError(f"column {col!r} not found in {path}")
    for col in (strata, cluster, sweight):
        if col is not None and col not in frame.columns:
            raise DataError(f"column {col!r} not found in {path}")

    y = _coerce_numeric(frame[outcome], outcome)
    if y is None:
        raise DataError(f"outcome column {outcome!r} is not numeric")
    d = _coerce_numeric(frame[treatment], treatment)
    if d is None:
        raise DataError(f"treatment column {treatment!r} is not numeric")

    z_names: list[str] = []
    z_cols: list[np.ndarray] = []
    for col in covariates:
        vals = _coerce_numeric(frame[col], col)
        if vals is not None:
            z_names.append(col)
            z_cols.append(vals)
        else:
            names, mat = _expand_categorical(frame[col], col)
            z_names.extend(names)
            z_cols.extend(mat.T)
    z = np.column_stack(z_cols) if z_cols else np.empty((len(y), 0))

    if isinstance(propensity, str):
        if propensity not in frame.columns:
            raise DataError(f"propensity column {propensity!r} not found in {path}")
        p = _coerce_numeric(frame[propensity], propensity)
        if p is None:
            raise DataError(f"propensity column {propensity!r} is not numeric")
    else:
        p = float(propensity)

    extra: dict[str, np.ndarray] = {}
    for col in extra_numeric or []:
        if col in z_names:
            continue
        if col not in frame.columns:
            raise DataError(f"column {col!r} not found in {path}")
        vals = _coerce_numeric(frame[col], col)
        if vals is None:
            raise DataError(f"column {col!r} is not numeric")
        extra[col] = vals

    return Dataset(
        y=y,
        d=d,
        z=z,
        p=p,
        z_names=tuple(z_names),
        strata=frame[strata].to_numpy() if strata else None,
        cluster=frame[cluster].to_numpy() if cluster else None,
        sweight=_coerce_numeric(frame[sweight], sweight) if sweight else None,
        extra=extra,
        propensity_bounds=propensity_bounds,
    )


@dataclass(frozen=True)
class SplitPlan:
    """Reproducible collection of (auxiliary, main) index pairs."""

    seed: int
    n_splits: int
    dataset_hash: str
    splits: tuple[tuple[np.ndarray, np.ndarray], ...]

    def __iter__(self):
        return iter(self.splits)

    def __len__(self) -> int:
        return len(self.splits)


def _unit_table(ds: Dataset) -> tuple[list[np.ndarray], np.ndarray, np.ndarray]:
    """Group rows into splitting units (clusters, or single rows).

    Returns (unit row-index lists, unit treatment flags, unit stratum codes).
    A cluster straddling two strata cannot be assigned a stratum, so it is
    rejected.
    """
    n = ds.n
    if ds.strata is None:
        strat_codes = np.zeros(n, dtype=np.int64)
        strat_labels = np.array(["<all>"])
    else:
        strat_labels, strat_codes = np.unique(ds.strata, return_inverse=True)
    if ds.cluster is None:
        units = [np.array([i]) for i in range(n)]
        unit_treated = ds.d.astype(bool)
        unit_strata = strat_codes
    else:
        labels, codes = np.unique(ds.cluster, return_inverse=True)
        units = []
        unit_treated = np.zeros(len(labels), dtype=bool)
        unit_strata = np.zeros(len(labels), dtype=np.int64)
        order = np.argsort(codes, kind="stable")
        bounds = np.searchsorted(codes[order], np.arange(len(labels) + 1))
        for g in range(len(labels)):
            rows = order[bounds[g]:bounds[g + 1]]
            sc = np.unique(strat_codes[rows])
            if len(sc) > 1:
                raise DataError(
                    f"cluster {labels[g]!r} spans strata "
                    f"{[str(strat_labels[s]) for s in sc]}; each cluster must "
                    "lie within a single stratum"
                )
            units.append(np.sort(rows))
            unit_treated[g] = ds.d[rows].mean() >= 0.5
            unit_strata[g] = sc[0]
    return units, np.asarray(unit_treated), np.asarray(unit_strata)


def make_splits(
    ds: Dataset,
    n_splits: int,
    seed: int,
    aux_fraction: float = 0.5,
) -> SplitPlan:
    """Draw ``n_splits`` stratified half-splits into (auxiliary A, main M).

    Whole clusters travel together.  Within each stratum the treated and
    control units are split separately so the treated share on either side
    stays within one unit of the stratum's share; odd leftovers alternate
    sides via one coin per stratum (treated extra and control extra go to
    opposite sides), which bounds the A-vs-M size gap by the number of
    strata.
    """
    if n_splits < 1:
        raise DataError(f"n_splits must be >= 1, got {n_splits}")
    if not (0.0 < aux_fraction < 1.0):
        raise DataError(f"aux_fraction must be in (0, 1), got {aux_fraction}")
    units, unit_treated, unit_strata = _unit_table(ds)
    strat_ids = np.unique(unit_strata)
    if ds.strata is not None:
        strat_labels = np.unique(ds.strata)
    else:
        strat_labels = np.array(["<all>"])
    for sid in strat_ids:
        n1 = int(np.sum(unit_treated & (unit_strata == sid)))
        n0 = int(np.sum(~unit_treated & (unit_strata == sid)))
        if n1 < 2 or n0 < 2:
            label = strat_labels[sid] if ds.strata is not None else "<all>"
            raise DataError(
                f"stratum {label!r} has {n1} treated and {n0} control "
                "splitting units; need at least 2 of each to balance a split"
            )
    ds_hash = ds.content_hash()
    splits = []
    for s in range(n_splits):
        rng = rng_stream(seed, s, TAG_SPLIT)
        aux_units: list[int] = []
        for sid in strat_ids:
            coin = rng.random() < 0.5
            for arm, extra_to_aux in ((True, coin), (False, not coin)):
                members = np.flatnonzero((unit_treated == arm) & (unit_strata == sid))
                perm = rng.permutation(members)
                n_arm = len(members)
                n_aux = int(np.floor(aux_fraction * n_arm))
                frac = aux_fraction * n_arm - n_aux
                if frac > 1e-12:
                    # leftover unit: randomized rounding, steered by the
                    # per-stratum coin at the half so sizes stay balanced
                    if abs(frac - 0.5) < 1e-12:
                        n_aux += int(extra_to_aux)
                    else:
                        n_aux += int(rng.random() < frac)
                aux_units.extend(perm[:n_aux].tolist())
        a_rows = np.sort(np.concatenate([units[u] for u in aux_units])) if aux_units else np.array([], dtype=np.int64)
        mask = np.ones(ds.n, dtype=bool)
        mask[a_rows] = False
        m_rows = np.flatnonzero(mask)
        if len(a_rows) == 0 or len(m_rows) == 0:
            raise DataError(f"split {s} left one half empty; sample too small")
        splits.append((_freeze(a_rows.astype(np.int64)), _freeze(m_rows.astype(np.int64))))
    return SplitPlan(seed=seed, n_splits=n_splits, dataset_hash=ds_hash, splits=tuple(splits))
