"""End-to-end analysis pipeline and report emission.

``run_analysis`` wires the whole procedure together: load and validate the
data, draw repeated stratified splits, fit proxies per learner on each
auxiliary half, estimate BLP / GATES / CLAN on each main half, aggregate
every target across splits by medians, and select the best learner per
target family.  Everything random is keyed by ``(seed, split, tag)``
streams, so reruns are byte-identical and split order does not matter.
"""
from __future__ import annotations

import concurrent.futures
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.stats

from . import __version__
from .core_data import (
    DEFAULT_PROPENSITY_BOUNDS,
    TAG_BAND,
    TAG_JITTER,
    TAG_LEARNER,
    Dataset,
    load_dataset,
    make_splits,
    rng_stream,
)
from .errors import ConfigError, DataError, EstimationError, HetfxError
from .estimators import (
    build_groups,
    estimate_blp,
    estimate_clan,
    estimate_gates,
    joint_band,
    rearrange_monotone,
)
from .learners import LearnerSpec, fit_proxies, jitter_if_degenerate
from .vein import (
    SplitStats,
    VeinSummary,
    adjusted_ci,
    adjusted_pvalue,
    lower_median,
    mid_median,
    raw_adjusted_pvalue,
    summarize,
    upper_median,
)

STRATEGY_CHOICES = ("weighted", "ht", "both")
MAX_FAILED_SHARE = 0.05


def default_learners() -> tuple[LearnerSpec, ...]:
    return (
        LearnerSpec(kind="elastic_net"),
        LearnerSpec(kind="forest", tuning="fixed"),
    )


@dataclass(frozen=True)
class RunConfig:
    """Complete description of one analysis run.

    ``strategy`` may be ``weighted``, ``ht``, or ``both``; learner
    selection always scores the weighted strategy when both run.
    ``clan_vars`` is an explicit tuple of column names or ``"auto"``
    (pick the ``clan_top`` covariates whose median |corr(g, S)| across
    splits clears ``clan_min_corr``).  ``controls`` name extra fixed-effect
    columns appended to the nuisance block; categorical controls must also
    appear in ``covariates`` so their indicator expansion exists.
    """

    data: str | None = None
    outcome: str = "y"
    treatment: str = "d"
    covariates: tuple[str, ...] = ()
    propensity: float | str = 0.5
    strata: str | None = None
    cluster: str | None = None
    sweight: str | None = None
    learners: tuple[LearnerSpec, ...] = field(default_factory=default_learners)
    n_splits: int = 100
    alpha: float = 0.05
    k_groups: int = 5
    strategy: str = "weighted"
    controls: tuple[str, ...] = ()
    clan_vars: tuple[str, ...] | str = "auto"
    clan_top: int = 3
    clan_min_corr: float = 0.01
    seed: int = 0
    out_dir: str | None = None
    plot: bool = False
    skip_failed_splits: bool = False
    workers: int = 1
    propensity_bounds: tuple[float, float] = DEFAULT_PROPENSITY_BOUNDS

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        object.__setattr__(self, "controls", tuple(self.controls))
        object.__setattr__(self, "learners", tuple(self.learners))
        if isinstance(self.clan_vars, (list, tuple)):
            object.__setattr__(self, "clan_vars", tuple(self.clan_vars))
        elif self.clan_vars != "auto":
            raise ConfigError("clan_vars must be a tuple of names or 'auto'")
        if self.n_splits < 1:
            raise ConfigError(f"n_splits must be >= 1, got {self.n_splits}")
        if not 0.0 < self.alpha < 0.25:
            raise ConfigError(f"alpha must be in (0, 0.25), got {self.alpha}")
        if self.k_groups < 1:
            raise ConfigError(f"k_groups must be >= 1, got {self.k_groups}")
        if self.strategy not in STRATEGY_CHOICES:
            raise ConfigError(f"strategy must be one of {STRATEGY_CHOICES}")
        if not self.learners:
            raise ConfigError("at least one learner is required")
        for spec in self.learners:
            if not isinstance(spec, LearnerSpec):
                raise ConfigError("learners must be LearnerSpec instances")
        if self.clan_top < 1:
            raise ConfigError("clan_top must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if isinstance(self.propensity, str) and not self.propensity:
            raise ConfigError("propensity column name is empty")

    @property
    def strategies(self) -> tuple[str, ...]:
        return ("weighted", "ht") if self.strategy == "both" else (self.strategy,)

    @property
    def primary_strategy(self) -> str:
        return "ht" if self.strategy == "ht" else "weighted"

    def canonical(self) -> dict:
        d = asdict(self)
        d["learners"] = [asdict(s) for s in self.learners]
        return d

    def config_hash(self) -> str:
        d = self.canonical()
        for key in ("workers", "out_dir", "plot"):
            d.pop(key, None)  # execution knobs do not define the analysis
        blob = json.dumps(d, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _unique_labels(specs: tuple[LearnerSpec, ...]) -> list[str]:
    seen: dict[str, int] = {}
    labels = []
    for spec in specs:
        base = spec.label
        seen[base] = seen.get(base, 0) + 1
        labels.append(base if seen[base] == 1 else f"{base}_{seen[base]}")
    return labels


def _resolve_controls(ds: Dataset, names: tuple[str, ...]) -> np.ndarray | None:
    """Map control names to columns; categorical names pick up their dummies."""
    if not names:
        return None
    cols = []
    for name in names:
        if name in ds.z_names:
            cols.append(ds.z[:, ds.z_names.index(name)])
            continue
        expanded = [j for j, zn in enumerate(ds.z_names) if zn.startswith(f"{name}=")]
        if expanded:
            cols.extend(ds.z[:, j] for j in expanded)
            continue
        if name in ds.extra:
            cols.append(ds.extra[name])
            continue
        raise ConfigError(
            f"control column {name!r} not found among covariates or extra columns"
        )
    return np.column_stack(cols)


def _clan_candidates(ds: Dataset, cfg: RunConfig) -> list[str]:
    if cfg.clan_vars == "auto":
        return list(ds.z_names)
    for name in cfg.clan_vars:
        ds.column(name)  # raise early on unknown names
    return list(cfg.clan_vars)


def _run_single_split(ds, cfg, labels, controls, clan_names, s, a_idx, m_idx) -> dict:
    """All per-split estimation for one (A, M) pair.

    Pure function of its arguments plus the derived rng streams, so splits
    can run in any order or concurrently without changing the result.
    """
    rec: dict = {"split": s, "n_aux": int(len(a_idx)), "n_main": int(len(m_idx)),
                 "learners": {}}
    controls_m = controls[m_idx] if controls is not None else None
    for li, spec in enumerate(cfg.learners):
        label = labels[li]
        stage = "proxies"
        try:
            proxies = fit_proxies(spec, ds, a_idx, rng_stream(cfg.seed, s, TAG_LEARNER, li))
            b_vals = proxies.b_on(ds, m_idx)
            s_vals = proxies.s_on(ds, m_idx)
            jit_rng = rng_stream(cfg.seed, s, TAG_JITTER, li)
            loc, scale = proxies.outcome_loc, proxies.outcome_scale
            b_til, jb = jitter_if_degenerate((b_vals - loc) / scale, jit_rng)
            s_til, js = jitter_if_degenerate(s_vals / scale, jit_rng)
            if jb:
                b_vals = loc + scale * b_til
            if js:
                s_vals = scale * s_til
            jittered = bool(jb or js)
            if jittered:
                proxies = proxies.with_jitter_flag()

            stage = "grouping"
            scheme = build_groups(s_vals, cfg.k_groups)

            lrec: dict = {
                "jittered": jittered,
                "tuned": proxies.tuned,
                "train_hash": proxies.train_hash,
                "group_counts": scheme.counts.tolist(),
                "strategies": {},
            }

            stage = "clan"
            if scheme.k >= 2:
                clan = estimate_clan(ds, m_idx, scheme, clan_names)
            else:
                clan = {}
            lrec["clan"] = clan
            corr = {}
            for name in clan_names:
                g = ds.column(name)[m_idx]
                sd_g = np.std(g)
                sd_s = np.std(s_vals)
                if sd_g == 0.0 or sd_s == 0.0:
                    corr[name] = 0.0
                else:
                    corr[name] = float(np.corrcoef(g, s_vals)[0, 1])
            lrec["corr"] = corr

            for strat in cfg.strategies:
                stage = f"blp[{strat}]"
                blp = estimate_blp(ds, m_idx, b_vals, s_vals, strategy=strat,
                                   controls=controls_m)
                stage = f"gates[{strat}]"
                gates = estimate_gates(ds, m_idx, b_vals, s_vals, k=cfg.k_groups,
                                       strategy=strat, controls=controls_m,
                                       scheme=scheme)
                stage = f"band[{strat}]"
                band = joint_band(
                    gates.gamma, gates.cov, cfg.alpha,
                    rng_stream(cfg.seed, s, TAG_BAND, li, cfg.strategies.index(strat)),
                )
                mono_pts, (mono_lo, mono_hi) = rearrange_monotone(
                    gates.gamma, (band.lo, band.hi)
                )
                hstat, hdf, hp = gates.homogeneity_test()
                lrec["strategies"][strat] = {
                    "beta1": blp.beta1, "se1": blp.se1,
                    "beta2": blp.beta2, "se2": blp.se2,
                    "lambda": blp.lambda_score,
                    "gamma": gates.gamma.tolist(),
                    "gamma_se": gates.se().tolist(),
                    "gamma_diff": gates.diff, "gamma_diff_se": gates.diff_se,
                    "lambda_bar": gates.lambda_bar,
                    "homogeneity_p": hp,
                    "crit": band.crit,
                    "band_lo": band.lo.tolist(), "band_hi": band.hi.tolist(),
                    "mono_points": mono_pts.tolist(),
                    "mono_lo": mono_lo.tolist(), "mono_hi": mono_hi.tolist(),
                    "dropped_cols": list(blp.dropped_cols),
                    "condition": blp.condition,
                }
        except HetfxError as err:
            rec["failure"] = {"split": s, "learner": label, "stage": stage,
                              "error": str(err)}
            return rec
        rec["learners"][label] = lrec
    return rec


def _target_summary(thetas, ses, alpha: float, sided: str = "two") -> VeinSummary:
    """VEIN summary robust to exactly-zero standard errors.

    Degenerate targets (a constant characteristic gives SE 0) fall back to
    median endpoints with point-mass p-values; regular targets use the full
    machinery including the inversion interval.
    """
    thetas = np.asarray(thetas, dtype=float)
    ses = np.asarray(ses, dtype=float)
    if np.all(ses > 0):
        return summarize(SplitStats.from_estimates(thetas, ses, alpha), sided=sided)
    z = scipy.stats.norm.ppf(1.0 - alpha / 2.0)
    lowers = thetas - z * ses
    uppers = thetas + z * ses
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(ses > 0, thetas / np.where(ses > 0, ses, 1.0), np.inf * np.sign(thetas))
    t = np.where((ses == 0) & (thetas == 0), 0.0, t)
    if sided == "two":
        p = 2.0 * scipy.stats.norm.sf(np.abs(t))
    elif sided == "left":
        p = scipy.stats.norm.cdf(t)
    else:
        p = scipy.stats.norm.sf(t)
    p = np.clip(p, 0.0, 1.0)
    ci = adjusted_ci(lowers, uppers)
    return VeinSummary(
        estimate=mid_median(thetas),
        ci=ci,
        ci_inversion=ci,
        p_adjusted=adjusted_pvalue(p),
        p_adjusted_raw=raw_adjusted_pvalue(p),
        alpha=alpha,
        n_splits=len(thetas),
    )


@dataclass(frozen=True)
class Selection:
    """Winning learner per target family, with tie diagnostics."""

    blp: str
    gates: str
    blp_tied: tuple[str, ...]
    gates_tied: tuple[str, ...]
    scores: dict


def select_best_learners(lambda_by_learner: dict, lambda_bar_by_learner: dict) -> Selection:
    """Pick the learner with the largest median selection score.

    Exact ties resolve to the first learner in declaration order; all tied
    labels are reported so the choice is auditable.
    """
    if not lambda_by_learner:
        raise ConfigError("no learner scores to select from")

    def best(by_learner: dict) -> tuple[str, tuple[str, ...], dict]:
        meds = {lab: mid_median(np.asarray(v, dtype=float)) for lab, v in by_learner.items()}
        top = max(meds.values())
        tied = tuple(lab for lab, m in meds.items() if m == top)
        return tied[0], tied if len(tied) > 1 else (), meds

    blp, blp_tied, lam_meds = best(lambda_by_learner)
    gates, gates_tied, bar_meds = best(lambda_bar_by_learner)
    scores = {
        lab: {"lambda_median": lam_meds[lab], "lambda_bar_median": bar_meds[lab]}
        for lab in lambda_by_learner
    }
    return Selection(blp=blp, gates=gates, blp_tied=blp_tied,
                     gates_tied=gates_tied, scores=scores)


@dataclass(frozen=True)
class Report:
    """Aggregated analysis results plus full per-split provenance."""

    meta: dict
    selection: Selection
    results: dict
    provenance: dict

    def as_dict(self) -> dict:
        return _plain({
            "meta": self.meta,
            "selection": {
                "blp": self.selection.blp,
                "gates": self.selection.gates,
                "blp_tied": list(self.selection.blp_tied),
                "gates_tied": list(self.selection.gates_tied),
                "scores": self.selection.scores,
            },
            "results": self.results,
            "provenance": self.provenance,
        })

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2, allow_nan=False)


def _plain(obj):
    """Convert numpy scalars/arrays (and tuples) to plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def run_analysis(cfg: RunConfig, ds: Dataset | None = None) -> Report:
    """Execute the full procedure and return the aggregated report."""
    if ds is None:
        if not cfg.data:
            raise ConfigError("config has no data path and no dataset was passed")
        explicit_clan = list(cfg.clan_vars) if cfg.clan_vars != "auto" else []
        # Names already among the covariates ride along in the z block
        # (categoricals as their indicator expansion); only the rest need
        # loading as extra numeric columns.
        extra = [c for c in explicit_clan + list(cfg.controls)
                 if c not in cfg.covariates]
        ds = load_dataset(
            cfg.data,
            outcome=cfg.outcome,
            treatment=cfg.treatment,
            covariates=list(cfg.covariates),
            propensity=cfg.propensity,
            strata=cfg.strata,
            cluster=cfg.cluster,
            sweight=cfg.sweight,
            extra_numeric=list(dict.fromkeys(extra)),
            propensity_bounds=cfg.propensity_bounds,
        )
    labels = _unique_labels(cfg.learners)
    controls = _resolve_controls(ds, cfg.controls)
    clan_names = _clan_candidates(ds, cfg)
    plan = make_splits(ds, cfg.n_splits, cfg.seed)

    records: list[dict | None] = [None] * cfg.n_splits

    def work(s: int) -> dict:
        a_idx, m_idx = plan.splits[s]
        return _run_single_split(ds, cfg, labels, controls, clan_names, s, a_idx, m_idx)

    if cfg.workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            for s, rec in zip(range(cfg.n_splits), pool.map(work, range(cfg.n_splits))):
                records[s] = rec
    else:
        for s in range(cfg.n_splits):
            records[s] = work(s)

    failures = [rec["failure"] for rec in records if "failure" in rec]
    if failures:
        first = failures[0]
        if not cfg.skip_failed_splits:
            raise EstimationError(
                f"split {first['split']} failed at stage {first['stage']} "
                f"(learner {first['learner']}): {first['error']}; "
                "pass skip_failed_splits to tolerate up to "
                f"{MAX_FAILED_SHARE:.0%} failures"
            )
        allowed = int(np.floor(MAX_FAILED_SHARE * cfg.n_splits))
        if len(failures) > allowed:
            raise EstimationError(
                f"{len(failures)} of {cfg.n_splits} splits failed, exceeding the "
                f"{MAX_FAILED_SHARE:.0%} budget ({allowed}); first failure at split "
                f"{first['split']} stage {first['stage']}: {first['error']}"
            )
    used = [rec for rec in records if "failure" not in rec]
    if not used:
        raise EstimationError("no split succeeded")

    return _aggregate(cfg, ds, labels, clan_names, used, failures)


def _aggregate(cfg, ds, labels, clan_names, used, failures) -> Report:
    alpha = cfg.alpha
    k = cfg.k_groups
    pull = lambda lab, key: [rec["learners"][lab][key] for rec in used]
    results: dict = {}
    lambda_by: dict = {}
    lambda_bar_by: dict = {}
    jitter_counts: dict = {}
    clan_selected: dict = {}
    corr_medians: dict = {}

    for lab in labels:
        lrec: dict = {"strategies": {}}
        jitter_counts[lab] = int(sum(pull(lab, "jittered")))

        for strat in cfg.strategies:
            srows = [rec["learners"][lab]["strategies"][strat] for rec in used]
            get = lambda key: np.array([r[key] for r in srows])
            srec: dict = {
                "blp": {
                    "beta1": _target_summary(get("beta1"), get("se1"), alpha).as_dict(),
                    "beta2": _target_summary(get("beta2"), get("se2"), alpha).as_dict(),
                },
                "gates": {},
            }
            gam = np.array([r["gamma"] for r in srows])
            gse = np.array([r["gamma_se"] for r in srows])
            for g in range(k):
                srec["gates"][f"gamma_{g + 1}"] = _target_summary(
                    gam[:, g], gse[:, g], alpha
                ).as_dict()
            if k >= 2:
                srec["gates"]["gamma_diff"] = _target_summary(
                    get("gamma_diff"), get("gamma_diff_se"), alpha
                ).as_dict()
            srec["gates"]["homogeneity_p_adjusted"] = adjusted_pvalue(
                get("homogeneity_p")
            )
            mono_pts = np.array([r["mono_points"] for r in srows])
            mono_lo = np.array([r["mono_lo"] for r in srows])
            mono_hi = np.array([r["mono_hi"] for r in srows])
            srec["band"] = [
                {
                    "k": g + 1,
                    "point": mid_median(mono_pts[:, g]),
                    "lo": upper_median(mono_lo[:, g]),
                    "hi": lower_median(mono_hi[:, g]),
                }
                for g in range(k)
            ]
            lrec["strategies"][strat] = srec

        # CLAN: selection by median |corr| across splits, then summaries
        med_corr = {
            name: mid_median(np.abs(np.array([rec["learners"][lab]["corr"][name]
                                              for rec in used])))
            for name in clan_names
        }
        corr_medians[lab] = med_corr
        if cfg.clan_vars == "auto":
            eligible = [n for n in clan_names if med_corr[n] >= cfg.clan_min_corr]
            eligible.sort(key=lambda n: -med_corr[n])
            chosen = eligible[: cfg.clan_top]
        else:
            chosen = list(clan_names)
        clan_selected[lab] = chosen
        lrec["clan"] = {}
        if k >= 2:
            for name in chosen:
                stats = [rec["learners"][lab]["clan"][name] for rec in used]
                arr = lambda fld: np.array([getattr(st, fld) for st in stats])
                lrec["clan"][name] = {
                    "delta_1": _target_summary(arr("delta1"), arr("se1"), alpha).as_dict(),
                    "delta_k": _target_summary(arr("deltak"), arr("sek"), alpha).as_dict(),
                    "diff": _target_summary(arr("diff"), arr("diff_se"), alpha).as_dict(),
                }
        results[lab] = lrec

        primary = cfg.primary_strategy
        lambda_by[lab] = np.array(
            [rec["learners"][lab]["strategies"][primary]["lambda"] for rec in used]
        )
        lambda_bar_by[lab] = np.array(
            [rec["learners"][lab]["strategies"][primary]["lambda_bar"] for rec in used]
        )

    selection = select_best_learners(lambda_by, lambda_bar_by)

    per_split = []
    for rec in used:
        entry = {"split": rec["split"], "n_aux": rec["n_aux"], "n_main": rec["n_main"],
                 "learners": {}}
        for lab in labels:
            lr = rec["learners"][lab]
            entry["learners"][lab] = {
                "jittered": lr["jittered"],
                "tuned": lr["tuned"],
                "train_hash": lr["train_hash"],
                "group_counts": lr["group_counts"],
                "strategies": {
                    strat: {
                        key: lr["strategies"][strat][key]
                        for key in (
                            "beta1", "se1", "beta2", "se2", "lambda", "gamma",
                            "gamma_se", "gamma_diff", "gamma_diff_se", "lambda_bar",
                            "homogeneity_p", "crit", "band_lo", "band_hi",
                            "mono_points", "mono_lo", "mono_hi", "dropped_cols",
                            "condition",
                        )
                    }
                    for strat in cfg.strategies
                },
            }
        per_split.append(entry)

    meta = {
        "version": __version__,
        "seed": cfg.seed,
        "alpha": alpha,
        "ci_level": 1.0 - 2.0 * alpha,
        "n_splits": cfg.n_splits,
        "n_splits_used": len(used),
        "k_groups": k,
        "strategies": list(cfg.strategies),
        "n_obs": ds.n,
        "config_hash": cfg.config_hash(),
        "dataset_hash": ds.content_hash(),
    }
    provenance = {
        "config": cfg.canonical(),
        "failed_splits": failures,
        "jitter_counts": jitter_counts,
        "jitter_note": "degenerate proxies jittered with N(0, 0.1) on the "
                       "[0, 1]-rescaled outcome scale",
        "clan_selected": clan_selected,
        "clan_corr_medians": corr_medians,
        "per_split": per_split,
    }
    return Report(meta=meta, selection=selection, results=results,
                  provenance=provenance)


def _summary_rows(report: Report, cfg: RunConfig) -> list[dict]:
    rows = []
    for lab, lrec in report.results.items():
        for strat, srec in lrec["strategies"].items():
            for target in ("beta1", "beta2"):
                rows.append({"learner": lab, "strategy": strat, "target": target,
                             **srec["blp"][target]})
            for g in range(cfg.k_groups):
                rows.append({"learner": lab, "strategy": strat,
                             "target": f"gamma_{g + 1}",
                             **srec["gates"][f"gamma_{g + 1}"]})
            if cfg.k_groups >= 2:
                rows.append({"learner": lab, "strategy": strat, "target": "gamma_diff",
                             **srec["gates"]["gamma_diff"]})
        for name, crec in lrec["clan"].items():
            for target in ("delta_1", "delta_k", "diff"):
                rows.append({"learner": lab, "strategy": cfg.primary_strategy,
                             "target": f"clan[{name}].{target}", **crec[target]})
    return rows


def _write_summary_csv(path: str, rows: list[dict]):
    cols = ["learner", "strategy", "target", "estimate", "ci_lo", "ci_hi",
            "ci_inv_lo", "ci_inv_hi", "p_adjusted", "p_adjusted_raw"]
    lines = [",".join(cols)]
    for row in rows:
        vals = []
        for c in cols:
            v = row[c]
            vals.append(f"{v:.10g}" if isinstance(v, float) else str(v))
        lines.append(",".join(vals))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_band_csv(path: str, report: Report):
    lines = ["learner,strategy,k,point,lo,hi"]
    for lab, lrec in report.results.items():
        for strat, srec in lrec["strategies"].items():
            for row in srec["band"]:
                lines.append(
                    f"{lab},{strat},{row['k']},{row['point']:.10g},"
                    f"{row['lo']:.10g},{row['hi']:.10g}"
                )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_plot(path: str, report: Report, cfg: RunConfig):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    lab = report.selection.gates
    strat = cfg.primary_strategy
    band = report.results[lab]["strategies"][strat]["band"]
    ks = [row["k"] for row in band]
    pts = [row["point"] for row in band]
    lo = [row["lo"] for row in band]
    hi = [row["hi"] for row in band]
    ate = report.results[report.selection.blp]["strategies"][strat]["blp"]["beta1"]["estimate"]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.fill_between(ks, lo, hi, alpha=0.25, label=f"{int(100 * (1 - 2 * cfg.alpha))}% joint band")
    ax.plot(ks, pts, "o-", label="group effect")
    ax.axhline(ate, linestyle="--", color="gray", label="average effect")
    ax.set_xlabel("score-proxy group")
    ax.set_ylabel("treatment effect")
    ax.set_xticks(ks)
    ax.set_title(f"GATES ({lab}, {strat})")
    ax.legend()
    fig.tight_layout()
    # svg.hashsalt pins matplotlib's per-process element ids so identical
    # config+seed reproduces the file byte-for-byte
    with matplotlib.rc_context({"svg.hashsalt": cfg.config_hash()}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_report(report: Report, cfg: RunConfig, out_dir: str) -> list[str]:
    """Write report.json, summary.csv, gates_band.csv (and optional plot)."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    jpath = os.path.join(out_dir, "report.json")
    with open(jpath, "w") as fh:
        fh.write(report.to_json() + "\n")
    paths.append(jpath)
    spath = os.path.join(out_dir, "summary.csv")
    _write_summary_csv(spath, _summary_rows(report, cfg))
    paths.append(spath)
    bpath = os.path.join(out_dir, "gates_band.csv")
    _write_band_csv(bpath, report)
    paths.append(bpath)
    if cfg.plot:
        ppath = os.path.join(out_dir, "gates_plot.svg")
        _write_plot(ppath, report, cfg)
        paths.append(ppath)
    return paths
