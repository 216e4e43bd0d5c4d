"""hetfx: inference on heterogeneous treatment effect features.

Estimates the best linear predictor of treatment effects on a machine
learning score (BLP), sorted group average effects (GATES), and
most/least-affected group characteristics (CLAN) in randomized
experiments, with split-robust (median-aggregated) inference and
data-driven learner selection.
"""
from __future__ import annotations

__version__ = "0.1.0"

from .core_data import Dataset, SplitPlan, load_dataset, make_splits, rng_stream
from .errors import ConfigError, DataError, EstimationError, HetfxError
from .estimators import (
    BandResult,
    BlpFit,
    ClanStat,
    GatesFit,
    GroupScheme,
    build_groups,
    estimate_blp,
    estimate_clan,
    estimate_gates,
    joint_band,
    learner_scores,
    rearrange_monotone,
)
from .learners import (
    ElasticNetFit,
    LearnerSpec,
    ProxyPair,
    fit_forest,
    fit_proxies,
    jitter_if_degenerate,
    solve_elastic_net,
    tune_elastic_net,
)
from .pipeline import (
    Report,
    RunConfig,
    Selection,
    emit_report,
    run_analysis,
    select_best_learners,
)
from .sim_lab import (
    PowerTable,
    SimDesign,
    Truth,
    gen_design,
    oracle_gates,
    power_study,
    proposed_het_test,
    standard_het_test,
)
from .vein import (
    SplitStats,
    VeinSummary,
    adjusted_ci,
    adjusted_pvalue,
    ci_by_inversion,
    lower_median,
    medians,
    mid_median,
    raw_adjusted_pvalue,
    split_pvalues,
    summarize,
    upper_median,
)
from .wls_engine import WlsFit, fit_weighted_ols

__all__ = [
    "__version__",
    "Dataset", "SplitPlan", "load_dataset", "make_splits", "rng_stream",
    "ConfigError", "DataError", "EstimationError", "HetfxError",
    "BandResult", "BlpFit", "ClanStat", "GatesFit", "GroupScheme",
    "build_groups", "estimate_blp", "estimate_clan", "estimate_gates",
    "joint_band", "learner_scores", "rearrange_monotone",
    "ElasticNetFit", "LearnerSpec", "ProxyPair", "fit_forest", "fit_proxies",
    "jitter_if_degenerate", "solve_elastic_net", "tune_elastic_net",
    "Report", "RunConfig", "Selection", "emit_report", "run_analysis",
    "select_best_learners",
    "PowerTable", "SimDesign", "Truth", "gen_design", "oracle_gates",
    "power_study", "proposed_het_test", "standard_het_test",
    "SplitStats", "VeinSummary", "adjusted_ci", "adjusted_pvalue",
    "ci_by_inversion", "lower_median", "medians", "mid_median",
    "raw_adjusted_pvalue", "split_pvalues", "summarize", "upper_median",
    "WlsFit", "fit_weighted_ols",
]
