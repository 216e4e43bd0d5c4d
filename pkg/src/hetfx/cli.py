"""Command line interface.

``hetfx run`` executes a full analysis from a CSV and writes report.json,
summary.csv, gates_band.csv (and an optional SVG plot) to the output
directory.  ``hetfx sim power`` runs the power study comparing the
conventional interaction test with the split-robust test.  Exit codes:
0 success, 1 configuration error, 2 data error, 3 estimation error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import ConfigError, DataError, EstimationError, HetfxError
from .learners import LearnerSpec
from .pipeline import RunConfig, emit_report, run_analysis
from .sim_lab import power_study


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as config errors (exit 1)."""

    def error(self, message):
        raise ConfigError(message)


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _parse_learner(token: str) -> LearnerSpec:
    if token.startswith("external:"):
        return LearnerSpec(kind="external", tuning="fixed",
                           proxy_path=token.split(":", 1)[1])
    if token == "elastic_net":
        return LearnerSpec(kind="elastic_net", tuning="cv")
    if token == "forest":
        return LearnerSpec(kind="forest", tuning="fixed")
    raise ConfigError(
        f"unknown learner {token!r}; use elastic_net, forest, or external:PATH"
    )


def _spec_from_dict(obj: dict) -> LearnerSpec:
    try:
        return LearnerSpec(**obj)
    except TypeError as exc:
        raise ConfigError(f"bad learner spec {obj!r}: {exc}") from exc


def _build_parser() -> _Parser:
    parser = _Parser(prog="hetfx", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    run = sub.add_parser("run", help="run a full analysis on a CSV")
    run.add_argument("--config", help="JSON file with RunConfig fields; flags override")
    run.add_argument("--data")
    run.add_argument("--outcome")
    run.add_argument("--treatment")
    run.add_argument("--covariates", help="comma-separated covariate columns")
    run.add_argument("--propensity", help="constant in (0,1) or a column name")
    run.add_argument("--splits", type=int)
    run.add_argument("--alpha", type=float)
    run.add_argument("--groups", type=int)
    run.add_argument("--learners", help="comma list: elastic_net, forest, external:PATH")
    run.add_argument("--strategy", choices=("weighted", "ht", "both"))
    run.add_argument("--cluster")
    run.add_argument("--strata")
    run.add_argument("--weights", help="sampling weight column")
    run.add_argument("--controls", help="comma-separated fixed-effect columns")
    run.add_argument("--clan", help="comma-separated characteristic columns or 'auto'")
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--out", help="output directory")
    run.add_argument("--plot", action="store_true", default=None)
    run.add_argument("--skip-failed-splits", action="store_true", default=None)

    sim = sub.add_parser("sim", help="simulation studies")
    simsub = sim.add_subparsers(dest="sim_command")
    power = simsub.add_parser("power", help="power study: standard vs proposed test")
    power.add_argument("--n", default="100,200,400", help="comma list of sample sizes")
    power.add_argument("--beta", default="0,0.2,0.4", help="comma list of effect slopes")
    power.add_argument("--reps", type=int, default=None)
    power.add_argument("--splits", type=int, default=None)
    power.add_argument("--alpha", type=float, default=0.05)
    power.add_argument("--seed", type=int, default=0)
    power.add_argument("--out", required=True, help="output directory")
    power.add_argument("--full", action="store_true",
                       help="publication scale (reps 5000, splits 100)")
    return parser


def _config_from_args(args) -> RunConfig:
    base: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                base = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(base, dict):
            raise ConfigError("config file must hold a JSON object")
    if "learners" in base:
        base["learners"] = tuple(_spec_from_dict(o) for o in base["learners"])

    overrides = {
        "data": args.data,
        "outcome": args.outcome,
        "treatment": args.treatment,
        "strata": args.strata,
        "cluster": args.cluster,
        "sweight": args.weights,
        "n_splits": args.splits,
        "alpha": args.alpha,
        "k_groups": args.groups,
        "strategy": args.strategy,
        "seed": args.seed,
        "workers": args.workers,
        "out_dir": args.out,
        "plot": args.plot,
        "skip_failed_splits": args.skip_failed_splits,
    }
    if args.covariates is not None:
        overrides["covariates"] = tuple(_csv_list(args.covariates))
    if args.controls is not None:
        overrides["controls"] = tuple(_csv_list(args.controls))
    if args.learners is not None:
        overrides["learners"] = tuple(_parse_learner(t) for t in _csv_list(args.learners))
    if args.clan is not None:
        overrides["clan_vars"] = (
            "auto" if args.clan == "auto" else tuple(_csv_list(args.clan))
        )
    if args.propensity is not None:
        try:
            overrides["propensity"] = float(args.propensity)
        except ValueError:
            overrides["propensity"] = args.propensity

    merged = dict(base)
    for key, val in overrides.items():
        if val is not None:
            merged[key] = val
    for key in ("covariates", "controls"):
        if key in merged:
            merged[key] = tuple(merged[key])
    if "clan_vars" in merged and isinstance(merged["clan_vars"], list):
        merged["clan_vars"] = tuple(merged["clan_vars"])
    try:
        return RunConfig(**merged)
    except TypeError as exc:
        raise ConfigError(f"bad config field: {exc}") from exc


def _cmd_run(args) -> int:
    cfg = _config_from_args(args)
    if not cfg.data:
        raise ConfigError("--data (or a config with a data path) is required")
    if not cfg.out_dir:
        raise ConfigError("--out (or a config with out_dir) is required")
    report = run_analysis(cfg)
    paths = emit_report(report, cfg, cfg.out_dir)
    sel = report.selection
    print(f"n={report.meta['n_obs']} splits={report.meta['n_splits_used']}"
          f"/{report.meta['n_splits']} alpha={report.meta['alpha']}")
    print(f"selected learners: blp={sel.blp} gates={sel.gates}")
    strat = cfg.primary_strategy
    blp = report.results[sel.blp]["strategies"][strat]["blp"]
    for target in ("beta1", "beta2"):
        t = blp[target]
        print(f"{target}: {t['estimate']:.4g} "
              f"[{t['ci_lo']:.4g}, {t['ci_hi']:.4g}] p={t['p_adjusted']:.3g}")
    for path in paths:
        print(f"wrote {path}")
    return 0


def _cmd_sim_power(args) -> int:
    ns = [int(v) for v in _csv_list(args.n)]
    betas = [float(v) for v in _csv_list(args.beta)]
    if not ns or not betas:
        raise ConfigError("--n and --beta must be non-empty")
    reps = args.reps if args.reps is not None else (5000 if args.full else 500)
    splits = args.splits if args.splits is not None else (100 if args.full else 50)
    standard, proposed = power_study(
        ns, betas, reps=reps, n_splits=splits, alpha=args.alpha, seed=args.seed
    )
    os.makedirs(args.out, exist_ok=True)
    spath = os.path.join(args.out, "power_standard.csv")
    ppath = os.path.join(args.out, "power_proposed.csv")
    standard.to_csv(spath)
    proposed.to_csv(ppath)
    print(f"wrote {spath}")
    print(f"wrote {ppath}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sim":
            if getattr(args, "sim_command", None) == "power":
                return _cmd_sim_power(args)
            raise ConfigError("usage: hetfx sim power ...")
        raise ConfigError("no command given; use 'hetfx run' or 'hetfx sim power'")
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except DataError as err:
        print(f"data error: {err}", file=sys.stderr)
        return 2
    except EstimationError as err:
        print(f"estimation error: {err}", file=sys.stderr)
        return 3
    except HetfxError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
