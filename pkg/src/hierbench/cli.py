"""hierbench command line."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .analysis import BOOTSTRAP_DECISION, SPLIT_HALF, WALD_DECISION, compare_models, performance_profile
from .bootstrap import AXIS_CELLS, AXIS_VALUES, LADDERS, BootstrapConfig, ResampleLadder, hierarchical_bootstrap
from .data import AXES, DataError, ingest_records, validate_tree
from .estimators import POOL_LEAVES, POOL_ROLLOUTS, ConfidenceLevel, app_means, suite_mean, suite_wald_interval, trimmed_suite_mean, wilson_interval
from .integrity import Instance, feasibility_matrix, load_stores, triviality_filter
from .report import FORMATS, TEXT, Report, Table, emit_report
from .rng import resolve_seed
from .simlab import (
    CONDITIONS,
    BaseCalibration,
    ReplaySimSpec,
    bootstrap_B_sensitivity,
    build_calibration,
    coverage_study_base,
    coverage_study_suite,
    replay_equivalence_sim,
    replay_transfer_sim,
)
from .variability import exceedance_curve, mad_grid, sensitivity_profile

logger = logging.getLogger("hierbench")

THREADS_ENV = "HIERBENCH_THREADS"
EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2
# run settings that must not change results, so they stay out of the envelope
_NON_PARAMS = {"command", "func", "threads", "format", "output", "config", "verbose", "seed"}


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _names(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


# --------------------------------------------------------------------------- parser


def _common(p: argparse.ArgumentParser, stochastic: bool = False):
    p.add_argument("--format", choices=FORMATS, default=TEXT, help="output format (default: text)")
    p.add_argument("--output", "-o", default=None, help="write output to this file instead of stdout")
    p.add_argument("--config", default=None, help="key=value file of defaults; flags take precedence")
    p.add_argument("--threads", type=int, default=_default_threads(),
                   help=f"worker cap (env {THREADS_ENV}); never changes results")
    p.add_argument("-v", "--verbose", action="store_true")
    if stochastic:
        p.add_argument("--seed", type=int, default=None, help="master seed (env HIERBENCH_SEED; else generated)")


def _input(p, many_models=False):
    p.add_argument("--input", "-i", required=True, help="results file (.jsonl or .csv)")
    p.add_argument("--axes", type=_names, default=list(AXES), help="enabled axes, comma separated")
    if not many_models:
        p.add_argument("--model", default=None, help="model to analyse when the input holds several")


def _bootstrap_flags(p, B=1000):
    bool_flag = argparse.BooleanOptionalAction
    p.add_argument("--resample-scenarios", action=bool_flag, default=True)
    p.add_argument("--resample-axes", action=bool_flag, default=True)
    p.add_argument("--resample-rollouts", action=bool_flag, default=True)
    p.add_argument("--replicates", "-B", type=int, default=B)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--statistic", choices=("mean", "trimmed-mean"), default="mean")
    p.add_argument("--trim", type=float, default=0.0, help="fraction of apps trimmed per tail")
    p.add_argument("--axis-mode", choices=(AXIS_VALUES, AXIS_CELLS), default=AXIS_VALUES)
    p.add_argument("--pooling", choices=(POOL_ROLLOUTS, POOL_LEAVES), default=POOL_ROLLOUTS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hierbench", description="Statistics for hierarchical agent-benchmark results.")
    parser.add_argument("--version", action="version", version=f"hierbench {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("ingest", help="parse and validate a results file")
    _input(p, many_models=True)
    _common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("report", help="point estimates: per-app, suite, trimmed, Wald")
    _input(p)
    _common(p)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--trim", type=float, default=0.0)
    p.add_argument("--pooling", choices=(POOL_ROLLOUTS, POOL_LEAVES), default=POOL_ROLLOUTS)
    p.add_argument("--leaves", action="store_true", help="also list Wilson intervals per configuration")
    p.set_defaults(func=cmd_report)

    for name, func, help_ in (("ci", cmd_ci, "hierarchical bootstrap CI of the suite mean"),
                              ("per-app-ci", cmd_per_app_ci, "hierarchical bootstrap CI per app")):
        p = sub.add_parser(name, help=help_)
        _input(p)
        _bootstrap_flags(p)
        _common(p, stochastic=True)
        p.set_defaults(func=func)

    p = sub.add_parser("decompose", help="matched-pair sensitivity per environmental axis")
    _input(p)
    _common(p)
    p.add_argument("--axis", type=_names, default=None, help="axes to analyse (default: all enabled)")
    p.add_argument("--thresholds", type=_floats, default=[0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("profile", help="performance profiles across models")
    _input(p, many_models=True)
    _common(p)
    p.add_argument("--thresholds", type=_floats, default=[i / 10 for i in range(11)])
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("regret", help="split-half expected regret of Wald vs bootstrap decisions")
    _input(p, many_models=True)
    p.add_argument("--models", type=_names, default=None, help="the two models to compare")
    p.add_argument("--sims", type=int, default=500)
    _bootstrap_flags(p)
    _common(p, stochastic=True)
    p.set_defaults(func=cmd_regret)

    p = sub.add_parser("simulate-coverage-base", help="per-configuration Wald/Wilson coverage")
    p.add_argument("--R", type=_ints, default=[1, 3, 5, 10])
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--mass-zero", type=float, default=0.68)
    _common(p, stochastic=True)
    p.set_defaults(func=cmd_coverage_base)

    p = sub.add_parser("simulate-coverage-suite", help="suite-level coverage of the bootstrap ladder")
    p.add_argument("--condition", choices=sorted(CONDITIONS), default="main")
    p.add_argument("--variants", type=_names, default=["roll", "config+roll", "scen+config+roll"],
                   help=f"comma separated from {sorted(LADDERS)} and wald")
    p.add_argument("--experiments", type=int, default=200)
    p.add_argument("--replicates", "-B", type=int, default=500)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--axis-mode", choices=(AXIS_VALUES, AXIS_CELLS), default=AXIS_VALUES)
    _common(p, stochastic=True)
    p.set_defaults(func=cmd_coverage_suite)

    p = sub.add_parser("simulate-b-sensitivity", help="width and coverage against the replicate count")
    p.add_argument("--condition", choices=sorted(CONDITIONS), default="main")
    p.add_argument("--B-list", dest="B_list", type=_ints, default=[100, 300, 500, 1000, 2000])
    p.add_argument("--experiments", type=int, default=200)
    p.add_argument("--alpha", type=float, default=0.05)
    _common(p, stochastic=True)
    p.set_defaults(func=cmd_b_sensitivity)

    p = sub.add_parser("simulate-replay", help="replay agent success rate against pass@k")
    p.add_argument("--p", type=_floats, required=True, help="per-task success probabilities")
    p.add_argument("--k", type=_ints, default=[1, 2, 5, 20])
    p.add_argument("--mc", type=int, default=100_000)
    p.add_argument("--env", choices=("static", "multifactorial"), default="static")
    p.add_argument("--match-prob", type=float, default=1.0)
    _common(p, stochastic=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("integrity-check", help="feasibility matrix and triviality filter")
    p.add_argument("--profiles", required=True, help="directory of profile store JSON files")
    p.add_argument("--instances", required=True, help="JSON list of task instances")
    _common(p)
    p.set_defaults(func=cmd_integrity)
    return parser


# --------------------------------------------------------------------------- config file


def _truthy(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def read_config(path: str) -> dict[str, str]:
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _apply_config(parser: argparse.ArgumentParser, argv: list[str], args: argparse.Namespace) -> argparse.Namespace:
    """Re-parse with config-file values as defaults so explicit flags win."""
    values = read_config(args.config)
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, raw in values.items():
        if key not in actions or key in ("config", "help"):
            raise UsageError(f"unknown config key {key!r} for {args.command}")
        action = actions[key]
        if isinstance(action, argparse.BooleanOptionalAction) or action.nargs == 0:
            defaults[key] = _truthy(raw)
        elif action.type is not None:
            try:
                defaults[key] = action.type(raw)
            except ValueError as exc:
                raise UsageError(f"config key {key!r}: {exc}") from None
        else:
            defaults[key] = raw
        if action.choices is not None and defaults[key] not in action.choices:
            raise UsageError(f"config key {key!r}: invalid choice {raw!r}")
        action.required = False
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


# --------------------------------------------------------------------------- helpers


def _params(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NON_PARAMS}


def _trees(args):
    warnings: list[str] = []
    trees = ingest_records(args.input, args.axes, warnings)
    return trees, [f"{loc}: {msg}" for loc, msg in warnings]


def _one_tree(args):
    trees, _ = _trees(args)
    if args.model is None:
        if len(trees) != 1:
            raise DataError(f"input holds models {sorted(trees)}; pick one with --model")
        return next(iter(trees.values()))
    if args.model not in trees:
        raise DataError(f"model {args.model!r} not in input (have {sorted(trees)})")
    return trees[args.model]


def _boot_config(args, seed: int) -> BootstrapConfig:
    ladder = ResampleLadder(args.resample_scenarios, args.resample_axes, args.resample_rollouts)
    return BootstrapConfig(ladder=ladder, B=args.replicates, level=ConfidenceLevel(args.alpha), seed=seed,
                           statistic=args.statistic, trim_fraction=args.trim, axis_mode=args.axis_mode,
                           pooling=args.pooling)


# --------------------------------------------------------------------------- commands


def cmd_ingest(args, seed):
    trees, warnings = _trees(args)
    rows, metrics = [], {}
    for model, tree in trees.items():
        rep = validate_tree(tree)
        n_rollouts = sum(len(vec) for *_, vec in tree.leaves())
        n_scen = sum(tree.n_scenarios(a) for a in tree.app_names)
        n_cfg = len({cfg for _, _, cfg, _ in tree.leaves()})
        metrics[model] = {
            "apps": tree.n_apps,
            "scenarios": n_scen,
            "configs": n_cfg,
            "leaves": tree.n_leaves,
            "rollouts": n_rollouts,
            "balanced": rep.is_balanced,
            "errors": list(rep.errors),
            "warnings": list(rep.warnings),
        }
        rows.append([model or "-", tree.n_apps, n_scen, n_cfg, tree.n_leaves,
                     n_rollouts, rep.is_balanced])
    metrics = {"models": metrics, "ingest_warnings": warnings}
    table = Table("ingest", ["model", "apps", "scenarios", "configs", "leaves", "rollouts", "balanced"], rows)
    return Report("ingest", None, _params(args), metrics, [table])


def cmd_report(args, seed):
    tree = _one_tree(args)
    est = suite_mean(tree, args.pooling)
    wald = suite_wald_interval(tree, args.alpha)
    metrics = {"suite_mean": est.theta_hat, "per_app": dict(est.per_app), "suite_wald": wald.to_dict()}
    tables = [Table("per-app means", ["app", "mean", "rollouts"],
                    [[a, m, int(tree.arrays[a].trials.sum())] for a, m in est.per_app.items()])]
    summary = [["suite mean", est.theta_hat], ["wald lower", wald.lower], ["wald upper", wald.upper]]
    if args.trim:
        trimmed = trimmed_suite_mean(tree, args.trim, args.pooling).theta_hat
        metrics["trimmed_mean"] = trimmed
        summary.append([f"trimmed mean ({args.trim:g})", trimmed])
    tables.append(Table("suite", ["statistic", "value"], summary))
    if args.leaves:
        leaf_rows = []
        for app, scen, cfg, vec in tree.leaves():
            ci = wilson_interval(sum(vec), len(vec), args.alpha)
            leaf_rows.append([app, scen, cfg.label,
                              sum(vec), len(vec), ci.lower, ci.upper])
        metrics["leaves"] = [dict(zip(["app", "scenario", "config", "k", "R", "lower", "upper"], r)) for r in leaf_rows]
        tables.append(Table("wilson per configuration", ["app", "scenario", "config", "k", "R", "lower", "upper"], leaf_rows))
    return Report("report", None, _params(args), metrics, tables)


def cmd_ci(args, seed):
    tree = _one_tree(args)
    cfg = _boot_config(args, seed)
    res = hierarchical_bootstrap(tree, cfg, n_jobs=args.threads)
    ci = res.interval
    metrics = {"interval": ci.to_dict(), "width": ci.width, "ladder": cfg.ladder.label, "bootstrap": cfg.to_dict()}
    table = Table("suite CI", ["statistic", "estimate", "lower", "upper", "width", "ladder", "B"],
                  [[cfg.statistic, ci.estimate, ci.lower, ci.upper, ci.width, cfg.ladder.label, cfg.B]])
    return Report("ci", seed, _params(args), metrics, [table])


def cmd_per_app_ci(args, seed):
    tree = _one_tree(args)
    cfg = _boot_config(args, seed)
    res = hierarchical_bootstrap(tree, cfg, n_jobs=args.threads, per_app=True)
    per_app = res.per_app_intervals
    metrics = {"per_app": {a: ci.to_dict() for a, ci in per_app.items()}, "ladder": cfg.ladder.label,
               "bootstrap": cfg.to_dict()}
    table = Table("per-app CI", ["app", "estimate", "lower", "upper", "width"],
                  [[a, ci.estimate, ci.lower, ci.upper, ci.width] for a, ci in per_app.items()])
    return Report("per-app-ci", seed, _params(args), metrics, [table])


def cmd_decompose(args, seed):
    tree = _one_tree(args)
    axes = args.axis or [a for a in AXES if a in tree.axis_mask]
    for a in axes:
        if a not in AXES:
            raise UsageError(f"unknown axis {a!r}")
    # axes with a single observed value have no pairs to compare
    axes = [a for a in axes if a in tree.axis_mask and len({cfg.get(a) for _, _, cfg, _ in tree.leaves()}) > 1]
    grid = mad_grid(tree, axes)
    profiles = {a: vars(sensitivity_profile(tree, a)) for a in axes}
    curves = {a: {"x": [t for t, _ in c], "y": [f for _, f in c]}
              for a in axes for c in [exceedance_curve(tree, a, args.thresholds)]}
    metrics = {"mad_grid": grid, "profiles": profiles, "exceedance": curves}
    tables = [
        Table("MAD by app and axis", ["app"] + axes, [[app] + [grid[app][a] for a in axes] for app in grid]),
        Table("axis sensitivity", ["axis", "mad", "q90_abs_delta", "pairs"],
              [[a, p["mad"], p["q90_abs_delta"], p["n_pairs"]] for a, p in profiles.items()]),
        Table("exceedance", ["axis"] + [f">{t:g}" for t in args.thresholds],
              [[a] + curves[a]["y"] for a in axes]),
    ]
    return Report("decompose", None, _params(args), metrics, tables)


def cmd_profile(args, seed):
    trees, _ = _trees(args)
    means = {m: app_means(t) for m, t in trees.items()}
    prof = performance_profile(means, args.thresholds)
    metrics = {"series": prof.to_series()}
    table = Table("performance profile", ["tau"] + list(prof.fractions),
                  [[t] + [prof.fractions[m][i] for m in prof.fractions] for i, t in enumerate(prof.thresholds)])
    return Report("profile", None, _params(args), metrics, [table])


def cmd_regret(args, seed):
    trees, _ = _trees(args)
    models = args.models or sorted(trees)
    if len(models) != 2:
        raise DataError(f"regret compares exactly two models, got {models}")
    missing = [m for m in models if m not in trees]
    if missing:
        raise DataError(f"models not in input: {missing}")
    cfg = _boot_config(args, seed)
    reports = compare_models(trees[models[0]], trees[models[1]], n_sims=args.sims, seed=seed, config=cfg,
                             n_jobs=args.threads)
    metrics = {"models": models, **{k: r.to_dict() for k, r in reports.items()}}
    base = reports[SPLIT_HALF]
    rows = []
    for app, r in base.per_app.items():
        rows.append([app, r.gap, r.p_wrong, r.regret, app in reports[WALD_DECISION].per_app,
                     app in reports[BOOTSTRAP_DECISION].per_app])
    tables = [
        Table("per-app regret", ["app", "gap", "p_wrong", "regret", "wald_flag", "bootstrap_flag"], rows),
        Table("total expected regret", ["method", "total"], [[k, r.total] for k, r in reports.items()]),
    ]
    return Report("regret", seed, _params(args), metrics, tables)


def _coverage_table(rows) -> Table:
    return Table("coverage", ["condition", "resampling", "R", "coverage", "width"],
                 [[r.condition, r.method, r.R, r.coverage, r.width] for r in rows])


def cmd_coverage_base(args, seed):
    rows = coverage_study_base(args.R, args.trials, args.alpha, seed, BaseCalibration(mass_zero=args.mass_zero))
    return Report("simulate-coverage-base", seed, _params(args), {"rows": [r.to_dict() for r in rows]},
                  [_coverage_table(rows)])


def cmd_coverage_suite(args, seed):
    for v in args.variants:
        if v not in LADDERS and v != "wald":
            raise UsageError(f"unknown variant {v!r}")
    cal = build_calibration(CONDITIONS[args.condition])
    rows = coverage_study_suite(cal, args.variants, args.experiments, args.replicates, seed, args.alpha,
                                args.axis_mode, n_jobs=args.threads)
    metrics = {"calibration": cal.to_dict(), "rows": [r.to_dict() for r in rows]}
    return Report("simulate-coverage-suite", seed, _params(args), metrics, [_coverage_table(rows)])


def cmd_b_sensitivity(args, seed):
    cal = build_calibration(CONDITIONS[args.condition])
    rows = bootstrap_B_sensitivity(cal, args.B_list, args.experiments, seed, args.alpha, n_jobs=args.threads)
    table = Table("B sensitivity", ["B", "coverage", "width", "width_change"],
                  [[r["B"], r["coverage"], r["width"], r["width_change"]] for r in rows])
    return Report("simulate-b-sensitivity", seed, _params(args), {"calibration": cal.to_dict(), "rows": rows}, [table])


def cmd_replay(args, seed):
    rows, out = [], []
    for k in args.k:
        spec = ReplaySimSpec(tuple(args.p), k, args.mc, args.env, args.match_prob)
        sim = replay_transfer_sim if args.env == "multifactorial" else replay_equivalence_sim
        res = sim(spec, seed)
        within = res.abs_error < 3 * res.mc_se if res.mc_se > 0 else res.abs_error < 1e-12
        out.append({"k": k, **res.to_dict(), "within_3se": within})
        rows.append([k, res.source_sr, res.analytic_pass_at_k, res.empirical_sr, res.mc_se, within])
    table = Table("replay", ["k", "source_SR", "analytic_pass_at_k", "empirical_SR", "mc_se", "within_3se"], rows)
    return Report("simulate-replay", seed, _params(args), {"rows": out}, [table])


def cmd_integrity(args, seed):
    stores = load_stores(args.profiles)
    raw = json.loads(Path(args.instances).read_text())
    if isinstance(raw, dict):
        raw = raw.get("instances", [])
    instances = [Instance.from_dict(obj) for obj in raw]
    warnings: list[str] = []
    matrix = feasibility_matrix(instances, stores, warnings=warnings)
    surviving, excluded = {}, []
    for inst in instances:
        configs = [{"instance": inst.instance_id, "profile": p, "params": dict(inst.params)}
                   for p, ok in matrix[inst.instance_id].items() if ok]
        if inst.predicate:
            res = triviality_filter(configs, inst.predicate, stores)
            configs = res.surviving
            excluded += [{"instance": c["instance"], "profile": c["profile"], "reason": "pre-solved"} for c in res.excluded]
        surviving[inst.instance_id] = [c["profile"] for c in configs]
    pids = list(stores)
    metrics = {"matrix": matrix, "compatible": surviving, "excluded": excluded, "warnings": sorted(set(warnings))}
    tables = [
        Table("feasibility", ["instance"] + pids, [[i] + [row[p] for p in pids] for i, row in matrix.items()]),
        Table("exclusion log", ["instance", "profile", "reason"],
              [[e["instance"], e["profile"], e["reason"]] for e in excluded]),
    ]
    return Report("integrity-check", None, _params(args), metrics, tables)


# --------------------------------------------------------------------------- entry points


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        if args.config:
            args = _apply_config(parser, argv, args)
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        seed = resolve_seed(args.seed) if hasattr(args, "seed") else None
        report = args.func(args, seed)
        emit_report(report, args.format, args.output, sys.stdout)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"hierbench: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError, OSError) as exc:
        print(f"hierbench: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
