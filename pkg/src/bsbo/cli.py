"""Command-line entry point.

Exit codes: 0 ok, 1 config error, 2 data error, 3 numerical failure,
4 validation failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .campaign import CampaignConfig, derive_seed, derived_rng, initial_design, run_campaign
from .constraint_space import ConstraintSet, GroundSet, library_size
from .data_io import (
    DataError,
    FitnessTable,
    SyntheticSpec,
    _read_rows,
    generate_synthetic,
    infer_ground,
    load_dataset,
    read_metadata,
    save_dataset,
    write_report,
)
from .ds_optimize import METHODS, optimize
from .gp_model import GPNumericalError, GpHyperparameters, compute_rewards, fit_posterior
from .objective import McSizeError, ObjectiveContext, mc_objective, update_threshold
from .validation import run_battery

logger = logging.getLogger("bsbo")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL, EXIT_VALIDATION = 0, 1, 2, 3, 4


class ConfigError(ValueError):
    pass


def _load_config(args) -> CampaignConfig:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
    try:
        config = CampaignConfig.from_json(data)
        opt = config.optimizer
        if args.method is not None:
            opt = replace(opt, method=args.method)
        if args.threads is not None:
            opt = replace(opt, threads=args.threads)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
            opt = replace(opt, seed=args.seed)
        if args.batch_size is not None:
            overrides["batch_size"] = args.batch_size
        if args.rounds is not None:
            overrides["rounds"] = args.rounds
        if args.mc_samples is not None:
            overrides["mc_samples"] = args.mc_samples
        return replace(config, optimizer=opt, **overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def _persist_config(out: Path | None, args, config: CampaignConfig, extra: dict | None = None):
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    resolved = {"command": args.command, "campaign": config.to_json(), "log1p": args.log1p}
    resolved.update(extra or {})
    (out / "resolved_config.json").write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n",
                                              encoding="utf-8")


def _load_table(dataset: str, log1p: bool) -> FitnessTable:
    if dataset == "synthetic":
        table = generate_synthetic(SyntheticSpec())
        if log1p:
            table = replace(table, values=np.log1p(table.values))
        return table
    path = Path(dataset)
    if not path.exists():
        raise DataError(f"dataset not found: {path}")
    return load_dataset(path, log1p=log1p)


def cmd_simulate(args) -> int:
    config = _load_config(args)
    table = _load_table(args.dataset, args.log1p)
    out = Path(args.out)
    _persist_config(out, args, config, {"dataset": args.dataset})
    report = run_campaign(table, config)
    paths = write_report(report, out)
    for p in paths:
        print(p)
    return EXIT_OK


def _read_observations(path: Path, args):
    if not path.exists():
        raise DataError(f"observations file not found: {path}")
    rows = _read_rows(path, value_column="value")
    if not rows:
        raise DataError(f"{path}: no observations")
    meta = read_metadata(path)
    if args.ground:
        ground = GroundSet.from_json(json.loads(Path(args.ground).read_text(encoding="utf-8")))
    elif "alphabets" in meta:
        ground = GroundSet.from_json(meta)
    else:
        ground = infer_ground([r[1] for r in rows])
    obs = []
    for lineno, seq, value in rows:
        try:
            obs.append((ground.item_index(ground.parse_sequence(seq)), value))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    if args.log1p:
        obs = [(i, float(np.log1p(v))) for i, v in obs]
    return ground, obs


def design(ground: GroundSet, obs, config: CampaignConfig):
    """One optimizer invocation from raw observations: returns (S*, context, runs)."""
    uniq: dict[int, list[float]] = {}
    for i, v in obs:
        uniq.setdefault(i, []).append(v)
    pairs = [(i, float(np.mean(v))) for i, v in uniq.items()]
    if len(pairs) >= 2:
        hyper = config.gp.resolve(pairs, ground)
    else:
        hyper = config.gp.hyper or GpHyperparameters(config.gp.kernel)
    posterior = fit_posterior(pairs, hyper, ground)
    tau = update_threshold([v for _, v in obs])
    ctx = ObjectiveContext(ground, compute_rewards(posterior, tau), config.batch_size)
    S, runs = optimize(ctx, config.optimizer)
    return S, ctx, runs, posterior, tau


def cmd_design(args) -> int:
    config = _load_config(args)
    ground, obs = _read_observations(Path(args.observations), args)
    out = Path(args.out) if args.out else None
    _persist_config(out, args, config, {"observations": args.observations})
    S, ctx, runs, _, tau = design(ground, obs, config)
    best_run = max(runs, key=lambda r: r.final_value)
    result = {
        "selected": {str(site): S.site_symbols(site) for site in range(ground.n_sites)},
        "surrogate": ctx.value(S),
        "library_size": library_size(S),
        "trajectory_length": len(best_run.trajectory),
        "method": config.optimizer.method,
        "tau": tau,
    }
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


def random_constraint_set(ground: GroundSet, rng: np.random.Generator) -> ConstraintSet:
    """Per-site count uniform in 1..|C_l|, symbols uniform without replacement."""
    chosen = []
    for site, size in enumerate(ground.sizes):
        k = int(rng.integers(1, size + 1))
        chosen += [ground.offsets[site] + int(c) for c in rng.choice(size, size=k, replace=False)]
    return ConstraintSet.from_indices(ground, chosen)


def compare_objectives(table: FitnessTable, config: CampaignConfig, n_sets: int = 20,
                       include_optimum: bool = True, diagonal: bool = False,
                       count_duplicates: bool = False, size_cap: int = 4096):
    """Surrogate vs Monte Carlo objective on random sets under an initial-design posterior.

    Returns (rows, skipped) where rows are dicts with the CSV columns.
    """
    ground = table.ground
    items = initial_design(ground, table.wild_type(), config.k_random, derived_rng(config.seed, "initial"))
    obs = [(i, float(table.values[i])) for i in items]
    hyper = config.gp.resolve(obs, ground)
    posterior = fit_posterior(obs, hyper, ground)
    tau = update_threshold([v for _, v in obs])
    ctx = ObjectiveContext(ground, compute_rewards(posterior, tau), config.batch_size)
    rng = derived_rng(config.seed, "compare")
    sets = [random_constraint_set(ground, rng) for _ in range(n_sets)]
    if include_optimum:
        sets.append(optimize(ctx, config.optimizer)[0])
    rows, skipped = [], []
    for k, S in enumerate(sets):
        try:
            est = mc_objective(S, posterior, tau, config.batch_size, config.mc_samples,
                               derive_seed(config.seed, "mc", k), size_cap=size_cap,
                               count_duplicates=count_duplicates, diagonal=diagonal)
        except McSizeError as exc:
            skipped.append((k, str(exc)))
            continue
        rows.append({"constraint_set_id": k, "surrogate": ctx.value(S), "mc_mean": est.mean,
                     "mc_stderr": est.stderr, "library_size": library_size(S)})
    return rows, skipped


def cmd_compare_objectives(args) -> int:
    config = _load_config(args)
    table = _load_table(args.dataset, args.log1p)
    out = Path(args.out)
    _persist_config(out, args, config, {"dataset": args.dataset, "diagonal": args.diagonal,
                                        "count_duplicates": args.count_duplicates})
    rows, skipped = compare_objectives(table, config, args.n_sets, not args.no_optimum,
                                       args.diagonal, args.count_duplicates, args.mc_cap)
    for k, msg in skipped:
        print(f"skipped set {k}: {msg}", file=sys.stderr)
    path = out / "objectives.csv"
    cols = ["constraint_set_id", "surrogate", "mc_mean", "mc_stderr", "library_size"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for r in rows:
            writer.writerow([r[c] if isinstance(r[c], int) else repr(float(r[c])) for c in cols])
    print(path)
    return EXIT_OK


def cmd_validate_decomposition(args) -> int:
    out = Path(args.out) if args.out else None
    seed = 0 if args.seed is None else args.seed
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "resolved_config.json").write_text(json.dumps(
            {"command": args.command, "seed": seed, "instances": args.instances,
             "inject_fault": args.inject_fault}, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    result = run_battery(n_instances=args.instances, seed=seed, fault=args.inject_fault,
                         dump_dir=out)
    print(result.format_table())
    return EXIT_OK if result.passed else EXIT_VALIDATION


def cmd_synthetic(args) -> int:
    spec = SyntheticSpec(alphabet_size=args.alphabet_size, seed=0 if args.seed is None else args.seed)
    table = generate_synthetic(spec)
    out = Path(args.out)
    for p in save_dataset(table, out / "synthetic.csv"):
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bsbo",
        description="Design combinatorial sequence libraries by optimizing per-site constraint sets.",
        epilog="exit codes: 0 ok, 1 config error, 2 data error, 3 numerical failure, 4 validation failure",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="JSON campaign config")
        p.add_argument("--out", required=out_required, help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int, default=None,
                       help="optimizer restart threads (default: available cores)")
        p.add_argument("--method", choices=METHODS)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--rounds", type=int)
        p.add_argument("--mc-samples", type=int)
        p.add_argument("--log1p", action="store_true", help="log1p-transform fitness values")

    p = sub.add_parser("simulate", help="run a multi-round campaign against a fitness table")
    p.add_argument("dataset", help="dataset CSV, or 'synthetic' for the default landscape")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("design", help="choose constraints from an observations CSV (sequence,value)")
    p.add_argument("observations")
    p.add_argument("--ground", help="JSON file with the site alphabets")
    common(p, out_required=False)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("compare-objectives", help="surrogate vs Monte Carlo objective")
    p.add_argument("dataset")
    p.add_argument("--n-sets", type=int, default=20)
    p.add_argument("--no-optimum", action="store_true", help="skip the optimizer's solution row")
    p.add_argument("--diagonal", action="store_true", help="drop posterior correlations")
    p.add_argument("--count-duplicates", action="store_true")
    p.add_argument("--mc-cap", type=int, default=4096)
    common(p)
    p.set_defaults(func=cmd_compare_objectives)

    p = sub.add_parser("validate-decomposition", help="brute-force checks on small instances")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--inject-fault", type=float, default=0.0, metavar="EPS",
                   help="perturb g by EPS to exercise the identity check")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_validate_decomposition)

    p = sub.add_parser("synthetic", help="write the synthetic landscape as a dataset CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--alphabet-size", type=int, default=26)
    p.set_defaults(func=cmd_synthetic)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", None) is None and hasattr(args, "method"):
        args.threads = os.cpu_count() or 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (GPNumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
