"""Command-line surface: validate, synth, run, report.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 runtime failure. Run outputs are written atomically (temp file + rename),
so an interrupted run never leaves partial CSVs behind.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

from . import __version__
from .dataset import DatasetSchema, group_histories, load_dataset, plan_folds, split_sizes
from .errors import CompatSweepError, ConfigError, DataError
from .experiment import (
    ExperimentConfig,
    SynthConfig,
    correlations_csv_text,
    curves_csv_text,
    drifted_user_ids,
    generate_synthetic,
    improvement_table,
    improvements_csv_text,
    run_experiment,
)
from .util import atomic_write_text, sha256_hex


def _load_config_file(path: str) -> tuple[ExperimentConfig, DatasetSchema, str | None, str]:
    """Parse the JSON config file.

    Returns (experiment config, dataset schema, dataset path or None, raw
    text). Keys: folds, inner_folds, test_frac, val_frac, pretrain_fraction,
    lambda_grid, models, tree, metric, seed, min_history_len, plus the
    CLI-level "dataset" (default data path) and "schema" (column roles).
    """
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = dict(raw)
    dataset_path = raw.pop("dataset", None)
    if dataset_path is not None and not isinstance(dataset_path, str):
        raise ConfigError("config key 'dataset' must be a path string")
    schema_raw = raw.pop("schema", None)
    schema = DatasetSchema.from_dict(schema_raw) if schema_raw else DatasetSchema()
    config = ExperimentConfig.from_dict(raw)
    return config, schema, dataset_path, text


def _resolve_data_path(arg_path: str | None, config_path: str | None) -> str:
    path = arg_path or config_path
    if not path:
        raise ConfigError("no dataset given: pass --data or set 'dataset' in the config")
    if not os.path.exists(path):
        raise DataError(f"dataset file not found: {path}")
    return path


def cmd_validate(args: argparse.Namespace) -> int:
    config, schema, config_data_path, _ = _load_config_file(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    data_path = _resolve_data_path(args.data, config_data_path)
    dataset = load_dataset(data_path, schema)
    histories, excluded_short = group_histories(dataset, config.min_history_len)
    print(f"dataset: {data_path}")
    print(f"instances: {len(dataset)}  features: {dataset.arity}")
    total_users = len(histories) + len(excluded_short)
    print(f"users: {total_users}")
    if not histories:
        raise DataError("no eligible users")
    plan = plan_folds(
        histories, config.folds, config.inner_folds,
        config.test_frac, config.val_frac, config.seed,
    )
    print(f"eligible users: {len(plan.user_order)}")
    by_user = {h.user_id: len(h) for h in histories}
    for user in plan.user_order:
        n_test, n_val, n_train = split_sizes(by_user[user], config.test_frac, config.val_frac)
        print(f"  {user}: history {by_user[user]} -> test {n_test}, val {n_val}, train {n_train}")
    excluded = list(excluded_short) + list(plan.excluded)
    if excluded:
        print(f"excluded users: {len(excluded)}")
        for exclusion in excluded:
            print(f"  {exclusion.user_id}: {exclusion.reason} ({exclusion.detail})")
    print(f"plan: {config.folds} folds x {config.inner_folds} inner folds, seed {config.seed}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    synth = SynthConfig(
        users=args.users,
        min_len=args.min_len,
        max_len=args.max_len,
        drift_fraction=args.drift_fraction,
        noise=args.noise,
        seed=args.seed,
    )
    dataset = generate_synthetic(synth)
    atomic_write_text(args.out, dataset.to_csv_text())
    sidecar_path = os.path.splitext(args.out)[0] + ".users.json"
    sidecar = {
        "drifted_users": list(drifted_user_ids(synth)),
        "config": synth.to_dict(),
    }
    atomic_write_text(sidecar_path, json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    print(f"wrote {args.out} ({len(dataset)} rows, {synth.users} users)")
    print(f"wrote {sidecar_path} ({len(sidecar['drifted_users'])} drifted users)")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    config, schema, config_data_path, config_text = _load_config_file(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    data_path = _resolve_data_path(args.data, config_data_path)
    with open(data_path, "rb") as handle:
        source_sha = sha256_hex(handle.read())
    dataset = load_dataset(data_path, schema)

    result = run_experiment(config, dataset, jobs=args.jobs)
    rows, correlations = improvement_table(result)

    t0 = time.perf_counter()
    os.makedirs(args.out, exist_ok=True)
    atomic_write_text(os.path.join(args.out, "curves.csv"), curves_csv_text(result))
    atomic_write_text(
        os.path.join(args.out, "improvements.csv"),
        improvements_csv_text(rows, config.model_order),
    )
    atomic_write_text(
        os.path.join(args.out, "correlations.csv"),
        correlations_csv_text(correlations, config.model_order),
    )
    timings = dict(result.timings)
    timings["write"] = time.perf_counter() - t0
    manifest = dict(result.manifest)
    manifest["tool_version"] = __version__
    manifest["config_text"] = config_text
    manifest["source_file"] = data_path
    manifest["source_file_sha256"] = source_sha
    manifest["timings"] = timings
    atomic_write_text(
        os.path.join(args.out, "manifest.json"),
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
    )

    skips = sum(result.manifest["skip_counts"].values())
    print(f"run {result.run_id}: {len(result.curves)} curves, {skips} skipped points")
    print(f"outputs in {args.out}: manifest.json curves.csv improvements.csv correlations.csv")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    from .report import write_report  # matplotlib import deferred to here

    models = [m for m in (args.models or "").split(",") if m]
    paths = write_report(args.run, out_dir=args.out, models=models or None)
    print(f"wrote {paths.tradeoff_svg}")
    print(f"wrote {paths.tradeoff_data_csv}")
    print(f"wrote {paths.improvements_md}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="compatsweep",
        description=(
            "Train compatibility-aware model updates personalized per user, "
            "sweep the compatibility-performance trade-off, and report it."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="check a dataset + config without training")
    p_validate.add_argument("--data", help="dataset CSV (overrides config 'dataset')")
    p_validate.add_argument("--config", required=True, help="JSON config file")
    p_validate.add_argument("--seed", type=int, help="override the config seed")
    p_validate.set_defaults(func=cmd_validate)

    p_synth = sub.add_parser("synth", help="generate the synthetic benchmark dataset")
    p_synth.add_argument("--out", required=True, help="output CSV path")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--users", type=int, default=20)
    p_synth.add_argument("--min-len", type=int, default=40, dest="min_len")
    p_synth.add_argument("--max-len", type=int, default=80, dest="max_len")
    p_synth.add_argument("--drift-fraction", type=float, default=0.3, dest="drift_fraction")
    p_synth.add_argument("--noise", type=float, default=0.1)
    p_synth.set_defaults(func=cmd_synth)

    p_run = sub.add_parser("run", help="execute the full experiment")
    p_run.add_argument("--config", required=True, help="JSON config file")
    p_run.add_argument("--data", help="dataset CSV (overrides config 'dataset')")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, help="override the config seed")
    p_run.add_argument("--jobs", type=int, default=1, help="worker processes (output identical)")
    p_run.set_defaults(func=cmd_run)

    p_report = sub.add_parser("report", help="render plots and tables from run outputs")
    p_report.add_argument("--run", required=True, help="run output directory")
    p_report.add_argument("--out", help="report directory (default: the run directory)")
    p_report.add_argument("--models", help="comma-separated model filter for the plot")
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CompatSweepError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
