"""Nested cross-validation harness, model selection, and report tables.

Protocol per run: for every fold, each user's history is split into a held
out test part and a remainder; every inner fold re-splits the remainder into
validation and train parts. Inside an inner fold, a small pre-update model is
fitted on a few percent of the pooled train rows, every grid model is swept
over lambda against both evaluation sets, and per (fold, user) the model with
the best mean validation curve area is selected. Everything is driven by
derived seeds, so results are identical for any worker count.
"""

from __future__ import annotations

import concurrent.futures
import csv
import io
import json
import math
import random
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .compatibility import (
    REASON_DEGENERATE_WEIGHTS,
    TradeoffCurve,
    TradeoffPoint,
    SkippedPoint,
    TrainMasks,
    WeightVector,
    assemble_sample_weights,
    correct_label_mask,
    evaluate_sweep,
    validate_lambda_grid,
)
from .dataset import Dataset, UserHistory, group_histories, plan_folds, sample_pretrain_subset
from .errors import ConfigError, DataError
from .metrics import autc, align_curves, history_distance, pearson
from .tree import TreeConfig, TreeModel, fit_tree, predict_labels
from .util import ceil_fraction, derive_seed, format_float, sha256_hex

BASELINE = "baseline"

REASON_SELECTION_UNDEFINED = "selection_undefined"


def default_model_grid() -> dict[str, WeightVector]:
    """The nine named weight vectors shipped with the tool.

    Exactly the binary vectors that can trace a curve: at least one
    plain-loss component and at least one protected component positive.
    """
    grid = {
        BASELINE: (1, 1, 0, 0),
        "L1": (0, 0, 1, 1),
        "L2": (0, 1, 1, 0),
        "L3": (0, 1, 1, 1),
        "L4": (1, 0, 0, 1),
        "L5": (1, 0, 1, 1),
        "L6": (1, 1, 0, 1),
        "L7": (1, 1, 1, 0),
        "L8": (1, 1, 1, 1),
    }
    return {name: WeightVector.from_sequence(v) for name, v in grid.items()}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs besides the dataset itself."""

    folds: int = 10
    inner_folds: int = 30
    test_frac: float = 0.2
    val_frac: float = 0.1
    pretrain_fraction: float = 0.05
    lambda_grid: tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
    models: Mapping[str, WeightVector] = field(default_factory=default_model_grid)
    tree: TreeConfig = field(default_factory=TreeConfig)
    metric: str = "auc"
    min_history_len: int = 10
    seed: int = 0

    def validate(self) -> None:
        if not isinstance(self.folds, int) or self.folds < 1:
            raise ConfigError("folds must be an integer >= 1")
        if not isinstance(self.inner_folds, int) or self.inner_folds < 1:
            raise ConfigError("inner_folds must be an integer >= 1")
        if not (0.0 < self.test_frac and 0.0 < self.val_frac
                and self.test_frac + self.val_frac < 1.0):
            raise ConfigError("need 0 < test_frac, 0 < val_frac, test_frac + val_frac < 1")
        if not (0.0 < self.pretrain_fraction <= 1.0):
            raise ConfigError("pretrain_fraction must be in (0, 1]")
        validate_lambda_grid(self.lambda_grid)
        if not self.models:
            raise ConfigError("model grid is empty")
        if BASELINE not in self.models:
            raise ConfigError(f"model grid must contain {BASELINE!r}")
        if self.models[BASELINE].as_tuple() != (1.0, 1.0, 0.0, 0.0):
            raise ConfigError(f"{BASELINE!r} must be the weight vector (1, 1, 0, 0)")
        if self.metric not in ("auc", "accuracy"):
            raise ConfigError(f"metric must be 'auc' or 'accuracy', got {self.metric!r}")
        if not isinstance(self.min_history_len, int) or self.min_history_len < 1:
            raise ConfigError("min_history_len must be an integer >= 1")
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")
        try:
            self.tree.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def model_order(self) -> tuple[str, ...]:
        return tuple(self.models.keys())

    def to_dict(self) -> dict:
        return {
            "folds": self.folds,
            "inner_folds": self.inner_folds,
            "test_frac": self.test_frac,
            "val_frac": self.val_frac,
            "pretrain_fraction": self.pretrain_fraction,
            "lambda_grid": list(self.lambda_grid),
            "models": {name: list(w.as_tuple()) for name, w in self.models.items()},
            "tree": self.tree.to_dict(),
            "metric": self.metric,
            "min_history_len": self.min_history_len,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(raw: Mapping) -> "ExperimentConfig":
        allowed = {
            "folds", "inner_folds", "test_frac", "val_frac", "pretrain_fraction",
            "lambda_grid", "models", "tree", "metric", "min_history_len", "seed",
        }
        unknown = set(raw) - allowed
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs: dict = {}
        for key in ("folds", "inner_folds", "metric", "min_history_len", "seed",
                    "test_frac", "val_frac", "pretrain_fraction"):
            if key in raw and raw[key] is not None:
                kwargs[key] = raw[key]
        if raw.get("lambda_grid") is not None:
            kwargs["lambda_grid"] = tuple(float(v) for v in raw["lambda_grid"])
        if raw.get("models") is not None:
            models = raw["models"]
            if not isinstance(models, Mapping):
                raise ConfigError("models must map names to 4-component weight vectors")
            kwargs["models"] = {
                str(name): WeightVector.from_sequence(vec) for name, vec in models.items()
            }
        if raw.get("tree") is not None:
            try:
                kwargs["tree"] = TreeConfig.from_dict(dict(raw["tree"]))
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        config = ExperimentConfig(**kwargs)
        config.validate()
        return config


@dataclass(frozen=True)
class Selection:
    """Best model for one (fold, user), with the per-model validation means."""

    fold: int
    user_id: str
    model: str | None
    mean_val_autc: dict[str, float | None]

    def to_dict(self) -> dict:
        return {
            "fold": self.fold,
            "user_id": self.user_id,
            "model": self.model,
            "mean_val_autc": dict(self.mean_val_autc),
        }


@dataclass(frozen=True)
class RunResult:
    """Everything a run produces, ready to serialize.

    `aggregates[user][model]` carries the mean test curve, per-fold test
    curve areas, and their mean/std; `overall_curves[model]` is the
    across-user mean used for plots. Wall-clock timings stay out of the
    serialized form so identical runs serialize identically.
    """

    config: ExperimentConfig
    run_id: str
    curves: tuple[TradeoffCurve, ...]
    selections: tuple[Selection, ...]
    aggregates: dict
    overall_curves: dict
    user_stats: dict
    manifest: dict
    timings: dict = field(default_factory=dict, compare=False)

    def to_json_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "manifest": self.manifest,
            "curves": [_curve_to_dict(c) for c in self.curves],
            "selections": [s.to_dict() for s in self.selections],
            "aggregates": self.aggregates,
            "overall_curves": self.overall_curves,
            "user_stats": self.user_stats,
        }

    def to_json_str(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))


def _curve_to_dict(curve: TradeoffCurve) -> dict:
    return {
        "fold": curve.fold,
        "inner_fold": curve.inner_fold,
        "user_id": curve.user_id,
        "model": curve.model,
        "eval_set": curve.eval_set,
        "points": [
            {"lambda": p.lam, "compatibility": p.compatibility, "performance": p.performance}
            for p in curve.points
        ],
        "skipped": [{"lambda": s.lam, "reason": s.reason} for s in curve.skipped],
    }


# ---------------------------------------------------------------------------
# Synthetic data


@dataclass(frozen=True)
class SynthConfig:
    """Desk-scale synthetic benchmark family.

    A fixed share of users "drifts": their labels follow a rule unrelated to
    the population rule, so a model personalized toward their history should
    beat the one-size-fits-all update.
    """

    users: int = 20
    min_len: int = 40
    max_len: int = 80
    drift_fraction: float = 0.3
    noise: float = 0.1
    seed: int = 0

    def validate(self) -> None:
        if not isinstance(self.users, int) or self.users < 2:
            raise ConfigError("users must be an integer >= 2")
        if not isinstance(self.min_len, int) or self.min_len < 1:
            raise ConfigError("min_len must be an integer >= 1")
        if not isinstance(self.max_len, int) or self.max_len < self.min_len:
            raise ConfigError("max_len must be an integer >= min_len")
        if not (0.0 <= self.drift_fraction <= 1.0):
            raise ConfigError("drift_fraction must be in [0, 1]")
        if not (0.0 <= self.noise < 1.0):
            raise ConfigError("noise must be in [0, 1)")
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")

    def to_dict(self) -> dict:
        return {
            "users": self.users,
            "min_len": self.min_len,
            "max_len": self.max_len,
            "drift_fraction": self.drift_fraction,
            "noise": self.noise,
            "seed": self.seed,
        }


def synth_user_ids(config: SynthConfig) -> tuple[str, ...]:
    width = max(2, len(str(config.users - 1)))
    return tuple(f"u{i:0{width}d}" for i in range(config.users))


def drifted_user_ids(config: SynthConfig) -> tuple[str, ...]:
    """The first ceil(drift_fraction * users) ids are the drifted ones."""
    count = ceil_fraction(config.drift_fraction, config.users)
    return synth_user_ids(config)[:count]


def generate_synthetic(config: SynthConfig) -> Dataset:
    """Deterministic synthetic dataset with 4 features and a drifted cohort.

    Non-drifted users: features iid uniform[0,1], label 1[x0 + 0.5*x1 > 0.75].
    Drifted users: x0 ~ uniform[0.6, 1.0] (a covariate shift), the label
    follows 1[x2 > 0.5] instead. Either label is flipped with probability
    `noise`. Per-user draws use seeds derived from (seed, "synth", index),
    and per instance the draw order is x0, x1, x2, x3, then one noise draw
    (only when noise > 0).
    """
    config.validate()
    ids = synth_user_ids(config)
    drifted = set(drifted_user_ids(config))
    features: list[list[float]] = []
    labels: list[int] = []
    owners: list[str] = []
    for index, user in enumerate(ids):
        rng = random.Random(derive_seed(config.seed, "synth", index))
        length = rng.randint(config.min_len, config.max_len)
        is_drifted = user in drifted
        for _ in range(length):
            if is_drifted:
                x0 = 0.6 + 0.4 * rng.random()
                x1 = rng.random()
                x2 = rng.random()
                x3 = rng.random()
                label = 1 if x2 > 0.5 else 0
            else:
                x0 = rng.random()
                x1 = rng.random()
                x2 = rng.random()
                x3 = rng.random()
                label = 1 if x0 + 0.5 * x1 > 0.75 else 0
            if config.noise > 0.0 and rng.random() < config.noise:
                label = 1 - label
            features.append([x0, x1, x2, x3])
            labels.append(label)
            owners.append(user)
    return Dataset.from_arrays(
        np.asarray(features, dtype=np.float64),
        np.asarray(labels, dtype=np.int64),
        owners,
        ("x0", "x1", "x2", "x3"),
    )


# ---------------------------------------------------------------------------
# Selection and aggregation


def _autc_by_model(curves_by_model: Mapping[str, TradeoffCurve]) -> dict[str, float]:
    """Aligned per-model curve areas for one (fold, inner, user, eval set).

    Only usable curves (>= 2 valid points) participate; curves are aligned
    to the union compatibility range first so areas are comparable.
    """
    usable = {name: c for name, c in curves_by_model.items() if c.usable}
    if not usable:
        return {}
    names = list(usable.keys())
    aligned = align_curves([usable[name].xy() for name in names])
    out: dict[str, float] = {}
    for name, pts in zip(names, aligned):
        area = autc(pts)
        if area.defined:
            out[name] = area.value
    return out


def select_best_model(
    val_curves: Sequence[TradeoffCurve],
    model_order: Sequence[str],
) -> tuple[str | None, dict[str, float | None]]:
    """Pick the model with the best mean validation curve area.

    `val_curves` are one (fold, user)'s validation curves across inner
    folds. Within each inner fold, curves are aligned across models before
    the area is taken; a model's score is the mean over inner folds where it
    had a usable curve. Ties prefer the baseline, then grid order. Returns
    (None, means) when no model has any usable curve.
    """
    by_inner: dict[int, dict[str, TradeoffCurve]] = {}
    for curve in val_curves:
        by_inner.setdefault(curve.inner_fold, {})[curve.model] = curve
    sums: dict[str, float] = {name: 0.0 for name in model_order}
    counts: dict[str, int] = {name: 0 for name in model_order}
    for inner in sorted(by_inner):
        for name, area in _autc_by_model(by_inner[inner]).items():
            sums[name] += area
            counts[name] += 1
    means: dict[str, float | None] = {
        name: (sums[name] / counts[name] if counts[name] else None) for name in model_order
    }
    defined = [name for name in model_order if means[name] is not None]
    if not defined:
        return None, means
    best_value = max(means[name] for name in defined)
    candidates = [name for name in defined if means[name] == best_value]
    best = BASELINE if BASELINE in candidates else candidates[0]
    return best, means


def aggregate_curves(
    curves: Sequence[TradeoffCurve], lambda_grid: Sequence[float]
) -> list[dict]:
    """Pointwise mean curve over several sweeps sharing one lambda grid.

    Per lambda: mean compatibility and mean performance over the curves that
    did not skip it; lambdas skipped everywhere are dropped. `partial` marks
    lambdas where only a subset of curves contributed.
    """
    out: list[dict] = []
    for lam in validate_lambda_grid(lambda_grid):
        comps: list[float] = []
        perfs: list[float] = []
        for curve in curves:
            for point in curve.points:
                if point.lam == lam:
                    comps.append(point.compatibility)
                    perfs.append(point.performance)
        if not comps:
            continue
        out.append(
            {
                "lambda": lam,
                "compatibility": sum(comps) / len(comps),
                "performance": sum(perfs) / len(perfs),
                "count": len(comps),
                "partial": len(comps) < len(curves),
            }
        )
    return out


def _mean_std(values: Sequence[float]) -> tuple[float | None, float | None]:
    """Mean and sample (n-1) standard deviation; std is None for < 2 values."""
    if not values:
        return None, None
    mean = sum(values) / len(values)
    if len(values) < 2:
        return mean, None
    var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
    return mean, math.sqrt(var)


# ---------------------------------------------------------------------------
# The run itself


def _evaluate_task(
    dataset: Dataset,
    plan,
    config: ExperimentConfig,
    included: Sequence[UserHistory],
    fold: int,
    inner: int,
) -> list[TradeoffCurve]:
    """All curves for one (fold, inner fold), in canonical (user, model, eval) order."""
    pool = np.asarray(plan.pool_indices(fold, inner), dtype=np.int64)
    pool_x = dataset.features[pool]
    pool_y = dataset.labels[pool]
    position = {int(idx): pos for pos, idx in enumerate(pool)}

    pretrain = np.asarray(plan.pretrain[fold][inner], dtype=np.int64)
    h1 = fit_tree(
        dataset.features[pretrain],
        dataset.labels[pretrain],
        np.ones(len(pretrain)),
        config.tree,
    )
    correct = correct_label_mask(h1, pool_x, pool_y)

    fold_split = plan.fold_splits[fold]
    inner_split = fold_split.inner[inner]
    grid = config.lambda_grid
    # Many (user, model, lambda) combinations assemble byte-identical weight
    # vectors: the baseline for every user, and any history-weighted model at
    # a lambda that zeroes its history components. Identical weights imply an
    # identical fit, so key the cache on the assembled bytes.
    fit_cache: dict[bytes, TreeModel | str] = {}
    curves: list[TradeoffCurve] = []
    for history in included:
        user = history.user_id
        hist_mask = np.zeros(len(pool), dtype=bool)
        for idx in inner_split.train[user]:
            hist_mask[position[idx]] = True
        masks = TrainMasks(history=hist_mask, correct=correct)

        eval_sets = {}
        for tag, indices in (("val", inner_split.val[user]), ("test", fold_split.test[user])):
            rows = np.asarray(indices, dtype=np.int64)
            x = dataset.features[rows]
            y = dataset.labels[rows]
            eval_sets[tag] = (x, y, predict_labels(h1, x))

        for name in config.model_order:
            weights = config.models[name]
            models: list[TreeModel | str] = []
            for lam in grid:
                wvec = assemble_sample_weights(masks, weights, lam)
                key = wvec.tobytes()
                got = fit_cache.get(key)
                if got is None:
                    if wvec.sum() > 0.0:
                        got = fit_tree(pool_x, pool_y, wvec, config.tree)
                    else:
                        got = REASON_DEGENERATE_WEIGHTS
                    fit_cache[key] = got
                models.append(got)
            for tag in ("val", "test"):
                x, y, h1_labels = eval_sets[tag]
                points, skipped = evaluate_sweep(models, grid, h1_labels, x, y, config.metric)
                curves.append(
                    TradeoffCurve(
                        model=name,
                        user_id=user,
                        eval_set=tag,
                        points=tuple(points),
                        skipped=tuple(skipped),
                        fold=fold,
                        inner_fold=inner,
                    )
                )
    return curves


def _run_task(args) -> list[TradeoffCurve]:
    return _evaluate_task(*args)


def run_experiment(config: ExperimentConfig, dataset: Dataset, jobs: int = 1) -> RunResult:
    """Execute the full protocol on one dataset.

    Deterministic given (dataset, config): every shuffle and subsample uses
    a seed derived from the root seed and its coordinates, and results are
    merged in canonical order, so the worker count never changes output.
    """
    config.validate()
    if not isinstance(jobs, int) or jobs < 1:
        raise ConfigError("jobs must be an integer >= 1")
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    histories, excluded_short = group_histories(dataset, config.min_history_len)
    if not histories:
        raise DataError("no eligible users")
    plan = plan_folds(
        histories, config.folds, config.inner_folds,
        config.test_frac, config.val_frac, config.seed,
    )
    plan = sample_pretrain_subset(plan, config.pretrain_fraction, config.seed)
    excluded = list(excluded_short) + list(plan.excluded)
    eligible_ids = set(plan.user_order)
    included = tuple(h for h in histories if h.user_id in eligible_ids)
    run_id = sha256_hex(
        f"{dataset.fingerprint()}|{json.dumps(config.to_dict(), sort_keys=True)}".encode()
    )[:12]
    timings["plan"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    tasks = [(fold, inner) for fold in range(config.folds) for inner in range(config.inner_folds)]
    payloads = [(dataset, plan, config, included, fold, inner) for fold, inner in tasks]
    if jobs == 1 or len(tasks) == 1:
        chunks = [_run_task(p) for p in payloads]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_task, payloads, chunksize=1))
    curves: list[TradeoffCurve] = [curve for chunk in chunks for curve in chunk]
    timings["sweep"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    by_key: dict[tuple, TradeoffCurve] = {
        (c.fold, c.inner_fold, c.user_id, c.model, c.eval_set): c for c in curves
    }

    selections: list[Selection] = []
    selection_notes: list[dict] = []
    selected: dict[tuple[int, str], str | None] = {}
    for fold in range(config.folds):
        for history in included:
            user = history.user_id
            val_curves = [
                by_key[(fold, inner, user, name, "val")]
                for inner in range(config.inner_folds)
                for name in config.model_order
            ]
            best, means = select_best_model(val_curves, config.model_order)
            selections.append(
                Selection(fold=fold, user_id=user, model=best, mean_val_autc=means)
            )
            selected[(fold, user)] = best
            if best is None:
                selection_notes.append(
                    {"fold": fold, "user_id": user, "reason": REASON_SELECTION_UNDEFINED}
                )

    # Per-fold test curve areas: align across models inside each inner fold,
    # then average over inner folds.
    test_autc: dict[str, dict[str, dict[str, float | None]]] = {}
    for history in included:
        user = history.user_id
        per_model: dict[str, dict[str, float | None]] = {
            name: {"autc_by_fold": {}} for name in config.model_order
        }
        for fold in range(config.folds):
            sums = {name: 0.0 for name in config.model_order}
            counts = {name: 0 for name in config.model_order}
            for inner in range(config.inner_folds):
                by_model = {
                    name: by_key[(fold, inner, user, name, "test")]
                    for name in config.model_order
                }
                for name, area in _autc_by_model(by_model).items():
                    sums[name] += area
                    counts[name] += 1
            for name in config.model_order:
                value = sums[name] / counts[name] if counts[name] else None
                per_model[name]["autc_by_fold"][str(fold)] = value
        test_autc[user] = per_model

    included_rows = np.asarray(
        sorted(i for h in included for i in h.indices), dtype=np.int64
    )
    pool_features = dataset.features[included_rows]
    user_stats: dict[str, dict] = {}
    for history in included:
        rows = np.asarray(history.indices, dtype=np.int64)
        user_stats[history.user_id] = {
            "len": len(history),
            "distance": history_distance(dataset.features[rows], pool_features),
        }

    aggregates: dict[str, dict] = {}
    for history in included:
        user = history.user_id
        aggregates[user] = {}
        for name in config.model_order:
            test_curves = [
                by_key[(fold, inner, user, name, "test")]
                for fold in range(config.folds)
                for inner in range(config.inner_folds)
            ]
            by_fold = test_autc[user][name]["autc_by_fold"]
            defined = [v for v in by_fold.values() if v is not None]
            mean, std = _mean_std(defined)
            aggregates[user][name] = {
                "curve": aggregate_curves(test_curves, config.lambda_grid),
                "autc_by_fold": by_fold,
                "autc_mean": mean,
                "autc_std": std,
                "autc_folds": len(defined),
            }

    overall_curves: dict[str, list[dict]] = {}
    for name in config.model_order:
        per_lambda: dict[float, list[tuple[float, float]]] = {}
        for user in aggregates:
            for point in aggregates[user][name]["curve"]:
                per_lambda.setdefault(point["lambda"], []).append(
                    (point["compatibility"], point["performance"])
                )
        series = []
        for lam in config.lambda_grid:
            if lam not in per_lambda:
                continue
            pairs = per_lambda[lam]
            series.append(
                {
                    "lambda": lam,
                    "compatibility": sum(p[0] for p in pairs) / len(pairs),
                    "performance": sum(p[1] for p in pairs) / len(pairs),
                    "users": len(pairs),
                }
            )
        overall_curves[name] = series

    skipped_points = [
        {
            "fold": c.fold,
            "inner_fold": c.inner_fold,
            "user_id": c.user_id,
            "model": c.model,
            "eval_set": c.eval_set,
            "lambda": s.lam,
            "reason": s.reason,
        }
        for c in curves
        for s in c.skipped
    ]
    skip_counts: dict[str, int] = {}
    for record in skipped_points:
        skip_counts[record["reason"]] = skip_counts.get(record["reason"], 0) + 1

    manifest = {
        "run_id": run_id,
        "seed": config.seed,
        "config": config.to_dict(),
        "dataset_fingerprint": dataset.fingerprint(),
        "n_instances": len(dataset),
        "included_users": [h.user_id for h in included],
        "excluded_users": [e.to_dict() for e in excluded],
        "skipped_points": skipped_points,
        "skip_counts": skip_counts,
        "selection_notes": selection_notes,
    }
    timings["aggregate"] = time.perf_counter() - t0

    return RunResult(
        config=config,
        run_id=run_id,
        curves=tuple(curves),
        selections=tuple(selections),
        aggregates=aggregates,
        overall_curves=overall_curves,
        user_stats=user_stats,
        manifest=manifest,
        timings=timings,
    )


# ---------------------------------------------------------------------------
# Improvement and correlation tables


@dataclass(frozen=True)
class ImprovementCell:
    mean: float | None
    std: float | None
    folds: int


@dataclass(frozen=True)
class ImprovementRow:
    """One user's percent-improvement summary across folds."""

    user_id: str
    length: int
    distance: float
    cells: dict[str, ImprovementCell]


@dataclass(frozen=True)
class CorrelationRow:
    """Correlation of a per-user factor with each model's improvement column."""

    label: str
    values: dict[str, float | None]


def improvement_columns(model_order: Sequence[str]) -> list[str]:
    return [name for name in model_order if name != BASELINE] + ["best_u"]


def improvement_table(result: RunResult) -> tuple[list[ImprovementRow], list[CorrelationRow]]:
    """Percent curve-area improvement over the baseline, per user and model.

    Per fold, a model's improvement is 100*(area_model - area_baseline) /
    area_baseline; folds where the baseline area is undefined or <= 0 are
    excluded and only surface in the `folds` counts. The best_u column takes
    each fold's selected model (0 when the selection is the baseline). Two
    correlation rows relate history length and history distance to each
    column across users.
    """
    config = result.config
    columns = improvement_columns(config.model_order)
    selected = {(s.fold, s.user_id): s.model for s in result.selections}

    rows: list[ImprovementRow] = []
    for user, stats in result.user_stats.items():
        by_fold = {
            name: result.aggregates[user][name]["autc_by_fold"]
            for name in config.model_order
        }
        cells: dict[str, ImprovementCell] = {}
        for column in columns:
            pcts: list[float] = []
            for fold in range(config.folds):
                base = by_fold[BASELINE][str(fold)]
                if base is None or base <= 0.0:
                    continue
                if column == "best_u":
                    choice = selected.get((fold, user))
                    if choice is None:
                        continue
                    if choice == BASELINE:
                        pcts.append(0.0)
                        continue
                    value = by_fold[choice][str(fold)]
                else:
                    value = by_fold[column][str(fold)]
                if value is None:
                    continue
                pcts.append(100.0 * (value - base) / base)
            mean, std = _mean_std(pcts)
            cells[column] = ImprovementCell(mean=mean, std=std, folds=len(pcts))
        rows.append(
            ImprovementRow(
                user_id=user,
                length=stats["len"],
                distance=stats["distance"],
                cells=cells,
            )
        )

    correlations: list[CorrelationRow] = []
    for label, getter in (
        ("len correlation", lambda r: float(r.length)),
        ("dist correlation", lambda r: r.distance),
    ):
        values: dict[str, float | None] = {}
        for column in columns:
            xs = [getter(r) for r in rows if r.cells[column].mean is not None]
            ys = [r.cells[column].mean for r in rows if r.cells[column].mean is not None]
            if len(xs) < 2:
                values[column] = None
                continue
            corr = pearson(xs, ys)
            values[column] = corr.value if corr.defined else None
        correlations.append(CorrelationRow(label=label, values=values))
    return rows, correlations


# ---------------------------------------------------------------------------
# Delimited serializations (written to disk by the CLI)

CURVES_COLUMNS = (
    "run_id", "fold", "inner_fold", "user_id", "model", "eval_set",
    "lambda", "compatibility", "performance", "skipped_flag",
)


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def curves_csv_text(result: RunResult) -> str:
    rows: list[list[str]] = []
    for curve in result.curves:
        prefix = [
            result.run_id, str(curve.fold), str(curve.inner_fold),
            curve.user_id, curve.model, curve.eval_set,
        ]
        merged: list[tuple[float, TradeoffPoint | SkippedPoint]] = [
            (p.lam, p) for p in curve.points
        ] + [(s.lam, s) for s in curve.skipped]
        for lam, item in sorted(merged, key=lambda pair: pair[0]):
            if isinstance(item, TradeoffPoint):
                rows.append(prefix + [
                    format_float(lam), format_float(item.compatibility),
                    format_float(item.performance), "0",
                ])
            else:
                rows.append(prefix + [format_float(lam), "", "", "1"])
    return _csv_text(CURVES_COLUMNS, rows)


def improvements_csv_text(
    rows: Sequence[ImprovementRow], model_order: Sequence[str]
) -> str:
    columns = improvement_columns(model_order)
    header = ["user", "len", "distance"]
    for column in columns:
        header += [column, f"{column}_std"]
    body: list[list[str]] = []
    for row in rows:
        cells = [row.user_id, str(row.length), format_float(row.distance)]
        for column in columns:
            cell = row.cells[column]
            cells.append("" if cell.mean is None else format_float(cell.mean))
            cells.append("" if cell.std is None else format_float(cell.std))
        body.append(cells)
    return _csv_text(header, body)


def correlations_csv_text(
    correlations: Sequence[CorrelationRow], model_order: Sequence[str]
) -> str:
    columns = improvement_columns(model_order)
    body: list[list[str]] = []
    for row in correlations:
        cells = [row.label]
        for column in columns:
            value = row.values[column]
            cells.append("" if value is None else format_float(value))
        body.append(cells)
    return _csv_text(["row", *columns], body)
