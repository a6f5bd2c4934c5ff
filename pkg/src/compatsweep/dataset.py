"""Tabular ingestion, per-user histories, and deterministic nested splits.

A dataset is a flat table of (user, features, binary label) rows. Rows are
grouped into per-user histories, and `plan_folds` assigns every history to
test / validation / train parts for each (fold, inner fold) pair. All
randomness flows through seeds derived from a single root seed, so plans are
reproducible byte for byte and independent of evaluation order.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import random
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, IngestionError, LabelError, SchemaError
from .util import ceil_fraction, derive_seed, format_float, sha256_hex

# Machine-readable exclusion reason codes (surface in the run manifest).
REASON_HISTORY_BELOW_MIN = "history_below_min"
REASON_HISTORY_TOO_SMALL_FOR_SPLITS = "history_too_small_for_splits"


@dataclass(frozen=True)
class Instance:
    """One labeled row: position in the dataset, owner, features, binary label."""

    index: int
    user_id: str
    features: tuple[float, ...]
    label: int


@dataclass(frozen=True)
class DatasetSchema:
    """Column roles for ingestion.

    `feature_columns = None` means "every header column that is neither the
    user nor the label column", in header order. Categorical columns must be
    a subset of the feature columns; they are one-hot expanded on load.
    """

    user_column: str = "user"
    label_column: str = "label"
    feature_columns: tuple[str, ...] | None = None
    categorical_columns: tuple[str, ...] = ()

    @staticmethod
    def from_dict(raw: dict) -> "DatasetSchema":
        allowed = {"user_column", "label_column", "feature_columns", "categorical_columns"}
        unknown = set(raw) - allowed
        if unknown:
            raise ConfigError(f"unknown schema keys: {sorted(unknown)}")
        kwargs: dict = {}
        for key in ("user_column", "label_column"):
            if key in raw:
                if not isinstance(raw[key], str) or not raw[key]:
                    raise ConfigError(f"schema {key} must be a non-empty string")
                kwargs[key] = raw[key]
        if raw.get("feature_columns") is not None:
            kwargs["feature_columns"] = tuple(str(c) for c in raw["feature_columns"])
        if raw.get("categorical_columns") is not None:
            kwargs["categorical_columns"] = tuple(str(c) for c in raw["categorical_columns"])
        return DatasetSchema(**kwargs)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable feature matrix plus labels and row ownership.

    `features` is an n x d float matrix (categoricals already one-hot
    expanded), `labels` an n-vector of {0,1}, `user_ids[i]` the owner of
    row i. Arrays are marked read-only so concurrent tasks can share them.
    """

    features: np.ndarray
    labels: np.ndarray
    user_ids: tuple[str, ...]
    feature_names: tuple[str, ...]
    label_name: str = "label"
    user_column: str = "user"

    def __post_init__(self):
        self.features.flags.writeable = False
        self.labels.flags.writeable = False

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def arity(self) -> int:
        return self.features.shape[1]

    def instance(self, index: int) -> Instance:
        return Instance(
            index=index,
            user_id=self.user_ids[index],
            features=tuple(float(v) for v in self.features[index]),
            label=int(self.labels[index]),
        )

    def fingerprint(self) -> str:
        """Content hash over names, owners, labels, and feature bytes."""
        parts = [
            ",".join(self.feature_names).encode(),
            self.label_name.encode(),
            self.user_column.encode(),
            "\x00".join(self.user_ids).encode(),
            np.ascontiguousarray(self.labels, dtype=np.int64).tobytes(),
            np.ascontiguousarray(self.features, dtype=np.float64).tobytes(),
        ]
        return sha256_hex(b"|".join(parts))

    def to_csv_text(self) -> str:
        """Round-trippable CSV (floats use shortest repr)."""
        out = [",".join([self.user_column, *self.feature_names, self.label_name])]
        for i in range(len(self)):
            row = [self.user_ids[i]]
            row += [format_float(v) for v in self.features[i]]
            row.append(str(int(self.labels[i])))
            out.append(",".join(row))
        return "\n".join(out) + "\n"

    @staticmethod
    def from_arrays(
        features,
        labels,
        user_ids,
        feature_names,
        label_name: str = "label",
        user_column: str = "user",
    ) -> "Dataset":
        feats = np.ascontiguousarray(features, dtype=np.float64)
        labs = np.ascontiguousarray(labels, dtype=np.int64)
        if feats.ndim != 2 or labs.shape != (feats.shape[0],):
            raise DataError("features must be n x d with matching n labels")
        if len(user_ids) != feats.shape[0]:
            raise DataError("user_ids length must match row count")
        if feats.shape[0] == 0:
            raise DataError("empty dataset")
        if not np.all(np.isfinite(feats)):
            raise DataError("non-finite feature values")
        if not np.all((labs == 0) | (labs == 1)):
            raise LabelError("labels must be 0 or 1")
        if len(feature_names) != feats.shape[1]:
            raise DataError("feature_names length must match feature arity")
        return Dataset(
            features=feats,
            labels=labs,
            user_ids=tuple(str(u) for u in user_ids),
            feature_names=tuple(str(n) for n in feature_names),
            label_name=label_name,
            user_column=user_column,
        )


@dataclass(frozen=True)
class UserHistory:
    """All instance indices owned by one user, in dataset order."""

    user_id: str
    indices: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class Exclusion:
    user_id: str
    reason: str
    detail: str = ""

    def to_dict(self) -> dict:
        return {"user_id": self.user_id, "reason": self.reason, "detail": self.detail}


def load_dataset(path: str, schema: DatasetSchema | None = None) -> Dataset:
    """Parse a CSV file into a Dataset.

    Categorical feature columns are expanded into one indicator column per
    observed category (categories sorted lexicographically, named
    "column=value"). Missing or unparsable cells fail loudly with row and
    column context; imputation is out of scope.
    """
    schema = schema or DatasetSchema()
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        rows = list(reader)
    if not rows:
        raise DataError(f"empty file: {path}")
    header, data = rows[0], rows[1:]
    if not data:
        raise DataError(f"no data rows in {path}")

    seen: dict[str, int] = {}
    for pos, name in enumerate(header):
        if name in seen:
            raise SchemaError(f"duplicate column {name!r} in header")
        seen[name] = pos

    def col(name: str) -> int:
        if name not in seen:
            raise SchemaError(f"missing column {name!r}")
        return seen[name]

    user_pos = col(schema.user_column)
    label_pos = col(schema.label_column)
    if schema.feature_columns is None:
        feature_columns = tuple(
            name for name in header if name not in (schema.user_column, schema.label_column)
        )
    else:
        feature_columns = schema.feature_columns
    if not feature_columns:
        raise SchemaError("no feature columns")
    feature_pos = [col(name) for name in feature_columns]
    for name in schema.categorical_columns:
        if name not in feature_columns:
            raise SchemaError(f"categorical column {name!r} is not a feature column")
    categorical = set(schema.categorical_columns)

    # First pass: collect categories so indicator columns are stable.
    categories: dict[str, set[str]] = {name: set() for name in categorical}
    for row_number, row in enumerate(data, start=1):
        if len(row) != len(header):
            raise IngestionError(
                f"expected {len(header)} fields, found {len(row)}", row=row_number
            )
        for name, pos in zip(feature_columns, feature_pos):
            if name in categorical:
                value = row[pos].strip()
                if not value:
                    raise IngestionError("empty cell", row=row_number, column=name)
                categories[name].add(value)

    expanded_names: list[str] = []
    expansion: list[tuple[str, int, tuple[str, ...] | None]] = []
    for name, pos in zip(feature_columns, feature_pos):
        if name in categorical:
            values = tuple(sorted(categories[name]))
            expansion.append((name, pos, values))
            expanded_names.extend(f"{name}={v}" for v in values)
        else:
            expansion.append((name, pos, None))
            expanded_names.append(name)

    n, d = len(data), len(expanded_names)
    features = np.zeros((n, d), dtype=np.float64)
    labels = np.zeros(n, dtype=np.int64)
    user_ids: list[str] = []
    for i, row in enumerate(data):
        row_number = i + 1
        user = row[user_pos].strip()
        if not user:
            raise IngestionError("empty cell", row=row_number, column=schema.user_column)
        user_ids.append(user)

        raw_label = row[label_pos].strip()
        try:
            label_value = float(raw_label)
        except ValueError:
            raise LabelError(
                f"label {raw_label!r} is not a number",
                row=row_number,
                column=schema.label_column,
            ) from None
        if label_value not in (0.0, 1.0):
            raise LabelError(
                f"label {raw_label!r} is not in {{0,1}}",
                row=row_number,
                column=schema.label_column,
            )
        labels[i] = int(label_value)

        j = 0
        for name, pos, values in expansion:
            cell = row[pos].strip()
            if not cell:
                raise IngestionError("empty cell", row=row_number, column=name)
            if values is None:
                try:
                    features[i, j] = float(cell)
                except ValueError:
                    raise IngestionError(
                        f"cannot parse {cell!r} as a number", row=row_number, column=name
                    ) from None
                j += 1
            else:
                features[i, j + values.index(cell)] = 1.0
                j += len(values)

    return Dataset.from_arrays(
        features,
        labels,
        user_ids,
        expanded_names,
        label_name=schema.label_column,
        user_column=schema.user_column,
    )


def group_histories(
    dataset: Dataset, min_history_len: int = 1
) -> tuple[tuple[UserHistory, ...], tuple[Exclusion, ...]]:
    """Group rows by user (first-appearance order), excluding short histories."""
    if len(dataset) == 0:
        raise DataError("empty dataset")
    if min_history_len < 1:
        raise ConfigError("min_history_len must be >= 1")
    by_user: dict[str, list[int]] = {}
    for i, user in enumerate(dataset.user_ids):
        by_user.setdefault(user, []).append(i)
    histories: list[UserHistory] = []
    excluded: list[Exclusion] = []
    for user, indices in by_user.items():
        if len(indices) < min_history_len:
            excluded.append(
                Exclusion(
                    user_id=user,
                    reason=REASON_HISTORY_BELOW_MIN,
                    detail=f"history length {len(indices)} < {min_history_len}",
                )
            )
        else:
            histories.append(UserHistory(user_id=user, indices=tuple(indices)))
    return tuple(histories), tuple(excluded)


@dataclass(frozen=True)
class InnerSplit:
    """Per-user validation/train assignment for one inner fold."""

    val: dict[str, tuple[int, ...]]
    train: dict[str, tuple[int, ...]]


@dataclass(frozen=True)
class FoldSplit:
    test: dict[str, tuple[int, ...]]
    inner: tuple[InnerSplit, ...]


@dataclass(frozen=True)
class SplitPlan:
    """Full nested-split assignment. Immutable; shareable across workers.

    `pretrain` (filled by `sample_pretrain_subset`) holds, per (fold, inner
    fold), the indices the small pre-update model is trained on; it is always
    a subset of that inner fold's training pool.
    """

    seed: int
    folds: int
    inner_folds: int
    test_frac: float
    val_frac: float
    fold_splits: tuple[FoldSplit, ...]
    excluded: tuple[Exclusion, ...]
    user_order: tuple[str, ...]
    pretrain: tuple[tuple[tuple[int, ...], ...], ...] | None = None
    pretrain_fraction: float | None = None
    pretrain_seed: int | None = None

    def pool_indices(self, fold: int, inner: int) -> tuple[int, ...]:
        """Union of all users' train parts for one (fold, inner fold), sorted."""
        train = self.fold_splits[fold].inner[inner].train
        merged: list[int] = []
        for user in self.user_order:
            merged.extend(train[user])
        return tuple(sorted(merged))

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "folds": self.folds,
            "inner_folds": self.inner_folds,
            "test_frac": self.test_frac,
            "val_frac": self.val_frac,
            "user_order": list(self.user_order),
            "excluded": [e.to_dict() for e in self.excluded],
            "fold_splits": [
                {
                    "test": {u: list(v) for u, v in fs.test.items()},
                    "inner": [
                        {
                            "val": {u: list(v) for u, v in isplit.val.items()},
                            "train": {u: list(v) for u, v in isplit.train.items()},
                        }
                        for isplit in fs.inner
                    ],
                }
                for fs in self.fold_splits
            ],
            "pretrain": None
            if self.pretrain is None
            else [[list(p) for p in per_fold] for per_fold in self.pretrain],
            "pretrain_fraction": self.pretrain_fraction,
            "pretrain_seed": self.pretrain_seed,
        }

    def to_json_str(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))


def split_sizes(length: int, test_frac: float, val_frac: float) -> tuple[int, int, int]:
    """(test, val, train) sizes for one history; train gets the remainder."""
    n_test = ceil_fraction(test_frac, length)
    n_val = max(1, ceil_fraction(val_frac, length))
    return n_test, n_val, length - n_test - n_val


def plan_folds(
    histories: tuple[UserHistory, ...],
    k: int,
    n: int,
    test_frac: float,
    val_frac: float,
    seed: int,
) -> SplitPlan:
    """Assign every eligible history to test/val/train for each (fold, inner).

    Each fold reshuffles every history with a seed derived from
    (seed, "test", fold, user); the held-out test part is the head of that
    shuffle. Within a fold, each inner fold reshuffles the remainder with
    (seed, "inner", fold, inner, user) and splits it into validation and
    train. Users whose history cannot give all three parts at least one
    instance are excluded and reported.
    """
    if not isinstance(k, int) or k < 1:
        raise ConfigError("fold count must be an integer >= 1")
    if not isinstance(n, int) or n < 1:
        raise ConfigError("inner fold count must be an integer >= 1")
    if not (0.0 < test_frac and 0.0 < val_frac and test_frac + val_frac < 1.0):
        raise ConfigError(
            "need 0 < test_frac, 0 < val_frac, test_frac + val_frac < 1 "
            f"(got {test_frac}, {val_frac})"
        )

    eligible: list[UserHistory] = []
    excluded: list[Exclusion] = []
    for history in histories:
        n_test, n_val, n_train = split_sizes(len(history), test_frac, val_frac)
        if n_train < 1:
            excluded.append(
                Exclusion(
                    user_id=history.user_id,
                    reason=REASON_HISTORY_TOO_SMALL_FOR_SPLITS,
                    detail=(
                        f"history length {len(history)} leaves no train part "
                        f"(test {n_test}, val {n_val})"
                    ),
                )
            )
        else:
            eligible.append(history)
    if not eligible:
        raise DataError("no eligible users")

    fold_splits: list[FoldSplit] = []
    for fold in range(k):
        test: dict[str, tuple[int, ...]] = {}
        remainder: dict[str, list[int]] = {}
        for history in eligible:
            n_test, n_val, _ = split_sizes(len(history), test_frac, val_frac)
            order = list(history.indices)
            random.Random(derive_seed(seed, "test", fold, history.user_id)).shuffle(order)
            test[history.user_id] = tuple(sorted(order[:n_test]))
            remainder[history.user_id] = sorted(order[n_test:])
        inner_splits: list[InnerSplit] = []
        for inner in range(n):
            val: dict[str, tuple[int, ...]] = {}
            train: dict[str, tuple[int, ...]] = {}
            for history in eligible:
                _, n_val, _ = split_sizes(len(history), test_frac, val_frac)
                order = list(remainder[history.user_id])
                random.Random(
                    derive_seed(seed, "inner", fold, inner, history.user_id)
                ).shuffle(order)
                val[history.user_id] = tuple(sorted(order[:n_val]))
                train[history.user_id] = tuple(sorted(order[n_val:]))
            inner_splits.append(InnerSplit(val=val, train=train))
        fold_splits.append(FoldSplit(test=test, inner=tuple(inner_splits)))

    return SplitPlan(
        seed=seed,
        folds=k,
        inner_folds=n,
        test_frac=test_frac,
        val_frac=val_frac,
        fold_splits=tuple(fold_splits),
        excluded=tuple(excluded),
        user_order=tuple(h.user_id for h in eligible),
    )


def sample_pretrain_subset(plan: SplitPlan, fraction: float, seed: int) -> SplitPlan:
    """Pick the pre-update training subset for every (fold, inner fold).

    Returns a new plan with `pretrain` filled: a uniform sample of
    ceil(fraction * pool size) indices from each inner fold's training pool,
    drawn with a seed derived from (seed, "pretrain", fold, inner).
    """
    if not (0.0 < fraction <= 1.0):
        raise ConfigError(f"pretrain fraction must be in (0, 1], got {fraction}")
    pretrain: list[tuple[tuple[int, ...], ...]] = []
    for fold in range(plan.folds):
        per_fold: list[tuple[int, ...]] = []
        for inner in range(plan.inner_folds):
            pool = plan.pool_indices(fold, inner)
            if not pool:
                raise DataError(f"empty training pool in fold {fold}, inner fold {inner}")
            size = ceil_fraction(fraction, len(pool))
            rng = random.Random(derive_seed(seed, "pretrain", fold, inner))
            per_fold.append(tuple(sorted(rng.sample(pool, size))))
        pretrain.append(tuple(per_fold))
    return dataclasses.replace(
        plan,
        pretrain=tuple(pretrain),
        pretrain_fraction=fraction,
        pretrain_seed=seed,
    )
