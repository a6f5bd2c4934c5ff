"""Compatibility scoring and weighted retraining of the updated model.

The updated model h2 is trained on the shared training pool with
per-instance weights built from four components: all pool instances, pool
instances the base model h1 labels correctly, the target user's pool
instances, and the intersection of the last two. The mixing coefficient
lambda trades plain training weight against protection of h1's correct
predictions; sweeping it traces a compatibility-vs-performance curve.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CompatSweepError, ConfigError
from .metrics import MetricValue, accuracy, roc_auc
from .tree import TreeConfig, TreeModel, fit_tree, predict_labels, predict_scores

# Point-level skip reason codes.
REASON_DEGENERATE_WEIGHTS = "degenerate_weights"
REASON_UNDEFINED_COMPATIBILITY = "undefined_compatibility"
REASON_DEGENERATE_LABELS = "degenerate_labels"


class UndefinedCompatibilityError(CompatSweepError):
    """The base model is correct nowhere on the evaluation set (Eq. denominator 0)."""


class DegenerateWeightsError(CompatSweepError):
    """Assembled sample weights are all zero; nothing to train on."""


@dataclass(frozen=True)
class WeightVector:
    """The four component weights defining one personalization model.

    Order matches the config tuples: (all pool rows, pool rows the base
    model got right, the user's rows, the user's rows the base model got
    right). At least one of the first/third and one of the second/fourth
    must be positive, otherwise varying lambda cannot trace a curve.
    """

    w_train: float
    w_train_correct: float
    w_history: float
    w_history_correct: float

    def __post_init__(self):
        values = self.as_tuple()
        if any(not np.isfinite(v) or v < 0.0 for v in values):
            raise ConfigError(f"weight components must be finite and >= 0, got {values}")
        if self.w_train == 0.0 and self.w_history == 0.0:
            raise ConfigError(
                "need w_train > 0 or w_history > 0, otherwise the lambda=0 end is empty"
            )
        if self.w_train_correct == 0.0 and self.w_history_correct == 0.0:
            raise ConfigError(
                "need w_train_correct > 0 or w_history_correct > 0, "
                "otherwise the lambda=1 end is empty"
            )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.w_train, self.w_train_correct, self.w_history, self.w_history_correct)

    @property
    def user_independent(self) -> bool:
        """True when weights ignore the user entirely (history components 0)."""
        return self.w_history == 0.0 and self.w_history_correct == 0.0

    @staticmethod
    def from_sequence(values: Sequence[float]) -> "WeightVector":
        vals = tuple(float(v) for v in values)
        if len(vals) != 4:
            raise ConfigError(f"weight vector needs exactly 4 components, got {len(vals)}")
        return WeightVector(*vals)


@dataclass(frozen=True, eq=False)
class TrainMasks:
    """Boolean masks over the training pool for one target user.

    `history` marks the rows owned by the user; `correct` marks the rows the
    base model labels correctly. Their intersections with the pool and with
    each other give the four weight components' supports.
    """

    history: np.ndarray
    correct: np.ndarray

    def __post_init__(self):
        if self.history.shape != self.correct.shape or self.history.ndim != 1:
            raise ValueError("masks must be equal-length vectors")
        if self.history.dtype != np.bool_ or self.correct.dtype != np.bool_:
            raise ValueError("masks must be boolean")
        self.history.flags.writeable = False
        self.correct.flags.writeable = False

    @property
    def size(self) -> int:
        return len(self.history)


@dataclass(frozen=True)
class TradeoffPoint:
    lam: float
    compatibility: float
    performance: float

    def __post_init__(self):
        for v in (self.lam, self.compatibility, self.performance):
            if not np.isfinite(v):
                raise ValueError("trade-off point fields must be finite")


@dataclass(frozen=True)
class SkippedPoint:
    lam: float
    reason: str


@dataclass(frozen=True)
class TradeoffCurve:
    """Per-(user, model, eval set) sweep result; lambdas strictly increase."""

    model: str
    user_id: str
    eval_set: str
    points: tuple[TradeoffPoint, ...]
    skipped: tuple[SkippedPoint, ...] = ()
    fold: int = 0
    inner_fold: int = 0

    def __post_init__(self):
        lams = [p.lam for p in self.points]
        if any(b <= a for a, b in zip(lams, lams[1:])):
            raise ValueError("lambda values must be strictly increasing")

    @property
    def usable(self) -> bool:
        """A curve needs >= 2 valid points to have an area."""
        return len(self.points) >= 2

    def xy(self) -> list[tuple[float, float]]:
        return [(p.compatibility, p.performance) for p in self.points]


def correct_label_mask(h1: TreeModel, features, labels) -> np.ndarray:
    """Rows where the base model's hard label equals the true label.

    These are exactly the rows an update can break; weighting them is how
    dissonance is realized with a sample-weight-driven learner.
    """
    y = np.asarray(labels)
    return predict_labels(h1, features) == y


def compute_compatibility(h1_labels, h2_labels, true_labels) -> float:
    """Fraction of rows the base model got right that the update also gets right."""
    h1 = np.asarray(h1_labels)
    h2 = np.asarray(h2_labels)
    y = np.asarray(true_labels)
    if not (h1.shape == h2.shape == y.shape) or h1.ndim != 1:
        raise ValueError("label vectors must have identical 1-D shapes")
    if len(y) == 0:
        raise ValueError("empty input")
    base_correct = h1 == y
    denominator = int(np.count_nonzero(base_correct))
    if denominator == 0:
        raise UndefinedCompatibilityError("base model correct nowhere on this set")
    both_correct = int(np.count_nonzero(base_correct & (h2 == y)))
    return both_correct / denominator


def assemble_sample_weights(masks: TrainMasks, w: WeightVector, lam: float) -> np.ndarray:
    """Per-instance training weights over the pool for one (model, lambda).

    weight(x) = (1-lam) * (w_train + w_history * 1[x in history])
              + lam * (w_train_correct * 1[x correct]
                       + w_history_correct * 1[x in history and correct])

    The arithmetic keeps degenerate components exact: with the baseline
    vector (1,1,0,0) the result equals (1-lam) + lam*1[correct] bitwise.
    """
    if not (0.0 <= lam <= 1.0):
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    hist = masks.history.astype(np.float64)
    corr = masks.correct.astype(np.float64)
    hist_corr = (masks.history & masks.correct).astype(np.float64)
    plain = w.w_train + w.w_history * hist
    protect = w.w_train_correct * corr + w.w_history_correct * hist_corr
    return (1.0 - lam) * plain + lam * protect


def train_update(
    pool_features,
    pool_labels,
    masks: TrainMasks,
    w: WeightVector,
    lam: float,
    config: TreeConfig,
) -> TreeModel:
    """Fit the updated model h2 on the weighted pool.

    Raises DegenerateWeightsError when the assembled weights vanish
    everywhere (for example, a pure-history model whose user history the
    base model got entirely wrong, at lambda = 1).
    """
    weights = assemble_sample_weights(masks, w, lam)
    if not weights.sum() > 0.0:
        raise DegenerateWeightsError(
            f"all sample weights are zero at lambda={lam} for weights {w.as_tuple()}"
        )
    return fit_tree(pool_features, pool_labels, weights, config)


def fit_sweep_models(
    pool_features,
    pool_labels,
    masks: TrainMasks,
    w: WeightVector,
    lambda_grid: Sequence[float],
    config: TreeConfig,
) -> list[TreeModel | str]:
    """One fitted h2 per lambda, or a skip reason string where training fails."""
    grid = validate_lambda_grid(lambda_grid)
    out: list[TreeModel | str] = []
    for lam in grid:
        try:
            out.append(train_update(pool_features, pool_labels, masks, w, lam, config))
        except DegenerateWeightsError:
            out.append(REASON_DEGENERATE_WEIGHTS)
    return out


def evaluate_sweep(
    models: Sequence[TreeModel | str],
    lambda_grid: Sequence[float],
    h1_eval_labels,
    eval_features,
    eval_labels,
    metric: str,
) -> tuple[list[TradeoffPoint], list[SkippedPoint]]:
    """Score each lambda's h2 on one evaluation set.

    Per point: compatibility against the base model's labels, then the
    configured performance metric. The first failing stage names the skip.
    """
    if metric not in ("auc", "accuracy"):
        raise ConfigError(f"unknown metric {metric!r}")
    h1_lab = np.asarray(h1_eval_labels)
    y = np.asarray(eval_labels)
    points: list[TradeoffPoint] = []
    skipped: list[SkippedPoint] = []
    for lam, model in zip(lambda_grid, models):
        if isinstance(model, str):
            skipped.append(SkippedPoint(lam=lam, reason=model))
            continue
        scores = predict_scores(model, eval_features)
        h2_lab = (scores >= model.config.label_threshold).astype(np.int64)
        try:
            comp = compute_compatibility(h1_lab, h2_lab, y)
        except UndefinedCompatibilityError:
            skipped.append(SkippedPoint(lam=lam, reason=REASON_UNDEFINED_COMPATIBILITY))
            continue
        if metric == "auc":
            perf: MetricValue | float = roc_auc(scores, y)
            if not perf.defined:
                skipped.append(SkippedPoint(lam=lam, reason=REASON_DEGENERATE_LABELS))
                continue
            perf_value = perf.value
        else:
            perf_value = accuracy(h2_lab, y)
        points.append(TradeoffPoint(lam=lam, compatibility=comp, performance=perf_value))
    return points, skipped


def sweep_lambda(
    pool_features,
    pool_labels,
    masks: TrainMasks,
    w: WeightVector,
    lambda_grid: Sequence[float],
    config: TreeConfig,
    h1: TreeModel,
    eval_features,
    eval_labels,
    metric: str = "auc",
    model_name: str = "",
    user_id: str = "",
    eval_set: str = "val",
    fold: int = 0,
    inner_fold: int = 0,
) -> TradeoffCurve:
    """Trace one trade-off curve: train h2 per lambda, evaluate each point."""
    grid = validate_lambda_grid(lambda_grid)
    models = fit_sweep_models(pool_features, pool_labels, masks, w, grid, config)
    h1_eval_labels = predict_labels(h1, eval_features)
    points, skipped = evaluate_sweep(
        models, grid, h1_eval_labels, eval_features, eval_labels, metric
    )
    return TradeoffCurve(
        model=model_name,
        user_id=user_id,
        eval_set=eval_set,
        points=tuple(points),
        skipped=tuple(skipped),
        fold=fold,
        inner_fold=inner_fold,
    )


def validate_lambda_grid(lambda_grid: Sequence[float]) -> tuple[float, ...]:
    grid = tuple(float(v) for v in lambda_grid)
    if not grid:
        raise ConfigError("lambda grid is empty")
    if any(not (0.0 <= v <= 1.0) for v in grid):
        raise ConfigError(f"lambda grid values must lie in [0, 1], got {grid}")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError(f"lambda grid must be strictly increasing, got {grid}")
    return grid
