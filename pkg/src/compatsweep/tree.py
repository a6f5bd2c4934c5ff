"""Regression tree over binary labels with per-instance sample weights.

Written from scratch because the whole point of the surrounding machinery is
to steer training through instance weights: the split criterion, stop rules,
and leaf values all have to honor weights exactly as documented, and the
serialized model has to be stable enough to diff in tests.

Rules, spelled out so oracles can be exact:
  * criterion: total weighted sum of squared errors of the two children;
  * candidate thresholds: midpoints between consecutive distinct sorted
    values of each feature, over positive-weight instances only;
  * a split is valid only if both children keep >= min_samples_leaf
    positive-weight instances;
  * ties: costs within 1e-9 of the minimum, scaled by the node's total
    weight, count as tied; the tie goes to the lowest feature index, then
    the lowest threshold (different features can induce the same partition,
    so exact float comparison would be summation-order- and scale-unstable);
  * routing: x[feature] <= threshold goes left;
  * leaf value: weighted mean label over positive-weight instances;
  * zero-weight instances never influence fitting; they are only routed at
    prediction time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

_LEAF = -1


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int | None = None  # None = unbounded
    min_samples_leaf: int = 1  # counted over positive-weight instances
    label_threshold: float = 0.5  # score >= threshold -> label 1

    def validate(self) -> None:
        if self.max_depth is not None and (
            not isinstance(self.max_depth, int) or self.max_depth < 1
        ):
            raise ValueError("max_depth must be a positive integer or None")
        if not isinstance(self.min_samples_leaf, int) or self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be a positive integer")
        if not (0.0 < self.label_threshold < 1.0):
            raise ValueError("label_threshold must be in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "label_threshold": self.label_threshold,
        }

    @staticmethod
    def from_dict(raw: dict) -> "TreeConfig":
        allowed = {"max_depth", "min_samples_leaf", "label_threshold"}
        unknown = set(raw) - allowed
        if unknown:
            raise ValueError(f"unknown tree config keys: {sorted(unknown)}")
        cfg = TreeConfig(**{k: raw[k] for k in allowed if k in raw})
        cfg.validate()
        return cfg


@dataclass(frozen=True, eq=False)
class TreeModel:
    """Fitted tree stored as parallel node arrays (node 0 is the root).

    `feature[i] == -1` marks a leaf; internal nodes carry (feature,
    threshold, left, right), leaves carry `value` in [0, 1].
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    config: TreeConfig
    feature_arity: int

    def __post_init__(self):
        for arr in (self.feature, self.threshold, self.left, self.right, self.value):
            arr.flags.writeable = False

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        depths = np.zeros(self.node_count, dtype=np.int64)
        for i in range(self.node_count):
            if self.feature[i] != _LEAF:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def to_json_dict(self) -> dict:
        """Nested-dict form for fixtures and debugging.

        Floats are rounded to 12 significant digits: enough to pin structure
        and values in tests, coarse enough to absorb last-ulp noise from
        rescaled weights. Not a stability-guaranteed interchange format.
        """

        def node(i: int) -> dict:
            if self.feature[i] == _LEAF:
                return {"kind": "leaf", "value": _round12(self.value[i])}
            return {
                "kind": "split",
                "feature": int(self.feature[i]),
                "threshold": _round12(self.threshold[i]),
                "left": node(int(self.left[i])),
                "right": node(int(self.right[i])),
            }

        return {
            "feature_arity": self.feature_arity,
            "config": self.config.to_dict(),
            "root": node(0),
        }

    def to_json_str(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json_dict(raw: dict) -> "TreeModel":
        feature: list[int] = []
        threshold: list[float] = []
        left: list[int] = []
        right: list[int] = []
        value: list[float] = []

        def build(node: dict) -> int:
            i = len(feature)
            if node["kind"] == "leaf":
                feature.append(_LEAF)
                threshold.append(np.nan)
                left.append(_LEAF)
                right.append(_LEAF)
                value.append(float(node["value"]))
                return i
            feature.append(int(node["feature"]))
            threshold.append(float(node["threshold"]))
            left.append(0)
            right.append(0)
            value.append(np.nan)
            left[i] = build(node["left"])
            right[i] = build(node["right"])
            return i

        build(raw["root"])
        return TreeModel(
            feature=np.asarray(feature, dtype=np.int64),
            threshold=np.asarray(threshold, dtype=np.float64),
            left=np.asarray(left, dtype=np.int64),
            right=np.asarray(right, dtype=np.int64),
            value=np.asarray(value, dtype=np.float64),
            config=TreeConfig.from_dict(raw["config"]),
            feature_arity=int(raw["feature_arity"]),
        )


def _round12(v: float) -> float:
    return float(f"{float(v):.12g}")


def _as_matrix(features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("features must be a 2-D matrix")
    return x


def _weighted_mean_label(labels: np.ndarray, weights: np.ndarray) -> float:
    # Clamp: dot/sum may disagree in the last ulp and push an all-ones leaf
    # to 1 + eps.
    total = float(weights.sum())
    return min(1.0, max(0.0, float(np.dot(weights, labels)) / total))


def best_split(
    features,
    labels,
    weights,
    indices,
    config: TreeConfig,
) -> tuple[int, float, float] | None:
    """Best (feature, midpoint threshold, children SSE) at one node, or None.

    `indices` selects the rows under consideration; zero-weight rows among
    them are ignored entirely. SSE of a child is computed from its weighted
    label sum and weight sum, which keeps pure children at exactly 0.0 under
    any positive rescaling of the weights. Near-tied costs (within 1e-9 of
    the minimum, scaled by total node weight) resolve to the lowest feature
    index and then the lowest threshold.
    """
    x = _as_matrix(features)
    y = np.asarray(labels, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    idx = np.asarray(indices, dtype=np.int64)
    wn = w[idx]
    if wn.size == 0:
        return None
    if wn.min() <= 0.0:
        keep = wn > 0.0
        idx = idx[keep]
        wn = wn[keep]
    m = len(idx)
    msl = config.min_samples_leaf
    if m < 2 or m < 2 * msl:
        return None

    xn = x[idx]
    yn = y[idx]
    d = xn.shape[1]

    order = np.argsort(xn, axis=0, kind="stable")
    xs = xn[order, np.arange(d)]

    # Prefix sums from the left, suffix sums from the right. Right-side
    # sums are accumulated independently (not total-minus-prefix) so a
    # child's weight sum is always a sum of positives, never a cancelling
    # subtraction.
    acc = np.empty((2, m, d))
    acc[0] = wn[order]
    acc[1] = (wn * yn)[order]
    prefix = acc.cumsum(axis=1)
    suffix = acc[:, ::-1].cumsum(axis=1)[:, ::-1]

    # Positions p with a min_samples_leaf-illegal child are sliced away up
    # front: legal p runs from msl-1 through m-msl-1.
    s = msl - 1
    e = m - msl
    lo = xs[s:e]
    hi = xs[s + 1 : e + 1]
    mid = (lo + hi) / 2.0
    # Valid boundary: distinct values, and the midpoint must route the upper
    # value right (guards against midpoint rounding up to hi for adjacent
    # floats).
    valid = (lo < hi) & (mid < hi)
    if not valid.any():
        return None

    w0_left = prefix[0, s:e]
    w1_left = prefix[1, s:e]
    w0_right = suffix[0, s + 1 : e + 1]
    w1_right = suffix[1, s + 1 : e + 1]
    mean_left = w1_left / w0_left
    mean_right = w1_right / w0_right
    # For binary labels sum(w*y^2) == sum(w*y), so child SSE reduces to
    # W1*(1 - 2*mean) + mean^2*W0; a pure child gives exactly 0.0. Written
    # with the bounded ratio mean rather than the algebraic W1 - W1^2/W0,
    # whose squared sums double the rounding error and destabilize
    # tie-breaking under weight rescaling.
    sse = (
        w1_left * (1.0 - 2.0 * mean_left)
        + mean_left * mean_left * w0_left
        + w1_right * (1.0 - 2.0 * mean_right)
        + mean_right * mean_right * w0_right
    )
    cost = np.where(valid, sse, np.inf)

    # Two different features can induce the exact same partition (a corner
    # row split off from both sides), so mathematically tied costs arrive
    # with last-ulp differences that depend on summation order and weight
    # scale. Group everything within a tolerance of the minimum and break
    # the tie structurally: lowest feature index, then lowest threshold.
    # The tolerance is anchored to the node's total weight so it rescales
    # with the costs themselves.
    tied = cost <= cost.min() + 1e-9 * prefix[0, m - 1, 0]
    # Scan feature-major so argmax's first-True rule lands on the lowest
    # feature index, then the lowest threshold.
    flat = int(np.argmax(tied.T))
    n_positions = cost.shape[0]
    feature_index = flat // n_positions
    position = flat % n_positions
    return feature_index, float(mid[position, feature_index]), float(cost[position, feature_index])


def fit_tree(features, labels, sample_weights, config: TreeConfig | None = None) -> TreeModel:
    """Grow a tree greedily, top down, honoring sample weights.

    Stops a branch at max_depth, when all positive-weight labels agree, when
    fewer than 2*min_samples_leaf positive-weight instances remain, or when
    no valid split exists.
    """
    config = config or TreeConfig()
    config.validate()
    x = _as_matrix(features)
    y = np.asarray(labels, dtype=np.float64)
    w = np.asarray(sample_weights, dtype=np.float64)
    n, d = x.shape
    if n == 0 or d == 0:
        raise ValueError("empty input")
    if y.shape != (n,) or w.shape != (n,):
        raise ValueError("features, labels, and sample_weights disagree on length")
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ValueError("labels must be binary (0 or 1)")
    if np.any(w < 0.0) or not np.all(np.isfinite(w)):
        raise ValueError("sample_weights must be finite and nonnegative")
    if not w.sum() > 0.0:
        raise ValueError("sample_weights sum to zero")

    active = np.flatnonzero(w > 0.0)

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def new_node() -> int:
        feature.append(_LEAF)
        threshold.append(np.nan)
        left.append(_LEAF)
        right.append(_LEAF)
        value.append(np.nan)
        return len(feature) - 1

    # Iterative preorder build; recursion depth on adversarial data can
    # exceed the interpreter limit.
    root = new_node()
    stack: list[tuple[int, np.ndarray, int]] = [(root, active, 0)]
    while stack:
        node, idx, depth = stack.pop()
        yn = y[idx]
        stop = (
            (config.max_depth is not None and depth >= config.max_depth)
            or len(idx) < 2 * config.min_samples_leaf
            or yn.min() == yn.max()
        )
        split = None if stop else best_split(x, y, w, idx, config)
        if split is None:
            value[node] = _weighted_mean_label(yn, w[idx])
            continue
        feat, thr, _ = split
        feature[node] = feat
        threshold[node] = thr
        go_left = x[idx, feat] <= thr
        left_node = new_node()
        right_node = new_node()
        left[node] = left_node
        right[node] = right_node
        # Push right first so the left branch is numbered (and built) first.
        stack.append((right_node, idx[~go_left], depth + 1))
        stack.append((left_node, idx[go_left], depth + 1))

    return TreeModel(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=np.float64),
        config=config,
        feature_arity=d,
    )


def predict_scores(model: TreeModel, features) -> np.ndarray:
    """Leaf values for a batch of rows (n x arity)."""
    x = _as_matrix(features)
    if x.shape[1] != model.feature_arity:
        raise ValueError(
            f"feature arity mismatch: model expects {model.feature_arity}, got {x.shape[1]}"
        )
    nodes = np.zeros(x.shape[0], dtype=np.int64)
    while True:
        pending = np.flatnonzero(model.feature[nodes] != _LEAF)
        if len(pending) == 0:
            break
        cur = nodes[pending]
        col = model.feature[cur]
        goes_left = x[pending, col] <= model.threshold[cur]
        nodes[pending] = np.where(goes_left, model.left[cur], model.right[cur])
    return model.value[nodes]


def predict_score(model: TreeModel, x) -> float:
    """Leaf value reached by one row (ties route left on <=)."""
    vec = np.asarray(x, dtype=np.float64)
    if vec.ndim != 1:
        raise ValueError("predict_score expects a single feature vector")
    return float(predict_scores(model, vec[None, :])[0])


def predict_labels(model: TreeModel, features) -> np.ndarray:
    """Hard labels: score >= label_threshold maps to 1."""
    return (predict_scores(model, features) >= model.config.label_threshold).astype(np.int64)


def predict_label(model: TreeModel, x) -> int:
    return int(predict_score(model, x) >= model.config.label_threshold)


def training_sse(model: TreeModel, features, labels, sample_weights) -> float:
    """Weighted SSE of model scores on a training set (diagnostics)."""
    scores = predict_scores(model, features)
    y = np.asarray(labels, dtype=np.float64)
    w = np.asarray(sample_weights, dtype=np.float64)
    err = scores - y
    return float(np.dot(w, err * err))
