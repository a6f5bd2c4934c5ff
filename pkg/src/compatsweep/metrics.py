"""Scalar metrics: accuracy, ROC-AUC, trade-off curve area, 1-D Wasserstein
distance, history-vs-pool distance, and Pearson correlation.

Metrics that can be legitimately undefined (single-class AUC, zero-variance
correlation, curves with too few points) return a MetricValue carrying a
reason instead of a sentinel number; callers skip and count them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class MetricValue:
    kind: str
    value: float | None
    defined: bool
    reason: str | None = None

    @staticmethod
    def ok(kind: str, value: float) -> "MetricValue":
        return MetricValue(kind=kind, value=float(value), defined=True)

    @staticmethod
    def undefined(kind: str, reason: str) -> "MetricValue":
        return MetricValue(kind=kind, value=None, defined=False, reason=reason)


def accuracy(predicted, true) -> float:
    """Fraction of exact matches."""
    p = np.asarray(predicted)
    t = np.asarray(true)
    if p.shape != t.shape or p.ndim != 1:
        raise ValueError("predicted and true labels must be equal-length vectors")
    if len(p) == 0:
        raise ValueError("empty input")
    return float(np.count_nonzero(p == t)) / len(p)


def roc_auc(scores, labels) -> MetricValue:
    """Mann-Whitney AUC: P(score_pos > score_neg) with ties counted 0.5.

    Computed with midranks, which agrees exactly (not just approximately)
    with brute-force pair counting: the rank-sum numerator is an integer
    multiple of 0.5 and the final division is the same in both forms.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    n_pos = int(np.count_nonzero(y == 1))
    n_neg = int(np.count_nonzero(y == 0))
    if n_pos + n_neg != len(y):
        raise ValueError("labels must be binary (0 or 1)")
    if n_pos == 0 or n_neg == 0:
        return MetricValue.undefined("auc", "degenerate labels")

    order = np.argsort(s, kind="stable")
    sorted_scores = s[order]
    ranks = np.empty(len(s), dtype=np.float64)
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        # 1-based ranks i+1 .. j+1 averaged; exact in binary floating point.
        ranks[order[i : j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    rank_sum_pos = float(ranks[np.asarray(y) == 1].sum())
    numerator = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return MetricValue.ok("auc", numerator / (n_pos * n_neg))


def autc(points: Sequence[tuple[float, float]]) -> MetricValue:
    """Area under a (compatibility, performance) polyline by the trapezoid rule.

    Points are sorted by compatibility; points sharing a compatibility value
    are merged by averaging performance first (the trapezoid rule needs
    strictly ordered abscissae). The area covers the observed range only; a
    zero-width range yields 0.0.
    """
    pts = [(float(c), float(p)) for c, p in points]
    if len(pts) < 2:
        return MetricValue.undefined("autc", "fewer than 2 valid points")
    for c, p in pts:
        if not (np.isfinite(c) and np.isfinite(p)):
            raise ValueError("non-finite curve point")
    merged = merge_duplicate_compatibilities(pts)
    area = 0.0
    for (x0, y0), (x1, y1) in zip(merged, merged[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return MetricValue.ok("autc", area)


def merge_duplicate_compatibilities(
    points: Sequence[tuple[float, float]]
) -> list[tuple[float, float]]:
    """Sort by x and collapse equal-x points to their mean y."""
    ordered = sorted((float(x), float(y)) for x, y in points)
    out: list[tuple[float, float]] = []
    i = 0
    while i < len(ordered):
        j = i
        while j + 1 < len(ordered) and ordered[j + 1][0] == ordered[i][0]:
            j += 1
        ys = [ordered[t][1] for t in range(i, j + 1)]
        out.append((ordered[i][0], sum(ys) / len(ys)))
        i = j + 1
    return out


def align_curves(
    curves: Sequence[Sequence[tuple[float, float]]]
) -> list[list[tuple[float, float]]]:
    """Extend every curve flat to the union compatibility range.

    Input and output are plain (compatibility, performance) point lists.
    Each curve is first canonicalized (sorted, duplicate x merged), then
    padded with a constant-performance point at the common minimum and/or
    maximum so all curves span the same interval. Extension never
    extrapolates a trend; it freezes the endpoint value.
    """
    canon = [merge_duplicate_compatibilities(c) for c in curves]
    for c in canon:
        if len(c) < 1:
            raise ValueError("cannot align an empty curve")
    lo = min(c[0][0] for c in canon)
    hi = max(c[-1][0] for c in canon)
    aligned: list[list[tuple[float, float]]] = []
    for c in canon:
        ext = list(c)
        if ext[0][0] > lo:
            ext.insert(0, (lo, ext[0][1]))
        if ext[-1][0] < hi:
            ext.append((hi, ext[-1][1]))
        aligned.append(ext)
    return aligned


def wasserstein_1d(sample_a, sample_b) -> float:
    """Exact W1 between two empirical distributions.

    Integrates |F_a - F_b| over the merged breakpoints; for equal-size
    samples this equals the mean absolute difference of sorted samples.
    """
    a = np.sort(np.asarray(sample_a, dtype=np.float64))
    b = np.sort(np.asarray(sample_b, dtype=np.float64))
    if len(a) == 0 or len(b) == 0:
        raise ValueError("empty sample")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("non-finite sample value")
    pooled = np.sort(np.concatenate([a, b]))
    deltas = np.diff(pooled)
    cdf_a = np.searchsorted(a, pooled[:-1], side="right") / len(a)
    cdf_b = np.searchsorted(b, pooled[:-1], side="right") / len(b)
    return float(np.sum(np.abs(cdf_a - cdf_b) * deltas))


def history_distance(hist_features, pool_features) -> float:
    """Mean per-column W1 between a user's rows and the training pool's rows.

    Each column is min-max normalized by the pool column's range so columns
    are comparable; a pool column with zero range contributes 0. The mean
    runs over all columns (zero-range ones included in the denominator).
    """
    h = np.asarray(hist_features, dtype=np.float64)
    g = np.asarray(pool_features, dtype=np.float64)
    if h.ndim != 2 or g.ndim != 2:
        raise ValueError("expected 2-D feature matrices")
    if h.shape[0] == 0 or g.shape[0] == 0:
        raise ValueError("empty feature matrix")
    if h.shape[1] != g.shape[1] or h.shape[1] < 1:
        raise ValueError("feature arity mismatch")
    total = 0.0
    for j in range(g.shape[1]):
        lo = float(g[:, j].min())
        hi = float(g[:, j].max())
        if hi == lo:
            continue
        span = hi - lo
        total += wasserstein_1d((h[:, j] - lo) / span, (g[:, j] - lo) / span)
    return total / g.shape[1]


def pearson(xs, ys) -> MetricValue:
    """Product-moment correlation; undefined when either variance is zero."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be equal-length vectors")
    if len(x) < 2:
        raise ValueError("need at least 2 points")
    xm = x - x.mean()
    ym = y - y.mean()
    sxx = float(np.dot(xm, xm))
    syy = float(np.dot(ym, ym))
    if sxx == 0.0 or syy == 0.0:
        return MetricValue.undefined("pearson", "zero variance")
    r = float(np.dot(xm, ym)) / float(np.sqrt(sxx * syy))
    return MetricValue.ok("pearson", min(1.0, max(-1.0, r)))
