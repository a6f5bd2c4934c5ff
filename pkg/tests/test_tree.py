"""Tree fitting, splitting, prediction, and serialization."""

import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from compatsweep.tree import (
    TreeConfig,
    TreeModel,
    best_split,
    fit_tree,
    predict_label,
    predict_labels,
    predict_score,
    predict_scores,
    training_sse,
)

from oracles import root_split_oracle


class TestTreeConfig:
    def test_defaults(self):
        cfg = TreeConfig()
        assert cfg.max_depth is None
        assert cfg.min_samples_leaf == 1
        assert cfg.label_threshold == 0.5
        cfg.validate()

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"max_depth": 0},
            {"max_depth": -3},
            {"max_depth": 2.0},
            {"min_samples_leaf": 0},
            {"min_samples_leaf": 1.5},
            {"label_threshold": 0.0},
            {"label_threshold": 1.0},
        ],
    )
    def test_validate_rejects(self, kwargs):
        with pytest.raises(ValueError):
            TreeConfig(**kwargs).validate()

    def test_dict_roundtrip(self):
        cfg = TreeConfig(max_depth=7, min_samples_leaf=3, label_threshold=0.4)
        assert TreeConfig.from_dict(cfg.to_dict()) == cfg

    def test_from_dict_rejects_unknown_key(self):
        with pytest.raises(ValueError, match="unknown tree config keys"):
            TreeConfig.from_dict({"max_depth": 2, "criterion": "gini"})


def unit_split(x, y, w=None, msl=1):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = len(x)
    if w is None:
        w = np.ones(n)
    return best_split(x, np.asarray(y, float), np.asarray(w, float), np.arange(n), TreeConfig(min_samples_leaf=msl))


class TestBestSplit:
    def test_perfect_separation(self):
        # Clean boundary between the classes: midpoint 2.5, both children pure.
        got = unit_split([1.0, 2.0, 3.0, 4.0], [0, 0, 1, 1])
        assert got == (0, 2.5, 0.0)

    def test_min_samples_leaf_narrows_candidates(self):
        # msl=2 leaves a single legal boundary, which is also the clean one.
        got = unit_split([1.0, 2.0, 3.0, 4.0], [0, 0, 1, 1], msl=2)
        assert got == (0, 2.5, 0.0)

    def test_min_samples_leaf_can_forbid_splitting(self):
        assert unit_split([1.0, 2.0, 3.0, 4.0], [0, 0, 1, 1], msl=3) is None

    def test_constant_feature(self):
        assert unit_split([2.0, 2.0, 2.0], [0, 1, 0]) is None

    def test_single_row(self):
        assert unit_split([1.0], [1]) is None

    def test_all_weights_zero(self):
        assert unit_split([1.0, 2.0], [0, 1], w=[0.0, 0.0]) is None

    def test_zero_weight_rows_are_invisible(self):
        # The weight-0 outlier at x=10 with a flipped label must not move
        # the threshold off the clean two-row boundary.
        got = unit_split([0.0, 1.0, 10.0], [0, 1, 0], w=[1.0, 1.0, 0.0])
        assert got == (0, 0.5, 0.0)

    def test_threshold_tie_prefers_lower_value(self):
        # Splitting off either end row leaves SSE 2/3; the interior split
        # costs 1.0. Tie between thresholds 0.5 and 2.5 goes low.
        got = unit_split([0.0, 1.0, 2.0, 3.0], [0, 1, 0, 1])
        assert got is not None
        assert got[0] == 0
        assert got[1] == 0.5
        assert got[2] == pytest.approx(2.0 / 3.0, abs=1e-12)

    def test_feature_tie_prefers_lower_index(self):
        # Both features induce the exact same partition (each row alone),
        # so costs tie at 0 and the lower feature index must win.
        x = np.array([[0.0, 1.0], [1.0, 0.0]])
        got = best_split(x, np.array([0.0, 1.0]), np.ones(2), np.arange(2), TreeConfig())
        assert got == (0, 0.5, 0.0)

    def test_adjacent_floats_midpoint_rounding(self):
        # Adjacent floats have no representable midpoint. When (lo+hi)/2
        # rounds down to lo the boundary still separates the rows and is
        # kept; when it rounds up to hi (lo just under a power of two) it
        # would route both rows left, so it must be rejected.
        assert unit_split([1.0, np.nextafter(1.0, 2.0)], [0, 1]) == (0, 1.0, 0.0)
        assert unit_split([np.nextafter(1.0, 0.0), 1.0], [0, 1]) is None

    def test_weighted_split_moves_with_mass(self):
        # Unweighted, thresholds 1.5 and 2.5 tie (one mislabeled row either
        # side). Upweighting the stray row 2 makes isolating it cheaper.
        x = [0.0, 1.0, 2.0, 3.0]
        y = [0, 0, 1, 0]
        got = unit_split(x, y, w=[1.0, 1.0, 5.0, 1.0])
        assert got is not None
        feat, thr, _ = got
        assert (feat, thr) == (0, 1.5)

    def test_agrees_with_exhaustive_search(self):
        # Grid-valued features force duplicate values and genuine ties;
        # the oracle enumerates every (feature, midpoint) pair with fsum
        # arithmetic and applies the same tie rule.
        rng = np.random.default_rng(991)
        checked_splits = 0
        for trial in range(200):
            n = int(rng.integers(2, 13))
            d = int(rng.integers(1, 4))
            x = rng.integers(0, 4, size=(n, d)).astype(float)
            y = rng.integers(0, 2, size=n).astype(float)
            w = np.ones(n) if trial % 2 == 0 else rng.uniform(0.1, 2.0, size=n)
            msl = 1 if trial % 3 else 2
            got = best_split(x, y, w, np.arange(n), TreeConfig(min_samples_leaf=msl))
            want = root_split_oracle(x, y, w, min_samples_leaf=msl)
            if want is None:
                assert got is None
                continue
            checked_splits += 1
            assert got is not None
            assert got[0] == want[0]
            assert got[1] == want[1]
            assert got[2] == pytest.approx(want[2], abs=1e-9 * w.sum() + 1e-12)
        assert checked_splits > 100


class TestFitTree:
    def test_two_row_stump(self):
        model = fit_tree([[0.0], [1.0]], [0, 1], [1.0, 1.0])
        assert model.node_count == 3
        assert model.depth() == 1
        assert model.feature[0] == 0
        assert model.threshold[0] == 0.5
        assert model.left[0] == 1 and model.right[0] == 2
        assert model.value[1] == 0.0 and model.value[2] == 1.0

    def test_pure_labels_make_a_single_leaf(self):
        model = fit_tree([[0.0], [1.0], [2.0]], [1, 1, 1], np.ones(3))
        assert model.node_count == 1
        assert model.depth() == 0
        assert model.value[0] == 1.0

    def test_leaf_value_is_weighted_mean(self):
        # Constant feature forbids splitting; the lone leaf averages labels
        # by weight: (0*1 + 1*3) / 4.
        model = fit_tree([[5.0], [5.0]], [0, 1], [1.0, 3.0])
        assert model.node_count == 1
        assert model.value[0] == 0.75

    def test_zero_weight_rows_do_not_shape_the_tree(self):
        with_dead_row = fit_tree([[0.0], [1.0], [9.0]], [0, 1, 0], [1.0, 1.0, 0.0])
        without = fit_tree([[0.0], [1.0]], [0, 1], [1.0, 1.0])
        assert with_dead_row.to_json_dict() == without.to_json_dict()

    def test_zero_weight_rows_still_route_at_predict(self):
        model = fit_tree([[0.0], [1.0], [9.0]], [0, 1, 0], [1.0, 1.0, 0.0])
        # x=9 lands in the right leaf regardless of its (ignored) label.
        assert predict_score(model, [9.0]) == 1.0

    def test_boundary_value_routes_left(self):
        model = fit_tree([[0.0], [1.0]], [0, 1], [1.0, 1.0])
        assert predict_score(model, [0.5]) == 0.0
        assert predict_score(model, [np.nextafter(0.5, 1.0)]) == 1.0

    def test_max_depth_is_respected(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(size=(64, 2))
        y = (rng.uniform(size=64) < 0.5).astype(float)
        for depth in (1, 2, 3):
            model = fit_tree(x, y, np.ones(64), TreeConfig(max_depth=depth))
            assert model.depth() <= depth

    def test_min_samples_leaf_is_respected(self):
        rng = np.random.default_rng(8)
        x = rng.uniform(size=(40, 2))
        y = (x[:, 0] > 0.5).astype(float)
        y[::7] = 1 - y[::7]
        model = fit_tree(x, y, np.ones(40), TreeConfig(min_samples_leaf=4))
        # Route every training row to its leaf and count occupancy.
        nodes = np.zeros(40, dtype=int)
        for i in range(40):
            node = 0
            while model.feature[node] != -1:
                j = model.feature[node]
                node = model.left[node] if x[i, j] <= model.threshold[node] else model.right[node]
            nodes[i] = node
        _, counts = np.unique(nodes, return_counts=True)
        assert counts.min() >= 4

    def test_interpolates_distinct_rows(self):
        rng = np.random.default_rng(9)
        x = rng.permutation(30).astype(float)[:, None]
        y = rng.integers(0, 2, size=30).astype(float)
        model = fit_tree(x, y, np.ones(30))
        assert training_sse(model, x, y, np.ones(30)) == 0.0
        np.testing.assert_array_equal(predict_scores(model, x), y)

    @pytest.mark.parametrize(
        "features,labels,weights,message",
        [
            (np.empty((0, 2)), [], [], "empty input"),
            ([[1.0]], [0, 1], [1.0], "disagree on length"),
            ([[1.0], [2.0]], [0, 2], [1.0, 1.0], "binary"),
            ([[1.0], [2.0]], [0, 1], [1.0, -1.0], "finite and nonnegative"),
            ([[1.0], [2.0]], [0, 1], [1.0, np.nan], "finite and nonnegative"),
            ([[1.0], [2.0]], [0, 1], [0.0, 0.0], "sum to zero"),
        ],
    )
    def test_rejects_bad_input(self, features, labels, weights, message):
        with pytest.raises(ValueError, match=message):
            fit_tree(features, labels, weights)

    def test_rejects_flat_features(self):
        with pytest.raises(ValueError, match="2-D"):
            fit_tree([1.0, 2.0], [0, 1], [1.0, 1.0])

    def test_model_arrays_are_read_only(self):
        model = fit_tree([[0.0], [1.0]], [0, 1], [1.0, 1.0])
        with pytest.raises(ValueError):
            model.value[0] = 0.5


class TestPredict:
    def test_label_threshold(self):
        model = fit_tree([[5.0], [5.0]], [0, 1], [1.0, 3.0])  # leaf score 0.75
        assert predict_label(model, [5.0]) == 1
        strict = fit_tree([[5.0], [5.0]], [0, 1], [1.0, 3.0], TreeConfig(label_threshold=0.8))
        assert predict_label(strict, [5.0]) == 0

    def test_threshold_equality_counts_as_positive(self):
        model = fit_tree([[5.0], [5.0]], [0, 1], [1.0, 1.0])  # leaf score 0.5
        assert predict_label(model, [5.0]) == 1

    def test_batch_labels(self):
        model = fit_tree([[0.0], [1.0]], [0, 1], [1.0, 1.0])
        np.testing.assert_array_equal(predict_labels(model, [[0.2], [0.9]]), [0, 1])

    def test_arity_mismatch(self):
        model = fit_tree([[0.0, 0.0], [1.0, 1.0]], [0, 1], [1.0, 1.0])
        with pytest.raises(ValueError, match="arity mismatch"):
            predict_scores(model, [[1.0]])

    def test_single_prediction_needs_a_vector(self):
        model = fit_tree([[0.0], [1.0]], [0, 1], [1.0, 1.0])
        with pytest.raises(ValueError, match="single feature vector"):
            predict_score(model, [[0.5]])

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_scores_stay_within_unit_interval(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 40))
        x = rng.normal(size=(n, 2)) * 100
        y = rng.integers(0, 2, size=n).astype(float)
        w = rng.uniform(0.01, 10.0, size=n)
        if not w.sum() > 0:
            w = np.ones(n)
        model = fit_tree(x, y, w, TreeConfig(max_depth=4))
        scores = predict_scores(model, rng.normal(size=(20, 2)) * 100)
        assert np.all(scores >= 0.0) and np.all(scores <= 1.0)

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_batch_matches_row_at_a_time(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.uniform(size=(25, 3))
        y = rng.integers(0, 2, size=25).astype(float)
        model = fit_tree(x, y, np.ones(25), TreeConfig(max_depth=3))
        probes = rng.uniform(size=(10, 3))
        batch = predict_scores(model, probes)
        singles = [predict_score(model, row) for row in probes]
        np.testing.assert_array_equal(batch, singles)


class TestGreedyStructure:
    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_training_error_never_rises_with_depth(self, seed):
        # Split decisions do not look at depth, so a deeper tree refines the
        # shallower one's leaves and each refinement lowers weighted SSE.
        rng = np.random.default_rng(seed)
        x = rng.uniform(size=(50, 2))
        y = rng.integers(0, 2, size=50).astype(float)
        w = rng.uniform(0.5, 2.0, size=50)
        errs = [
            training_sse(fit_tree(x, y, w, TreeConfig(max_depth=k)), x, y, w)
            for k in (1, 2, 3, 4)
        ]
        for shallow, deep in zip(errs, errs[1:]):
            assert deep <= shallow + 1e-9

    def test_rescaled_weights_grow_the_same_tree(self):
        # Structure and (12-digit) leaf values must not depend on the overall
        # weight scale.
        rng = np.random.default_rng(123)
        for _ in range(20):
            n = int(rng.integers(5, 40))
            x = rng.uniform(size=(n, 3))
            y = rng.integers(0, 2, size=n).astype(float)
            w = rng.uniform(0.1, 3.0, size=n)
            base = fit_tree(x, y, w, TreeConfig(max_depth=4)).to_json_str()
            for scale in (0.5, 3.0, 10.0):
                scaled = fit_tree(x, y, w * scale, TreeConfig(max_depth=4)).to_json_str()
                assert scaled == base


class TestSerialization:
    def test_stump_layout(self):
        model = fit_tree([[0.0], [1.0]], [0, 1], [1.0, 1.0])
        assert model.to_json_dict() == {
            "feature_arity": 1,
            "config": {"max_depth": None, "min_samples_leaf": 1, "label_threshold": 0.5},
            "root": {
                "kind": "split",
                "feature": 0,
                "threshold": 0.5,
                "left": {"kind": "leaf", "value": 0.0},
                "right": {"kind": "leaf", "value": 1.0},
            },
        }

    def test_roundtrip_preserves_predictions(self):
        rng = np.random.default_rng(55)
        x = rng.uniform(size=(60, 3))
        y = (x[:, 0] + 0.3 * rng.normal(size=60) > 0.5).astype(float)
        w = rng.uniform(0.2, 2.0, size=60)
        model = fit_tree(x, y, w, TreeConfig(max_depth=5, min_samples_leaf=2))
        clone = TreeModel.from_json_dict(model.to_json_dict())
        probes = rng.uniform(size=(40, 3))
        # Leaf values pass through 12-significant-digit rounding once.
        np.testing.assert_allclose(
            predict_scores(clone, probes), predict_scores(model, probes), atol=1e-11
        )
        assert clone.node_count == model.node_count
        assert clone.depth() == model.depth()

    def test_serialization_is_idempotent(self):
        rng = np.random.default_rng(56)
        x = rng.uniform(size=(30, 2))
        y = rng.integers(0, 2, size=30).astype(float)
        model = fit_tree(x, y, rng.uniform(0.1, 1.0, size=30), TreeConfig(max_depth=4))
        once = model.to_json_str()
        again = TreeModel.from_json_dict(json.loads(once)).to_json_str()
        assert again == once

    def test_roundtrip_keeps_config(self):
        model = fit_tree([[0.0], [1.0]], [0, 1], [1.0, 1.0], TreeConfig(max_depth=2, label_threshold=0.3))
        clone = TreeModel.from_json_dict(model.to_json_dict())
        assert clone.config == model.config

    def test_from_json_rejects_unknown_config(self):
        model = fit_tree([[0.0], [1.0]], [0, 1], [1.0, 1.0])
        raw = model.to_json_dict()
        raw["config"]["pruning"] = "cost"
        with pytest.raises(ValueError, match="unknown tree config keys"):
            TreeModel.from_json_dict(raw)


class TestTrainingSse:
    def test_pure_fit_has_zero_error(self):
        x = [[0.0], [1.0]]
        model = fit_tree(x, [0, 1], [1.0, 1.0])
        assert training_sse(model, x, [0, 1], [1.0, 1.0]) == 0.0

    def test_weighted_residuals(self):
        # Forced leaf at 0.75: residuals 0.75 and 0.25 with weights 1 and 3.
        x = [[5.0], [5.0]]
        model = fit_tree(x, [0, 1], [1.0, 3.0])
        want = 1.0 * 0.75**2 + 3.0 * 0.25**2
        assert training_sse(model, x, [0, 1], [1.0, 3.0]) == pytest.approx(want, rel=1e-12)
