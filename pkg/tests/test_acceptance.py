"""Acceptance suite: ten criteria, one printed PASS/FAIL line each.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion lines.
Criteria 6 and 7 are statistical: they execute many full experiment runs on
the pinned synthetic family and take several minutes combined; everything
else finishes in seconds.
"""

import functools
import itertools
import json
import pathlib
import time

import numpy as np
import pytest

from compatsweep.cli import main
from compatsweep.compatibility import (
    TrainMasks,
    UndefinedCompatibilityError,
    WeightVector,
    assemble_sample_weights,
    compute_compatibility,
    train_update,
)
from compatsweep.experiment import (
    BASELINE,
    ExperimentConfig,
    SynthConfig,
    drifted_user_ids,
    generate_synthetic,
    improvement_table,
    improvements_csv_text,
    run_experiment,
)
from compatsweep.metrics import align_curves, autc, pearson, roc_auc, wasserstein_1d
from compatsweep.tree import TreeConfig, best_split, fit_tree

from oracles import (
    auc_pair_oracle,
    compatibility_oracle,
    root_split_oracle,
    wasserstein_lp_oracle,
)

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


def criterion(number):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"criterion {number}: FAIL")
                raise
            print(f"criterion {number}: PASS")

        return wrapper

    return decorate


# The synthetic family and protocol shared by the statistical criteria.
# Near-interpolating trees are the point: at small depths the pooled update
# learns the drifted cohort's rule well enough that history weighting has
# nothing to add, and the benefit criterion loses its signal.
def family_synth(seed):
    return SynthConfig(
        users=20, min_len=40, max_len=80, drift_fraction=0.3, noise=0.1, seed=seed
    )


FAMILY_TREE = TreeConfig(max_depth=8, min_samples_leaf=2)


def drifted_margin(seed):
    """Mean test AUTC for the baseline vs the selected model, drifted users.

    Per drifted user, folds count only where the baseline fold area, the
    fold's selection, and the selected model's fold area are all defined; a
    user aggregates by fold mean, the cohort by user mean.
    """
    synth = family_synth(seed)
    dataset = generate_synthetic(synth)
    config = ExperimentConfig(
        folds=5, inner_folds=3, seed=seed, min_history_len=10, tree=FAMILY_TREE
    )
    result = run_experiment(config, dataset)
    selected = {(s.fold, s.user_id): s.model for s in result.selections}
    base_means = []
    best_means = []
    for user in sorted(drifted_user_ids(synth)):
        base_vals = []
        best_vals = []
        for fold in range(config.folds):
            base = result.aggregates[user][BASELINE]["autc_by_fold"][str(fold)]
            if base is None:
                continue
            choice = selected.get((fold, user))
            if choice is None:
                continue
            chosen = result.aggregates[user][choice]["autc_by_fold"][str(fold)]
            if chosen is None:
                continue
            base_vals.append(base)
            best_vals.append(chosen)
        if base_vals:
            base_means.append(sum(base_vals) / len(base_vals))
            best_means.append(sum(best_vals) / len(best_vals))
    return sum(base_means) / len(base_means), sum(best_means) / len(best_means)


@pytest.fixture(scope="module")
def shape_run():
    """k=2, n=3, 2 users, full default grid (criteria 8 and 10)."""
    dataset = generate_synthetic(SynthConfig(users=2, min_len=40, max_len=60, seed=5))
    config = ExperimentConfig(folds=2, inner_folds=3, tree=TreeConfig(max_depth=3), seed=5)
    return config, run_experiment(config, dataset)


@criterion(1)
def test_compatibility_matches_indicator_oracle():
    rng = np.random.default_rng(1001)
    start = time.perf_counter()
    for _ in range(500):
        n = int(rng.integers(1, 13))
        h1 = rng.integers(0, 2, size=n)
        h2 = rng.integers(0, 2, size=n)
        y = rng.integers(0, 2, size=n)
        if np.any(h1 == y):
            assert compute_compatibility(h1, h2, y) == compatibility_oracle(h1, h2, y)
        else:
            with pytest.raises(UndefinedCompatibilityError):
                compute_compatibility(h1, h2, y)
    assert time.perf_counter() - start < 1.0


@criterion(2)
def test_root_split_matches_exhaustive_enumeration():
    rng = np.random.default_rng(1002)
    start = time.perf_counter()
    config = TreeConfig()
    splits_checked = 0
    for case in range(200):
        n = int(rng.integers(2, 9))
        d = int(rng.integers(1, 3))
        if case % 2:
            x = rng.integers(0, 3, size=(n, d)).astype(float)  # duplicate-heavy
        else:
            x = rng.uniform(size=(n, d))
        # Pure-label nodes never reach the split search, so labels are
        # resampled until mixed.
        y = rng.integers(0, 2, size=n).astype(float)
        while y.min() == y.max():
            y = rng.integers(0, 2, size=n).astype(float)
        w = rng.uniform(0.1, 2.0, size=n)
        model = fit_tree(x, y, w, config)
        want = root_split_oracle(x, y, w, min_samples_leaf=1)
        if want is None:
            assert model.feature[0] == -1
            continue
        splits_checked += 1
        assert model.feature[0] == want[0]
        assert model.threshold[0] == want[1]
        got = best_split(x, y, w, np.arange(n), config)
        assert abs(got[2] - want[2]) <= 1e-9
    assert splits_checked > 150
    assert time.perf_counter() - start < 5.0


@criterion(3)
def test_baseline_weights_reduce_exactly():
    rng = np.random.default_rng(1003)
    x = rng.uniform(size=(60, 3))
    y = rng.integers(0, 2, size=60).astype(float)
    masks = TrainMasks(
        history=rng.uniform(size=60) < 0.3, correct=rng.uniform(size=60) < 0.6
    )
    base = WeightVector(1, 1, 0, 0)
    corr = masks.correct.astype(np.float64)
    ones = np.ones(60)
    for lam in ExperimentConfig().lambda_grid:
        got = assemble_sample_weights(masks, base, lam)
        want = (1.0 - lam) * ones + lam * corr
        assert np.array_equal(got, want)
    tree = TreeConfig(max_depth=4)
    h2 = train_update(x, y, masks, base, 0.0, tree)
    plain = fit_tree(x, y, ones, tree)
    assert h2.to_json_str() == plain.to_json_str()


@criterion(4)
def test_weight_scaling_invariance():
    rng = np.random.default_rng(1004)
    config = TreeConfig(max_depth=4)
    for _ in range(50):
        n = int(rng.integers(5, 41))
        x = rng.uniform(size=(n, 3))
        y = rng.integers(0, 2, size=n).astype(float)
        w = rng.uniform(0.1, 3.0, size=n)
        base = fit_tree(x, y, w, config).to_json_str()
        for scale in (0.5, 3.0, 10.0):
            assert fit_tree(x, y, w * scale, config).to_json_str() == base


@criterion(5)
def test_metric_oracles():
    # Trapezoid fixtures.
    assert autc([(0.0, 1.0), (1.0, 1.0)]).value == pytest.approx(1.0, abs=1e-12)
    assert autc([(0.0, 0.0), (1.0, 1.0)]).value == pytest.approx(0.5, abs=1e-12)
    assert autc([(0.2, 0.8), (0.5, 0.7), (0.9, 0.6)]).value == pytest.approx(0.485, abs=1e-12)
    flat, _ = align_curves([[(0.5, 0.7), (0.9, 0.7)], [(0.3, 0.0), (1.0, 0.0)]])
    assert autc(flat).value == pytest.approx(0.49, abs=1e-12)

    # Pair counting: exhaustive over every label pattern, with scores over a
    # 4-level alphabet for n <= 4 (covers every weak ordering of the scores)
    # and a 3-level alphabet for n in {5, 6}.
    for n in range(1, 7):
        levels = (0.0, 1 / 3, 2 / 3, 1.0) if n <= 4 else (0.0, 0.5, 1.0)
        for labels in itertools.product((0, 1), repeat=n):
            n_pos = sum(labels)
            for scores in itertools.product(levels, repeat=n):
                got = roc_auc(scores, labels)
                if n_pos in (0, n):
                    assert not got.defined
                else:
                    assert got.value == auc_pair_oracle(scores, labels)

    # Transport LP: every multiset pair of size <= 4 over a 3-value support.
    support = (0.0, 0.5, 1.0)
    multisets = [
        m
        for size in range(1, 5)
        for m in itertools.combinations_with_replacement(support, size)
    ]
    for a in multisets:
        for b in multisets:
            assert wasserstein_1d(a, b) == pytest.approx(
                wasserstein_lp_oracle(a, b), abs=1e-9
            )
    assert wasserstein_1d([0.0, 0.0, 1.0], [0.0, 1.0, 1.0]) == pytest.approx(
        1 / 3, abs=1e-9
    )

    # Correlation fixtures against the direct formula.
    assert pearson([1.0, 2.0, 3.0], [2.0, 4.0, 6.0]).value == pytest.approx(1.0, abs=1e-12)
    assert pearson([1.0, 2.0, 3.0], [-1.0, -2.0, -3.0]).value == pytest.approx(-1.0, abs=1e-12)
    assert pearson([1.0, 2.0, 3.0], [1.0, 3.0, 2.0]).value == pytest.approx(0.5, abs=1e-12)


@criterion(6)
def test_tradeoff_exists_on_synthetic_family():
    start = time.perf_counter()
    wins = 0
    for seed in range(20):
        dataset = generate_synthetic(family_synth(seed))
        config = ExperimentConfig(
            folds=1,
            inner_folds=1,
            seed=seed,
            min_history_len=10,
            tree=FAMILY_TREE,
            lambda_grid=(0.0, 1.0),
            models={BASELINE: WeightVector(1, 1, 0, 0)},
        )
        result = run_experiment(config, dataset)
        at = {0.0: [], 1.0: []}
        for curve in result.curves:
            if curve.eval_set != "test":
                continue
            for point in curve.points:
                at[point.lam].append((point.compatibility, point.performance))
        mean_c = {lam: sum(p[0] for p in pts) / len(pts) for lam, pts in at.items()}
        mean_p = {lam: sum(p[1] for p in pts) / len(pts) for lam, pts in at.items()}
        if mean_c[1.0] > mean_c[0.0] and mean_p[1.0] <= mean_p[0.0]:
            wins += 1
    assert wins >= 16
    assert time.perf_counter() - start < 120.0


@criterion(7)
def test_personalization_benefit_on_drifted_users():
    fixture = json.loads((FIXTURES / "personalization_margins.json").read_text())
    start = time.perf_counter()
    wins = 0
    for entry in fixture["seeds"]:
        baseline, best_u = drifted_margin(entry["seed"])
        assert baseline == pytest.approx(entry["baseline"], abs=1e-9)
        assert best_u == pytest.approx(entry["best_u"], abs=1e-9)
        if best_u > baseline:
            wins += 1
    assert len(fixture["seeds"]) == 10
    assert wins >= 8
    assert time.perf_counter() - start < 600.0


@criterion(8)
def test_selection_is_sound(shape_run):
    _, result = shape_run
    assert len(result.selections) > 0
    for selection in result.selections:
        if selection.model is None:
            assert all(v is None for v in selection.mean_val_autc.values())
            continue
        chosen = selection.mean_val_autc[selection.model]
        for mean in selection.mean_val_autc.values():
            if mean is not None:
                assert chosen >= mean


@criterion(9)
def test_worker_count_leaves_outputs_byte_identical(tmp_path):
    data = tmp_path / "data.csv"
    assert main(["synth", "--out", str(data), "--users", "6",
                 "--min-len", "12", "--max-len", "18", "--seed", "3"]) == 0
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps({
        "dataset": str(data),
        "folds": 2,
        "inner_folds": 2,
        "lambda_grid": [0.0, 0.5, 1.0],
        "tree": {"max_depth": 3},
        "min_history_len": 8,
        "seed": 5,
    }))
    serial = tmp_path / "serial"
    parallel = tmp_path / "parallel"
    assert main(["run", "--config", str(config_path), "--out", str(serial)]) == 0
    assert main(["run", "--config", str(config_path), "--out", str(parallel),
                 "--jobs", "2"]) == 0
    for name in ("curves.csv", "improvements.csv", "correlations.csv"):
        assert (serial / name).read_bytes() == (parallel / name).read_bytes()


@criterion(10)
def test_protocol_shape(shape_run):
    config, result = shape_run
    # folds(2) x inner(3) x users(2) x models(9) x eval sets(2)
    assert len(config.model_order) == 9
    assert len(result.curves) == 216
    # Every (curve, lambda) is accounted for: a point or an enumerated skip.
    for curve in result.curves:
        assert len(curve.points) + len(curve.skipped) == len(config.lambda_grid)
    assert len(result.manifest["skipped_points"]) == sum(
        len(c.skipped) for c in result.curves
    )
    rows, correlations = improvement_table(result)
    header = improvements_csv_text(rows, config.model_order).splitlines()[0].split(",")
    expected = ["user", "len", "distance"]
    for name in config.model_order:
        if name != BASELINE:
            expected += [name, f"{name}_std"]
    expected += ["best_u", "best_u_std"]
    assert header == expected
    assert [c.label for c in correlations] == ["len correlation", "dist correlation"]
