import math

import numpy as np
import pytest
from scipy.special import softmax

from app.constants import VITALS
from app.errors import ConfigError, DataError, TrainingError
from app.gbdt.booster import (
    EarlyStopper,
    GBDTConfig,
    GBDTModel,
    Variant,
    ordinal_levels,
    ordinal_to_level,
    train_multiclass,
    train_ordinal,
)
from app.gbdt.model_io import load_model, model_from_dict, model_to_dict, save_model
from app.gbdt.tree import RegressionTree, TreeParams, find_best_split, leaf_weight, presort
from app.ingest import feature_matrix, parse_and_clean
from app.metrics import mean_squared_error
from app.synthgen import CohortSpec, generate_cohort
from conftest import make_record, raw_row


def banded(n: int, rng, missing: float = 0.0):
    """Class is the band of feature 0; feature 1 is noise."""
    x0 = rng.uniform(0, 5, size=n)
    X = np.column_stack([x0, rng.normal(size=n)])
    y = np.floor(x0).astype(np.int64) + 1
    if missing:
        X[rng.random(n) < missing, 1] = np.nan
    return X, y


@pytest.fixture
def toy(rng):
    X, y = banded(300, rng)
    X_val, y_val = banded(100, rng)
    return X, y, X_val, y_val


# === Trees ===


def test_leaf_weight_formula():
    assert leaf_weight(4.0, 3.0, 1.0) == -1.0


def test_split_finds_separating_threshold():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    g = np.array([-1.0, -1.0, 1.0, 1.0])
    h = np.ones(4)
    split = find_best_split(X, g, h, np.arange(4), TreeParams(reg_lambda=0.0, min_child_weight=0.0))
    assert split.feature == 0
    assert split.threshold == 2.5


def test_gamma_blocks_weak_split():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    g = np.array([-1.0, -1.0, 1.0, 1.0])
    h = np.ones(4)
    assert find_best_split(X, g, h, np.arange(4), TreeParams(gamma=100.0)) is None


def test_tree_depth_limit(rng):
    X = rng.normal(size=(200, 3))
    g = rng.normal(size=200)
    tree = RegressionTree.fit(X, g, np.ones(200), TreeParams(max_depth=2, min_child_weight=0.0))
    assert tree.depth <= 2
    assert all(n.is_leaf or (n.left >= 0 and n.right >= 0) for n in tree.nodes)


def test_missing_routed_by_default_direction():
    # missing rows carry the same gradient as the right side, so they go right
    X = np.array([[1.0], [2.0], [3.0], [4.0], [np.nan], [np.nan]])
    g = np.array([-1.0, -1.0, 1.0, 1.0, 1.0, 1.0])
    tree = RegressionTree.fit(X, g, np.ones(6), TreeParams(max_depth=1, min_child_weight=0.0))
    root = tree.nodes[0]
    assert not root.default_left
    preds = tree.predict(np.array([[np.nan], [10.0]]))
    assert preds[0] == preds[1]


def test_unseen_missing_goes_left(rng):
    # no missing values during training: NaN follows the same path as -inf
    X, y = banded(300, rng)
    X_val, y_val = banded(100, rng)
    model = train_multiclass(X, y, X_val, y_val, GBDTConfig(n_estimators=20, learning_rate=0.3))

    as_nan, as_low = X_val.copy(), X_val.copy()
    as_nan[::3, 0] = np.nan
    as_low[::3, 0] = -np.inf
    assert np.array_equal(model.predict_proba(as_nan), model.predict_proba(as_low))


def test_missing_rows_do_not_change_present_rows(rng):
    X, y = banded(300, rng, missing=0.3)
    X_val, y_val = banded(100, rng, missing=0.3)
    model = train_multiclass(X, y, X_val, y_val, GBDTConfig(n_estimators=20, learning_rate=0.3))

    probs = model.predict_proba(X_val)
    for i in range(0, len(X_val), 10):
        assert np.array_equal(model.predict_proba(X_val[i]), probs[i : i + 1])


def test_no_training_missing_defaults_left(rng):
    for _ in range(50):
        X = rng.normal(size=(120, 4))
        g, h = rng.normal(size=120), rng.uniform(0.5, 1.5, size=120)
        tree = RegressionTree.fit(X, g, h, TreeParams(max_depth=3, min_child_weight=0.0))
        assert all(n.default_left for n in tree.nodes if not n.is_leaf)


def test_row_subset_matches_sliced_fit(rng):
    X = rng.normal(size=(200, 3))
    X[rng.random((200, 3)) < 0.2] = np.nan
    g, h = rng.normal(size=200), np.ones(200)
    rows = np.sort(rng.choice(200, size=120, replace=False))
    params = TreeParams(max_depth=3, min_child_weight=0.0)

    subset = RegressionTree.fit(X, g, h, params, rows, presort(X, rows))
    sliced = RegressionTree.fit(X[rows], g[rows], h[rows], params)
    assert np.array_equal(subset.predict(X), sliced.predict(X))


def test_larger_lambda_shrinks_stump_leaves():
    X = np.array([[1.0], [2.0], [3.0], [4.0], [5.0]])
    g = np.array([-2.0, -1.0, 1.0, 1.5, 2.0])
    h = np.array([1.0, 0.5, 1.0, 2.0, 1.0])
    previous = None
    for lam in (0.0, 0.5, 1.0, 10.0, 100.0):
        tree = RegressionTree.fit(X, g, h, TreeParams(max_depth=1, min_child_weight=0.0, reg_lambda=lam))
        root = tree.nodes[0]
        assert root.threshold == 2.5
        weights = np.abs([tree.nodes[root.left].weight, tree.nodes[root.right].weight])
        if previous is not None:
            assert np.all(weights <= previous)
        previous = weights


def test_all_vitals_missing_encodings_agree():
    records = generate_cohort(CohortSpec(n_records=3000, missing_rate=0.3, seed=4))
    X, y = feature_matrix(records), np.array([r.acuity for r in records])
    model = train_multiclass(X[:2400], y[:2400], X[2400:], y[2400:], GBDTConfig(n_estimators=30, learning_rate=0.3))

    empty = raw_row("a", **{v: "" for v in VITALS})
    sentinel = raw_row("b", **{v: "NaN" for v in VITALS})
    parsed, rejects = parse_and_clean([empty, sentinel])
    assert rejects == []
    direct = feature_matrix([make_record(**{v: None for v in VITALS})])
    probs = model.predict_proba(np.vstack([feature_matrix(parsed), direct]))
    assert np.array_equal(probs[0], probs[1])
    assert np.array_equal(probs[0], probs[2])


# === Boosting ===


def test_additivity_per_round(toy):
    X, y, X_val, y_val = toy
    model = train_multiclass(X, y, X_val, y_val, GBDTConfig(n_estimators=15, learning_rate=0.3))
    staged = list(model.staged_margins(X_val))
    for t, round_trees in enumerate(model.trees, start=1):
        expected = staged[t - 1].copy()
        for k, tree in enumerate(round_trees):
            expected[:, k] = expected[:, k] + model.learning_rate * tree.predict(X_val)
        assert np.array_equal(staged[t], expected)
        assert np.array_equal(model.predict_margin(X_val, iteration=t), staged[t])


def test_separable_reaches_full_training_accuracy(toy):
    X, y, X_val, y_val = toy
    cfg = GBDTConfig(n_estimators=100, learning_rate=0.3, early_stopping_rounds=100)
    model = train_multiclass(X, y, X_val, y_val, cfg)
    preds = np.argmax(model.predict_margin(X, iteration=model.n_rounds), axis=1) + 1
    assert np.mean(preds == y) == 1.0


def test_base_score_is_log_prior(toy):
    X, y, X_val, y_val = toy
    model = train_multiclass(X, y, X_val, y_val, GBDTConfig(n_estimators=1))
    prior = np.bincount(y - 1, minlength=5) / len(y)
    assert np.allclose(softmax(model.base_score), prior)


def test_seed_determinism(toy):
    X, y, X_val, y_val = toy
    cfg = GBDTConfig(n_estimators=10, learning_rate=0.3, subsample=0.7, seed=11)
    a = train_multiclass(X, y, X_val, y_val, cfg)
    b = train_multiclass(X, y, X_val, y_val, cfg)
    assert np.array_equal(a.predict_proba(X_val), b.predict_proba(X_val))
    assert model_to_dict(a) == model_to_dict(b)


def test_early_stopping_keeps_best_iteration(toy):
    X, y, X_val, y_val = toy
    cfg = GBDTConfig(n_estimators=500, learning_rate=0.3, early_stopping_rounds=5)
    model = train_multiclass(X, y, X_val, y_val, cfg)
    assert model.best_iteration <= model.n_rounds
    assert model.n_rounds - model.best_iteration <= 5
    assert model.eval_history[model.best_iteration] == min(model.eval_history)


def test_early_stopper_patience():
    stopper = EarlyStopper(2)
    assert not stopper.update(0, 1.0)
    assert not stopper.update(1, 0.5)
    assert not stopper.update(2, 0.6)
    assert stopper.update(3, 0.7)
    assert stopper.best_iteration == 1


def test_absent_class_errors(rng):
    X, y = banded(100, rng)
    y[y == 5] = 4
    with pytest.raises(TrainingError, match="class 5"):
        train_multiclass(X, y, X, y)


def test_empty_validation_errors(toy):
    X, y, _, _ = toy
    with pytest.raises(TrainingError, match="validation"):
        train_ordinal(X, y, X[:0], y[:0])


def test_config_validation():
    with pytest.raises(ConfigError):
        GBDTConfig(n_estimators=0)
    with pytest.raises(ConfigError):
        GBDTConfig(learning_rate=1.5)
    with pytest.raises(ConfigError):
        GBDTConfig(reg_lambda=-1)
    with pytest.raises(ConfigError):
        GBDTConfig(eval_metric="mse").metric_for(Variant.MULTICLASS)


def test_zero_tree_model_is_uniform():
    model = GBDTModel(variant=Variant.MULTICLASS, config=GBDTConfig(), n_features=2, base_score=np.zeros(5))
    assert np.array_equal(model.predict_proba(np.array([[0.3, np.nan]])), np.full((1, 5), 0.2))


# === Ordinal ===


def test_ordinal_fits_bands(toy):
    X, y, X_val, y_val = toy
    model = train_ordinal(X, y, X_val, y_val, GBDTConfig(n_estimators=100, learning_rate=0.3))
    assert model.base_score[0] == pytest.approx(y.mean())
    assert np.mean(model.predict_level(X_val) == y_val) > 0.9


@pytest.mark.parametrize(
    "score, level",
    [(2.5, 3), (2.4999, 2), (-3.0, 1), (0.49, 1), (7.2, 5), (4.5, 5), (1.5, 2)],
)
def test_ordinal_decoding(score, level):
    assert ordinal_to_level(score) == level
    assert ordinal_levels(np.array([score]))[0] == level


def test_ordinal_nan_errors():
    with pytest.raises(DataError):
        ordinal_to_level(math.nan)
    with pytest.raises(DataError):
        ordinal_levels(np.array([1.0, np.nan]))


def test_constant_labels_predict_the_constant(rng):
    X = rng.normal(size=(60, 2))
    y = np.full(60, 3)
    model = train_ordinal(X, y, X[:20], y[:20], GBDTConfig(n_estimators=5, learning_rate=0.3))
    assert model.n_rounds >= 1
    scores = model.predict_margin(rng.normal(size=(10, 2)), iteration=model.n_rounds)[:, 0]
    assert np.allclose(scores, 3.0, atol=1e-6)


def test_monotone_toy_set_mse(rng):
    def monotone(n):
        x = rng.uniform(0, 6, size=n)
        return x[:, None], np.clip(np.round(x), 1, 5).astype(np.int64)

    X, y = monotone(400)
    X_val, y_val = monotone(100)
    X_test, y_test = monotone(200)
    model = train_ordinal(X, y, X_val, y_val, GBDTConfig(n_estimators=100, learning_rate=0.3))
    assert mean_squared_error(model.predict_score(X_test), y_test) < 0.05


# === Model files ===


def test_model_file_round_trip(toy, tmp_path):
    X, y, X_val, y_val = toy
    X = X.copy()
    X[::7, 0] = np.nan
    model = train_multiclass(X, y, X_val, y_val, GBDTConfig(n_estimators=8, learning_rate=0.3))
    path = tmp_path / "model.json"
    save_model(model, path)
    loaded = load_model(path)
    assert loaded.best_iteration == model.best_iteration
    assert np.array_equal(loaded.predict_proba(X), model.predict_proba(X))


def test_model_file_version_checked(toy):
    X, y, X_val, y_val = toy
    payload = model_to_dict(train_ordinal(X, y, X_val, y_val, GBDTConfig(n_estimators=2)))
    payload["version"] = 99
    with pytest.raises(DataError, match="version"):
        model_from_dict(payload)
