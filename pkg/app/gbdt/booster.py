"""Newton boosting for the tabular modality: multiclass softmax and ordinal regression."""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional

import numpy as np
from scipy.special import softmax

from app.constants import N_LEVELS
from app.errors import ConfigError, DataError, TrainingError
from app.gbdt.tree import RegressionTree, TreeParams, presort, restrict
from app.linear import one_hot
from app.metrics import mean_multiclass_log_loss, mean_squared_error

logger = logging.getLogger(__name__)

HESSIAN_FLOOR = 1e-16


class Variant(str, Enum):
    MULTICLASS = "multiclass"
    ORDINAL = "ordinal"


@dataclass(frozen=True)
class GBDTConfig:
    n_estimators: int = 500
    learning_rate: float = 0.05
    early_stopping_rounds: int = 25
    max_depth: int = 6
    min_child_weight: float = 1.0
    reg_lambda: float = 1.0
    gamma: float = 0.0
    subsample: float = 1.0
    eval_metric: str = "auto"
    seed: int = 0

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ConfigError("n_estimators must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ConfigError("learning_rate must be in (0, 1]")
        if self.early_stopping_rounds < 1:
            raise ConfigError("early_stopping_rounds must be >= 1")
        if self.max_depth < 0:
            raise ConfigError("max_depth must be >= 0")
        if self.reg_lambda < 0 or self.gamma < 0 or self.min_child_weight < 0:
            raise ConfigError("reg_lambda, gamma and min_child_weight must be >= 0")
        if not 0 < self.subsample <= 1:
            raise ConfigError("subsample must be in (0, 1]")
        if self.eval_metric not in ("auto", "mlogloss", "mse"):
            raise ConfigError(f"unknown eval_metric '{self.eval_metric}'")

    @property
    def tree_params(self) -> TreeParams:
        return TreeParams(
            max_depth=self.max_depth,
            min_child_weight=self.min_child_weight,
            reg_lambda=self.reg_lambda,
            gamma=self.gamma,
        )

    def metric_for(self, variant: Variant) -> str:
        default = "mlogloss" if variant is Variant.MULTICLASS else "mse"
        metric = default if self.eval_metric == "auto" else self.eval_metric
        if metric != default:
            raise ConfigError(f"eval_metric '{metric}' does not fit the {variant.value} variant")
        return metric


class EarlyStopper:
    """Tracks the best validation value; signals a stop after `patience` non-improving rounds."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_iteration = 0
        self.stale = 0

    def update(self, iteration: int, value: float) -> bool:
        if value < self.best:
            self.best = value
            self.best_iteration = iteration
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience


@dataclass
class GBDTModel:
    variant: Variant
    config: GBDTConfig
    n_features: int
    base_score: np.ndarray
    trees: list[list[RegressionTree]] = field(default_factory=list)
    best_iteration: int = 0
    eval_history: list[float] = field(default_factory=list)

    @property
    def learning_rate(self) -> float:
        return self.config.learning_rate

    @property
    def n_rounds(self) -> int:
        return len(self.trees)

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise DataError(f"expected {self.n_features} features, got {X.shape[1]}")
        return X

    def staged_margins(self, X: np.ndarray) -> Iterator[np.ndarray]:
        """Margins after rounds 0..n_rounds; each step adds learning_rate * f_t(x)."""
        X = self._check(X)
        margins = np.tile(self.base_score, (X.shape[0], 1))
        yield margins.copy()
        for round_trees in self.trees:
            for k, tree in enumerate(round_trees):
                margins[:, k] = margins[:, k] + self.learning_rate * tree.predict(X)
            yield margins.copy()

    def predict_margin(self, X: np.ndarray, iteration: Optional[int] = None) -> np.ndarray:
        iteration = self.best_iteration if iteration is None else iteration
        if not 0 <= iteration <= self.n_rounds:
            raise DataError(f"iteration {iteration} outside 0..{self.n_rounds}")
        X = self._check(X)
        margins = np.tile(self.base_score, (X.shape[0], 1))
        for round_trees in self.trees[:iteration]:
            for k, tree in enumerate(round_trees):
                margins[:, k] = margins[:, k] + self.learning_rate * tree.predict(X)
        return margins

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        if self.variant is not Variant.MULTICLASS:
            raise TrainingError("probabilities are only defined for the multiclass variant")
        return softmax(self.predict_margin(X), axis=1)

    def predict_score(self, X: np.ndarray) -> np.ndarray:
        if self.variant is not Variant.ORDINAL:
            raise TrainingError("scores are only defined for the ordinal variant")
        return self.predict_margin(X)[:, 0]

    def predict_level(self, X: np.ndarray) -> np.ndarray:
        if self.variant is Variant.MULTICLASS:
            return np.argmax(self.predict_proba(X), axis=1) + 1
        return ordinal_levels(self.predict_score(X))


def ordinal_to_level(score: float) -> int:
    """Round half away from zero, then clamp to 1..5."""
    if math.isnan(score):
        raise DataError("cannot decode a NaN ordinal score")
    rounded = math.copysign(math.floor(abs(score) + 0.5), score)
    return int(min(max(rounded, 1), N_LEVELS))


def ordinal_levels(scores: np.ndarray) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    if np.isnan(scores).any():
        raise DataError("cannot decode a NaN ordinal score")
    rounded = np.sign(scores) * np.floor(np.abs(scores) + 0.5)
    return np.clip(rounded, 1, N_LEVELS).astype(np.int64)


def _validate(X, y, X_val, y_val):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    X_val = np.asarray(X_val, dtype=np.float64)
    y_val = np.asarray(y_val, dtype=np.int64)
    if X.shape[0] == 0:
        raise TrainingError("empty training set")
    if X_val.shape[0] == 0:
        raise TrainingError("validation required for early stopping")
    if X.shape[0] != y.shape[0] or X_val.shape[0] != y_val.shape[0]:
        raise DataError("feature and label lengths differ")
    if X_val.shape[1] != X.shape[1]:
        raise DataError("training and validation feature counts differ")
    for labels in (y, y_val):
        if labels.min() < 1 or labels.max() > N_LEVELS:
            raise DataError(f"labels must lie in 1..{N_LEVELS}")
    return X, y, X_val, y_val


def _round_rows(rng: np.random.Generator, n: int, subsample: float) -> Optional[np.ndarray]:
    if subsample >= 1.0:
        return None
    size = max(1, int(math.floor(subsample * n)))
    return np.sort(rng.choice(n, size=size, replace=False))


def _boost(model: GBDTModel, X, Y, X_val, y_val, gradients, metric) -> GBDTModel:
    cfg = model.config
    params = cfg.tree_params
    rng = np.random.default_rng(cfg.seed)
    margins = np.tile(model.base_score, (X.shape[0], 1))
    margins_val = np.tile(model.base_score, (X_val.shape[0], 1))

    all_columns = presort(X)
    stopper = EarlyStopper(cfg.early_stopping_rounds)
    value = metric(margins_val, y_val)
    model.eval_history.append(value)
    stopper.update(0, value)

    for t in range(1, cfg.n_estimators + 1):
        rows = _round_rows(rng, X.shape[0], cfg.subsample)
        columns = all_columns
        if rows is not None:
            member = np.zeros(X.shape[0], dtype=bool)
            member[rows] = True
            columns = restrict(all_columns, member)
        g, h = gradients(margins, Y)
        round_trees = []
        for k in range(margins.shape[1]):
            tree = RegressionTree.fit(X, g[:, k], h[:, k], params, rows, columns)
            margins[:, k] = margins[:, k] + cfg.learning_rate * tree.predict(X)
            margins_val[:, k] = margins_val[:, k] + cfg.learning_rate * tree.predict(X_val)
            round_trees.append(tree)
        model.trees.append(round_trees)

        value = metric(margins_val, y_val)
        model.eval_history.append(value)
        logger.debug("[%d] valid-%s = %.6f", t, cfg.metric_for(model.variant), value)
        if stopper.update(t, value):
            logger.info(
                "early stop at round %d, best round %d (%.5f)",
                t,
                stopper.best_iteration,
                stopper.best,
            )
            break

    model.best_iteration = stopper.best_iteration
    return model


def _softmax_gradients(margins, Y):
    P = softmax(margins, axis=1)
    return P - Y, np.maximum(P * (1.0 - P), HESSIAN_FLOOR)


def _squared_gradients(margins, y):
    return margins - y, np.ones_like(margins)


def train_multiclass(X, y, X_val, y_val, cfg: Optional[GBDTConfig] = None) -> GBDTModel:
    cfg = cfg or GBDTConfig()
    cfg.metric_for(Variant.MULTICLASS)
    X, y, X_val, y_val = _validate(X, y, X_val, y_val)
    counts = np.bincount(y - 1, minlength=N_LEVELS)
    absent = np.flatnonzero(counts == 0)
    if absent.size:
        raise TrainingError(f"class {absent[0] + 1} absent from training data")

    model = GBDTModel(
        variant=Variant.MULTICLASS,
        config=cfg,
        n_features=X.shape[1],
        base_score=np.log(counts / counts.sum()),
    )

    def metric(margins_val, labels):
        return mean_multiclass_log_loss(softmax(margins_val, axis=1), labels)

    return _boost(model, X, one_hot(y), X_val, y_val, _softmax_gradients, metric)


def train_ordinal(X, y, X_val, y_val, cfg: Optional[GBDTConfig] = None) -> GBDTModel:
    cfg = cfg or GBDTConfig()
    cfg.metric_for(Variant.ORDINAL)
    X, y, X_val, y_val = _validate(X, y, X_val, y_val)
    target = y.astype(np.float64)[:, None]

    model = GBDTModel(
        variant=Variant.ORDINAL,
        config=cfg,
        n_features=X.shape[1],
        base_score=np.array([target.mean()]),
    )

    def metric(margins_val, labels):
        return mean_squared_error(margins_val[:, 0], labels)

    return _boost(model, X, target, X_val, y_val, _squared_gradients, metric)


def predict_proba(model: GBDTModel, features) -> np.ndarray:
    return model.predict_proba(features)
