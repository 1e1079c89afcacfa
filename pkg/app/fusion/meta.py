"""Softmax meta-classifier over stacked modality probabilities."""

import logging
import math
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np
from scipy.special import softmax

from app.errors import DataError, TrainingError
from app.fusion.dropout import DropoutPolicy, apply_modality_dropout
from app.fusion.stacking import StackedFeatures
from app.linear import SoftmaxRegression

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetaConfig:
    C: float = 1.0
    max_iter: int = 1000
    # optimizer passes under dropout, each with freshly drawn masks
    passes: int = 10


class MetaClassifier(SoftmaxRegression):
    def __init__(self, C: float = 1.0, max_iter: int = 1000, tol: float = 1e-5):
        super().__init__(C=C, max_iter=max_iter, tol=tol)
        self.policy: Optional[DropoutPolicy] = None

    def predict_proba(self, X) -> np.ndarray:
        if isinstance(X, StackedFeatures):
            X = X.values
        return super().predict_proba(np.asarray(X, dtype=np.float64))

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1) + 1


def dropout_passes(
    stacked: StackedFeatures, policy: DropoutPolicy, passes: int
) -> Iterator[StackedFeatures]:
    """One freshly masked copy of the training set per optimizer pass, all from the policy seed."""
    rng = np.random.default_rng(policy.seed)
    for _ in range(passes):
        yield apply_modality_dropout(stacked, policy, rng)


def train_meta(
    stacked_train: StackedFeatures,
    labels,
    cfg: Optional[MetaConfig] = None,
    policy: Optional[DropoutPolicy] = None,
) -> MetaClassifier:
    """Without dropout this is one L-BFGS fit from zeros.

    With dropout, each pass draws new masks and continues L-BFGS from the
    previous pass's weights; `max_iter` is shared out across the passes.
    """
    cfg = cfg or MetaConfig()
    policy = policy or DropoutPolicy.none()
    labels = np.asarray(labels, dtype=np.int64)
    if len(stacked_train) == 0:
        raise TrainingError("empty meta-training set")
    if len(stacked_train) != labels.shape[0]:
        raise DataError(f"{len(stacked_train)} stacked rows but {labels.shape[0]} labels")
    if cfg.passes < 1:
        raise TrainingError("meta training needs at least one pass")

    meta = MetaClassifier(C=cfg.C, max_iter=cfg.max_iter)
    if policy.is_noop:
        meta.fit(stacked_train.values, labels)
        total = meta.n_iter_
    else:
        per_pass = max(1, math.ceil(cfg.max_iter / cfg.passes))
        init, total = None, 0
        for masked in dropout_passes(stacked_train, policy, cfg.passes):
            meta.fit(masked.values, labels, init=init, max_iter=per_pass)
            init, total = meta.params, total + meta.n_iter_
        meta.n_iter_ = total
    meta.policy = policy
    logger.debug(
        "meta fit (p_tab=%.2f, p_text=%.2f) in %d iterations", policy.p_tab, policy.p_text, total
    )
    return meta


def predict_meta(meta: MetaClassifier, a) -> np.ndarray:
    """softmax(W a + b); a single stacked row gives a 5-vector."""
    if meta.coef_ is None:
        raise TrainingError("meta-classifier is not fitted")
    values = a.values if isinstance(a, StackedFeatures) else np.asarray(a, dtype=np.float64)
    single = values.ndim == 1
    probs = softmax(np.atleast_2d(values) @ meta.coef_.T + meta.intercept_, axis=1)
    return probs[0] if single else probs
