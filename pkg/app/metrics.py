"""Ordinal and multiclass evaluation metrics."""

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from app.constants import N_LEVELS
from app.errors import DataError

LOG_LOSS_EPS = 1e-15


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts; rows are true levels, columns predicted levels."""

    counts: np.ndarray

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def transpose(self) -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts.T.copy())

    def row_normalized(self) -> np.ndarray:
        rows = self.counts.sum(axis=1, keepdims=True).astype(np.float64)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(rows > 0, self.counts / rows, 0.0)


@dataclass(frozen=True)
class MetricBundle:
    qwk: float
    accuracy: float
    balanced_accuracy: float
    macro_f1: float
    mean_log_loss: Optional[float] = None
    mse: Optional[float] = None

    def as_dict(self) -> dict:
        return asdict(self)


def _check_labels(y_true, y_pred, k: int) -> tuple[np.ndarray, np.ndarray]:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise DataError(f"length mismatch: {y_true.shape[0]} true vs {y_pred.shape[0]} predicted")
    for name, y in (("true", y_true), ("predicted", y_pred)):
        if y.size and (y.min() < 1 or y.max() > k):
            raise DataError(f"{name} label out of range 1..{k}")
    return y_true, y_pred


def confusion_matrix(y_true, y_pred, k: int = N_LEVELS) -> ConfusionMatrix:
    y_true, y_pred = _check_labels(y_true, y_pred, k)
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (y_true - 1, y_pred - 1), 1)
    return ConfusionMatrix(counts)


def quadratic_weights(k: int) -> np.ndarray:
    i = np.arange(k)
    return (i[:, None] - i[None, :]) ** 2 / (k - 1) ** 2


def qwk(matrix: ConfusionMatrix) -> float:
    """Quadratic weighted kappa on proportion-normalized observed and expected tables."""
    total = matrix.total
    if total <= 0:
        raise DataError("cannot compute kappa on an empty confusion matrix")
    observed = matrix.counts / total
    expected = np.outer(observed.sum(axis=1), observed.sum(axis=0))
    weights = quadratic_weights(matrix.k)

    numerator = float(np.sum(weights * observed))
    denominator = float(np.sum(weights * expected))
    if denominator == 0.0:
        off_diagonal = observed.sum() - np.trace(observed)
        if off_diagonal == 0:
            return 1.0
        raise DataError("kappa undefined: expected disagreement is zero")
    return 1.0 - numerator / denominator


def _f1_scores(counts: np.ndarray) -> np.ndarray:
    tp = np.diag(counts).astype(np.float64)
    predicted = counts.sum(axis=0)
    actual = counts.sum(axis=1)
    denom = predicted + actual
    # 2tp / (2tp + fp + fn); undefined classes score 0
    return np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)


def classification_report(y_true, y_pred, k: int = N_LEVELS) -> MetricBundle:
    matrix = confusion_matrix(y_true, y_pred, k)
    counts = matrix.counts
    if matrix.total == 0:
        raise DataError("cannot score an empty prediction set")

    accuracy = float(np.trace(counts) / matrix.total)
    present = counts.sum(axis=1) > 0
    recalls = np.diag(matrix.row_normalized())
    balanced = float(np.mean(recalls[present]))
    macro_f1 = float(np.mean(_f1_scores(counts)))

    return MetricBundle(
        qwk=qwk(matrix),
        accuracy=accuracy,
        balanced_accuracy=balanced,
        macro_f1=macro_f1,
    )


def mean_multiclass_log_loss(prob_rows, y_true) -> float:
    probs = np.asarray(prob_rows, dtype=np.float64)
    y_true = np.asarray(y_true, dtype=np.int64)
    if probs.ndim != 2 or probs.shape[0] != y_true.shape[0]:
        raise DataError(f"probability rows {probs.shape} do not match {y_true.shape[0]} labels")
    k = probs.shape[1]
    if y_true.size and (y_true.min() < 1 or y_true.max() > k):
        raise DataError(f"label out of range 1..{k}")
    picked = np.clip(probs[np.arange(len(y_true)), y_true - 1], LOG_LOSS_EPS, 1 - LOG_LOSS_EPS)
    return float(-np.mean(np.log(picked)))


def mean_squared_error(scores, y_true) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    y_true = np.asarray(y_true, dtype=np.float64)
    if scores.shape != y_true.shape:
        raise DataError("score and label lengths differ")
    return float(np.mean((scores - y_true) ** 2))


def evaluate(y_true, y_pred, prob_rows=None, scores=None) -> MetricBundle:
    """Full bundle: classification metrics plus whichever loss the model supports."""
    bundle = classification_report(y_true, y_pred)
    log_loss = None if prob_rows is None else mean_multiclass_log_loss(prob_rows, y_true)
    mse = mean_squared_error(
        np.asarray(y_pred, dtype=np.float64) if scores is None else scores, y_true
    )
    return MetricBundle(
        qwk=bundle.qwk,
        accuracy=bundle.accuracy,
        balanced_accuracy=bundle.balanced_accuracy,
        macro_f1=bundle.macro_f1,
        mean_log_loss=log_loss,
        mse=mse,
    )
