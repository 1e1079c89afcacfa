import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from app.errors import ConfigError
from app.linear import SoftmaxRegression
from app.metrics import classification_report
from app.text.tfidf import TfidfVectorizer

logger = logging.getLogger(__name__)


class LinearTextModel(SoftmaxRegression):
    """Softmax regression over L2-normalized TF-IDF rows."""

    def __init__(self, C: float = 0.1, max_iter: int = 1000, tol: float = 1e-5):
        super().__init__(C=C, max_iter=max_iter, tol=tol)


def train_text_linear(vectors, labels, C: float = 0.1, max_iter: int = 1000) -> LinearTextModel:
    return LinearTextModel(C=C, max_iter=max_iter).fit(vectors, labels)


@dataclass
class TfidfTextClassifier:
    vectorizer: TfidfVectorizer
    model: LinearTextModel

    @property
    def ngram_range(self) -> tuple[int, int]:
        return self.vectorizer.ngram_range

    @property
    def C(self) -> float:
        return self.model.C

    def predict_proba(self, texts: Sequence[str]) -> np.ndarray:
        return self.model.predict_proba(self.vectorizer.transform(texts))

    def predict(self, texts: Sequence[str]) -> np.ndarray:
        return np.argmax(self.predict_proba(texts), axis=1) + 1


def fit_text_classifier(
    texts: Sequence[str],
    labels,
    ngram_range: tuple[int, int] = (1, 3),
    C: float = 0.1,
    min_df: int = 1,
    max_iter: int = 1000,
) -> TfidfTextClassifier:
    vectorizer = TfidfVectorizer(ngram_range=ngram_range, min_df=min_df).fit(texts)
    model = train_text_linear(vectorizer.transform(texts), labels, C=C, max_iter=max_iter)
    return TfidfTextClassifier(vectorizer, model)


def select_text_linear(
    train_texts: Sequence[str],
    train_labels,
    val_texts: Sequence[str],
    val_labels,
    grid: Sequence[tuple[tuple[int, int], float]],
    min_df: int = 1,
    max_iter: int = 1000,
) -> tuple[TfidfTextClassifier, list[dict]]:
    """Fit every (ngram_range, C) pair; keep the best validation macro-F1.

    Ties go to the earlier grid entry.
    """
    if not grid:
        raise ConfigError("text model grid is empty")

    best, best_score, trials = None, -np.inf, []
    for ngram_range, C in grid:
        clf = fit_text_classifier(
            train_texts, train_labels, tuple(ngram_range), C, min_df=min_df, max_iter=max_iter
        )
        score = classification_report(val_labels, clf.predict(val_texts)).macro_f1
        trials.append({"ngram_range": tuple(ngram_range), "C": float(C), "macro_f1": score})
        logger.debug("ngram_range=%s C=%g valid macro-F1 %.4f", tuple(ngram_range), C, score)
        if score > best_score:
            best, best_score = clf, score

    logger.info(
        "selected ngram_range=%s C=%g (valid macro-F1 %.4f)", best.ngram_range, best.C, best_score
    )
    return best, trials
