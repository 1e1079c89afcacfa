"""TF-IDF with the unsmoothed idf = ln(N / df)."""

import logging
from collections import Counter
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import sparse

from app.errors import ConfigError, TrainingError
from app.text.tokenize import ngrams, tokenize

logger = logging.getLogger(__name__)


class TfidfVectorizer:
    def __init__(self, ngram_range: tuple[int, int] = (1, 3), min_df: int = 1):
        lo, hi = ngram_range
        if lo < 1 or hi < lo:
            raise ConfigError(f"invalid n-gram range {ngram_range}")
        if min_df < 1:
            raise ConfigError(f"min_df must be >= 1, got {min_df}")
        self.ngram_range = (int(lo), int(hi))
        self.min_df = min_df
        self.vocabulary_: dict[str, int] = {}
        self.df_: Optional[np.ndarray] = None
        self.idf_: Optional[np.ndarray] = None
        self.n_documents_ = 0

    def analyze(self, text: str) -> list[str]:
        return ngrams(tokenize(text), self.ngram_range)

    def fit_terms(self, corpus: Sequence[Sequence[str]]) -> "TfidfVectorizer":
        """Fit on already n-grammed documents."""
        if not corpus:
            raise TrainingError("cannot fit TF-IDF on an empty corpus")
        df = Counter()
        for terms in corpus:
            df.update(set(terms))
        kept = sorted(t for t, c in df.items() if c >= self.min_df)
        self.vocabulary_ = {t: i for i, t in enumerate(kept)}
        self.df_ = np.array([df[t] for t in kept], dtype=np.int64)
        self.n_documents_ = len(corpus)
        self.idf_ = np.log(self.n_documents_ / self.df_.astype(np.float64))
        logger.debug("vocabulary of %d terms over %d notes", len(kept), self.n_documents_)
        return self

    def fit(self, texts: Iterable[str]) -> "TfidfVectorizer":
        return self.fit_terms([self.analyze(t) for t in texts])

    def transform_terms(
        self, corpus: Sequence[Sequence[str]], normalize: bool = True
    ) -> sparse.csr_matrix:
        if self.idf_ is None:
            raise TrainingError("vectorizer is not fitted")
        indptr, indices, data = [0], [], []
        for terms in corpus:
            counts = Counter(t for t in terms if t in self.vocabulary_)
            for term in sorted(counts, key=self.vocabulary_.__getitem__):
                column = self.vocabulary_[term]
                indices.append(column)
                data.append(counts[term] * self.idf_[column])
            indptr.append(len(indices))

        X = sparse.csr_matrix(
            (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64), indptr),
            shape=(len(corpus), len(self.vocabulary_)),
        )
        if normalize:
            X = l2_normalize(X)
        return X

    def transform(self, texts: Iterable[str], normalize: bool = True) -> sparse.csr_matrix:
        return self.transform_terms([self.analyze(t) for t in texts], normalize=normalize)


def l2_normalize(X: sparse.csr_matrix) -> sparse.csr_matrix:
    X = X.copy()
    norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
    row_norms = np.repeat(norms, np.diff(X.indptr))
    nonzero = row_norms > 0
    X.data[nonzero] = X.data[nonzero] / row_norms[nonzero]
    return X


def fit_tfidf(
    corpus: Sequence[Sequence[str]], ngram_range: tuple[int, int] = (1, 3), min_df: int = 1
) -> TfidfVectorizer:
    return TfidfVectorizer(ngram_range=ngram_range, min_df=min_df).fit_terms(corpus)


def tfidf_transform(vectorizer: TfidfVectorizer, text: str, normalize: bool = True):
    """Single note as a 1 x V sparse row."""
    return vectorizer.transform([text], normalize=normalize)
