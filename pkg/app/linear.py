"""Multinomial logistic regression shared by the text baseline and the meta-classifier.

Objective: sum_i w_i * cross_entropy_i + ||W||^2 / (2C), bias unpenalized,
minimized with L-BFGS from a zero start.
"""

import logging
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.optimize import minimize
from scipy.special import logsumexp, softmax

from app.constants import N_LEVELS
from app.errors import ConfigError, DataError, TrainingError

logger = logging.getLogger(__name__)


def one_hot(levels: np.ndarray, k: int = N_LEVELS) -> np.ndarray:
    levels = np.asarray(levels, dtype=np.int64)
    out = np.zeros((levels.shape[0], k), dtype=np.float64)
    out[np.arange(levels.shape[0]), levels - 1] = 1.0
    return out


def unpack(params: np.ndarray, n_features: int, k: int = N_LEVELS):
    W = params[: k * n_features].reshape(k, n_features)
    b = params[k * n_features :]
    return W, b


def objective(
    params: np.ndarray,
    X,
    Y: np.ndarray,
    C: float,
    sample_weight: Optional[np.ndarray] = None,
) -> tuple[float, np.ndarray]:
    """Penalized cross-entropy and its gradient w.r.t. the flat (W, b) vector."""
    n, d = X.shape
    k = Y.shape[1]
    W, b = unpack(params, d, k)
    sw = np.ones(n) if sample_weight is None else sample_weight

    Z = np.asarray(X @ W.T) + b
    lse = logsumexp(Z, axis=1)
    loss = float(np.sum(sw * (lse - np.sum(Y * Z, axis=1)))) + 0.5 / C * float(
        np.sum(W * W)
    )

    R = sw[:, None] * (np.exp(Z - lse[:, None]) - Y)
    grad_W = np.asarray(X.T @ R).T + W / C
    grad_b = R.sum(axis=0)
    return loss, np.concatenate([grad_W.ravel(), grad_b])


class SoftmaxRegression:
    def __init__(self, C: float = 1.0, max_iter: int = 1000, tol: float = 1e-5, k: int = N_LEVELS):
        if not C > 0:
            raise ConfigError(f"inverse regularization C must be > 0, got {C}")
        if max_iter < 1:
            raise ConfigError(f"max_iter must be >= 1, got {max_iter}")
        self.C = C
        self.max_iter = max_iter
        self.tol = tol
        self.k = k
        self.coef_: Optional[np.ndarray] = None
        self.intercept_: Optional[np.ndarray] = None
        self.n_iter_ = 0
        self.converged_ = False

    def fit(
        self,
        X,
        levels,
        sample_weight: Optional[np.ndarray] = None,
        init: Optional[np.ndarray] = None,
        max_iter: Optional[int] = None,
    ):
        """L-BFGS from zeros, or from `init` (a previous `params`) when warm-starting."""
        levels = np.asarray(levels, dtype=np.int64)
        if X.shape[0] == 0:
            raise TrainingError("empty training set")
        if X.shape[0] != levels.shape[0]:
            raise DataError(f"{X.shape[0]} samples but {levels.shape[0]} labels")
        values = X.data if sparse.issparse(X) else np.asarray(X)
        if not np.all(np.isfinite(values)):
            raise DataError("features contain non-finite values")
        missing = sorted(set(range(1, self.k + 1)) - set(levels.tolist()))
        if missing:
            raise TrainingError(f"class {missing[0]} absent from training data")

        Y = one_hot(levels, self.k)
        d = X.shape[1]
        x0 = np.zeros(self.k * d + self.k) if init is None else np.asarray(init, dtype=np.float64).copy()
        if x0.shape != (self.k * d + self.k,):
            raise DataError(f"initial parameters have shape {x0.shape}, expected {(self.k * d + self.k,)}")
        result = minimize(
            objective,
            x0,
            args=(X, Y, self.C, sample_weight),
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": max_iter or self.max_iter, "gtol": self.tol, "ftol": 1e-15},
        )
        self.coef_, self.intercept_ = unpack(result.x, d, self.k)
        self.coef_ = self.coef_.copy()
        self.intercept_ = self.intercept_.copy()
        self.n_iter_ = int(result.nit)
        grad_norm = float(np.max(np.abs(result.jac))) if result.jac is not None else np.inf
        self.converged_ = grad_norm < self.tol
        if not self.converged_:
            logger.debug(
                "stopped after %d iterations, gradient max-norm %.3g", self.n_iter_, grad_norm
            )
        return self

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([self.coef_.ravel(), self.intercept_])

    def decision_function(self, X) -> np.ndarray:
        if self.coef_ is None:
            raise TrainingError("model is not fitted")
        return np.asarray(X @ self.coef_.T) + self.intercept_

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.decision_function(X), axis=1)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1) + 1
