"""Elastic-net logistic regression fitted by coordinate descent."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, TrainingError
from ..nnet import sigmoid
from .base import RiskModel


class LogisticModel(RiskModel):
    kind = "logistic"

    def __init__(self, feature_names, coef, intercept):
        super().__init__(feature_names)
        self.coef = np.asarray(coef, dtype=float)
        self.intercept = float(intercept)

    def score_matrix(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return sigmoid(X @ self.coef + self.intercept)

    def score_history(self, history) -> float:
        return float(self.score_matrix(history[-1:, :])[0])

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "feature_names": list(self.feature_names),
            "coef": self.coef.tolist(),
            "intercept": self.intercept,
        }

    @classmethod
    def from_dict(cls, data) -> "LogisticModel":
        return cls(tuple(data["feature_names"]), data["coef"], data["intercept"])


def _soft_threshold(value, penalty):
    if value > penalty:
        return value - penalty
    if value < -penalty:
        return value + penalty
    return 0.0


def _kkt_violation(X, y, coef, intercept, l1, l2):
    """Minimum-norm subgradient of the penalized mean log-loss."""
    n = X.shape[0]
    p = sigmoid(X @ coef + intercept)
    g = X.T @ (p - y) / n
    viol = np.empty_like(coef)
    for j in range(coef.size):
        if coef[j] != 0.0:
            viol[j] = g[j] + l2 * coef[j] + l1 * np.sign(coef[j])
        else:
            viol[j] = max(0.0, abs(g[j]) - l1)
    g0 = float(np.mean(p - y))
    return float(np.sqrt(np.sum(viol * viol) + g0 * g0))


def fit_logistic(X, y, l1_weight: float = 0.001, l2_weight: float = 0.001, *,
                 feature_names, tol: float = 1e-6, max_iter: int = 200) -> LogisticModel:
    """Minimize mean log-loss + l1*|coef| + l2/2*coef^2 (intercept unpenalized).

    Outer iteratively-reweighted least squares with cyclic coordinate descent
    and soft-thresholding inside, run until the minimum-norm subgradient of
    the penalized objective drops below tol. Censored visits must already be
    excluded from the inputs.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ConfigError("X and y shapes do not match")
    if l1_weight < 0 or l2_weight < 0:
        raise ConfigError("penalty weights must be non-negative")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos < 1 or n_neg < 1:
        raise ConfigError("need at least one positive and one negative label")
    n, d = X.shape
    if len(feature_names) != d:
        raise ConfigError("feature_names length does not match X")

    coef = np.zeros(d)
    intercept = float(np.log(n_pos / n_neg))
    eta = np.full(n, intercept)

    for _ in range(max_iter):
        p = sigmoid(eta)
        w = np.clip(p * (1.0 - p), 1e-6, None)
        z = eta + (y - p) / w
        wx2 = (w[:, None] * X * X).sum(axis=0) / n
        # Cyclic coordinate descent on the weighted least-squares surrogate.
        for _sweep in range(100):
            max_delta = 0.0
            resid = z - eta
            new_intercept = intercept + float(np.sum(w * resid)) / float(np.sum(w))
            eta += new_intercept - intercept
            resid = z - eta
            max_delta = max(max_delta, abs(new_intercept - intercept))
            intercept = new_intercept
            for j in range(d):
                rho = float(np.sum(w * X[:, j] * resid)) / n + wx2[j] * coef[j]
                new_cj = _soft_threshold(rho, l1_weight) / (wx2[j] + l2_weight)
                delta = new_cj - coef[j]
                if delta != 0.0:
                    eta += delta * X[:, j]
                    resid = z - eta
                    coef[j] = new_cj
                    max_delta = max(max_delta, abs(delta))
            if max_delta < 1e-12:
                break
        if not np.all(np.isfinite(coef)) or not np.isfinite(intercept):
            raise TrainingError("logistic fit produced non-finite coefficients")
        if _kkt_violation(X, y, coef, intercept, l1_weight, l2_weight) < tol:
            return LogisticModel(feature_names, coef, intercept)
        eta = X @ coef + intercept

    if l1_weight == 0.0 and l2_weight == 0.0:
        raise TrainingError(
            "logistic fit did not converge; the classes may be perfectly "
            "separated. Set l1_weight or l2_weight > 0."
        )
    raise TrainingError(
        f"logistic fit did not reach subgradient norm < {tol:g} in "
        f"{max_iter} iterations"
    )
