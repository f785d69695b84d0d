"""Cox proportional hazards on landmarked rows, Breslow ties and baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, TrainingError
from .base import RiskModel


@dataclass
class BaselineHazard:
    """Breslow cumulative baseline hazard on the event-time grid."""

    times: np.ndarray
    cumhaz: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.cumhaz) < 0):
            raise ConfigError("cumulative baseline hazard must be non-decreasing")

    def at(self, t: float) -> float:
        """Right-continuous step lookup; 0 before the first event time."""
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        return float(self.cumhaz[idx]) if idx >= 0 else 0.0


class CoxModel(RiskModel):
    kind = "cox"

    def __init__(self, feature_names, coef, baseline: BaselineHazard,
                 horizon: int = 180):
        super().__init__(feature_names)
        self.coef = np.asarray(coef, dtype=float)
        self.baseline = baseline
        self.horizon = int(horizon)

    def score_matrix(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        h0 = self.baseline.at(self.horizon)
        return 1.0 - np.exp(-h0 * np.exp(X @ self.coef))

    def score_history(self, history) -> float:
        return float(self.score_matrix(history[-1:, :])[0])

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "feature_names": list(self.feature_names),
            "coef": self.coef.tolist(),
            "baseline_times": self.baseline.times.tolist(),
            "baseline_cumhaz": self.baseline.cumhaz.tolist(),
            "horizon": self.horizon,
        }

    @classmethod
    def from_dict(cls, data) -> "CoxModel":
        baseline = BaselineHazard(
            np.asarray(data["baseline_times"], dtype=float),
            np.asarray(data["baseline_cumhaz"], dtype=float),
        )
        return cls(tuple(data["feature_names"]), data["coef"], baseline,
                   data["horizon"])


def _partial_loglik_terms(X, duration, event, coef):
    """Penalty-free partial log-likelihood, gradient, and Hessian (Breslow).

    Rows must be sorted by duration descending so that prefix cumulative sums
    equal risk-set sums.
    """
    eta = X @ coef
    if not np.all(np.isfinite(eta)):
        raise TrainingError("non-finite linear predictor in Cox fit")
    # Stabilize exp by centering; partial likelihood is shift-invariant.
    shift = eta.max()
    w = np.exp(eta - shift)
    cum_w = np.cumsum(w)
    cum_wx = np.cumsum(w[:, None] * X, axis=0)
    cum_wxx = np.cumsum(w[:, None, None] * (X[:, :, None] * X[:, None, :]), axis=0)

    loglik = 0.0
    grad = np.zeros(X.shape[1])
    hess = np.zeros((X.shape[1], X.shape[1]))
    event_idx = np.flatnonzero(event)
    unique_times, first_pos = np.unique(-duration[event_idx], return_index=True)
    # duration sorted descending -> risk set at time t is the prefix of rows
    # with duration >= t; last such row index per unique event time:
    for t_neg, _ in zip(unique_times, first_pos):
        t = -t_neg
        tied = event_idx[duration[event_idx] == t]
        k = int(np.searchsorted(-duration, -t, side="right")) - 1
        s0 = cum_w[k]
        s1 = cum_wx[k]
        s2 = cum_wxx[k]
        d_t = len(tied)
        xsum = X[tied].sum(axis=0)
        loglik += float(eta[tied].sum()) - d_t * (np.log(s0) + shift)
        grad += xsum - d_t * s1 / s0
        mean = s1 / s0
        hess -= d_t * (s2 / s0 - np.outer(mean, mean))
    return loglik, grad, hess


def fit_cox(X, duration, event, l2_weight: float = 0.0, *, feature_names,
            horizon: int = 180, tol: float = 1e-6, max_iter: int = 100) -> CoxModel:
    """Maximize the Breslow partial likelihood by Newton-Raphson.

    duration is the residual time from each landmark visit to the outcome
    day, event is 1 for a recorded death. Convergence requires the penalized
    score (gradient) norm below tol.
    """
    X = np.asarray(X, dtype=float)
    duration = np.asarray(duration, dtype=float)
    event = np.asarray(event).astype(bool)
    if X.ndim != 2 or X.shape[0] != duration.shape[0] != event.shape[0]:
        raise ConfigError("X, duration, and event shapes do not match")
    if np.any(duration < 0):
        raise ConfigError("negative duration")
    if int(event.sum()) < 1:
        raise ConfigError("Cox fit requires at least one event")
    if len(feature_names) != X.shape[1]:
        raise ConfigError("feature_names length does not match X")

    order = np.argsort(-duration, kind="stable")
    Xs, ds, es = X[order], duration[order], event[order]
    d = X.shape[1]
    coef = np.zeros(d)

    loglik, grad, hess = _partial_loglik_terms(Xs, ds, es, coef)
    for _ in range(max_iter):
        pen_loglik = loglik - 0.5 * l2_weight * float(coef @ coef)
        pen_grad = grad - l2_weight * coef
        if float(np.linalg.norm(pen_grad)) < tol:
            break
        pen_hess = hess - l2_weight * np.eye(d)
        try:
            step = np.linalg.solve(pen_hess, -pen_grad)
        except np.linalg.LinAlgError:
            step = -pen_grad
        # Step-halving keeps the penalized log-likelihood non-decreasing.
        scale = 1.0
        for _half in range(40):
            new_coef = coef + scale * step
            new_loglik, new_grad, new_hess = _partial_loglik_terms(Xs, ds, es, new_coef)
            if new_loglik - 0.5 * l2_weight * float(new_coef @ new_coef) >= pen_loglik - 1e-12:
                break
            scale *= 0.5
        else:
            raise TrainingError("Cox Newton step failed to improve the likelihood")
        coef, loglik, grad, hess = new_coef, new_loglik, new_grad, new_hess
    else:
        raise TrainingError(
            f"Cox fit did not reach gradient norm < {tol:g} in {max_iter} iterations"
        )

    baseline = _breslow_baseline(Xs, ds, es, coef)
    return CoxModel(feature_names, coef, baseline, horizon)


def _breslow_baseline(Xs, ds, es, coef) -> BaselineHazard:
    """Cumulative baseline hazard increments d_t / sum(risk set exp(eta))."""
    eta = Xs @ coef
    w = np.exp(eta - eta.max())
    cum_w = np.cumsum(w)
    event_times = np.unique(ds[es])
    increments = np.empty_like(event_times)
    for i, t in enumerate(event_times):
        k = int(np.searchsorted(-ds, -t, side="right")) - 1
        d_t = int(np.sum(es & (ds == t)))
        increments[i] = d_t / (cum_w[k] * np.exp(eta.max()))
    return BaselineHazard(event_times, np.cumsum(increments))
