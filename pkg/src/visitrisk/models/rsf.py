"""Random survival forest: log-rank splits, Nelson-Aalen terminal nodes."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from .base import RiskModel

DEFAULT_N_TREES = 200
DEFAULT_MIN_NODE = 10
MAX_SPLIT_CANDIDATES = 32


@dataclass
class NelsonAalen:
    """Cumulative hazard estimate over the event times of one node."""

    times: np.ndarray
    cumhaz: np.ndarray

    def at(self, t: float) -> float:
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        return float(self.cumhaz[idx]) if idx >= 0 else 0.0


def nelson_aalen(duration, event) -> NelsonAalen:
    """d_k / n_k increments at each distinct event time."""
    duration = np.asarray(duration, dtype=float)
    event = np.asarray(event).astype(bool)
    times = np.unique(duration[event])
    if times.size == 0:
        return NelsonAalen(np.empty(0), np.empty(0))
    at_risk = np.array([np.sum(duration >= t) for t in times], dtype=float)
    d = np.array([np.sum(event & (duration == t)) for t in times], dtype=float)
    return NelsonAalen(times, np.cumsum(d / at_risk))


def _logrank_scan(values, duration, event, min_node, max_candidates):
    """Log-rank statistic for every candidate threshold of one feature.

    Returns (thresholds, stats, valid) where valid requires both children to
    hold at least min_node rows and the statistic variance to be positive.
    Candidate midpoints are selected by rank, so any strictly monotone
    transform of the feature yields the same partitions.
    """
    uniq = np.unique(values)
    if uniq.size < 2:
        return None
    midpoints = (uniq[:-1] + uniq[1:]) / 2.0
    if midpoints.size > max_candidates:
        sel = np.unique(np.linspace(0, midpoints.size - 1, max_candidates).round().astype(int))
        midpoints = midpoints[sel]
    B = midpoints.size

    taus = np.unique(duration[event])
    if taus.size == 0:
        return None
    K = taus.size
    bins = np.searchsorted(midpoints, values, side="left")  # v <= thr[k] iff bin <= k
    rank = np.searchsorted(taus, duration, side="right")

    counts = np.zeros((B + 1, K + 1))
    np.add.at(counts, (bins, rank), 1.0)
    suffix = np.cumsum(counts[:, ::-1], axis=1)[:, ::-1]
    at_risk = suffix[:, 1:]  # at risk at tau_k requires rank >= k+1

    deaths = np.zeros((B + 1, K))
    ev = np.flatnonzero(event)
    pos = np.searchsorted(taus, duration[ev], side="left")
    np.add.at(deaths, (bins[ev], pos), 1.0)

    n1 = np.cumsum(at_risk, axis=0)[:B]
    d1 = np.cumsum(deaths, axis=0)[:B]
    nt = at_risk.sum(axis=0)
    dt = deaths.sum(axis=0)

    frac = np.divide(n1, nt, out=np.zeros_like(n1), where=nt > 0)
    num = np.sum(d1 - dt * frac, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        var_terms = dt * frac * (1.0 - frac) * (nt - dt) / (nt - 1.0)
    var_terms = np.where(nt > 1.0, var_terms, 0.0)
    var = np.sum(var_terms, axis=1)

    stats = np.divide(num * num, var, out=np.zeros_like(num), where=var > 1e-12)
    left_counts = np.cumsum(np.bincount(bins, minlength=B + 1))[:B]
    valid = (left_counts >= min_node) & (values.size - left_counts >= min_node) & (var > 1e-12)
    return midpoints, stats, valid


def _build_tree(X, duration, event, rng, mtry, min_node, max_candidates):
    d = X.shape[1]

    def grow(rows):
        dur = duration[rows]
        ev = event[rows]
        if rows.size < 2 * min_node or not ev.any():
            return {"leaf": nelson_aalen(dur, ev)}
        features = rng.choice(d, size=min(mtry, d), replace=False)
        best = None
        for j in features:
            scan = _logrank_scan(X[rows, j], dur, ev, min_node, max_candidates)
            if scan is None:
                continue
            thresholds, stats, valid = scan
            if not valid.any():
                continue
            stats = np.where(valid, stats, -np.inf)
            k = int(np.argmax(stats))
            if stats[k] > 0 and (best is None or stats[k] > best[0]):
                best = (float(stats[k]), int(j), float(thresholds[k]))
        if best is None:
            return {"leaf": nelson_aalen(dur, ev)}
        _, feat, thr = best
        go_left = X[rows, feat] <= thr
        return {
            "feature": feat,
            "threshold": thr,
            "left": grow(rows[go_left]),
            "right": grow(rows[~go_left]),
        }

    return grow(np.arange(X.shape[0]))


def _tree_chf_at(tree, X, t) -> np.ndarray:
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        node = tree
        while "leaf" not in node:
            node = node["left"] if X[i, node["feature"]] <= node["threshold"] else node["right"]
        out[i] = node["leaf"].at(t)
    return out


def _tree_signature(node, parts):
    if "leaf" in node:
        parts.append("L")
        return
    parts.append(f"S{node['feature']}")
    _tree_signature(node["left"], parts)
    _tree_signature(node["right"], parts)


class RSFModel(RiskModel):
    kind = "rsf"

    def __init__(self, feature_names, trees, horizon: int = 180):
        super().__init__(feature_names)
        self.trees = trees
        self.horizon = int(horizon)

    def ensemble_chf_at(self, X, t) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += _tree_chf_at(tree, X, t)
        return total / len(self.trees)

    def score_matrix(self, X) -> np.ndarray:
        return 1.0 - np.exp(-self.ensemble_chf_at(X, self.horizon))

    def score_history(self, history) -> float:
        return float(self.score_matrix(history[-1:, :])[0])

    def structure_signature(self) -> tuple:
        """Split-feature skeleton of each tree, for structural comparisons."""
        sigs = []
        for tree in self.trees:
            parts: list = []
            _tree_signature(tree, parts)
            sigs.append("".join(parts))
        return tuple(sigs)

    def to_dict(self) -> dict:
        def encode(node):
            if "leaf" in node:
                return {"chf_h": node["leaf"].at(self.horizon)}
            return {
                "feature": node["feature"],
                "threshold": node["threshold"],
                "left": encode(node["left"]),
                "right": encode(node["right"]),
            }

        return {
            "kind": self.kind,
            "feature_names": list(self.feature_names),
            "horizon": self.horizon,
            "trees": [encode(t) for t in self.trees],
        }

    @classmethod
    def from_dict(cls, data) -> "RSFModel":
        # Serialized leaves keep the hazard at the scoring horizon only.
        def decode(node):
            if "chf_h" in node:
                value = float(node["chf_h"])
                return {"leaf": NelsonAalen(np.array([0.0]), np.array([value]))}
            return {
                "feature": int(node["feature"]),
                "threshold": float(node["threshold"]),
                "left": decode(node["left"]),
                "right": decode(node["right"]),
            }

        return cls(tuple(data["feature_names"]),
                   [decode(t) for t in data["trees"]], data["horizon"])


def fit_rsf(X, duration, event, *, feature_names, n_trees: int = DEFAULT_N_TREES,
            mtry: int | None = None, min_node: int = DEFAULT_MIN_NODE,
            seed: int = 0, horizon: int = 180, bootstrap: bool = True,
            max_split_candidates: int = MAX_SPLIT_CANDIDATES) -> RSFModel:
    """Grow de-correlated survival trees on bootstrap samples.

    Each split maximizes the two-sample log-rank statistic over mtry randomly
    drawn candidate features; terminal nodes hold Nelson-Aalen cumulative
    hazard curves and the ensemble averages them.
    """
    X = np.asarray(X, dtype=float)
    duration = np.asarray(duration, dtype=float)
    event = np.asarray(event).astype(bool)
    n, d = X.shape
    if duration.shape[0] != n or event.shape[0] != n:
        raise ConfigError("X, duration, and event shapes do not match")
    if int(event.sum()) < 1:
        raise ConfigError("RSF fit requires at least one event")
    if min_node > n:
        raise ConfigError(f"min_node={min_node} exceeds the {n} available rows")
    if len(feature_names) != d:
        raise ConfigError("feature_names length does not match X")
    if mtry is None:
        mtry = int(math.ceil(math.sqrt(d)))

    trees = []
    for tree_idx in range(n_trees):
        rng = np.random.default_rng([np.uint64(seed), np.uint64(tree_idx)])
        if bootstrap:
            idx = rng.integers(0, n, size=n)
        else:
            idx = np.arange(n)
        trees.append(
            _build_tree(X[idx], duration[idx], event[idx], rng, mtry,
                        min_node, max_split_candidates)
        )
    return RSFModel(feature_names, trees, horizon)
