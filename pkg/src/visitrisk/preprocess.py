"""Fold-local standardization and autoencoder imputation.

Both preprocessors record a fingerprint of the patients they were fitted on;
applying them to data from those patients with the unseen check enabled
raises :class:`LeakageError`. Imputation never alters observed values, and
both imputer kinds draw only on visits at or before the one being filled.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, LeakageError, TrainingError
from .nnet import MLP, Adam, masked_mse

TEMPORAL = "temporal_autoencoder"
DENOISING = "denoising_autoencoder"

HIDDEN_WIDTHS = (64, 32, 32, 64)
DEFAULT_WINDOW = 4  # current visit plus up to 3 previous
DEFAULT_CORRUPTION = 0.2


@dataclass(frozen=True)
class FoldFingerprint:
    """Identity of the training fold a preprocessor was fitted on."""

    patient_ids: frozenset
    digest: str

    @classmethod
    def from_patient_ids(cls, patient_ids):
        ids = frozenset(str(p) for p in patient_ids)
        digest = hashlib.sha256("\n".join(sorted(ids)).encode()).hexdigest()
        return cls(ids, digest)

    def assert_disjoint(self, patient_ids, context: str = "transform") -> None:
        overlap = self.patient_ids.intersection(str(p) for p in patient_ids)
        if overlap:
            sample = sorted(overlap)[:3]
            raise LeakageError(
                f"{context}: {len(overlap)} patient(s) were part of the "
                f"training fold this preprocessor was fitted on "
                f"(e.g. {', '.join(sample)})"
            )


def visits_to_matrix(visits) -> np.ndarray:
    """Stack LabeledVisit feature tuples into a float matrix, None -> nan."""
    n = len(visits)
    if n == 0:
        raise ConfigError("no visits supplied")
    d = len(visits[0].features)
    out = np.full((n, d), np.nan)
    for i, visit in enumerate(visits):
        for j, value in enumerate(visit.features):
            if value is not None:
                out[i, j] = float(value)
    return out


@dataclass
class Scaler:
    """Per-feature z-scoring fitted on training-fold observed values only."""

    feature_names: tuple
    means: np.ndarray
    stds: np.ndarray
    degenerate: tuple
    fingerprint: FoldFingerprint

    def transform(self, X, patient_ids=None) -> np.ndarray:
        """Standardize a (n, d) matrix; nan cells stay nan.

        When patient_ids is given, the fold fingerprint is checked and any
        overlap with the training fold aborts the run.
        """
        if patient_ids is not None:
            self.fingerprint.assert_disjoint(patient_ids, "scaler transform")
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != len(self.feature_names):
            raise ConfigError(
                f"scaler expects {len(self.feature_names)} features, "
                f"got {X.shape[-1]}"
            )
        return (X - self.means) / self.stds

    def inverse_transform(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.stds + self.means

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "degenerate": list(self.degenerate),
            "fingerprint": sorted(self.fingerprint.patient_ids),
        }

    @classmethod
    def from_dict(cls, data) -> "Scaler":
        return cls(
            feature_names=tuple(data["feature_names"]),
            means=np.asarray(data["means"], dtype=float),
            stds=np.asarray(data["stds"], dtype=float),
            degenerate=tuple(data["degenerate"]),
            fingerprint=FoldFingerprint.from_patient_ids(data["fingerprint"]),
        )


def fit_scaler(train_visits, feature_names) -> Scaler:
    """Estimate per-feature mean and sample standard deviation.

    Missing entries are ignored. Every feature needs at least two observed
    values; a constant feature gets std coerced to 1 with a warning so
    degenerate synthetic edge cases do not abort a run.
    """
    X = visits_to_matrix(train_visits)
    if X.shape[1] != len(feature_names):
        raise ConfigError("feature_names length does not match visit vectors")
    observed = np.sum(~np.isnan(X), axis=0)
    for j, name in enumerate(feature_names):
        if observed[j] == 0:
            raise ConfigError(f"feature {name} has no observed values")
        if observed[j] < 2:
            raise ConfigError(f"feature {name} has fewer than 2 observed values")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        means = np.nanmean(X, axis=0)
        stds = np.nanstd(X, axis=0, ddof=1)
    degenerate = []
    for j, name in enumerate(feature_names):
        if not np.isfinite(stds[j]) or stds[j] <= 0.0:
            degenerate.append(name)
            stds[j] = 1.0
    if degenerate:
        warnings.warn(
            f"constant feature(s) {', '.join(degenerate)}: std coerced to 1",
            stacklevel=2,
        )
    fingerprint = FoldFingerprint.from_patient_ids(v.patient_id for v in train_visits)
    return Scaler(tuple(feature_names), means, stds, tuple(degenerate), fingerprint)


# ---------------------------------------------------------------------------
# Autoencoder imputers
# ---------------------------------------------------------------------------

def _temporal_samples(seq, mask, window, d):
    """Flattened (window x d) blocks ending at each step; absent cells are 0."""
    T = seq.shape[0]
    X = np.zeros((T, window * d))
    M = np.zeros((T, window * d))
    filled = np.where(mask, seq, 0.0)
    for t in range(T):
        for k in range(window):
            src = t - (window - 1 - k)
            if src >= 0:
                X[t, k * d:(k + 1) * d] = filled[src]
                M[t, k * d:(k + 1) * d] = mask[src]
    return X, M


def _locf_prior(seq, mask, d):
    """Last observed value per feature at strictly earlier steps (0 if none)."""
    T = seq.shape[0]
    out = np.zeros((T, d))
    seen = np.zeros(d, dtype=bool)
    carried = np.zeros(d)
    for t in range(T):
        out[t] = np.where(seen, carried, 0.0)
        obs = mask[t].astype(bool)
        carried[obs] = seq[t, obs]
        seen |= obs
    return out


class ImputationModel:
    """Feed-forward autoencoder that fills missing standardized cells.

    kind "temporal_autoencoder": input is the current visit plus up to
    ``window - 1`` previous visits, flattened; reconstruction targets the
    whole window. kind "denoising_autoencoder": input is the current visit's
    observed cells plus the last-observation-carried-forward vector of prior
    visits; reconstruction targets the current visit. Either way the fill for
    visit t depends on visits <= t only.
    """

    def __init__(self, kind, net, feature_names, fingerprint, window=DEFAULT_WINDOW):
        if kind not in (TEMPORAL, DENOISING):
            raise ConfigError(f"unknown imputer kind {kind!r}")
        self.kind = kind
        self.net = net
        self.feature_names = tuple(feature_names)
        self.fingerprint = fingerprint
        self.window = window
        self.history = []

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def _check_shape(self, seq):
        if seq.ndim != 2 or seq.shape[1] != self.n_features:
            raise ConfigError(
                f"sequence shape {seq.shape} does not match the model's "
                f"{self.n_features}-feature order"
            )

    def _inputs(self, seq, mask):
        d = self.n_features
        if self.kind == TEMPORAL:
            X, M = _temporal_samples(seq, mask, self.window, d)
            return X, M
        filled = np.where(mask, seq, 0.0)
        X = np.concatenate([filled, _locf_prior(seq, mask, d)], axis=1)
        prior_seen = np.zeros((seq.shape[0], d))
        seen = np.zeros(d, dtype=bool)
        for t in range(seq.shape[0]):
            prior_seen[t] = seen
            seen |= mask[t].astype(bool)
        M = np.concatenate([mask.astype(float), prior_seen], axis=1)
        return X, M

    def reconstruct(self, seq, mask) -> np.ndarray:
        """Model reconstruction of every cell of the sequence."""
        X, _ = self._inputs(seq, mask)
        out = self.net.predict(X)
        if self.kind == TEMPORAL:
            d = self.n_features
            return out[:, (self.window - 1) * d:]
        return out

    def impute(self, seq, mask=None, patient_ids=None) -> np.ndarray:
        """Fill missing cells; observed cells pass through unchanged."""
        seq = np.asarray(seq, dtype=float)
        self._check_shape(seq)
        if mask is None:
            mask = ~np.isnan(seq)
        mask = np.asarray(mask).astype(bool)
        if mask.shape != seq.shape:
            raise ConfigError("mask shape does not match sequence shape")
        if patient_ids is not None:
            self.fingerprint.assert_disjoint(patient_ids, "imputer transform")
        recon = self.reconstruct(np.where(mask, seq, 0.0), mask)
        out = np.where(mask, seq, recon)
        if not np.all(np.isfinite(out)):
            raise TrainingError("imputer produced non-finite values")
        return out

    def evaluate_loss(self, sequences, masks=None) -> float:
        """Masked reconstruction MSE over observed cells of the sequences."""
        losses, weights = [], []
        for i, seq in enumerate(sequences):
            seq = np.asarray(seq, dtype=float)
            mask = (~np.isnan(seq)) if masks is None else np.asarray(masks[i], bool)
            X, M = self._inputs(np.where(mask, seq, 0.0), mask)
            target = X if self.kind == TEMPORAL else np.where(mask, seq, 0.0)
            lmask = M if self.kind == TEMPORAL else mask.astype(float)
            pred = self.net.predict(X)
            loss, _ = masked_mse(pred, target, lmask)
            losses.append(loss * np.sum(lmask))
            weights.append(np.sum(lmask))
        total = float(np.sum(weights))
        return float(np.sum(losses)) / total if total else 0.0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "window": self.window,
            "feature_names": list(self.feature_names),
            "widths": self.net.widths,
            "params": {k: v.tolist() for k, v in self.net.params.items()},
            "fingerprint": sorted(self.fingerprint.patient_ids),
        }

    @classmethod
    def from_dict(cls, data) -> "ImputationModel":
        net = MLP(data["widths"], np.random.default_rng(0))
        for key, value in data["params"].items():
            net.params[key] = np.asarray(value, dtype=float)
        return cls(
            kind=data["kind"],
            net=net,
            feature_names=tuple(data["feature_names"]),
            fingerprint=FoldFingerprint.from_patient_ids(data["fingerprint"]),
            window=data["window"],
        )


def fit_imputer(train_sequences, kind, patient_ids, *, feature_names,
                epochs: int = 50, lr: float = 1e-3, batch_size: int = 32,
                corruption_rate: float = DEFAULT_CORRUPTION,
                window: int = DEFAULT_WINDOW, seed: int = 0) -> ImputationModel:
    """Train an autoencoder imputer on standardized training-fold sequences.

    train_sequences is a list of (T_i, n_features) arrays with nan marking
    missing cells. The masked MSE loss covers observed cells only, so padded
    and missing entries contribute nothing.
    """
    if not train_sequences:
        raise ConfigError("no training sequences supplied")
    d = len(feature_names)
    rng = np.random.default_rng(np.uint64(seed))
    fingerprint = FoldFingerprint.from_patient_ids(patient_ids)

    xs, targets, lmasks, imasks = [], [], [], []
    for seq in train_sequences:
        seq = np.asarray(seq, dtype=float)
        if seq.shape[1] != d:
            raise ConfigError("sequence width does not match feature_names")
        mask = ~np.isnan(seq)
        filled = np.where(mask, seq, 0.0)
        if kind == TEMPORAL:
            X, M = _temporal_samples(filled, mask, window, d)
            xs.append(X)
            targets.append(X.copy())
            lmasks.append(M)
            imasks.append(M)
        elif kind == DENOISING:
            prior = _locf_prior(filled, mask, d)
            X = np.concatenate([filled, prior], axis=1)
            prior_seen = np.zeros((seq.shape[0], d))
            seen = np.zeros(d, dtype=bool)
            for t in range(seq.shape[0]):
                prior_seen[t] = seen
                seen |= mask[t]
            xs.append(X)
            targets.append(filled)
            lmasks.append(mask.astype(float))
            imasks.append(np.concatenate([mask.astype(float), prior_seen], axis=1))
        else:
            raise ConfigError(f"unknown imputer kind {kind!r}")

    X = np.concatenate(xs, axis=0)
    target = np.concatenate(targets, axis=0)
    lmask = np.concatenate(lmasks, axis=0)
    imask = np.concatenate(imasks, axis=0)
    n = X.shape[0]

    in_dim = X.shape[1]
    out_dim = target.shape[1]
    net = MLP([in_dim, *HIDDEN_WIDTHS, out_dim], rng)
    optim = Adam(net.params, lr=lr)
    model = ImputationModel(kind, net, feature_names, fingerprint, window)

    for epoch in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        epoch_weight = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            xb = X[idx]
            if kind == DENOISING and corruption_rate > 0.0:
                keep = rng.random(xb.shape) >= corruption_rate
                xb = np.where(imask[idx].astype(bool) & ~keep, 0.0, xb)
            out, acts = net.forward(xb)
            loss, dout = masked_mse(out, target[idx], lmask[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"imputer loss diverged at epoch {epoch}")
            grads = net.backward(acts, dout)
            optim.step(grads)
            weight = float(np.sum(lmask[idx]))
            epoch_loss += loss * weight
            epoch_weight += weight
        model.history.append(epoch_loss / max(epoch_weight, 1.0))
    return model
