"""Shared scoring contract for the five risk-model architectures."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DataIntegrityError

MAX_SEQUENCE_LEN = 12

STATIC_KINDS = ("logistic", "cox", "rsf")
SEQUENCE_KINDS = ("gru", "lstm")
MODEL_KINDS = STATIC_KINDS + SEQUENCE_KINDS


@dataclass
class SequenceBatch:
    """Padded visit sequences plus masks for training and evaluation.

    x is (patients, max_len, features), pre-padded so the most recent visits
    sit at the end. valid_mask marks real visits, label_mask the subset that
    carries a supervised 0/1 label (censored and padded steps are excluded).
    """

    x: np.ndarray
    valid_mask: np.ndarray
    label_mask: np.ndarray
    labels: np.ndarray
    visit_days: np.ndarray
    patient_ids: tuple
    feature_names: tuple

    def __post_init__(self):
        if np.any(self.label_mask > self.valid_mask):
            raise DataIntegrityError("label mask marks a padded step")

    @property
    def n_patients(self) -> int:
        return self.x.shape[0]

    @property
    def max_len(self) -> int:
        return self.x.shape[1]

    def labeled_values(self, per_step_scores):
        """Flatten (scores, labels) over labeled steps, in patient order."""
        sel = self.label_mask.astype(bool)
        return per_step_scores[sel], self.labels[sel]


def pad_sequences(sequences, visit_days, labels, patient_ids, feature_names,
                  max_len: int = MAX_SEQUENCE_LEN) -> SequenceBatch:
    """Pre-pad per-patient arrays into one batch, truncating long histories.

    labels use 1/0 for positive/negative and -1 for censored steps. Sequences
    longer than max_len keep their most recent max_len visits (warning).
    """
    n = len(sequences)
    d = len(feature_names)
    x = np.zeros((n, max_len, d))
    valid = np.zeros((n, max_len))
    lmask = np.zeros((n, max_len))
    lab = np.zeros((n, max_len))
    days = np.full((n, max_len), -1, dtype=int)
    truncated = 0
    for i, seq in enumerate(sequences):
        seq = np.asarray(seq, dtype=float)
        t = seq.shape[0]
        if t > max_len:
            truncated += 1
            seq = seq[-max_len:]
            patient_days = np.asarray(visit_days[i])[-max_len:]
            patient_labels = np.asarray(labels[i])[-max_len:]
            t = max_len
        else:
            patient_days = np.asarray(visit_days[i])
            patient_labels = np.asarray(labels[i])
        x[i, max_len - t:, :] = seq
        valid[i, max_len - t:] = 1.0
        days[i, max_len - t:] = patient_days
        labeled = patient_labels >= 0
        lmask[i, max_len - t:] = labeled.astype(float)
        lab[i, max_len - t:] = np.where(labeled, patient_labels, 0.0)
    if truncated:
        warnings.warn(
            f"{truncated} sequence(s) longer than {max_len} visits were "
            f"truncated to the most recent {max_len}",
            stacklevel=2,
        )
    return SequenceBatch(x, valid, lmask, lab, days, tuple(patient_ids),
                         tuple(feature_names))


class RiskModel:
    """A fitted scorer mapping a visit-history prefix to a probability."""

    kind = "abstract"

    def __init__(self, feature_names):
        self.feature_names = tuple(feature_names)

    def check_features(self, feature_names) -> None:
        if tuple(feature_names) != self.feature_names:
            raise ConfigError(
                f"feature-order fingerprint mismatch: model was fitted on "
                f"{self.feature_names}, got {tuple(feature_names)}"
            )

    def score_history(self, history) -> float:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


def score(model: RiskModel, history) -> float:
    """Probability of death within the horizon after the last visit of history.

    history is a (T, n_features) preprocessed (standardized and imputed)
    matrix covering visits up to and including the one being scored.
    """
    history = np.atleast_2d(np.asarray(history, dtype=float))
    if history.shape[1] != len(model.feature_names):
        raise ConfigError(
            f"history has {history.shape[1]} features, model expects "
            f"{len(model.feature_names)}"
        )
    value = float(model.score_history(history))
    if not 0.0 <= value <= 1.0:
        raise DataIntegrityError(f"model produced a score outside [0,1]: {value}")
    return value
