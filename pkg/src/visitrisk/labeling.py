"""Visit-level labels under a fixed look-ahead horizon.

A visit is positive when death occurs within (0, horizon] days after it,
negative when the patient is known to be alive for at least the full horizon
(or dies after it), and censored when follow-up ends inside the horizon
without a recorded death. Censored visits are excluded from every loss and
every metric downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

from .cohort import ALIVE, DIED, Outcome, PatientTimeline
from .errors import ConfigError, DataIntegrityError

HORIZON_DAYS = 180

POSITIVE = "positive"
NEGATIVE = "negative"
CENSORED = "censored"


@dataclass(frozen=True)
class LabeledVisit:
    patient_id: str
    visit_day: int
    features: tuple  # raw feature vector; preprocessing replaces it downstream
    label: str
    horizon_days: int = HORIZON_DAYS


@dataclass(frozen=True)
class LabelSummary:
    n_patients: int
    n_visits: int
    n_positive: int
    n_negative: int
    n_censored: int

    def as_dict(self) -> dict:
        return {
            "n_patients": self.n_patients,
            "n_visits": self.n_visits,
            "n_positive": self.n_positive,
            "n_negative": self.n_negative,
            "n_censored": self.n_censored,
        }


def label_visit(visit_day: int, outcome: Outcome, horizon: int = HORIZON_DAYS) -> str:
    """Label one visit by the look-ahead rule.

    Died patients: positive iff 0 < event_day - visit_day <= horizon, negative
    beyond the horizon. Alive patients: negative iff followed for at least the
    full horizon after the visit, censored otherwise. A visit on the death day
    itself (gap 0) falls outside the strict "0 <" inequality and is censored.
    """
    if horizon <= 0:
        raise ConfigError("horizon must be positive")
    gap = outcome.event_day - visit_day
    if gap < 0:
        raise DataIntegrityError(
            f"visit_day {visit_day} is after the recorded outcome day "
            f"{outcome.event_day}"
        )
    if outcome.status == DIED:
        if gap == 0:
            return CENSORED
        return POSITIVE if gap <= horizon else NEGATIVE
    if outcome.status == ALIVE:
        return NEGATIVE if gap >= horizon else CENSORED
    raise DataIntegrityError(f"unknown outcome status {outcome.status!r}")


def label_cohort(cohort, horizon: int = HORIZON_DAYS):
    """Label every visit of every patient.

    Returns (labeled, summary) where labeled is a list of per-patient lists of
    :class:`LabeledVisit` in visit order.
    """
    labeled = []
    n_pos = n_neg = n_cen = 0
    for timeline in cohort:
        patient_visits = []
        for visit in timeline.visits:
            label = label_visit(visit.visit_day, timeline.outcome, horizon)
            if label == POSITIVE:
                n_pos += 1
            elif label == NEGATIVE:
                n_neg += 1
            else:
                n_cen += 1
            patient_visits.append(
                LabeledVisit(timeline.patient_id, visit.visit_day,
                             visit.features, label, horizon)
            )
        labeled.append(patient_visits)
    summary = LabelSummary(
        n_patients=len(labeled),
        n_visits=n_pos + n_neg + n_cen,
        n_positive=n_pos,
        n_negative=n_neg,
        n_censored=n_cen,
    )
    return labeled, summary
