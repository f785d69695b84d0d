"""Longitudinal cohort ingestion and synthetic cohort generation.

A cohort is a list of :class:`PatientTimeline` objects: ordered clinic visits
with an 8-feature vector each, plus one outcome (death day or last follow-up
day). The CSV schema is row-per-visit with the outcome columns repeated on
every row. Synthetic cohorts draw death times from a Weibull baseline hazard
with a linear log-hazard in the baseline features, so coefficient-recovery
checks against proportional-hazards fitters are well posed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataIntegrityError, ParseError

# Fixed feature order; every downstream vector, coefficient table, and
# importance report uses this order.
FEATURE_NAMES = (
    "current_age",
    "days_since_last_visit",
    "dose_reduced",
    "ecog",
    "sae_count",
    "systolic_bp",
    "bmi",
    "pulse",
)
N_FEATURES = len(FEATURE_NAMES)

DIED = "died"
ALIVE = "last_known_alive"

CSV_COLUMNS = ("patient_id", "visit_day") + FEATURE_NAMES + (
    "death_day",
    "last_followup_day",
)


@dataclass(frozen=True)
class VisitRecord:
    """One clinic visit: day since enrollment plus the fixed-order features.

    Missing features are ``None``, never 0 or a sentinel number (0 is a legal
    value for several features).
    """

    patient_id: str
    visit_day: int
    features: tuple  # length == len(feature_names), float or None entries


@dataclass(frozen=True)
class Outcome:
    status: str  # DIED or ALIVE
    event_day: int  # death day, or administrative end of follow-up


@dataclass(frozen=True)
class PatientTimeline:
    patient_id: str
    visits: tuple
    outcome: Outcome

    @property
    def last_visit_day(self) -> int:
        return self.visits[-1].visit_day


def validate_timeline(timeline: PatientTimeline, n_features: int = N_FEATURES) -> None:
    """Raise :class:`DataIntegrityError` if the timeline violates an invariant."""
    pid = timeline.patient_id
    if not timeline.visits:
        raise DataIntegrityError(f"patient {pid}: empty visit list")
    prev_day = None
    for visit in timeline.visits:
        if visit.patient_id != pid:
            raise DataIntegrityError(
                f"patient {pid}: visit carries patient_id {visit.patient_id}"
            )
        if visit.visit_day < 0:
            raise DataIntegrityError(f"patient {pid}: negative visit_day")
        if prev_day is not None and visit.visit_day <= prev_day:
            raise DataIntegrityError(
                f"patient {pid}: visit_day not strictly increasing "
                f"({prev_day} then {visit.visit_day})"
            )
        if len(visit.features) != n_features:
            raise DataIntegrityError(
                f"patient {pid}: expected {n_features} features, "
                f"got {len(visit.features)}"
            )
        for name, value in zip(FEATURE_NAMES, visit.features):
            if value is not None and not math.isfinite(value):
                raise DataIntegrityError(
                    f"patient {pid}: non-finite value for {name}"
                )
        gap = visit.features[FEATURE_NAMES.index("days_since_last_visit")]
        expected_gap = 0 if prev_day is None else visit.visit_day - prev_day
        if gap is not None and prev_day is None and gap != 0:
            raise DataIntegrityError(
                f"patient {pid}: days_since_last_visit must be 0 or absent "
                f"on the first visit"
            )
        if gap is not None and prev_day is not None and gap != expected_gap:
            raise DataIntegrityError(
                f"patient {pid}: days_since_last_visit {gap} != "
                f"visit_day difference {expected_gap} at day {visit.visit_day}"
            )
        prev_day = visit.visit_day
    if timeline.outcome.status not in (DIED, ALIVE):
        raise DataIntegrityError(
            f"patient {pid}: unknown outcome status {timeline.outcome.status!r}"
        )
    if timeline.outcome.event_day < prev_day:
        raise DataIntegrityError(
            f"patient {pid}: outcome event_day {timeline.outcome.event_day} "
            f"precedes last visit_day {prev_day} (visit after recorded outcome)"
        )


def _parse_cell(raw: str, column: str, line_no: int):
    raw = raw.strip()
    if raw == "":
        return None
    try:
        value = float(raw)
    except ValueError:
        raise ParseError(
            f"line {line_no}: cannot parse {column}={raw!r} as a number"
        ) from None
    if not math.isfinite(value):
        raise ParseError(
            f"line {line_no}: {column}={raw!r} is not a finite number "
            f"(missing values must be empty cells)"
        )
    return value


def _parse_int(raw: str, column: str, line_no: int) -> int:
    value = _parse_cell(raw, column, line_no)
    if value is None:
        raise ParseError(f"line {line_no}: {column} is required")
    if value != int(value):
        raise ParseError(f"line {line_no}: {column}={raw!r} must be an integer")
    return int(value)


def load_cohort(path, fmt: str = "csv"):
    """Parse a row-per-visit CSV file into a list of :class:`PatientTimeline`.

    Row order defines visit order; visit days must be strictly increasing
    within each patient. ``death_day`` is empty for alive patients and
    ``last_followup_day`` is required on every row and constant per patient.
    """
    if fmt != "csv":
        raise ConfigError(f"unsupported cohort format {fmt!r}")
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if tuple(h.strip() for h in header) != CSV_COLUMNS:
            raise ParseError(
                f"{path}: header mismatch; expected {','.join(CSV_COLUMNS)}"
            )
        order: list[str] = []
        visits: dict[str, list[VisitRecord]] = {}
        death_day: dict[str, float | None] = {}
        followup_day: dict[str, float] = {}
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_COLUMNS):
                raise ParseError(
                    f"line {line_no}: expected {len(CSV_COLUMNS)} columns, "
                    f"got {len(row)}"
                )
            pid = row[0].strip()
            if not pid:
                raise ParseError(f"line {line_no}: empty patient_id")
            day = _parse_int(row[1], "visit_day", line_no)
            feats = tuple(
                _parse_cell(raw, name, line_no)
                for raw, name in zip(row[2:2 + N_FEATURES], FEATURE_NAMES)
            )
            death = _parse_cell(row[-2], "death_day", line_no)
            followup = _parse_cell(row[-1], "last_followup_day", line_no)
            if death is None and followup is None:
                raise DataIntegrityError(
                    f"line {line_no}: patient {pid} has neither death_day "
                    f"nor last_followup_day"
                )
            if followup is None:
                raise ParseError(
                    f"line {line_no}: last_followup_day is required on every row"
                )
            if pid not in visits:
                order.append(pid)
                visits[pid] = []
                death_day[pid] = death
                followup_day[pid] = followup
            else:
                if death_day[pid] != death:
                    raise DataIntegrityError(
                        f"line {line_no}: patient {pid} has inconsistent "
                        f"death_day values"
                    )
                if followup_day[pid] != followup:
                    raise DataIntegrityError(
                        f"line {line_no}: patient {pid} has inconsistent "
                        f"last_followup_day values"
                    )
            visits[pid].append(VisitRecord(pid, day, feats))

    cohort = []
    for pid in order:
        death = death_day[pid]
        if death is not None:
            outcome = Outcome(DIED, int(death))
        else:
            outcome = Outcome(ALIVE, int(followup_day[pid]))
        timeline = PatientTimeline(pid, tuple(visits[pid]), outcome)
        validate_timeline(timeline)
        cohort.append(timeline)
    if not cohort:
        raise ParseError(f"{path}: no visit rows")
    return cohort


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float) and value == int(value) and abs(value) < 1e15:
        return repr(value)
    return repr(float(value)) if isinstance(value, float) else str(value)


def write_cohort(cohort, path) -> None:
    """Write a cohort back to the row-per-visit CSV schema.

    ``load_cohort(write_cohort(c))`` reproduces an equal cohort. For died
    patients the last_followup_day column is written as the death day
    (follow-up ended at death).
    """
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for timeline in cohort:
            died = timeline.outcome.status == DIED
            death = timeline.outcome.event_day if died else None
            followup = timeline.outcome.event_day
            for visit in timeline.visits:
                row = [timeline.patient_id, str(visit.visit_day)]
                row.extend(_format_value(v) for v in visit.features)
                row.append("" if death is None else str(death))
                row.append(str(followup))
                writer.writerow(row)


# ---------------------------------------------------------------------------
# Synthetic cohorts
# ---------------------------------------------------------------------------

# Generative baseline distribution per feature: (mean, sd). The same table
# standardizes baseline values inside the linear log-hazard, so hazard
# coefficients are comparable across features. days_since_last_visit is a
# scheduling feature and contributes nothing to the hazard.
_BASELINE_DIST = {
    "current_age": (69.0, 8.0),
    "dose_reduced": (0.25, 0.4330127018922193),
    "ecog": (0.75, 0.8),
    "sae_count": (0.6, 0.7745966692414834),
    "systolic_bp": (130.0, 16.0),
    "bmi": (27.0, 4.5),
    "pulse": (76.0, 11.0),
}

_WEIBULL_SHAPE = 1.4
_MEDIAN_BASELINE_SURVIVAL_DAYS = 400.0
_DECLINE_RAMP_DAYS = 270.0


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the ground-truth cohort generator.

    Identical seeds produce bit-identical cohorts. hazard_coefficients maps
    feature names to log-hazard weights on the standardized baseline value.
    """

    n_patients: int
    seed: int
    visit_interval_mean_days: float = 30.0
    max_followup_days: int = 720
    hazard_coefficients: Mapping[str, float] = field(default_factory=dict)
    censoring_rate: float = 0.0
    missingness_rate: float = 0.0

    def validate(self) -> None:
        if self.n_patients < 1:
            raise ConfigError("n_patients must be >= 1")
        if not 0.0 <= self.censoring_rate <= 1.0:
            raise ConfigError("censoring_rate must be in [0, 1]")
        if not 0.0 <= self.missingness_rate <= 1.0:
            raise ConfigError("missingness_rate must be in [0, 1]")
        if self.visit_interval_mean_days <= 0:
            raise ConfigError("visit_interval_mean_days must be positive")
        if self.max_followup_days < 1:
            raise ConfigError("max_followup_days must be >= 1")
        for name in self.hazard_coefficients:
            if name not in FEATURE_NAMES:
                raise ConfigError(f"unknown feature in hazard_coefficients: {name}")


def _draw_baseline(rng: np.random.Generator) -> dict:
    return {
        "current_age": float(np.clip(rng.normal(69.0, 8.0), 45.0, 92.0)),
        "dose_reduced": float(rng.random() < 0.25),
        "ecog": float(rng.choice(4, p=[0.45, 0.40, 0.12, 0.03])),
        "sae_count": float(rng.poisson(0.6)),
        "systolic_bp": float(np.clip(rng.normal(130.0, 16.0), 85.0, 190.0)),
        "bmi": float(np.clip(rng.normal(27.0, 4.5), 15.0, 45.0)),
        "pulse": float(np.clip(rng.normal(76.0, 11.0), 45.0, 130.0)),
    }


def _linear_predictor(baseline: dict, coefficients: Mapping[str, float]) -> float:
    lp = 0.0
    for name, coef in coefficients.items():
        if name == "days_since_last_visit":
            continue
        mean, sd = _BASELINE_DIST[name]
        lp += coef * (baseline[name] - mean) / sd
    return lp


def _visit_gap(rng: np.random.Generator, mean_days: float) -> int:
    # Gamma(4, mean/4): mean mean_days, cv 0.5; at least one day between visits.
    return max(1, int(round(rng.gamma(4.0, mean_days / 4.0))))


def generate_synthetic(spec: SyntheticSpec):
    """Generate a cohort with known proportional-hazards ground truth.

    Death times follow a Weibull baseline hazard scaled by exp(linear
    predictor) of the standardized baseline features. Dying patients show a
    declining bmi and a rising pulse over the ramp before death, so temporal
    signal exists beyond the baseline hazard. A censoring_rate fraction of
    patients is censored at a uniform random day before their death, and a
    missingness_rate fraction of feature cells is blanked completely at
    random.
    """
    spec.validate()
    rng = np.random.default_rng(np.uint64(spec.seed))
    scale = math.log(2.0) / _MEDIAN_BASELINE_SURVIVAL_DAYS ** _WEIBULL_SHAPE

    cohort = []
    for i in range(spec.n_patients):
        pid = f"SYN-{i:05d}"
        baseline = _draw_baseline(rng)
        lp = _linear_predictor(baseline, spec.hazard_coefficients)
        u = rng.random()
        t_death = (-math.log(u) / (scale * math.exp(lp))) ** (1.0 / _WEIBULL_SHAPE)
        death_day = max(1, int(round(t_death)))

        censor_day = None
        if rng.random() < spec.censoring_rate:
            upper = min(death_day - 1, spec.max_followup_days)
            if upper >= 1:
                censor_day = int(rng.integers(1, upper + 1))

        if censor_day is not None:
            outcome = Outcome(ALIVE, censor_day)
            horizon_end = censor_day
        else:
            outcome = Outcome(DIED, death_day)
            horizon_end = min(death_day - 1, spec.max_followup_days)

        days = [0]
        while True:
            nxt = days[-1] + _visit_gap(rng, spec.visit_interval_mean_days)
            if nxt > horizon_end:
                break
            days.append(nxt)

        dose_reduced = baseline["dose_reduced"]
        visits = []
        for j, day in enumerate(days):
            if outcome.status == DIED:
                w = min(1.0, max(0.0, 1.0 - (death_day - day) / _DECLINE_RAMP_DAYS))
            else:
                w = 0.0
            if dose_reduced == 0.0 and rng.random() < 0.04:
                dose_reduced = 1.0
            values = {
                "current_age": round(baseline["current_age"] + day / 365.25, 2),
                "days_since_last_visit": float(day - days[j - 1]) if j else 0.0,
                "dose_reduced": dose_reduced,
                "ecog": float(np.clip(round(baseline["ecog"] + 1.5 * w + rng.normal(0.0, 0.3)), 0, 4)),
                "sae_count": float(rng.poisson(0.25 + 0.5 * w)),
                "systolic_bp": round(baseline["systolic_bp"] - 6.0 * w + rng.normal(0.0, 4.0), 1),
                "bmi": round(max(13.0, baseline["bmi"] - 5.0 * w + rng.normal(0.0, 0.35)), 2),
                "pulse": round(baseline["pulse"] + 16.0 * w + rng.normal(0.0, 3.0), 1),
            }
            feats = []
            for name in FEATURE_NAMES:
                if spec.missingness_rate > 0 and rng.random() < spec.missingness_rate:
                    feats.append(None)
                else:
                    feats.append(values[name])
            visits.append(VisitRecord(pid, day, tuple(feats)))

        timeline = PatientTimeline(pid, tuple(visits), outcome)
        cohort.append(timeline)
    return cohort


def make_trend_cohort(n_patients: int, seed: int, gap_days: int = 30,
                      max_visits: int = 12, horizon: int = 180):
    """Cohort whose mortality signal lives in the bmi TREND, not its level.

    Each patient's bmi follows a random walk around a random per-patient
    level. "Decliner" patients switch to a steady negative drift at a random
    onset visit and die 150-175 days after onset, so visits near death carry
    a falling bmi trajectory while the bmi level stays uninformative. All
    other features are pure noise. Sequence models can read the trend from
    the visit history; single-visit models cannot.
    """
    if n_patients < 1:
        raise ConfigError("n_patients must be >= 1")
    rng = np.random.default_rng(np.uint64(seed))
    cohort = []
    for i in range(n_patients):
        pid = f"TRD-{i:05d}"
        decliner = rng.random() < 0.4
        level = rng.normal(27.0, 5.0)
        onset_idx = int(rng.integers(3, 8)) if decliner else None
        death_day = None
        if decliner:
            death_day = onset_idx * gap_days + int(rng.integers(150, 176))

        days = [0]
        while len(days) < max_visits:
            nxt = days[-1] + gap_days - 2 + int(rng.integers(0, 5))
            if death_day is not None and nxt >= death_day:
                break
            days.append(nxt)

        bmi = level
        visits = []
        for j, day in enumerate(days):
            if decliner and onset_idx is not None and j >= onset_idx:
                bmi += rng.normal(-0.9, 0.2)
            elif j > 0:
                bmi += rng.normal(0.0, 0.2)
            feats = {
                "current_age": round(rng.normal(69.0, 8.0), 2),
                "days_since_last_visit": float(day - days[j - 1]) if j else 0.0,
                "dose_reduced": float(rng.random() < 0.25),
                "ecog": float(rng.integers(0, 3)),
                "sae_count": float(rng.poisson(0.5)),
                "systolic_bp": round(rng.normal(130.0, 16.0), 1),
                "bmi": round(bmi, 2),
                "pulse": round(rng.normal(76.0, 11.0), 1),
            }
            visits.append(
                VisitRecord(pid, day, tuple(feats[name] for name in FEATURE_NAMES))
            )

        if decliner:
            outcome = Outcome(DIED, death_day)
        else:
            outcome = Outcome(ALIVE, days[-1] + horizon + 30)
        cohort.append(PatientTimeline(pid, tuple(visits), outcome))
    return cohort
