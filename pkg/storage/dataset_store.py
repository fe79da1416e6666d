"""
CSV ingestion and emission of cohort datasets.

A dataset directory holds:
    longitudinal.csv   patient_id, time_years, score_normalized (or score_raw)
    events.csv         patient_id, event_time_years, observed (0/1)
    ground_truth.csv   patient_id, xi, tau   (simulated cohorts only)
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from jointmodel.errors import DatasetValidationError, InputError
from models.model_core_models import IndividualEffects, PatientRecord, Visit

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
LONGITUDINAL_COLUMNS = ["patient_id", "time_years", "score_normalized"]
EVENT_COLUMNS = ["patient_id", "event_time_years", "observed"]
TRUTH_COLUMNS = ["patient_id", "xi", "tau"]


class RawScale(BaseModel):
    """Raw clinical score range; 'decreasing' means the maximum is the healthiest value."""
    model_config = ConfigDict(frozen=True)

    max_value: float = Field(default=48.0, gt=0.0)
    orientation: Literal["decreasing", "increasing"] = "decreasing"

    def normalize(self, raw):
        """Map raw scores onto [0, 1] with 0 the healthiest."""
        raw = np.asarray(raw, dtype=float)
        if self.orientation == "decreasing":
            return (self.max_value - raw) / self.max_value
        return raw / self.max_value


class DatasetSchema(BaseModel):
    """File names and score column of a dataset directory."""
    model_config = ConfigDict(frozen=True)

    longitudinal_file: str = "longitudinal.csv"
    events_file: str = "events.csv"
    truth_file: str = "ground_truth.csv"
    raw_score_column: str = "score_raw"
    raw_scale: RawScale = Field(default_factory=RawScale)


class ValidationIssue(BaseModel):
    """One problem found while validating a dataset."""
    model_config = ConfigDict(frozen=True)

    kind: str
    message: str
    patient_id: Optional[str] = None

    def __str__(self) -> str:
        where = f" [{self.patient_id}]" if self.patient_id is not None else ""
        return f"{self.kind}{where}: {self.message}"


@dataclass
class Dataset:
    """Validated patient records, plus the true random effects when known."""
    records: list[PatientRecord]
    truth: Optional[dict[str, IndividualEffects]] = None

    @property
    def patient_ids(self) -> list[str]:
        return [r.id for r in self.records]

    @property
    def n_visits(self) -> int:
        return sum(len(r.visits) for r in self.records)

    def to_frames(self) -> tuple[pd.DataFrame, pd.DataFrame]:
        """Longitudinal and event tables."""
        longitudinal = pd.DataFrame(
            [(r.id, v.time, v.value) for r in self.records for v in r.visits],
            columns=LONGITUDINAL_COLUMNS,
        )
        events = pd.DataFrame(
            [(r.id, r.event_time, int(r.event_observed)) for r in self.records],
            columns=EVENT_COLUMNS,
        )
        return longitudinal, events


def _read_csv(path: Path, required: list[str], issues: list[ValidationIssue]) -> Optional[pd.DataFrame]:
    if not path.exists():
        issues.append(ValidationIssue(kind="missing_file", message=f"{path} does not exist"))
        return None
    try:
        frame = pd.read_csv(path, dtype={"patient_id": str}, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        issues.append(ValidationIssue(kind="unreadable_file", message=f"{path}: {e}"))
        return None
    missing = [c for c in required if c not in frame.columns]
    if missing:
        issues.append(ValidationIssue(kind="missing_columns", message=f"{path.name} lacks {missing}"))
        return None
    return frame


def _numeric(frame: pd.DataFrame, column: str, name: str, issues: list[ValidationIssue]) -> pd.Series:
    values = pd.to_numeric(frame[column], errors="coerce")
    bad = ~np.isfinite(values.to_numpy(dtype=float))
    for pid in frame.loc[bad, "patient_id"].unique():
        issues.append(ValidationIssue(kind="non_numeric", message=f"{name}.{column} is missing or not finite",
                                      patient_id=str(pid)))
    return values


def validate_tables(longitudinal: pd.DataFrame, events: pd.DataFrame) -> list[ValidationIssue]:
    """
    Check linkage, ranges and ordering of already-normalized tables.

    Args:
        longitudinal: patient_id, time_years, score_normalized
        events: patient_id, event_time_years, observed

    Returns:
        Every issue found (empty when the tables are valid)
    """
    issues: list[ValidationIssue] = []
    times = _numeric(longitudinal, "time_years", "longitudinal", issues)
    scores = _numeric(longitudinal, "score_normalized", "longitudinal", issues)
    event_times = _numeric(events, "event_time_years", "events", issues)

    out_of_range = (scores < 0.0) | (scores > 1.0)
    for pid in longitudinal.loc[out_of_range, "patient_id"].unique():
        issues.append(ValidationIssue(kind="score_out_of_range", message="normalized score outside [0, 1]",
                                      patient_id=str(pid)))

    duplicated = longitudinal.assign(_t=times).duplicated(subset=["patient_id", "_t"], keep=False)
    for pid in longitudinal.loc[duplicated, "patient_id"].unique():
        issues.append(ValidationIssue(kind="duplicate_visit", message="two visits share the same time",
                                      patient_id=str(pid)))

    observed = pd.to_numeric(events["observed"], errors="coerce")
    for pid in events.loc[~observed.isin([0, 1]), "patient_id"].unique():
        issues.append(ValidationIssue(kind="bad_observed_flag", message="observed must be 0 or 1",
                                      patient_id=str(pid)))

    for pid in events.loc[events["patient_id"].duplicated(), "patient_id"].unique():
        issues.append(ValidationIssue(kind="duplicate_event", message="more than one event row",
                                      patient_id=str(pid)))

    long_ids = set(longitudinal["patient_id"])
    event_ids = set(events["patient_id"])
    for pid in sorted(event_ids - long_ids):
        issues.append(ValidationIssue(kind="unlinked_event", message="event row without visits", patient_id=pid))
    for pid in sorted(long_ids - event_ids):
        issues.append(ValidationIssue(kind="missing_event", message="visits without an event row", patient_id=pid))

    if not issues:
        first_visit = times.groupby(longitudinal["patient_id"]).min()
        starts = events["patient_id"].map(first_visit)
        early = event_times < starts
        for pid in events.loc[early, "patient_id"]:
            issues.append(ValidationIssue(kind="event_before_first_visit",
                                          message="event time precedes the first visit", patient_id=str(pid)))
    return issues


def _records_from_tables(longitudinal: pd.DataFrame, events: pd.DataFrame) -> list[PatientRecord]:
    longitudinal = longitudinal.sort_values(["patient_id", "time_years"], kind="mergesort")
    visits_by_id = {
        pid: [Visit(time=float(t), value=float(v)) for t, v in zip(group["time_years"], group["score_normalized"])]
        for pid, group in longitudinal.groupby("patient_id", sort=False)
    }
    return [
        PatientRecord(
            id=str(row.patient_id),
            visits=visits_by_id[row.patient_id],
            event_time=float(row.event_time_years),
            event_observed=bool(int(row.observed)),
        )
        for row in events.itertuples(index=False)
    ]


def load_truth(path: Path) -> Optional[dict[str, IndividualEffects]]:
    """Read ground_truth.csv if present."""
    if not path.exists():
        return None
    frame = pd.read_csv(path, dtype={"patient_id": str}, float_precision="round_trip")
    missing = [c for c in TRUTH_COLUMNS if c not in frame.columns]
    if missing:
        raise DatasetValidationError(
            [ValidationIssue(kind="missing_columns", message=f"{path.name} lacks {missing}")])
    return {
        str(row.patient_id): IndividualEffects(xi=float(row.xi), tau=float(row.tau))
        for row in frame.itertuples(index=False)
    }


def load_dataset(path, schema: Optional[DatasetSchema] = None) -> Dataset:
    """
    Load and validate a dataset directory.

    Args:
        path: Directory holding the CSV files
        schema: File names and raw-score settings

    Returns:
        Validated Dataset, patients in events-table order

    Raises:
        DatasetValidationError: with every issue found
    """
    schema = schema or DatasetSchema()
    root = Path(path)
    issues: list[ValidationIssue] = []

    longitudinal = _read_csv(root / schema.longitudinal_file, ["patient_id", "time_years"], issues)
    events = _read_csv(root / schema.events_file, EVENT_COLUMNS, issues)
    if longitudinal is not None:
        if "score_normalized" not in longitudinal.columns:
            if schema.raw_score_column in longitudinal.columns:
                raw = pd.to_numeric(longitudinal[schema.raw_score_column], errors="coerce")
                bad = (raw < 0) | (raw > schema.raw_scale.max_value)
                for pid in longitudinal.loc[bad, "patient_id"].unique():
                    issues.append(ValidationIssue(
                        kind="score_out_of_range",
                        message=f"raw score outside [0, {schema.raw_scale.max_value:g}]",
                        patient_id=str(pid)))
                longitudinal = longitudinal.assign(score_normalized=schema.raw_scale.normalize(raw))
            else:
                issues.append(ValidationIssue(
                    kind="missing_columns",
                    message=f"{schema.longitudinal_file} needs score_normalized or {schema.raw_score_column}"))

    if issues:
        raise DatasetValidationError(issues)
    issues = validate_tables(longitudinal, events)
    if issues:
        raise DatasetValidationError(issues)
    if len(events) == 0:
        raise InputError(f"{root} contains no patients")

    records = _records_from_tables(longitudinal, events)
    truth = load_truth(root / schema.truth_file)
    logger.info(f"Loaded {len(records)} patients and {sum(len(r.visits) for r in records)} visits from {root}")
    return Dataset(records=records, truth=truth)


def save_dataset(dataset: Dataset, path, schema: Optional[DatasetSchema] = None) -> Path:
    """
    Write the dataset (and ground truth when known) as CSV.

    Args:
        dataset: Records to write
        path: Output directory, created if needed

    Returns:
        The output directory
    """
    schema = schema or DatasetSchema()
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)

    longitudinal, events = dataset.to_frames()
    longitudinal.to_csv(root / schema.longitudinal_file, index=False, float_format=FLOAT_FORMAT)
    events.to_csv(root / schema.events_file, index=False, float_format=FLOAT_FORMAT)
    if dataset.truth is not None:
        truth = pd.DataFrame(
            [(pid, e.xi, e.tau) for pid, e in dataset.truth.items()],
            columns=TRUTH_COLUMNS,
        )
        truth.to_csv(root / schema.truth_file, index=False, float_format=FLOAT_FORMAT)
    logger.info(f"Saved {len(dataset.records)} patients to {root}")
    return root
