"""Vendor export parsing and feature engineering with strict temporal hygiene.

parse_export maps a client's column names onto the common schema and
reports every bad row instead of dropping it silently. engineer_features
walks appointments in scheduled order and accumulates each patient's
history using only strictly earlier outcomes, so a feature value can
never see the future (or even the same instant).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Sequence

from .config import load_kv
from .schema import (
    CANONICAL_FIELDS,
    AppointmentRecord,
    FieldError,
    Outcome,
    RecordValidationError,
    ValidationCode,
    format_timestamp,
    outcome_label,
    parse_timestamp,
    season_of,
    sort_key,
    validate_record,
)

DEFAULT_PSEUDO_COUNT = 5.0
DEFAULT_CANCEL_WINDOW_HOURS = 24.0

# Feature CSV column order; this is the documented interchange layout.
FEATURE_CSV_COLUMNS = (
    "appointment_id",
    "scheduled_at",
    "lead_time_days",
    "hour_of_day",
    "day_of_week",
    "season",
    "provider_specialty",
    "site_id",
    "patient_hist_rate",
    "patient_prior_appointments",
    "label",
)


class UnmappableHeader(ValueError):
    pass


class EmptyFile(ValueError):
    pass


class UndefinedRate(ValueError):
    pass


class UnsortedInput(ValueError):
    pass


@dataclass(frozen=True)
class ColumnMapping:
    """How one vendor's export maps onto the common schema."""

    columns: dict[str, str]  # canonical field -> vendor column name
    outcome_values: dict[str, str]  # vendor outcome value (lowercased) -> canonical/cancelled
    timestamp_format: str | None = None  # strptime format; None means ISO-8601
    assume_utc_offset_minutes: int | None = None  # attached when vendor timestamps are naive
    cancelled_at_column: str | None = None
    cancel_window_hours: float = DEFAULT_CANCEL_WINDOW_HOURS

    def required_vendor_columns(self) -> list[str]:
        cols = list(self.columns.values())
        if self.cancelled_at_column:
            cols.append(self.cancelled_at_column)
        return cols


def identity_mapping() -> ColumnMapping:
    """Mapping for files already in the canonical layout."""
    return ColumnMapping(
        columns={f: f for f in CANONICAL_FIELDS},
        outcome_values={o.value: o.value for o in Outcome},
    )


def load_column_mapping(path: Path | str) -> ColumnMapping:
    """Read a mapping file: column.<canonical> = VendorName, outcome.<value> = VendorValue."""
    values = load_kv(path)
    columns: dict[str, str] = {}
    outcomes: dict[str, str] = {}
    for key, value in values.items():
        if key.startswith("column."):
            canonical = key[len("column."):]
            if canonical == "cancelled_at":
                continue
            if canonical not in CANONICAL_FIELDS:
                raise UnmappableHeader(f"mapping names unknown canonical field {canonical!r}")
            columns[canonical] = value
        elif key.startswith("outcome."):
            target = key[len("outcome."):]
            if target not in ("attended", "missed", "pending", "cancelled"):
                raise UnmappableHeader(f"mapping names unknown outcome target {target!r}")
            for vendor_value in value.split("|"):
                outcomes[vendor_value.strip().lower()] = target
    missing = [f for f in CANONICAL_FIELDS if f not in columns]
    if missing:
        raise UnmappableHeader(f"mapping does not cover canonical fields: {', '.join(missing)}")
    offset = values.get("timestamp_assume_offset_minutes")
    return ColumnMapping(
        columns=columns,
        outcome_values=outcomes,
        timestamp_format=values.get("timestamp_format") or None,
        assume_utc_offset_minutes=int(offset) if offset is not None else None,
        cancelled_at_column=values.get("column.cancelled_at") or None,
        cancel_window_hours=float(values.get("cancel_window_hours", DEFAULT_CANCEL_WINDOW_HOURS)),
    )


@dataclass(frozen=True)
class RowError:
    row: int  # 1-based data row number, header excluded
    reason: str

    def as_dict(self) -> dict[str, object]:
        return {"row": self.row, "reason": self.reason}


@dataclass
class ParseReport:
    records: list[AppointmentRecord]
    errors: list[RowError]

    @property
    def rows_seen(self) -> int:
        return len(self.records) + len(self.errors)


def _parse_vendor_timestamp(raw: str, mapping: ColumnMapping) -> datetime:
    if mapping.timestamp_format:
        ts = datetime.strptime(raw.strip(), mapping.timestamp_format)
    else:
        ts = datetime.fromisoformat(raw.strip())
    if ts.tzinfo is None:
        if mapping.assume_utc_offset_minutes is None:
            raise ValueError(f"timestamp {raw!r} has no UTC offset and the mapping assumes none")
        ts = ts.replace(tzinfo=timezone(timedelta(minutes=mapping.assume_utc_offset_minutes)))
    return ts


def parse_export(source: Path | str | io.TextIOBase, mapping: ColumnMapping) -> ParseReport:
    """Parse a delimited vendor export into canonical records plus a row-level error report.

    Every input row lands either in records or in errors; the two counts
    always add up to the number of data rows read. Late cancellations
    (within the mapping's window before the appointment) become Missed;
    earlier cancellations are reported as dropped rows.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            return parse_export(fh, mapping)

    reader = csv.DictReader(source)
    if reader.fieldnames is None:
        raise EmptyFile("export has no header row")
    missing = [c for c in mapping.required_vendor_columns() if c not in reader.fieldnames]
    if missing:
        raise UnmappableHeader(f"export header is missing mapped columns: {', '.join(missing)}")

    records: list[AppointmentRecord] = []
    errors: list[RowError] = []
    for row_number, row in enumerate(reader, start=1):
        raw = {canonical: row.get(vendor) for canonical, vendor in mapping.columns.items()}
        problems: list[FieldError] = []

        for ts_field in ("scheduled_at", "booked_at"):
            value = raw.get(ts_field)
            if value is None or not str(value).strip():
                continue  # validate_record reports the absence
            try:
                raw[ts_field] = format_timestamp(_parse_vendor_timestamp(str(value), mapping))
            except ValueError as exc:
                problems.append(FieldError(ValidationCode.MALFORMED_TIMESTAMP, ts_field, str(exc)))
                raw[ts_field] = None

        vendor_outcome = str(raw.get("outcome") or "").strip().lower()
        outcome = mapping.outcome_values.get(vendor_outcome)
        if outcome is None:
            problems.append(
                FieldError(ValidationCode.UNKNOWN_OUTCOME, "outcome", f"unknown outcome {vendor_outcome!r}")
            )
        elif outcome == "cancelled":
            disposition, problem = _cancellation_disposition(row, raw, mapping)
            if problem is not None:
                problems.append(problem)
            elif disposition is None:
                errors.append(RowError(row_number, "cancelled early; dropped by the cancellation window"))
                continue
            else:
                raw["outcome"] = disposition
        else:
            raw["outcome"] = outcome

        if problems:
            errors.append(RowError(row_number, "; ".join(str(p) for p in problems)))
            continue
        try:
            records.append(validate_record(raw))
        except RecordValidationError as exc:
            errors.append(RowError(row_number, str(exc)))
    return ParseReport(records=records, errors=errors)


def _cancellation_disposition(
    row: dict[str, str], raw: dict[str, object], mapping: ColumnMapping
) -> tuple[str | None, FieldError | None]:
    """Missed when cancelled inside the window, None when dropped as an early cancel."""
    if mapping.cancelled_at_column is None:
        return None, FieldError(
            ValidationCode.UNKNOWN_OUTCOME, "outcome", "cancelled outcome but no cancelled_at column mapped"
        )
    value = row.get(mapping.cancelled_at_column)
    if value is None or not str(value).strip():
        return None, FieldError(
            ValidationCode.MISSING_FIELD, mapping.cancelled_at_column, "cancelled row lacks a cancellation time"
        )
    try:
        cancelled_at = _parse_vendor_timestamp(str(value), mapping)
    except ValueError as exc:
        return None, FieldError(ValidationCode.MALFORMED_TIMESTAMP, mapping.cancelled_at_column, str(exc))
    scheduled_raw = raw.get("scheduled_at")
    if not scheduled_raw:
        return None, FieldError(
            ValidationCode.MISSING_FIELD, "scheduled_at", "cancelled row lacks a scheduled time"
        )
    scheduled_at = parse_timestamp(str(scheduled_raw))
    if scheduled_at - cancelled_at <= timedelta(hours=mapping.cancel_window_hours):
        return Outcome.MISSED.value, None
    return None, None


def no_show_rate(missed: int, scheduled: int) -> float:
    """Raw historical rate: missed visits over scheduled appointments."""
    if scheduled == 0:
        raise UndefinedRate("no scheduled appointments; use smoothed_hist_rate instead")
    if missed < 0 or scheduled < missed:
        raise ValueError("counts must satisfy 0 <= missed <= scheduled")
    return missed / scheduled


def smoothed_hist_rate(missed: int, scheduled: int, global_rate: float, pseudo_count: float = DEFAULT_PSEUDO_COUNT) -> float:
    """Historical rate shrunk toward the global rate; defined even for new patients."""
    if pseudo_count <= 0:
        raise ValueError("pseudo_count must be positive")
    if not 0.0 <= global_rate <= 1.0:
        raise ValueError("global_rate must be in [0, 1]")
    return (missed + pseudo_count * global_rate) / (scheduled + pseudo_count)


@dataclass(frozen=True)
class FeatureVector:
    """Engineered predictors for one appointment."""

    appointment_id: str
    scheduled_at: datetime
    lead_time_days: float
    hour_of_day: int
    day_of_week: int
    season: str
    provider_specialty: str
    site_id: str
    patient_hist_rate: float
    patient_prior_appointments: int
    label: int | None  # 1 = missed, 0 = attended, None = pending


def engineer_features(
    records: Sequence[AppointmentRecord],
    global_rate: float,
    pseudo_count: float = DEFAULT_PSEUDO_COUNT,
) -> list[FeatureVector]:
    """One FeatureVector per record, in input order.

    Input must already be sorted by (scheduled_at, appointment_id). A
    patient's history counts only appointments scheduled strictly earlier
    than the current one; same-instant outcomes are excluded, so deleting
    any future record can never change an earlier feature.
    """
    stats: dict[str, tuple[int, int]] = {}  # patient -> (scheduled, missed), committed history
    queued: dict[str, list[tuple[datetime, int]]] = {}  # outcomes awaiting a strictly later time

    previous_key = None
    features: list[FeatureVector] = []
    for record in records:
        key = sort_key(record)
        if previous_key is not None and key < previous_key:
            raise UnsortedInput(
                f"records not sorted by (scheduled_at, appointment_id) near {record.appointment_id}"
            )
        previous_key = key

        pending_queue = queued.get(record.patient_id)
        if pending_queue:
            scheduled, missed = stats.get(record.patient_id, (0, 0))
            keep = []
            for when, label in pending_queue:
                if when < record.scheduled_at:
                    scheduled += 1
                    missed += label
                else:
                    keep.append((when, label))
            stats[record.patient_id] = (scheduled, missed)
            queued[record.patient_id] = keep

        scheduled, missed = stats.get(record.patient_id, (0, 0))
        local = record.scheduled_at
        features.append(
            FeatureVector(
                appointment_id=record.appointment_id,
                scheduled_at=record.scheduled_at,
                lead_time_days=record.lead_time_days,
                hour_of_day=local.hour,
                day_of_week=local.weekday(),
                season=season_of(local.date()),
                provider_specialty=record.provider_specialty,
                site_id=record.site_id,
                patient_hist_rate=smoothed_hist_rate(missed, scheduled, global_rate, pseudo_count),
                patient_prior_appointments=scheduled,
                label=None if record.outcome is Outcome.PENDING else outcome_label(record.outcome),
            )
        )
        if record.outcome is not Outcome.PENDING:
            queued.setdefault(record.patient_id, []).append(
                (record.scheduled_at, outcome_label(record.outcome))
            )
    return features


def global_missed_rate(records: Iterable[AppointmentRecord]) -> float:
    """Overall missed fraction of the resolved (non-pending) records."""
    scheduled = missed = 0
    for record in records:
        if record.outcome is Outcome.PENDING:
            continue
        scheduled += 1
        missed += record.outcome is Outcome.MISSED
    return no_show_rate(missed, scheduled)


def feature_to_row(fv: FeatureVector) -> dict[str, str]:
    return {
        "appointment_id": fv.appointment_id,
        "scheduled_at": format_timestamp(fv.scheduled_at),
        "lead_time_days": repr(fv.lead_time_days),
        "hour_of_day": str(fv.hour_of_day),
        "day_of_week": str(fv.day_of_week),
        "season": fv.season,
        "provider_specialty": fv.provider_specialty,
        "site_id": fv.site_id,
        "patient_hist_rate": repr(fv.patient_hist_rate),
        "patient_prior_appointments": str(fv.patient_prior_appointments),
        "label": "" if fv.label is None else str(fv.label),
    }


def write_features_csv(features: Iterable[FeatureVector], path: Path | str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(FEATURE_CSV_COLUMNS), lineterminator="\n")
        writer.writeheader()
        for fv in features:
            writer.writerow(feature_to_row(fv))


def read_features_csv(path: Path | str) -> list[FeatureVector]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyFile(f"{path} has no header row")
        if tuple(reader.fieldnames) != FEATURE_CSV_COLUMNS:
            raise ValueError(
                f"feature CSV header {reader.fieldnames} does not match the documented layout"
            )
        out = []
        for row in reader:
            out.append(
                FeatureVector(
                    appointment_id=row["appointment_id"],
                    scheduled_at=parse_timestamp(row["scheduled_at"]),
                    lead_time_days=float(row["lead_time_days"]),
                    hour_of_day=int(row["hour_of_day"]),
                    day_of_week=int(row["day_of_week"]),
                    season=row["season"],
                    provider_specialty=row["provider_specialty"],
                    site_id=row["site_id"],
                    patient_hist_rate=float(row["patient_hist_rate"]),
                    patient_prior_appointments=int(row["patient_prior_appointments"]),
                    label=None if row["label"] == "" else int(row["label"]),
                )
            )
        return out
