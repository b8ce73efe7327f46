"""Common appointment schema shared by every stage of the product.

All other modules consume these types: the validated appointment record,
the provider hour block used for aggregation, and the canonical CSV
interchange format. Timestamps are timezone-aware throughout; block
arithmetic happens in clinic-local time.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from datetime import date, datetime, tzinfo
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

MIN_DURATION_MINUTES = 5
MAX_DURATION_MINUTES = 240

# Canonical CSV header, in order. This is the interchange format between
# all modules; timestamps are ISO-8601 with an explicit UTC offset.
CANONICAL_FIELDS = (
    "appointment_id",
    "provider_id",
    "provider_specialty",
    "patient_id",
    "site_id",
    "scheduled_at",
    "booked_at",
    "duration_minutes",
    "outcome",
)

SEASONS = ("winter", "spring", "summer", "fall")


class Outcome(str, Enum):
    ATTENDED = "attended"
    MISSED = "missed"
    PENDING = "pending"


class ValidationCode(str, Enum):
    MISSING_FIELD = "missing_field"
    MALFORMED_TIMESTAMP = "malformed_timestamp"
    NEGATIVE_LEAD_TIME = "negative_lead_time"
    UNKNOWN_OUTCOME = "unknown_outcome"
    INVALID_DURATION = "invalid_duration"
    EMPTY_FIELD = "empty_field"


@dataclass(frozen=True)
class FieldError:
    code: ValidationCode
    field: str
    message: str

    def __str__(self) -> str:
        return f"{self.field}: {self.message} [{self.code.value}]"


class RecordValidationError(ValueError):
    """Raised by validate_record; carries every violation found, not just the first."""

    def __init__(self, errors: Sequence[FieldError]):
        self.errors = list(errors)
        super().__init__("; ".join(str(e) for e in self.errors))


@dataclass(frozen=True)
class AppointmentRecord:
    """One scheduled visit. Immutable; safe to share across threads."""

    appointment_id: str
    provider_id: str
    provider_specialty: str
    patient_id: str
    site_id: str
    scheduled_at: datetime
    booked_at: datetime
    duration_minutes: int = 15
    outcome: Outcome = Outcome.PENDING

    @property
    def lead_time_days(self) -> float:
        """Days between booking and the appointment itself (never negative)."""
        return (self.scheduled_at - self.booked_at).total_seconds() / 86400.0


@dataclass(frozen=True, order=True)
class HourBlock:
    """A provider's [start_hour:00, start_hour+1:00) window on one date."""

    date: date
    start_hour: int
    provider_id: str


def outcome_label(outcome: Outcome) -> int:
    """Binary label: 1 = missed, 0 = attended. Pending records have no label."""
    if outcome is Outcome.MISSED:
        return 1
    if outcome is Outcome.ATTENDED:
        return 0
    raise ValueError("pending appointments never yield an outcome label")


def season_of(d: date) -> str:
    """Meteorological season: Dec-Feb winter, Mar-May spring, and so on."""
    return SEASONS[(d.month % 12) // 3]


def season_index(d: date) -> int:
    return (d.month % 12) // 3


def parse_timestamp(value: str) -> datetime:
    """Parse an ISO-8601 timestamp; the UTC offset is required."""
    ts = datetime.fromisoformat(value.strip())
    if ts.tzinfo is None:
        raise ValueError(f"timestamp {value!r} has no UTC offset")
    return ts


def format_timestamp(ts: datetime) -> str:
    return ts.isoformat(timespec="minutes")


def validate_record(raw: Mapping[str, object]) -> AppointmentRecord:
    """Build a typed record from a raw field map, reporting all violations at once.

    Raises RecordValidationError listing every problem found.
    """
    errors: list[FieldError] = []

    def text(field: str) -> str | None:
        value = raw.get(field)
        if value is None:
            errors.append(FieldError(ValidationCode.MISSING_FIELD, field, "field is missing"))
            return None
        value = str(value).strip()
        if not value:
            errors.append(FieldError(ValidationCode.EMPTY_FIELD, field, "field is empty"))
            return None
        return value

    ids = {f: text(f) for f in ("appointment_id", "provider_id", "provider_specialty", "patient_id", "site_id")}

    def timestamp(field: str) -> datetime | None:
        value = text(field)
        if value is None:
            return None
        try:
            return parse_timestamp(value)
        except ValueError as exc:
            errors.append(FieldError(ValidationCode.MALFORMED_TIMESTAMP, field, str(exc)))
            return None

    scheduled_at = timestamp("scheduled_at")
    booked_at = timestamp("booked_at")
    if scheduled_at is not None and booked_at is not None and booked_at > scheduled_at:
        errors.append(
            FieldError(
                ValidationCode.NEGATIVE_LEAD_TIME,
                "booked_at",
                f"booked_at {format_timestamp(booked_at)} is after scheduled_at {format_timestamp(scheduled_at)}",
            )
        )

    duration = 15
    raw_duration = raw.get("duration_minutes", 15)
    try:
        duration = int(str(raw_duration).strip())
        if not MIN_DURATION_MINUTES <= duration <= MAX_DURATION_MINUTES:
            raise ValueError
    except (TypeError, ValueError):
        errors.append(
            FieldError(
                ValidationCode.INVALID_DURATION,
                "duration_minutes",
                f"duration {raw_duration!r} not a whole number of minutes in "
                f"[{MIN_DURATION_MINUTES}, {MAX_DURATION_MINUTES}]",
            )
        )

    outcome = None
    raw_outcome = text("outcome")
    if raw_outcome is not None:
        try:
            outcome = Outcome(raw_outcome.lower())
        except ValueError:
            errors.append(
                FieldError(ValidationCode.UNKNOWN_OUTCOME, "outcome", f"unknown outcome {raw_outcome!r}")
            )

    if errors:
        raise RecordValidationError(errors)

    assert scheduled_at is not None and booked_at is not None and outcome is not None
    return AppointmentRecord(
        appointment_id=ids["appointment_id"] or "",
        provider_id=ids["provider_id"] or "",
        provider_specialty=ids["provider_specialty"] or "",
        patient_id=ids["patient_id"] or "",
        site_id=ids["site_id"] or "",
        scheduled_at=scheduled_at,
        booked_at=booked_at,
        duration_minutes=duration,
        outcome=outcome,
    )


def block_of(scheduled_at: datetime, provider_id: str, tz: tzinfo | None = None) -> HourBlock:
    """Map an appointment start time to its hour block.

    Assignment is by start time only, even when the duration crosses the
    hour boundary. With `tz` given, the timestamp is converted to that
    (clinic-local) zone first; otherwise its own offset is used.
    """
    local = scheduled_at.astimezone(tz) if tz is not None else scheduled_at
    return HourBlock(date=local.date(), start_hour=local.hour, provider_id=provider_id)


def record_to_row(record: AppointmentRecord) -> dict[str, str]:
    return {
        "appointment_id": record.appointment_id,
        "provider_id": record.provider_id,
        "provider_specialty": record.provider_specialty,
        "patient_id": record.patient_id,
        "site_id": record.site_id,
        "scheduled_at": format_timestamp(record.scheduled_at),
        "booked_at": format_timestamp(record.booked_at),
        "duration_minutes": str(record.duration_minutes),
        "outcome": record.outcome.value,
    }


def write_records_csv(records: Iterable[AppointmentRecord], path: Path | str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(CANONICAL_FIELDS), lineterminator="\n")
        writer.writeheader()
        for record in records:
            writer.writerow(record_to_row(record))


def read_records_csv(path: Path | str) -> list[AppointmentRecord]:
    with open(path, newline="") as fh:
        return read_records(fh)


def read_records(stream: io.TextIOBase) -> list[AppointmentRecord]:
    reader = csv.DictReader(stream)
    if reader.fieldnames is None:
        raise ValueError("canonical CSV has no header row")
    missing = [f for f in CANONICAL_FIELDS if f not in reader.fieldnames]
    if missing:
        raise ValueError(f"canonical CSV header missing fields: {', '.join(missing)}")
    return [validate_record(row) for row in reader]


def sort_key(record: AppointmentRecord) -> tuple[datetime, str]:
    """Canonical processing order: scheduled_at, ties broken by appointment_id."""
    return (record.scheduled_at, record.appointment_id)
