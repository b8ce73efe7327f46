from __future__ import annotations

from datetime import datetime, timedelta, timezone

import pytest

from noshow.schema import AppointmentRecord, Outcome

CLINIC_TZ = timezone(timedelta(hours=-5))


def make_record(
    appointment_id: str = "A0000001",
    provider_id: str = "D01",
    provider_specialty: str = "family_medicine",
    patient_id: str = "P00001",
    site_id: str = "S1",
    scheduled_at: datetime | None = None,
    lead_days: float = 7.0,
    duration_minutes: int = 15,
    outcome: Outcome = Outcome.ATTENDED,
) -> AppointmentRecord:
    scheduled = scheduled_at or datetime(2022, 5, 3, 13, 15, tzinfo=CLINIC_TZ)
    return AppointmentRecord(
        appointment_id=appointment_id,
        provider_id=provider_id,
        provider_specialty=provider_specialty,
        patient_id=patient_id,
        site_id=site_id,
        scheduled_at=scheduled,
        booked_at=scheduled - timedelta(days=lead_days),
        duration_minutes=duration_minutes,
        outcome=outcome,
    )


@pytest.fixture
def record_factory():
    return make_record
