from __future__ import annotations

import io
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given
from hypothesis import strategies as st

from noshow.schema import (
    CANONICAL_FIELDS,
    HourBlock,
    Outcome,
    RecordValidationError,
    ValidationCode,
    block_of,
    outcome_label,
    read_records,
    record_to_row,
    season_of,
    validate_record,
    write_records_csv,
)

from conftest import CLINIC_TZ, make_record

GOOD_ROW = {
    "appointment_id": "A0000001",
    "provider_id": "D01",
    "provider_specialty": "family_medicine",
    "patient_id": "P00001",
    "site_id": "S1",
    "scheduled_at": "2022-05-03T13:15-05:00",
    "booked_at": "2022-04-26T09:00-05:00",
    "duration_minutes": "15",
    "outcome": "attended",
}


class TestValidateRecord:
    def test_well_formed_row(self):
        record = validate_record(GOOD_ROW)
        assert record.appointment_id == "A0000001"
        assert record.outcome is Outcome.ATTENDED
        assert record.scheduled_at == datetime(2022, 5, 3, 13, 15, tzinfo=CLINIC_TZ)
        assert record.lead_time_days == pytest.approx(7.177083333333333)

    def test_negative_lead_time(self):
        row = dict(GOOD_ROW, booked_at="2022-05-20T09:00-05:00", scheduled_at="2022-05-01T09:00-05:00")
        with pytest.raises(RecordValidationError) as err:
            validate_record(row)
        assert [e.code for e in err.value.errors] == [ValidationCode.NEGATIVE_LEAD_TIME]

    def test_unknown_outcome(self):
        with pytest.raises(RecordValidationError) as err:
            validate_record(dict(GOOD_ROW, outcome="maybe"))
        assert [e.code for e in err.value.errors] == [ValidationCode.UNKNOWN_OUTCOME]

    def test_all_violations_reported_at_once(self):
        row = dict(GOOD_ROW, outcome="maybe", scheduled_at="not a time", duration_minutes="0")
        del row["patient_id"]
        with pytest.raises(RecordValidationError) as err:
            validate_record(row)
        codes = {e.code for e in err.value.errors}
        assert codes == {
            ValidationCode.UNKNOWN_OUTCOME,
            ValidationCode.MALFORMED_TIMESTAMP,
            ValidationCode.INVALID_DURATION,
            ValidationCode.MISSING_FIELD,
        }

    def test_naive_timestamp_rejected(self):
        with pytest.raises(RecordValidationError) as err:
            validate_record(dict(GOOD_ROW, scheduled_at="2022-05-03T13:15"))
        assert err.value.errors[0].code is ValidationCode.MALFORMED_TIMESTAMP

    def test_duration_bounds(self):
        assert validate_record(dict(GOOD_ROW, duration_minutes="5")).duration_minutes == 5
        assert validate_record(dict(GOOD_ROW, duration_minutes="240")).duration_minutes == 240
        for bad in ("4", "241", "-5", "2.5"):
            with pytest.raises(RecordValidationError):
                validate_record(dict(GOOD_ROW, duration_minutes=bad))


class TestBlockOf:
    def test_truncates_to_hour(self):
        ts = datetime(2022, 5, 3, 13, 15, tzinfo=CLINIC_TZ)
        assert block_of(ts, "D01") == HourBlock(ts.date(), 13, "D01")

    def test_boundary_start_inclusive(self):
        ts = datetime(2022, 5, 3, 13, 0, tzinfo=CLINIC_TZ)
        assert block_of(ts, "D01").start_hour == 13

    def test_duration_crossing_hour_keeps_start_block(self):
        # 13:45 with a 30-minute visit still belongs to the 13:00 block
        record = make_record(scheduled_at=datetime(2022, 5, 3, 13, 45, tzinfo=CLINIC_TZ), duration_minutes=30)
        assert block_of(record.scheduled_at, record.provider_id).start_hour == 13

    def test_idempotent_under_retruncation(self):
        ts = datetime(2022, 5, 3, 13, 55, tzinfo=CLINIC_TZ)
        block = block_of(ts, "D01")
        start = datetime.combine(block.date, datetime.min.time(), CLINIC_TZ).replace(hour=block.start_hour)
        assert block_of(start, "D01") == block

    def test_mixed_offsets_converted_to_clinic_time(self):
        # one hour apart in absolute time must never share a block
        a = datetime(2022, 5, 3, 13, 0, tzinfo=timezone(timedelta(hours=-5)))
        b = datetime(2022, 5, 3, 13, 0, tzinfo=timezone(timedelta(hours=-4)))
        assert block_of(a, "D01", tz=CLINIC_TZ) != block_of(b, "D01", tz=CLINIC_TZ)

    @given(st.datetimes(min_value=datetime(2020, 1, 1), max_value=datetime(2030, 1, 1)))
    def test_hour_always_valid(self, naive):
        ts = naive.replace(tzinfo=CLINIC_TZ)
        block = block_of(ts, "D01")
        assert 0 <= block.start_hour <= 23
        assert block.date == ts.date()


class TestOutcomeLabel:
    def test_missed_is_one(self):
        assert outcome_label(Outcome.MISSED) == 1
        assert outcome_label(Outcome.ATTENDED) == 0

    def test_pending_never_labels(self):
        with pytest.raises(ValueError):
            outcome_label(Outcome.PENDING)


class TestCsvRoundTrip:
    def test_round_trip_is_fixed_point(self, tmp_path):
        records = [
            make_record(appointment_id=f"A{i:07d}", outcome=o)
            for i, o in enumerate([Outcome.ATTENDED, Outcome.MISSED, Outcome.PENDING], start=1)
        ]
        path = tmp_path / "records.csv"
        write_records_csv(records, path)
        first = path.read_bytes()
        loaded = read_records(io.StringIO(first.decode()))
        assert loaded == records
        write_records_csv(loaded, path)
        assert path.read_bytes() == first

    def test_header_is_canonical(self, tmp_path):
        path = tmp_path / "records.csv"
        write_records_csv([make_record()], path)
        header = path.read_text().splitlines()[0]
        assert header == ",".join(CANONICAL_FIELDS)

    def test_row_preserves_offset(self):
        row = record_to_row(make_record())
        assert row["scheduled_at"].endswith("-05:00")


def test_season_mapping_is_total():
    seen = {}
    for month in range(1, 13):
        seen[month] = season_of(datetime(2022, month, 15).date())
    assert seen[12] == seen[1] == seen[2] == "winter"
    assert seen[3] == seen[5] == "spring"
    assert seen[6] == seen[8] == "summer"
    assert seen[9] == seen[11] == "fall"
