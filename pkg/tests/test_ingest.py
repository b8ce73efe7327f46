from __future__ import annotations

import io
import random
from datetime import datetime, timedelta

import pytest
from hypothesis import given
from hypothesis import strategies as st

from noshow.ingest import (
    ColumnMapping,
    EmptyFile,
    UndefinedRate,
    UnmappableHeader,
    UnsortedInput,
    engineer_features,
    global_missed_rate,
    identity_mapping,
    load_column_mapping,
    no_show_rate,
    parse_export,
    read_features_csv,
    smoothed_hist_rate,
    write_features_csv,
)
from noshow.schema import Outcome, sort_key

from conftest import CLINIC_TZ, make_record
from oracles import smoothed_rate_oracle

VENDOR_HEADER = "ApptID,Resource,Dept,MRN,Loc,ApptDT,CreateDT,Mins,Status,CancelDT"


def vendor_mapping() -> ColumnMapping:
    return ColumnMapping(
        columns={
            "appointment_id": "ApptID",
            "provider_id": "Resource",
            "provider_specialty": "Dept",
            "patient_id": "MRN",
            "site_id": "Loc",
            "scheduled_at": "ApptDT",
            "booked_at": "CreateDT",
            "duration_minutes": "Mins",
            "outcome": "Status",
        },
        outcome_values={
            "completed": "attended",
            "no show": "missed",
            "scheduled": "pending",
            "canceled": "cancelled",
        },
        timestamp_format="%m/%d/%Y %H:%M",
        assume_utc_offset_minutes=-300,
        cancelled_at_column="CancelDT",
        cancel_window_hours=24.0,
    )


def vendor_row(i: int, status: str = "Completed", appt="05/03/2022 13:15", created="04/26/2022 09:00", cancel="") -> str:
    return f"V{i:04d},DrA,family_medicine,M{i:03d},Main,{appt},{created},15,{status},{cancel}"


class TestParseExport:
    def test_all_valid_rows(self):
        rows = [vendor_row(i) for i in range(1, 11)]
        report = parse_export(io.StringIO("\n".join([VENDOR_HEADER, *rows])), vendor_mapping())
        assert len(report.records) == 10
        assert report.errors == []
        assert report.rows_seen == 10

    def test_malformed_timestamp_cited_with_row_number(self):
        rows = [vendor_row(i) for i in range(1, 11)]
        rows[3] = vendor_row(4, appt="not-a-date")
        report = parse_export(io.StringIO("\n".join([VENDOR_HEADER, *rows])), vendor_mapping())
        assert len(report.records) == 9
        assert len(report.errors) == 1
        assert report.errors[0].row == 4
        assert "scheduled_at" in report.errors[0].reason

    def test_missing_mapped_column_is_unmappable(self):
        header = VENDOR_HEADER.replace("Resource,", "")
        body = "V0001,family_medicine,M001,Main,05/03/2022 13:15,04/26/2022 09:00,15,Completed,"
        with pytest.raises(UnmappableHeader, match="Resource"):
            parse_export(io.StringIO("\n".join([header, body])), vendor_mapping())

    def test_empty_file(self):
        with pytest.raises(EmptyFile):
            parse_export(io.StringIO(""), vendor_mapping())

    def test_row_accounting_always_balances(self):
        rows = [
            vendor_row(1),
            vendor_row(2, status="???"),
            vendor_row(3, appt="13/45/2022 99:99"),
            vendor_row(4, status="No Show"),
        ]
        report = parse_export(io.StringIO("\n".join([VENDOR_HEADER, *rows])), vendor_mapping())
        assert report.rows_seen == 4
        assert len(report.records) == 2
        assert {r.outcome for r in report.records} == {Outcome.ATTENDED, Outcome.MISSED}

    def test_late_cancellation_becomes_missed(self):
        row = vendor_row(1, status="Canceled", cancel="05/03/2022 09:00")
        report = parse_export(io.StringIO("\n".join([VENDOR_HEADER, row])), vendor_mapping())
        assert len(report.records) == 1
        assert report.records[0].outcome is Outcome.MISSED

    def test_early_cancellation_dropped_but_reported(self):
        row = vendor_row(1, status="Canceled", cancel="04/20/2022 09:00")
        report = parse_export(io.StringIO("\n".join([VENDOR_HEADER, row])), vendor_mapping())
        assert report.records == []
        assert len(report.errors) == 1
        assert "cancelled early" in report.errors[0].reason

    def test_identity_mapping_round_trip(self, tmp_path):
        record = make_record()
        canonical = tmp_path / "canonical.csv"
        from noshow.schema import write_records_csv

        write_records_csv([record], canonical)
        report = parse_export(canonical, identity_mapping())
        assert report.records == [record]

    def test_mapping_file_loader(self, tmp_path):
        mapping_file = tmp_path / "mapping.kv"
        mapping_file.write_text(
            "\n".join(
                [
                    "column.appointment_id = ApptID",
                    "column.provider_id = Resource",
                    "column.provider_specialty = Dept",
                    "column.patient_id = MRN",
                    "column.site_id = Loc",
                    "column.scheduled_at = ApptDT",
                    "column.booked_at = CreateDT",
                    "column.duration_minutes = Mins",
                    "column.outcome = Status",
                    "column.cancelled_at = CancelDT",
                    "outcome.attended = Completed",
                    "outcome.missed = No Show",
                    "outcome.pending = Scheduled",
                    "outcome.cancelled = Canceled",
                    "timestamp_format = %m/%d/%Y %H:%M",
                    "timestamp_assume_offset_minutes = -300",
                    "cancel_window_hours = 24",
                ]
            )
        )
        mapping = load_column_mapping(mapping_file)
        report = parse_export(io.StringIO("\n".join([VENDOR_HEADER, vendor_row(1)])), mapping)
        assert len(report.records) == 1

    def test_mapping_missing_canonical_field(self, tmp_path):
        mapping_file = tmp_path / "mapping.kv"
        mapping_file.write_text("column.appointment_id = ApptID\n")
        with pytest.raises(UnmappableHeader):
            load_column_mapping(mapping_file)


class TestRates:
    def test_paper_style_rate(self):
        assert no_show_rate(3, 12) == 0.25
        assert no_show_rate(0, 7) == 0.0
        assert no_show_rate(5, 5) == 1.0

    def test_undefined_for_empty_history(self):
        with pytest.raises(UndefinedRate):
            no_show_rate(0, 0)

    def test_smoothed_new_patient_gets_prior(self):
        assert smoothed_hist_rate(0, 0, 0.2, 5) == pytest.approx(0.2)

    def test_smoothed_hand_example(self):
        assert smoothed_hist_rate(3, 12, 0.2, 5) == pytest.approx(4 / 17)

    def test_smoothed_limit_dominates_prior(self):
        assert smoothed_hist_rate(25_000, 100_000, 0.2, 5) == pytest.approx(0.25, abs=1e-4)

    @given(
        scheduled=st.integers(0, 500),
        missed_frac=st.floats(0, 1),
        global_rate=st.floats(0, 1),
        k=st.floats(0.01, 50),
    )
    def test_smoothed_matches_oracle_and_stays_in_range(self, scheduled, missed_frac, global_rate, k):
        missed = int(scheduled * missed_frac)
        value = smoothed_hist_rate(missed, scheduled, global_rate, k)
        assert value == pytest.approx(smoothed_rate_oracle(missed, scheduled, global_rate, k))
        assert 0.0 <= value <= 1.0

    def test_smoothed_approaches_raw_rate_as_pseudo_count_vanishes(self):
        raw = no_show_rate(3, 12)
        assert smoothed_hist_rate(3, 12, 0.9, 1e-9) == pytest.approx(raw, abs=1e-9)


def patient_sequence(patient_id: str, outcomes: list[Outcome], start_day: int = 0, hour: int = 9):
    records = []
    for i, outcome in enumerate(outcomes):
        records.append(
            make_record(
                appointment_id=f"A{patient_id}-{start_day + i:04d}",
                patient_id=patient_id,
                scheduled_at=datetime(2022, 1, 3, hour, 0, tzinfo=CLINIC_TZ) + timedelta(days=start_day + i),
                outcome=outcome,
            )
        )
    return records


class TestEngineerFeatures:
    def test_prior_history_smoothed(self):
        outcomes = [Outcome.MISSED] * 3 + [Outcome.ATTENDED] * 9
        records = patient_sequence("P1", outcomes + [Outcome.PENDING])
        features = engineer_features(records, global_rate=0.2, pseudo_count=5)
        last = features[-1]
        assert last.patient_prior_appointments == 12
        assert last.patient_hist_rate == pytest.approx(4 / 17)
        assert last.label is None

    def test_lead_time_days(self):
        record = make_record(
            scheduled_at=datetime(2022, 5, 15, 10, 0, tzinfo=CLINIC_TZ), lead_days=14.0
        )
        [fv] = engineer_features([record], global_rate=0.2)
        assert fv.lead_time_days == pytest.approx(14.0)

    def test_first_appointment_gets_prior_only(self):
        [fv] = engineer_features([make_record()], global_rate=0.2)
        assert fv.patient_prior_appointments == 0
        assert fv.patient_hist_rate == pytest.approx(0.2)

    def test_same_instant_outcomes_excluded(self):
        t = datetime(2022, 5, 3, 9, 0, tzinfo=CLINIC_TZ)
        records = [
            make_record(appointment_id="A0000001", patient_id="P1", scheduled_at=t, outcome=Outcome.MISSED),
            make_record(appointment_id="A0000002", patient_id="P1", scheduled_at=t, outcome=Outcome.ATTENDED),
            make_record(
                appointment_id="A0000003",
                patient_id="P1",
                scheduled_at=t + timedelta(hours=1),
                outcome=Outcome.ATTENDED,
            ),
        ]
        features = engineer_features(records, global_rate=0.2)
        # the 9am pair cannot see each other
        assert features[0].patient_prior_appointments == 0
        assert features[1].patient_prior_appointments == 0
        # the 10am visit sees both 9am outcomes
        assert features[2].patient_prior_appointments == 2

    def test_unsorted_input_rejected(self):
        records = patient_sequence("P1", [Outcome.ATTENDED, Outcome.MISSED])
        with pytest.raises(UnsortedInput):
            engineer_features(list(reversed(records)), global_rate=0.2)

    def test_leakage_guard_truncation(self):
        rng = random.Random(7)
        records = []
        for p in range(8):
            outcomes = [rng.choice([Outcome.ATTENDED, Outcome.MISSED]) for _ in range(20)]
            records.extend(patient_sequence(f"P{p}", outcomes, hour=9 + p % 6))
        records.sort(key=sort_key)
        cutoff = datetime(2022, 1, 14, 0, 0, tzinfo=CLINIC_TZ)

        full = engineer_features(records, global_rate=0.25)
        truncated = engineer_features(
            [r for r in records if r.scheduled_at < cutoff], global_rate=0.25
        )
        before = [fv for fv in full if fv.scheduled_at < cutoff]
        assert before == truncated

    def test_permutation_stability(self):
        rng = random.Random(3)
        records = []
        for p in range(5):
            outcomes = [rng.choice([Outcome.ATTENDED, Outcome.MISSED]) for _ in range(10)]
            records.extend(patient_sequence(f"P{p}", outcomes))
        records.sort(key=sort_key)
        expected = engineer_features(records, global_rate=0.3)
        shuffled = records[:]
        rng.shuffle(shuffled)
        shuffled.sort(key=sort_key)
        assert engineer_features(shuffled, global_rate=0.3) == expected

    def test_global_missed_rate_ignores_pending(self):
        records = patient_sequence("P1", [Outcome.MISSED, Outcome.ATTENDED, Outcome.PENDING])
        assert global_missed_rate(records) == pytest.approx(0.5)


class TestFeatureCsv:
    def test_round_trip(self, tmp_path):
        records = patient_sequence("P1", [Outcome.MISSED, Outcome.ATTENDED, Outcome.PENDING])
        features = engineer_features(records, global_rate=0.2)
        path = tmp_path / "features.csv"
        write_features_csv(features, path)
        assert read_features_csv(path) == features

    def test_header_mismatch_rejected(self, tmp_path):
        path = tmp_path / "features.csv"
        path.write_text("appointment_id,oops\nA1,1\n")
        with pytest.raises(ValueError, match="documented layout"):
            read_features_csv(path)
