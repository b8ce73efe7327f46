"""Per-appointment probabilities rolled up into hour-block decision metrics.

Each provider hour block gets the sum of its appointments' no-show
probabilities (the expected number of misses), a traffic-light color, and
a conservative overbooking recommendation. Summation needs no
independence assumption; reading the recommendation as low-risk does, and
that assumption is deliberate and documented here.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .schema import AppointmentRecord, HourBlock, block_of, format_timestamp, parse_timestamp

SCORED_CSV_COLUMNS = (
    "appointment_id",
    "provider_id",
    "provider_specialty",
    "site_id",
    "scheduled_at",
    "probability",
)

DEFAULT_OPEN_HOUR = 8
DEFAULT_CLOSE_HOUR = 16


class OutOfRangeProbability(ValueError):
    pass


class NegativeInput(ValueError):
    pass


class EmptyWeek(ValueError):
    pass


class Color(str, Enum):
    YELLOW = "yellow"
    ORANGE = "orange"
    RED = "red"


@dataclass(frozen=True)
class ScoredAppointment:
    """An appointment joined with its predicted no-show probability."""

    appointment_id: str
    provider_id: str
    provider_specialty: str
    site_id: str
    scheduled_at: datetime
    probability: float

    @classmethod
    def from_record(cls, record: AppointmentRecord, probability: float) -> "ScoredAppointment":
        return cls(
            appointment_id=record.appointment_id,
            provider_id=record.provider_id,
            provider_specialty=record.provider_specialty,
            site_id=record.site_id,
            scheduled_at=record.scheduled_at,
            probability=probability,
        )


@dataclass(frozen=True)
class TooltipEntry:
    appointment_id: str
    scheduled_at: datetime
    probability: float

    def as_dict(self) -> dict[str, object]:
        return {
            "appointment_id": self.appointment_id,
            "scheduled_at": format_timestamp(self.scheduled_at),
            "probability": self.probability,
        }


@dataclass(frozen=True)
class BlockSummary:
    """One heatmap cell."""

    block: HourBlock
    expected_misses: float
    n_scheduled: int
    color: Color
    recommended_overbook: int
    appointments: tuple[TooltipEntry, ...]


def expected_no_shows(probabilities: Iterable[float]) -> float:
    """Sum of per-appointment probabilities; an empty block expects zero misses."""
    total = 0.0
    for p in probabilities:
        if not 0.0 <= p <= 1.0:
            raise OutOfRangeProbability(f"probability {p!r} outside [0, 1]")
        total += p
    return total


def color_code(expected_misses: float) -> Color:
    """Yellow below 1 expected miss, orange through 2 inclusive, red above."""
    if expected_misses < 0:
        raise NegativeInput(f"expected misses cannot be negative, got {expected_misses!r}")
    if expected_misses < 1.0:
        return Color.YELLOW
    if expected_misses <= 2.0:
        return Color.ORANGE
    return Color.RED


def recommend_overbook(expected_misses: float) -> int:
    """Floor of the expectation keeps the post-overbook load within scheduled capacity."""
    if expected_misses < 0:
        raise NegativeInput(f"expected misses cannot be negative, got {expected_misses!r}")
    return math.floor(expected_misses)


def summarize_block(block: HourBlock, appointments: Sequence[ScoredAppointment]) -> BlockSummary:
    entries = tuple(
        TooltipEntry(a.appointment_id, a.scheduled_at, a.probability)
        for a in sorted(appointments, key=lambda a: (a.scheduled_at, a.appointment_id))
    )
    expected = expected_no_shows(a.probability for a in appointments)
    return BlockSummary(
        block=block,
        expected_misses=expected,
        n_scheduled=len(appointments),
        color=color_code(expected),
        recommended_overbook=recommend_overbook(expected),
        appointments=entries,
    )


def week_range(anchor: date) -> tuple[date, date]:
    """Monday through Friday of the week containing the anchor date."""
    monday = anchor - timedelta(days=anchor.weekday())
    return monday, monday + timedelta(days=4)


@dataclass
class HeatmapGrid:
    """A week of hour blocks; one cell per (clinic day, hour)."""

    start: date
    end: date
    days: list[date]
    hours: list[int]
    provider_id: str | None  # None when cells merge all providers
    providers: list[str]  # providers contributing appointments to the grid
    cells: dict[tuple[date, int], BlockSummary]
    filters: dict[str, str]

    def cell(self, day: date, hour: int) -> BlockSummary:
        return self.cells[(day, hour)]

    def total_expected(self) -> float:
        return sum(c.expected_misses for c in self.cells.values())

    def total_scheduled(self) -> int:
        return sum(c.n_scheduled for c in self.cells.values())

    def as_dict(self) -> dict[str, object]:
        return {
            "week": self.start.isoformat(),
            "start": self.start.isoformat(),
            "end": self.end.isoformat(),
            "days": [d.isoformat() for d in self.days],
            "hours": self.hours,
            "filters": self.filters,
            "providers": self.providers,
            "cells": [
                {
                    "date": day.isoformat(),
                    "hour": hour,
                    "provider_id": self.provider_id,
                    "expected": cell.expected_misses,
                    "n_scheduled": cell.n_scheduled,
                    "color": cell.color.value,
                    "overbook": cell.recommended_overbook,
                    "appointments": [e.as_dict() for e in cell.appointments],
                }
                for (day, hour), cell in sorted(self.cells.items(), key=lambda kv: (kv[0][0], kv[0][1]))
            ],
        }


def apply_filters(
    scored: Iterable[ScoredAppointment],
    provider: str | None = None,
    specialty: str | None = None,
    site: str | None = None,
) -> list[ScoredAppointment]:
    out = []
    for a in scored:
        if provider is not None and a.provider_id != provider:
            continue
        if specialty is not None and a.provider_specialty != specialty:
            continue
        if site is not None and a.site_id != site:
            continue
        out.append(a)
    return out


def build_heatmap(
    scored: Iterable[ScoredAppointment],
    start: date,
    end: date | None = None,
    open_hour: int = DEFAULT_OPEN_HOUR,
    close_hour: int = DEFAULT_CLOSE_HOUR,
    provider: str | None = None,
    specialty: str | None = None,
    site: str | None = None,
) -> HeatmapGrid:
    """Aggregate the appointments passing the filters into a week grid.

    Cells exist for every clinic weekday in [start, end] and every hour in
    clinic operating hours; blocks with no appointments appear with zero
    expectation so the grid shape is stable.
    """
    if end is None:
        start, end = week_range(start)
    if end < start:
        raise EmptyWeek(f"range {start}..{end} is empty")
    days = [
        start + timedelta(days=i)
        for i in range((end - start).days + 1)
        if (start + timedelta(days=i)).weekday() < 5
    ]
    if not days:
        raise EmptyWeek(f"no clinic days between {start} and {end}")
    hours = list(range(open_hour, close_hour))

    selected = apply_filters(scored, provider=provider, specialty=specialty, site=site)
    by_cell: dict[tuple[date, int], list[ScoredAppointment]] = {}
    day_set = set(days)
    in_grid: set[str] = set()
    for a in selected:
        block = block_of(a.scheduled_at, a.provider_id)
        key = (block.date, block.start_hour)
        if block.date in day_set and block.start_hour in hours:
            by_cell.setdefault(key, []).append(a)
            in_grid.add(a.provider_id)

    filters = {}
    if provider is not None:
        filters["provider"] = provider
    if specialty is not None:
        filters["specialty"] = specialty
    if site is not None:
        filters["site"] = site

    cells = {}
    for day in days:
        for hour in hours:
            block = HourBlock(date=day, start_hour=hour, provider_id=provider or "*")
            cells[(day, hour)] = summarize_block(block, by_cell.get((day, hour), []))
    return HeatmapGrid(
        start=start,
        end=end,
        days=days,
        hours=hours,
        provider_id=provider,
        providers=sorted(in_grid),
        cells=cells,
        filters=filters,
    )


def provider_grids(
    scored: Sequence[ScoredAppointment],
    start: date,
    end: date | None = None,
    open_hour: int = DEFAULT_OPEN_HOUR,
    close_hour: int = DEFAULT_CLOSE_HOUR,
) -> dict[str, HeatmapGrid]:
    """One grid per provider; their cell-wise sums equal the combined grid."""
    providers = sorted({a.provider_id for a in scored})
    return {
        p: build_heatmap(scored, start, end, open_hour, close_hour, provider=p) for p in providers
    }


def write_scored_csv(scored: Iterable[ScoredAppointment], path: Path | str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SCORED_CSV_COLUMNS)
        for a in scored:
            writer.writerow(
                [
                    a.appointment_id,
                    a.provider_id,
                    a.provider_specialty,
                    a.site_id,
                    format_timestamp(a.scheduled_at),
                    repr(a.probability),
                ]
            )


def read_scored_csv(path: Path | str) -> list[ScoredAppointment]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SCORED_CSV_COLUMNS:
            raise ValueError(f"scored CSV header {reader.fieldnames} does not match {SCORED_CSV_COLUMNS}")
        return [
            ScoredAppointment(
                appointment_id=row["appointment_id"],
                provider_id=row["provider_id"],
                provider_specialty=row["provider_specialty"],
                site_id=row["site_id"],
                scheduled_at=parse_timestamp(row["scheduled_at"]),
                probability=float(row["probability"]),
            )
            for row in reader
        ]
