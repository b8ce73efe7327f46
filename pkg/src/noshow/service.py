"""Read-only HTTP API over the latest published pipeline snapshot.

The pipeline publishes immutable, content-addressed snapshot directories
and atomically swaps a pointer file; every request resolves the pointer
once and serves entirely from that snapshot, so concurrent requests
during a publish see either the old or the new snapshot, never a mix.
No write endpoints exist by design, and the bind address defaults to
loopback; put authentication in front of it if it ever leaves the
clinic intranet.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass
from datetime import date, datetime, timezone
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from pydantic import BaseModel

from .aggregate import (
    HeatmapGrid,
    ScoredAppointment,
    build_heatmap,
    read_scored_csv,
    week_range,
    write_scored_csv,
)

API_PREFIX = "/api/v1"
POINTER_NAME = "current.json"


class CellAppointmentModel(BaseModel):
    appointment_id: str
    scheduled_at: str
    probability: float


class HeatmapCellModel(BaseModel):
    date: str
    hour: int
    provider_id: str | None
    expected: float
    n_scheduled: int
    color: str
    overbook: int
    appointments: list[CellAppointmentModel]


class HeatmapResponse(BaseModel):
    snapshot_id: str
    week: str
    start: str
    end: str
    days: list[str]
    hours: list[int]
    filters: dict[str, str]
    providers: list[str]
    cells: list[HeatmapCellModel]


class ProviderModel(BaseModel):
    provider_id: str
    specialty: str
    sites: list[str]


class ProvidersResponse(BaseModel):
    snapshot_id: str
    providers: list[ProviderModel]


class MetaResponse(BaseModel):
    snapshot_id: str
    generated_at: str
    date_range: list[str]
    open_hour: int
    close_hour: int
    specialties: list[str]
    sites: list[str]
    model: dict


class HealthResponse(BaseModel):
    snapshot_id: str


@dataclass
class Snapshot:
    """One immutable published output set, fully loaded into memory."""

    snapshot_id: str
    meta: dict
    scored: list[ScoredAppointment]
    providers: list[dict]

    @property
    def open_hour(self) -> int:
        return int(self.meta["open_hour"])

    @property
    def close_hour(self) -> int:
        return int(self.meta["close_hour"])

    @property
    def provider_ids(self) -> set[str]:
        return {p["provider_id"] for p in self.providers}

    @property
    def specialties(self) -> set[str]:
        return {p["specialty"] for p in self.providers}

    @property
    def sites(self) -> set[str]:
        return {site for p in self.providers for site in p["sites"]}

    @property
    def date_range(self) -> tuple[date, date]:
        """Servable dates: the scored range widened to whole clinic weeks."""
        lo, hi = self.meta["date_range"]
        return week_range(date.fromisoformat(lo))[0], week_range(date.fromisoformat(hi))[1]

    @classmethod
    def load(cls, directory: Path) -> "Snapshot":
        meta = json.loads((directory / "meta.json").read_text())
        providers = json.loads((directory / "providers.json").read_text())
        scored = read_scored_csv(directory / "scored.csv")
        return cls(
            snapshot_id=meta["snapshot_id"],
            meta=meta,
            scored=scored,
            providers=providers,
        )

    def heatmap(
        self,
        week_start: date,
        provider: str | None,
        specialty: str | None,
        site: str | None,
    ) -> HeatmapGrid:
        return build_heatmap(
            self.scored,
            week_start,
            open_hour=self.open_hour,
            close_hour=self.close_hour,
            provider=provider,
            specialty=specialty,
            site=site,
        )


def providers_catalog(scored: list[ScoredAppointment]) -> list[dict]:
    by_provider: dict[str, dict] = {}
    for a in scored:
        entry = by_provider.setdefault(
            a.provider_id, {"provider_id": a.provider_id, "specialty": a.provider_specialty, "sites": set()}
        )
        entry["sites"].add(a.site_id)
    return [
        {"provider_id": p["provider_id"], "specialty": p["specialty"], "sites": sorted(p["sites"])}
        for p in sorted(by_provider.values(), key=lambda p: p["provider_id"])
    ]


def publish_snapshot(
    scored: list[ScoredAppointment],
    snapshot_root: Path | str,
    open_hour: int,
    close_hour: int,
    model_metadata: dict | None = None,
    generated_at: str | None = None,
) -> str:
    """Write a content-addressed snapshot directory and swap the pointer to it.

    Re-publishing identical content reuses the existing directory, so a
    snapshot is never rewritten once it exists.
    """
    if not scored:
        raise ValueError("refusing to publish an empty snapshot: no scored appointments")
    root = Path(snapshot_root)
    root.mkdir(parents=True, exist_ok=True)

    providers = providers_catalog(scored)
    with tempfile.TemporaryDirectory(dir=root, prefix=".staging-") as staging:
        staging_dir = Path(staging)
        write_scored_csv(scored, staging_dir / "scored.csv")
        providers_bytes = json.dumps(providers, indent=2, sort_keys=True).encode()
        (staging_dir / "providers.json").write_bytes(providers_bytes)

        digest = hashlib.sha256()
        digest.update((staging_dir / "scored.csv").read_bytes())
        digest.update(providers_bytes)
        digest.update(json.dumps({"open_hour": open_hour, "close_hour": close_hour}).encode())
        snapshot_id = digest.hexdigest()[:12]

        final_dir = root / snapshot_id
        if not final_dir.exists():
            dates = sorted(a.scheduled_at.date() for a in scored)
            meta = {
                "snapshot_id": snapshot_id,
                "generated_at": generated_at or datetime.now(timezone.utc).isoformat(timespec="seconds"),
                "date_range": [dates[0].isoformat(), dates[-1].isoformat()],
                "open_hour": open_hour,
                "close_hour": close_hour,
                "n_appointments": len(scored),
                "model": model_metadata or {},
            }
            (staging_dir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
            try:
                os.replace(staging_dir, final_dir)
            except OSError:
                if not final_dir.exists():  # lost a race for the same content is fine
                    raise
            Path(staging).mkdir(exist_ok=True)  # TemporaryDirectory cleanup target

    pointer_tmp = root / (POINTER_NAME + f".tmp-{os.getpid()}")
    pointer_tmp.write_text(json.dumps({"snapshot_id": snapshot_id}))
    os.replace(pointer_tmp, root / POINTER_NAME)
    return snapshot_id


class SnapshotStore:
    """Resolves the pointer per request; loaded snapshots are cached by id."""

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self._cache: dict[str, Snapshot] = {}

    def current(self) -> Snapshot | None:
        pointer = self.root / POINTER_NAME
        try:
            snapshot_id = json.loads(pointer.read_text())["snapshot_id"]
        except (FileNotFoundError, json.JSONDecodeError, KeyError):
            return None
        cached = self._cache.get(snapshot_id)
        if cached is not None:
            return cached
        directory = self.root / snapshot_id
        if not directory.is_dir():
            return None
        snapshot = Snapshot.load(directory)
        self._cache[snapshot_id] = snapshot
        return snapshot


def _error(status: int, code: str, param: str | None = None, value: object = None) -> HTTPException:
    detail: dict[str, object] = {"code": code}
    if param is not None:
        detail["param"] = param
    if value is not None:
        detail["value"] = value
    return HTTPException(status_code=status, detail=detail)


def create_app(snapshot_root: Path | str, static_dir: Path | str | None = None) -> FastAPI:
    app = FastAPI(title="noshow heatmap service", version="1")
    store = SnapshotStore(snapshot_root)
    app.state.store = store

    def current_snapshot() -> Snapshot:
        snapshot = store.current()
        if snapshot is None:
            raise _error(503, "no_snapshot_published")
        return snapshot

    def check_filters(snapshot: Snapshot, provider, specialty, site) -> None:
        if provider is not None and provider not in snapshot.provider_ids:
            raise _error(404, "unknown_provider", "provider", provider)
        if specialty is not None and specialty not in snapshot.specialties:
            raise _error(404, "unknown_specialty", "specialty", specialty)
        if site is not None and site not in snapshot.sites:
            raise _error(404, "unknown_site", "site", site)

    def parse_week(raw: str | None, snapshot: Snapshot) -> date:
        if raw is None:
            return week_range(snapshot.date_range[1])[0]
        try:
            return week_range(date.fromisoformat(raw))[0]
        except ValueError:
            raise _error(400, "malformed_date", "week", raw)

    @app.get("/healthz", response_model=HealthResponse)
    def healthz():
        return HealthResponse(snapshot_id=current_snapshot().snapshot_id)

    @app.get(f"{API_PREFIX}/meta", response_model=MetaResponse)
    def meta():
        snapshot = current_snapshot()
        lo, hi = snapshot.date_range
        return MetaResponse(
            snapshot_id=snapshot.snapshot_id,
            generated_at=snapshot.meta["generated_at"],
            date_range=[lo.isoformat(), hi.isoformat()],
            open_hour=snapshot.open_hour,
            close_hour=snapshot.close_hour,
            specialties=sorted(snapshot.specialties),
            sites=sorted(snapshot.sites),
            model=snapshot.meta.get("model", {}),
        )

    @app.get(f"{API_PREFIX}/providers", response_model=ProvidersResponse)
    def providers():
        snapshot = current_snapshot()
        return ProvidersResponse(
            snapshot_id=snapshot.snapshot_id,
            providers=[ProviderModel(**p) for p in snapshot.providers],
        )

    @app.get(f"{API_PREFIX}/heatmap", response_model=HeatmapResponse)
    def heatmap(
        week: str | None = Query(default=None),
        provider: str | None = Query(default=None),
        specialty: str | None = Query(default=None),
        site: str | None = Query(default=None),
    ):
        snapshot = current_snapshot()
        check_filters(snapshot, provider, specialty, site)
        week_start = parse_week(week, snapshot)
        grid = snapshot.heatmap(week_start, provider, specialty, site)
        doc = grid.as_dict()
        return HeatmapResponse(snapshot_id=snapshot.snapshot_id, **doc)

    @app.get(f"{API_PREFIX}/blocks/{{block_date}}/{{hour}}", response_model=list[CellAppointmentModel])
    def block(
        block_date: str,
        hour: int,
        provider: str | None = Query(default=None),
        specialty: str | None = Query(default=None),
        site: str | None = Query(default=None),
    ):
        snapshot = current_snapshot()
        check_filters(snapshot, provider, specialty, site)
        try:
            day = date.fromisoformat(block_date)
        except ValueError:
            raise _error(400, "malformed_date", "date", block_date)
        if not 0 <= hour <= 23:
            raise _error(400, "malformed_hour", "hour", hour)
        lo, hi = snapshot.date_range
        if not (lo <= day <= hi) or not (snapshot.open_hour <= hour < snapshot.close_hour):
            raise _error(404, "block_out_of_range", "date", f"{block_date}T{hour:02d}")
        grid = snapshot.heatmap(week_range(day)[0], provider, specialty, site)
        if (day, hour) not in grid.cells:
            raise _error(404, "block_out_of_range", "date", f"{block_date}T{hour:02d}")
        cell = grid.cell(day, hour)
        return [CellAppointmentModel(**entry.as_dict()) for entry in cell.appointments]

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="dashboard")

    return app
