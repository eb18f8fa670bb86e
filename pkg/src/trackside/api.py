"""HTTP/JSON service: ingestion, processing jobs, filtered photo queries,
overlays, feedback, online metrics, and the team-centroid dashboard.

Processing is an explicit asynchronous job because events arrive in
thousand-photo batches; one job per event runs at a time (a second request
gets 409). Photo queries are conjunctive over annotation fields and
paginated with a stable photo-id order. Every response body matches the
JSON schemas published under ``docs/schema``.

Authentication is a single static bearer token from deployment
configuration; endpoints are open when no token is configured.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field as dataclass_field
from typing import Any

from fastapi import Depends, FastAPI, HTTPException, Query, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from trackside.model import (
    FeedbackReason,
    OrientationLabel,
    PhotoRecord,
    PhotoStatus,
)
from trackside.pipeline import PipelineConfig, reassign_annotations, run_photos
from trackside.providers.base import InferenceProvider
from trackside.store import (
    DocumentStore,
    RaceEvent,
    UnknownPhoto,
    event_summary,
    online_metrics,
    submit_feedback,
)
from trackside.teams import TeamCentroidStore


class CreateEventRequest(BaseModel):
    name: str
    series: str = ""
    date: str = ""
    event_id: str | None = None


class PhotoIn(BaseModel):
    uri: str
    width_px: int = Field(gt=0)
    height_px: int = Field(gt=0)
    photo_id: str | None = None
    captured_at: str | None = None


class AddPhotosRequest(BaseModel):
    photos: list[PhotoIn]


class ProcessRequest(BaseModel):
    force: bool = False
    workers: int = Field(default=1, ge=1, le=32)


class FeedbackRequest(BaseModel):
    reason: str
    note: str = ""


@dataclass
class Job:
    job_id: str
    event_id: str
    state: str = "queued"  # queued | running | done | failed
    total: int = 0
    processed: int = 0
    error: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "job_id": self.job_id,
            "event_id": self.event_id,
            "state": self.state,
            "total": self.total,
            "processed": self.processed,
            "error": self.error,
        }


@dataclass
class _Runtime:
    store: DocumentStore
    provider: InferenceProvider | None
    pipeline: PipelineConfig
    token: str | None = None
    jobs: dict[str, Job] = dataclass_field(default_factory=dict)
    active_events: set[str] = dataclass_field(default_factory=set)
    team_stores: dict[str, TeamCentroidStore] = dataclass_field(default_factory=dict)
    lock: threading.Lock = dataclass_field(default_factory=threading.Lock)

    def team_store_for(self, event_id: str) -> TeamCentroidStore:
        with self.lock:
            if event_id not in self.team_stores:
                saved = self.store.load_team_snapshot(event_id)
                if saved and "teams" in saved and any(
                    "references" in t for t in saved["teams"].values()
                ):
                    self.team_stores[event_id] = TeamCentroidStore.restore(saved)
                else:
                    self.team_stores[event_id] = TeamCentroidStore(self.pipeline.team)
            return self.team_stores[event_id]


def _run_job(runtime: _Runtime, job: Job, force: bool, workers: int) -> None:
    store = runtime.store
    try:
        photos = list(store.iter_photos(job.event_id))
        pending = [p for p in photos if force or p.status is PhotoStatus.PENDING]
        job.total = len(pending)
        job.state = "running"
        team_store = runtime.team_store_for(job.event_id)

        def persist(result) -> None:
            store.put_photo(result.record)
            for ref, embedding in result.embeddings.items():
                store.put_embedding(job.event_id, ref, embedding)
            job.processed += 1

        run_photos(
            pending,
            runtime.provider,
            runtime.pipeline,
            team_store,
            workers=workers,
            force=force,
            on_result=persist,
        )
        changed = reassign_annotations(
            store.iter_photos(job.event_id), store.get_embedding, team_store
        )
        for record in changed:
            store.put_photo(record)
        store.save_team_snapshot(job.event_id, team_store.dump())
        job.state = "done"
    except Exception as exc:  # job failures must be observable, not raised
        job.state = "failed"
        job.error = f"{type(exc).__name__}: {exc}"
    finally:
        with runtime.lock:
            runtime.active_events.discard(job.event_id)


def create_app(
    store: DocumentStore,
    provider: InferenceProvider | None = None,
    pipeline_config: PipelineConfig | None = None,
    token: str | None = None,
    ui_dir: str | None = None,
) -> FastAPI:
    runtime = _Runtime(
        store=store,
        provider=provider,
        pipeline=pipeline_config or PipelineConfig(),
        token=token,
    )
    app = FastAPI(title="trackside", version="0.1.0")
    app.state.runtime = runtime

    def auth(request: Request) -> None:
        if runtime.token is None:
            return
        header = request.headers.get("Authorization", "")
        if header != f"Bearer {runtime.token}":
            raise HTTPException(status_code=401, detail="invalid or missing bearer token")

    def get_event_or_404(event_id: str) -> RaceEvent:
        event = store.get_event(event_id)
        if event is None:
            raise HTTPException(status_code=404, detail=f"unknown event: {event_id}")
        return event

    @app.get("/health", dependencies=[Depends(auth)])
    def health() -> dict:
        return {"status": "ok", "provider": runtime.provider is not None}

    @app.post("/events", status_code=201, dependencies=[Depends(auth)])
    def create_event(body: CreateEventRequest) -> dict:
        event_id = body.event_id or f"event-{uuid.uuid4().hex[:8]}"
        if store.get_event(event_id) is not None:
            raise HTTPException(status_code=409, detail=f"event exists: {event_id}")
        event = RaceEvent(event_id=event_id, name=body.name, series=body.series, date=body.date)
        store.put_event(event)
        return event.to_dict()

    @app.get("/events", dependencies=[Depends(auth)])
    def list_events() -> dict:
        return {"events": [e.to_dict() for e in store.list_events()]}

    @app.get("/events/{event_id}", dependencies=[Depends(auth)])
    def get_event(event_id: str) -> dict:
        get_event_or_404(event_id)
        return event_summary(store, event_id).to_dict()

    @app.post("/events/{event_id}/photos", status_code=202, dependencies=[Depends(auth)])
    def add_photos(event_id: str, body: AddPhotosRequest) -> dict:
        get_event_or_404(event_id)
        photo_ids = []
        for item in body.photos:
            photo_id = item.photo_id or f"{event_id}-ph{uuid.uuid4().hex[:10]}"
            record = PhotoRecord(
                photo_id=photo_id,
                event_id=event_id,
                uri=item.uri,
                width_px=item.width_px,
                height_px=item.height_px,
                captured_at=item.captured_at,
            )
            store.put_photo(record)
            photo_ids.append(photo_id)
        return {"photo_ids": photo_ids}

    @app.post("/events/{event_id}/process", status_code=202, dependencies=[Depends(auth)])
    def process_event(event_id: str, body: ProcessRequest | None = None) -> dict:
        get_event_or_404(event_id)
        body = body or ProcessRequest()
        if runtime.provider is None or not runtime.provider.available():
            raise HTTPException(status_code=503, detail="inference provider unavailable")
        with runtime.lock:
            if event_id in runtime.active_events:
                raise HTTPException(
                    status_code=409, detail=f"processing already running for {event_id}"
                )
            runtime.active_events.add(event_id)
            job = Job(job_id=f"job-{uuid.uuid4().hex[:12]}", event_id=event_id)
            runtime.jobs[job.job_id] = job
        thread = threading.Thread(
            target=_run_job, args=(runtime, job, body.force, body.workers), daemon=True
        )
        thread.start()
        return {"job_id": job.job_id}

    @app.get("/jobs/{job_id}", dependencies=[Depends(auth)])
    def get_job(job_id: str) -> dict:
        job = runtime.jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown job: {job_id}")
        return job.to_dict()

    @app.get("/events/{event_id}/photos", dependencies=[Depends(auth)])
    def query_photos(
        event_id: str,
        number: str | None = None,
        team: str | None = None,
        orientation: str | None = None,
        manufacturer: str | None = None,
        status: str | None = None,
        page: int = Query(default=1),
        page_size: int = Query(default=50),
    ) -> JSONResponse:
        get_event_or_404(event_id)
        if page < 1 or not 1 <= page_size <= 500:
            raise HTTPException(status_code=400, detail="malformed pagination parameters")
        if orientation is not None:
            try:
                OrientationLabel.parse(orientation)
            except ValueError:
                raise HTTPException(status_code=400, detail=f"malformed filter: orientation={orientation}")
        if status is not None:
            try:
                PhotoStatus(status)
            except ValueError:
                raise HTTPException(status_code=400, detail=f"malformed filter: status={status}")

        def annotation_matches(annotation) -> bool:
            if number is not None and annotation.number != number:
                return False
            if team is not None and annotation.team_assignment != team:
                return False
            if orientation is not None and (
                annotation.orientation is None or annotation.orientation.value != orientation
            ):
                return False
            if manufacturer is not None and annotation.manufacturer != manufacturer:
                return False
            return True

        has_annotation_filter = any(
            f is not None for f in (number, team, orientation, manufacturer)
        )
        matches = []
        for photo in store.iter_photos(event_id):
            if status is not None and photo.status.value != status:
                continue
            if has_annotation_filter and not any(
                annotation_matches(a) for a in photo.annotations
            ):
                continue
            matches.append(photo)
        matches.sort(key=lambda p: p.photo_id)
        total = len(matches)
        start = (page - 1) * page_size
        items = matches[start : start + page_size]
        return JSONResponse(
            {
                "items": [p.to_dict() for p in items],
                "page": page,
                "page_size": page_size,
                "total": total,
                "pages": (total + page_size - 1) // page_size if total else 0,
            }
        )

    @app.get("/photos/{photo_id}", dependencies=[Depends(auth)])
    def get_photo(photo_id: str) -> dict:
        photo = store.get_photo(photo_id)
        if photo is None:
            raise HTTPException(status_code=404, detail=f"unknown photo: {photo_id}")
        return photo.to_dict()

    @app.get("/photos/{photo_id}/overlay", dependencies=[Depends(auth)])
    def get_overlay(photo_id: str) -> dict:
        photo = store.get_photo(photo_id)
        if photo is None:
            raise HTTPException(status_code=404, detail=f"unknown photo: {photo_id}")
        cars = []
        for annotation in photo.annotations:
            cars.append(
                {
                    "car_box": annotation.car_box.to_dict(),
                    "number": annotation.number,
                    "team_assignment": annotation.team_assignment,
                    "orientation": annotation.orientation.value if annotation.orientation else None,
                    "manufacturer": annotation.manufacturer,
                    "wheel_keypoints": [kp.to_dict() for kp in annotation.wheel_keypoints],
                    "measurements": [m.to_dict() for m in annotation.measurements],
                }
            )
        return {
            "photo_id": photo.photo_id,
            "width_px": photo.width_px,
            "height_px": photo.height_px,
            "status": photo.status.value,
            "cars": cars,
        }

    @app.post("/photos/{photo_id}/feedback", dependencies=[Depends(auth)])
    def post_feedback(photo_id: str, body: FeedbackRequest) -> JSONResponse:
        try:
            reason = FeedbackReason(body.reason)
        except ValueError:
            raise HTTPException(status_code=400, detail=f"malformed reason: {body.reason}")
        import datetime as _dt

        now = _dt.datetime.now(_dt.timezone.utc).isoformat()
        try:
            record = submit_feedback(store, photo_id, reason, body.note, submitted_at=now)
        except UnknownPhoto:
            raise HTTPException(status_code=404, detail=f"unknown photo: {photo_id}")
        created = record.submitted_at == now
        return JSONResponse(record.to_dict(), status_code=201 if created else 200)

    @app.get("/events/{event_id}/metrics", dependencies=[Depends(auth)])
    def get_metrics(event_id: str) -> dict:
        get_event_or_404(event_id)
        return {"event_id": event_id, **online_metrics(store, event_id).to_dict()}

    @app.get("/teams/{event_id}", dependencies=[Depends(auth)])
    def get_teams(event_id: str) -> dict:
        get_event_or_404(event_id)
        saved = store.load_team_snapshot(event_id)
        if saved is None:
            with runtime.lock:
                live = runtime.team_stores.get(event_id)
            saved = live.dump() if live is not None else {"config": {}, "teams": {}}
        teams = {
            team: {
                "centroid": state.get("centroid"),
                "reference_count": (
                    len(state["references"])
                    if "references" in state
                    else state.get("reference_count", 0)
                ),
                "finalized": state.get("centroid") is not None,
            }
            for team, state in saved.get("teams", {}).items()
        }
        return {"event_id": event_id, "config": saved.get("config", {}), "teams": teams}

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
