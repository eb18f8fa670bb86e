"""Document persistence for events, photos, embeddings, feedback, and team
snapshots, plus the event-level online quality metrics.

Two store implementations share one interface: the embedded file-backed
store (default; every document is one JSON file, committed by atomic rename,
so a crash never leaves a half-written document visible) and a thin adapter
over an external document database client for deployments that keep
documents in a shared DB. Annotations live denormalized inside photo
documents; embeddings are stored separately under their ``embedding_ref`` to
keep photo documents small.

The online metrics mirror production monitoring: the fraction of photos
where no car was found (N/A photos) and the fraction flagged by users as
feedback, both over the photos whose processing completed
(processed + no_car).
"""

from __future__ import annotations

import abc
import datetime as _dt
import json
import os
import shutil
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator

from trackside.model import (
    Embedding,
    FeedbackReason,
    FeedbackRecord,
    PhotoRecord,
    PhotoStatus,
)


class UnknownEvent(Exception):
    pass


class UnknownPhoto(Exception):
    pass


class IoFailure(Exception):
    pass


@dataclass(frozen=True)
class RaceEvent:
    event_id: str
    name: str
    series: str = ""
    date: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "event_id": self.event_id,
            "name": self.name,
            "series": self.series,
            "date": self.date,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RaceEvent":
        return cls(d["event_id"], d["name"], d.get("series", ""), d.get("date", ""))


@dataclass(frozen=True)
class EventSummary:
    """Photo counts by status (they sum to the total) plus feedback count."""

    event: RaceEvent
    counts_by_status: dict[str, int]
    feedback_count: int

    @property
    def total_photos(self) -> int:
        return sum(self.counts_by_status.values())

    def to_dict(self) -> dict[str, Any]:
        return {
            **self.event.to_dict(),
            "photo_counts": self.counts_by_status,
            "total_photos": self.total_photos,
            "feedback_count": self.feedback_count,
        }


@dataclass(frozen=True)
class OnlineMetrics:
    """N/A-photo and feedback fractions; None when no photo has completed."""

    na_photo_fraction: float | None
    feedback_fraction: float | None
    denominator: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "na_photo_fraction": self.na_photo_fraction,
            "feedback_fraction": self.feedback_fraction,
            "denominator": self.denominator,
        }


class DocumentStore(abc.ABC):
    """Linearizable per-document updates; bulk reads see committed state."""

    @abc.abstractmethod
    def put_event(self, event: RaceEvent) -> None: ...

    @abc.abstractmethod
    def get_event(self, event_id: str) -> RaceEvent | None: ...

    @abc.abstractmethod
    def list_events(self) -> list[RaceEvent]: ...

    @abc.abstractmethod
    def put_photo(self, record: PhotoRecord) -> None: ...

    @abc.abstractmethod
    def get_photo(self, photo_id: str) -> PhotoRecord | None: ...

    @abc.abstractmethod
    def iter_photos(self, event_id: str) -> Iterator[PhotoRecord]: ...

    @abc.abstractmethod
    def put_embedding(self, event_id: str, ref: str, embedding: Embedding) -> None: ...

    @abc.abstractmethod
    def get_embedding(self, ref: str) -> Embedding | None: ...

    @abc.abstractmethod
    def put_feedback(self, event_id: str, record: FeedbackRecord) -> FeedbackRecord:
        """Insert or return the existing record for (photo_id, reason)."""

    @abc.abstractmethod
    def iter_feedback(self, event_id: str | None = None) -> Iterator[FeedbackRecord]: ...

    @abc.abstractmethod
    def update_feedback(self, event_id: str, record: FeedbackRecord) -> None: ...

    @abc.abstractmethod
    def save_team_snapshot(self, event_id: str, snapshot: dict) -> None: ...

    @abc.abstractmethod
    def load_team_snapshot(self, event_id: str) -> dict | None: ...


def _atomic_write_json(path: Path, payload: dict) -> None:
    tmp = path.with_name(f".{path.name}.{uuid.uuid4().hex}.tmp")
    try:
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(payload, f)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    finally:
        if tmp.exists():
            tmp.unlink(missing_ok=True)


def _read_json(path: Path) -> dict | None:
    if not path.exists():
        return None
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _safe_name(value: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in value)


class FileDocumentStore(DocumentStore):
    """One JSON file per document under a root directory.

    Writes go to a temp file first and are committed with an atomic rename;
    stray ``*.tmp`` files from a crash are ignored on read, so a reopened
    store sees exactly the committed documents.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        for sub in ("events", "photos", "embeddings", "feedback", "teams"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)

    @staticmethod
    def _iter_docs(directory: Path) -> Iterator[dict]:
        for path in sorted(directory.glob("*.json")):
            doc = _read_json(path)
            if doc is not None:
                yield doc

    def put_event(self, event: RaceEvent) -> None:
        _atomic_write_json(self.root / "events" / f"{_safe_name(event.event_id)}.json", event.to_dict())

    def get_event(self, event_id: str) -> RaceEvent | None:
        doc = _read_json(self.root / "events" / f"{_safe_name(event_id)}.json")
        return RaceEvent.from_dict(doc) if doc else None

    def list_events(self) -> list[RaceEvent]:
        return [RaceEvent.from_dict(d) for d in self._iter_docs(self.root / "events")]

    def put_photo(self, record: PhotoRecord) -> None:
        _atomic_write_json(
            self.root / "photos" / f"{_safe_name(record.photo_id)}.json", record.to_dict()
        )

    def get_photo(self, photo_id: str) -> PhotoRecord | None:
        doc = _read_json(self.root / "photos" / f"{_safe_name(photo_id)}.json")
        return PhotoRecord.from_dict(doc) if doc else None

    def iter_photos(self, event_id: str) -> Iterator[PhotoRecord]:
        for doc in self._iter_docs(self.root / "photos"):
            if doc.get("event_id") == event_id:
                yield PhotoRecord.from_dict(doc)

    def put_embedding(self, event_id: str, ref: str, embedding: Embedding) -> None:
        payload = {"ref": ref, "event_id": event_id, **embedding.to_dict()}
        _atomic_write_json(self.root / "embeddings" / f"{_safe_name(ref)}.json", payload)

    def get_embedding(self, ref: str) -> Embedding | None:
        doc = _read_json(self.root / "embeddings" / f"{_safe_name(ref)}.json")
        return Embedding.from_dict(doc) if doc else None

    def _feedback_path(self, record: FeedbackRecord) -> Path:
        name = f"{_safe_name(record.photo_id)}__{record.reason.value}.json"
        return self.root / "feedback" / name

    def put_feedback(self, event_id: str, record: FeedbackRecord) -> FeedbackRecord:
        path = self._feedback_path(record)
        existing = _read_json(path)
        if existing is not None:
            return FeedbackRecord.from_dict(existing)
        _atomic_write_json(path, {"event_id": event_id, **record.to_dict()})
        return record

    def iter_feedback(self, event_id: str | None = None) -> Iterator[FeedbackRecord]:
        for doc in self._iter_docs(self.root / "feedback"):
            if event_id is None or doc.get("event_id") == event_id:
                yield FeedbackRecord.from_dict(doc)

    def update_feedback(self, event_id: str, record: FeedbackRecord) -> None:
        _atomic_write_json(self._feedback_path(record), {"event_id": event_id, **record.to_dict()})

    def save_team_snapshot(self, event_id: str, snapshot: dict) -> None:
        _atomic_write_json(self.root / "teams" / f"{_safe_name(event_id)}.json", snapshot)

    def load_team_snapshot(self, event_id: str) -> dict | None:
        return _read_json(self.root / "teams" / f"{_safe_name(event_id)}.json")


class DocumentDatabaseStore(DocumentStore):
    """Adapter over an external document database.

    ``db`` must expose named collections by indexing (``db["photos"]``) with
    ``find_one(filter)``, ``find(filter)``, and
    ``replace_one(filter, doc, upsert=...)`` — the subset of the common
    document-DB client API the engine relies on.
    """

    def __init__(self, db):
        self.db = db

    def _put(self, collection: str, key: str, doc: dict) -> None:
        self.db[collection].replace_one({"_id": key}, {"_id": key, **doc}, upsert=True)

    def _get(self, collection: str, key: str) -> dict | None:
        return self.db[collection].find_one({"_id": key})

    def put_event(self, event: RaceEvent) -> None:
        self._put("events", event.event_id, event.to_dict())

    def get_event(self, event_id: str) -> RaceEvent | None:
        doc = self._get("events", event_id)
        return RaceEvent.from_dict(doc) if doc else None

    def list_events(self) -> list[RaceEvent]:
        return sorted(
            (RaceEvent.from_dict(d) for d in self.db["events"].find({})),
            key=lambda e: e.event_id,
        )

    def put_photo(self, record: PhotoRecord) -> None:
        self._put("photos", record.photo_id, record.to_dict())

    def get_photo(self, photo_id: str) -> PhotoRecord | None:
        doc = self._get("photos", photo_id)
        return PhotoRecord.from_dict(doc) if doc else None

    def iter_photos(self, event_id: str) -> Iterator[PhotoRecord]:
        docs = sorted(self.db["photos"].find({"event_id": event_id}), key=lambda d: d["photo_id"])
        for doc in docs:
            yield PhotoRecord.from_dict(doc)

    def put_embedding(self, event_id: str, ref: str, embedding: Embedding) -> None:
        self._put("embeddings", ref, {"event_id": event_id, **embedding.to_dict()})

    def get_embedding(self, ref: str) -> Embedding | None:
        doc = self._get("embeddings", ref)
        return Embedding.from_dict(doc) if doc else None

    def put_feedback(self, event_id: str, record: FeedbackRecord) -> FeedbackRecord:
        key = f"{record.photo_id}::{record.reason.value}"
        existing = self._get("feedback", key)
        if existing is not None:
            return FeedbackRecord.from_dict(existing)
        self._put("feedback", key, {"event_id": event_id, **record.to_dict()})
        return record

    def iter_feedback(self, event_id: str | None = None) -> Iterator[FeedbackRecord]:
        query = {} if event_id is None else {"event_id": event_id}
        docs = sorted(self.db["feedback"].find(query), key=lambda d: d["photo_id"])
        for doc in docs:
            yield FeedbackRecord.from_dict(doc)

    def update_feedback(self, event_id: str, record: FeedbackRecord) -> None:
        key = f"{record.photo_id}::{record.reason.value}"
        self._put("feedback", key, {"event_id": event_id, **record.to_dict()})

    def save_team_snapshot(self, event_id: str, snapshot: dict) -> None:
        self._put("team_snapshots", event_id, {"snapshot": snapshot})

    def load_team_snapshot(self, event_id: str) -> dict | None:
        doc = self._get("team_snapshots", event_id)
        return doc["snapshot"] if doc else None


def event_summary(store: DocumentStore, event_id: str) -> EventSummary:
    event = store.get_event(event_id)
    if event is None:
        raise UnknownEvent(event_id)
    counts = {status.value: 0 for status in PhotoStatus}
    for photo in store.iter_photos(event_id):
        counts[photo.status.value] += 1
    feedback_count = sum(1 for _ in store.iter_feedback(event_id))
    return EventSummary(event=event, counts_by_status=counts, feedback_count=feedback_count)


def online_metrics(store: DocumentStore, event_id: str) -> OnlineMetrics:
    """N/A and feedback fractions over completed photos.

    The denominator is processed + no_car (photos whose processing
    completed); with none completed the metrics are undefined and reported
    as None.
    """
    summary = event_summary(store, event_id)
    completed = (
        summary.counts_by_status[PhotoStatus.PROCESSED.value]
        + summary.counts_by_status[PhotoStatus.NO_CAR.value]
    )
    if completed == 0:
        return OnlineMetrics(None, None, 0)
    return OnlineMetrics(
        na_photo_fraction=summary.counts_by_status[PhotoStatus.NO_CAR.value] / completed,
        feedback_fraction=summary.feedback_count / completed,
        denominator=completed,
    )


def submit_feedback(
    store: DocumentStore,
    photo_id: str,
    reason: FeedbackReason | str,
    note: str = "",
    submitted_at: str | None = None,
) -> FeedbackRecord:
    """Persist a user feedback flag; idempotent per (photo_id, reason)."""
    photo = store.get_photo(photo_id)
    if photo is None:
        raise UnknownPhoto(photo_id)
    record = FeedbackRecord(
        photo_id=photo_id,
        submitted_at=submitted_at or _dt.datetime.now(_dt.timezone.utc).isoformat(),
        reason=FeedbackReason(reason),
        note=note,
    )
    return store.put_feedback(photo.event_id, record)


def export_feedback_testset(
    store: DocumentStore,
    destination: str | Path,
    event_id: str | None = None,
) -> dict[str, Any]:
    """Export not-yet-exported feedback photos as an evaluation dataset.

    Layout: ``images/`` (photo files when present on disk),
    ``annotations.json`` (current annotations as both ground-truth stubs to
    be corrected and predictions, directly consumable by the detection
    evaluator), and ``manifest.json``. Exported records are flagged, so a
    re-export without new feedback produces an empty manifest.
    """
    dest = Path(destination)
    try:
        (dest / "images").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {dest}: {exc}") from exc

    pending = [r for r in store.iter_feedback(event_id) if not r.exported_to_testset]
    items = []
    ground_truth = []
    predictions = []
    for record in pending:
        photo = store.get_photo(record.photo_id)
        if photo is None:
            continue
        image_name = None
        source = Path(photo.uri)
        if source.is_file():
            image_name = source.name
            try:
                shutil.copyfile(source, dest / "images" / image_name)
            except OSError as exc:
                raise IoFailure(f"cannot copy {source}: {exc}") from exc
        for annotation in photo.annotations:
            box = annotation.car_box.to_dict()
            ground_truth.append({"image_id": photo.photo_id, "label": "car", "box": box})
            predictions.append(
                {
                    "image_id": photo.photo_id,
                    "label": "car",
                    "box": box,
                    "score": annotation.car_score,
                }
            )
        items.append(
            {
                "photo_id": photo.photo_id,
                "uri": photo.uri,
                "image": image_name,
                "reason": record.reason.value,
                "note": record.note,
                "status": photo.status.value,
            }
        )

    annotations_payload = {
        "ground_truth": ground_truth,
        "predictions": predictions,
        "items": items,
    }
    manifest = {
        "event_id": event_id,
        "count": len(items),
        "exported": [i["photo_id"] for i in items],
    }
    _atomic_write_json(dest / "annotations.json", annotations_payload)
    _atomic_write_json(dest / "manifest.json", manifest)

    for record in pending:
        photo = store.get_photo(record.photo_id)
        if photo is None:
            continue
        updated = FeedbackRecord(
            photo_id=record.photo_id,
            submitted_at=record.submitted_at,
            reason=record.reason,
            note=record.note,
            exported_to_testset=True,
        )
        store.update_feedback(photo.event_id, updated)
    return manifest
