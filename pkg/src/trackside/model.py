"""Shared domain vocabulary: photos, boxes, detections, labels, embeddings,
keypoints, measurements, and feedback records.

All types are immutable value objects validated at construction time, safe to
share between concurrent workers. Each type serializes to a canonical JSON
shape (see ``docs/schema``) via ``to_dict`` / ``from_dict``; field names in
the JSON match the attribute names exactly, pixel coordinates are numbers
with the origin at the top-left of the image.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping


class PhotoStatus(str, enum.Enum):
    PENDING = "pending"
    PROCESSED = "processed"
    NO_CAR = "no_car"
    FAILED = "failed"


class DetectionClass(str, enum.Enum):
    CAR = "car"
    NUMBER_PLATE_REGION = "number_plate_region"
    MANUFACTURER_MARK = "manufacturer_mark"


class OrientationLabel(str, enum.Enum):
    """One of the 8 canonical viewing directions of a car."""

    FRONT = "front"
    FRONT_LEFT = "front_left"
    FRONT_RIGHT = "front_right"
    REAR = "rear"
    REAR_LEFT = "rear_left"
    REAR_RIGHT = "rear_right"
    LEFT = "left"
    RIGHT = "right"

    @classmethod
    def parse(cls, value: str) -> "OrientationLabel":
        """Parse one of the 8 canonical strings; inverse of ``.value``."""
        try:
            return cls(value)
        except ValueError:
            raise ValueError(f"not an orientation label: {value!r}") from None


ORIENTATION_LABELS: tuple[OrientationLabel, ...] = tuple(OrientationLabel)


class FeedbackReason(str, enum.Enum):
    WRONG_NUMBER = "wrong_number"
    WRONG_TEAM = "wrong_team"
    WRONG_ORIENTATION = "wrong_orientation"
    MISSED_CAR = "missed_car"
    SPURIOUS_CAR = "spurious_car"
    WRONG_MEASUREMENT = "wrong_measurement"
    OTHER = "other"


class NumberValidation(str, enum.Enum):
    VALID = "valid"
    OFF_ROSTER = "off_roster"
    MALFORMED = "malformed"


def validate_number(candidate: str, roster: Iterable[str]) -> NumberValidation:
    """Classify a candidate car-number string against the valid-number roster.

    ``valid``: 1-3 decimal digits and present in the roster. ``off_roster``:
    all decimal digits but not a roster entry (includes digit strings longer
    than 3). ``malformed``: empty or containing non-digit characters. Total
    function, never raises.
    """
    if not candidate or not candidate.isdigit():
        return NumberValidation.MALFORMED
    if 1 <= len(candidate) <= 3 and candidate in set(roster):
        return NumberValidation.VALID
    return NumberValidation.OFF_ROSTER


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixel coordinates, ``x_min < x_max`` and
    ``y_min < y_max``, origin top-left."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                f"degenerate box: ({self.x_min}, {self.y_min}, "
                f"{self.x_max}, {self.y_max})"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    def intersection_area(self, other: "BoundingBox") -> float:
        w = min(self.x_max, other.x_max) - max(self.x_min, other.x_min)
        h = min(self.y_max, other.y_max) - max(self.y_min, other.y_min)
        if w <= 0 or h <= 0:
            return 0.0
        return w * h

    def iou(self, other: "BoundingBox") -> float:
        inter = self.intersection_area(other)
        if inter == 0.0:
            return 0.0
        return inter / (self.area + other.area - inter)

    def clipped(self, width: float, height: float) -> "BoundingBox":
        """Clip to ``[0, width] x [0, height]``; box must keep positive area."""
        return BoundingBox(
            max(0.0, min(self.x_min, width)),
            max(0.0, min(self.y_min, height)),
            max(0.0, min(self.x_max, width)),
            max(0.0, min(self.y_max, height)),
        )

    def shifted(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)

    def to_dict(self) -> dict[str, float]:
        return {
            "x_min": self.x_min,
            "y_min": self.y_min,
            "x_max": self.x_max,
            "y_max": self.y_max,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "BoundingBox":
        return cls(float(d["x_min"]), float(d["y_min"]), float(d["x_max"]), float(d["y_max"]))


@dataclass(frozen=True)
class Detection:
    """A localized object with a confidence score in ``[0, 1]``."""

    box: BoundingBox
    class_label: DetectionClass
    score: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must be in [0, 1], got {self.score}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "box": self.box.to_dict(),
            "class_label": self.class_label.value,
            "score": self.score,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Detection":
        return cls(
            box=BoundingBox.from_dict(d["box"]),
            class_label=DetectionClass(d["class_label"]),
            score=float(d["score"]),
        )


@dataclass(frozen=True)
class Embedding:
    """Fixed-length feature vector describing a car crop's color scheme.

    All embeddings within one deployment share the configured dimension;
    entries must be finite.
    """

    vector: tuple[float, ...]
    source_photo: str

    def __post_init__(self) -> None:
        if not self.vector:
            raise ValueError("embedding vector is empty")
        if not all(math.isfinite(v) for v in self.vector):
            raise ValueError("embedding vector has non-finite entries")

    @property
    def dimension(self) -> int:
        return len(self.vector)

    def to_dict(self) -> dict[str, Any]:
        return {"vector": list(self.vector), "source_photo": self.source_photo}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Embedding":
        return cls(vector=tuple(float(v) for v in d["vector"]), source_photo=d["source_photo"])


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    visible: bool = True

    def to_dict(self) -> dict[str, Any]:
        return {"x": self.x, "y": self.y, "visible": self.visible}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Keypoint":
        return cls(float(d["x"]), float(d["y"]), bool(d["visible"]))


WHEEL_KEYPOINT_NAMES = ("top", "right", "bottom", "left", "center", "ground_contact")


@dataclass(frozen=True)
class WheelKeypoints:
    """The six named wheel points: four disk-edge points, the disk center,
    and the ground-contact point.

    When the ground-contact point is not observable the provider reports the
    sentinel coordinate ``(crop_width / 2, 0)`` with ``visible=False``;
    consumers must check the visibility flag.
    """

    top: Keypoint
    right: Keypoint
    bottom: Keypoint
    left: Keypoint
    center: Keypoint
    ground_contact: Keypoint

    def points(self) -> dict[str, Keypoint]:
        return {name: getattr(self, name) for name in WHEEL_KEYPOINT_NAMES}

    def shifted(self, dx: float, dy: float) -> "WheelKeypoints":
        return WheelKeypoints(
            **{
                name: Keypoint(kp.x + dx, kp.y + dy, kp.visible)
                for name, kp in self.points().items()
            }
        )

    def to_dict(self) -> dict[str, Any]:
        return {name: kp.to_dict() for name, kp in self.points().items()}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "WheelKeypoints":
        return cls(**{name: Keypoint.from_dict(d[name]) for name in WHEEL_KEYPOINT_NAMES})


class MeasurementKind(str, enum.Enum):
    CENTER_LINE = "center_line"
    GROUND_LINE = "ground_line"


@dataclass(frozen=True)
class Measurement:
    """A millimeter distance derived from wheel keypoints.

    ``endpoints`` are the measured segment's endpoints in photo coordinates
    (used by the overlay endpoint for drawing).
    """

    kind: MeasurementKind
    length_mm: float
    length_px: float
    scale_mm_per_px: float
    wheel_ids: tuple[int, int]
    endpoints: tuple[tuple[float, float], tuple[float, float]]

    def __post_init__(self) -> None:
        if self.length_mm <= 0 or self.length_px <= 0 or self.scale_mm_per_px <= 0:
            raise ValueError("measurement lengths and scale must be positive")
        expected = self.length_px * self.scale_mm_per_px
        if abs(self.length_mm - expected) > 1e-6 * max(abs(expected), 1.0):
            raise ValueError(
                f"inconsistent measurement: {self.length_mm} mm != "
                f"{self.length_px} px * {self.scale_mm_per_px} mm/px"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "length_mm": self.length_mm,
            "length_px": self.length_px,
            "scale_mm_per_px": self.scale_mm_per_px,
            "wheel_ids": list(self.wheel_ids),
            "endpoints": [list(p) for p in self.endpoints],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Measurement":
        return cls(
            kind=MeasurementKind(d["kind"]),
            length_mm=float(d["length_mm"]),
            length_px=float(d["length_px"]),
            scale_mm_per_px=float(d["scale_mm_per_px"]),
            wheel_ids=(int(d["wheel_ids"][0]), int(d["wheel_ids"][1])),
            endpoints=(
                (float(d["endpoints"][0][0]), float(d["endpoints"][0][1])),
                (float(d["endpoints"][1][0]), float(d["endpoints"][1][1])),
            ),
        )


@dataclass(frozen=True)
class CarAnnotation:
    """Everything derived for one detected car.

    Optional fields stay ``None`` when the corresponding stage was disabled,
    failed, or produced nothing; a failed optional stage never fails the
    photo. ``number_off_roster`` flags an all-digit number that is not in the
    configured roster. ``wheel_keypoints`` are in photo coordinates.
    """

    car_box: BoundingBox
    car_score: float = 1.0
    number: str | None = None
    number_confidence: float | None = None
    number_off_roster: bool = False
    manufacturer: str | None = None
    orientation: OrientationLabel | None = None
    team_assignment: str | None = None
    embedding_ref: str | None = None
    measurements: tuple[Measurement, ...] = ()
    wheel_keypoints: tuple[WheelKeypoints, ...] = ()

    def __post_init__(self) -> None:
        if self.number is not None and not self.number.isdigit():
            raise ValueError(f"car number must be decimal digits, got {self.number!r}")
        if self.number_confidence is not None and not (0.0 <= self.number_confidence <= 1.0):
            raise ValueError("number_confidence must be in [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        return {
            "car_box": self.car_box.to_dict(),
            "car_score": self.car_score,
            "number": self.number,
            "number_confidence": self.number_confidence,
            "number_off_roster": self.number_off_roster,
            "manufacturer": self.manufacturer,
            "orientation": self.orientation.value if self.orientation else None,
            "team_assignment": self.team_assignment,
            "embedding_ref": self.embedding_ref,
            "measurements": [m.to_dict() for m in self.measurements],
            "wheel_keypoints": [kp.to_dict() for kp in self.wheel_keypoints],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CarAnnotation":
        return cls(
            car_box=BoundingBox.from_dict(d["car_box"]),
            car_score=float(d.get("car_score", 1.0)),
            number=d.get("number"),
            number_confidence=d.get("number_confidence"),
            number_off_roster=bool(d.get("number_off_roster", False)),
            manufacturer=d.get("manufacturer"),
            orientation=OrientationLabel(d["orientation"]) if d.get("orientation") else None,
            team_assignment=d.get("team_assignment"),
            embedding_ref=d.get("embedding_ref"),
            measurements=tuple(Measurement.from_dict(m) for m in d.get("measurements", [])),
            wheel_keypoints=tuple(
                WheelKeypoints.from_dict(kp) for kp in d.get("wheel_keypoints", [])
            ),
        )


@dataclass(frozen=True)
class PhotoRecord:
    """An ingested race photo plus all derived annotations and status.

    ``no_car`` is the N/A category: processing completed and found nothing.
    A record is ``processed`` only when at least one car was annotated.
    """

    photo_id: str
    event_id: str
    uri: str
    width_px: int
    height_px: int
    captured_at: str | None = None
    status: PhotoStatus = PhotoStatus.PENDING
    annotations: tuple[CarAnnotation, ...] = ()

    def __post_init__(self) -> None:
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("photo dimensions must be positive")
        if self.status is PhotoStatus.NO_CAR and self.annotations:
            raise ValueError("no_car photo cannot carry annotations")
        if self.status is PhotoStatus.PROCESSED and not self.annotations:
            raise ValueError("processed photo must carry at least one annotation")

    def with_result(
        self, status: PhotoStatus, annotations: tuple[CarAnnotation, ...] = ()
    ) -> "PhotoRecord":
        return PhotoRecord(
            photo_id=self.photo_id,
            event_id=self.event_id,
            uri=self.uri,
            width_px=self.width_px,
            height_px=self.height_px,
            captured_at=self.captured_at,
            status=status,
            annotations=annotations,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "photo_id": self.photo_id,
            "event_id": self.event_id,
            "uri": self.uri,
            "width_px": self.width_px,
            "height_px": self.height_px,
            "captured_at": self.captured_at,
            "status": self.status.value,
            "annotations": [a.to_dict() for a in self.annotations],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PhotoRecord":
        return cls(
            photo_id=d["photo_id"],
            event_id=d["event_id"],
            uri=d["uri"],
            width_px=int(d["width_px"]),
            height_px=int(d["height_px"]),
            captured_at=d.get("captured_at"),
            status=PhotoStatus(d["status"]),
            annotations=tuple(CarAnnotation.from_dict(a) for a in d.get("annotations", [])),
        )


@dataclass(frozen=True)
class FeedbackRecord:
    """A user-flagged photo driving test-set augmentation and online metrics."""

    photo_id: str
    submitted_at: str
    reason: FeedbackReason
    note: str = ""
    exported_to_testset: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "photo_id": self.photo_id,
            "submitted_at": self.submitted_at,
            "reason": self.reason.value,
            "note": self.note,
            "exported_to_testset": self.exported_to_testset,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "FeedbackRecord":
        return cls(
            photo_id=d["photo_id"],
            submitted_at=d["submitted_at"],
            reason=FeedbackReason(d["reason"]),
            note=d.get("note", ""),
            exported_to_testset=bool(d.get("exported_to_testset", False)),
        )
