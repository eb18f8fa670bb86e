"""Provider interface and shared gateway types.

A provider declares a set of capabilities and rejects calls for anything it
does not declare (``ProviderUnavailable``), never falling back to a silent
default. With a fixed seed every operation must be a pure function of
(input, seed), and implementations must be safe for concurrent calls.

Input sizing expectations of concrete model backends (detector input
resolution, orientation crop shape, and so on) are provider metadata, not
engine logic.
"""

from __future__ import annotations

import abc
import enum
from dataclasses import dataclass, field
from typing import Any, NamedTuple

import numpy as np

from trackside.model import BoundingBox, Detection, Embedding, PhotoRecord, WheelKeypoints


class Capability(str, enum.Enum):
    CAR_DETECTOR = "car_detector"
    ATTRIBUTE_DETECTOR = "attribute_detector"
    DIGIT_CLASSIFIER = "digit_classifier"
    MANUFACTURER_CLASSIFIER = "manufacturer_classifier"
    ORIENTATION_CLASSIFIER = "orientation_classifier"
    EMBEDDING_ENCODER = "embedding_encoder"
    WHEEL_DETECTOR = "wheel_detector"
    WHEEL_KEYPOINTS = "wheel_keypoints"


ALL_CAPABILITIES: frozenset[Capability] = frozenset(Capability)


class ProviderUnavailable(Exception):
    """The provider cannot serve this request (undeclared capability,
    unreachable backend, exhausted retries)."""


class UnreadableImage(Exception):
    """The referenced image or sidecar cannot be read."""


class ScoredBox(NamedTuple):
    """A box plus confidence, for outputs that are not one of the three
    detection classes (wheel boxes, digit-patch proposals)."""

    box: BoundingBox
    score: float


@dataclass(frozen=True)
class ImageRegion:
    """A rectangular region of a photo, addressed in photo coordinates.

    ``pixels`` optionally carries the decoded region as an ``(H, W)`` or
    ``(H, W, 3)`` array; synthetic-provider paths usually run without pixels.
    Region-local coordinates have their origin at ``(box.x_min, box.y_min)``.
    """

    photo_id: str
    box: BoundingBox
    photo_width: int
    photo_height: int
    pixels: np.ndarray | None = field(default=None, compare=False, repr=False)
    uri: str | None = None

    @property
    def width(self) -> float:
        return self.box.width

    @property
    def height(self) -> float:
        return self.box.height

    def to_local(self, x: float, y: float) -> tuple[float, float]:
        return (x - self.box.x_min, y - self.box.y_min)

    def to_photo(self, x: float, y: float) -> tuple[float, float]:
        return (x + self.box.x_min, y + self.box.y_min)

    def box_to_local(self, box: BoundingBox) -> BoundingBox:
        return box.shifted(-self.box.x_min, -self.box.y_min)

    def box_to_photo(self, box: BoundingBox) -> BoundingBox:
        return box.shifted(self.box.x_min, self.box.y_min)


class InferenceProvider(abc.ABC):
    """Abstract gateway to the trained models.

    Concrete classes set ``capabilities`` and implement the operations they
    declare. Every implemented operation must honor the shared contracts:
    probability vectors sum to 1 within 1e-6, detection boxes for a region
    are expressed in region-local coordinates, detections come back sorted by
    descending score, and outputs are deterministic under a fixed seed.
    """

    capabilities: frozenset[Capability] = frozenset()

    #: Free-form backend metadata (expected input sizes, model names).
    metadata: dict[str, Any] = {}

    def require(self, capability: Capability) -> None:
        if capability not in self.capabilities:
            raise ProviderUnavailable(f"capability not declared: {capability.value}")

    def available(self) -> bool:
        """Cheap readiness probe; used to fail fast before starting jobs."""
        return True

    @abc.abstractmethod
    def detect_cars(self, photo: PhotoRecord) -> list[Detection]:
        """Detect cars on the full photo; boxes clipped to image bounds."""

    @abc.abstractmethod
    def detect_attributes(self, region: ImageRegion) -> list[Detection]:
        """Detect number regions and manufacturer marks inside a car crop."""

    @abc.abstractmethod
    def classify_digit(self, region: ImageRegion) -> np.ndarray:
        """Probability vector over the 10 digit classes for one glyph patch."""

    @abc.abstractmethod
    def classify_manufacturer(self, region: ImageRegion) -> np.ndarray:
        """Probability vector over the configured manufacturer labels."""

    @abc.abstractmethod
    def classify_orientation(self, region: ImageRegion) -> np.ndarray:
        """Probability vector over the 8 orientation classes."""

    @abc.abstractmethod
    def encode_embedding(self, region: ImageRegion) -> Embedding:
        """Embed a car crop; fixed dimension, finite entries."""

    @abc.abstractmethod
    def detect_wheels(self, region: ImageRegion) -> list[ScoredBox]:
        """Wheel boxes inside a car crop, region-local coordinates."""

    @abc.abstractmethod
    def predict_wheel_keypoints(self, region: ImageRegion) -> WheelKeypoints:
        """Six wheel keypoints for a wheel crop, region-local coordinates."""

    def propose_digit_boxes(self, region: ImageRegion) -> list[ScoredBox] | None:
        """Optional hook: ground-truth digit-glyph proposals for a number
        region (region-local). Returns None when the provider has none, in
        which case patch finding falls back to the pixel heuristic."""
        return None
