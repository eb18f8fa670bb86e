"""Per-photo enrichment pipeline.

Car detection drives everything: each detected car is cropped, and all later
stages (attribute detection, number assembly, manufacturer, orientation,
team identity, measurement) run on that crop, so attributes never need
cross-car association. Optional stages degrade gracefully: a stage that
fails or is disabled leaves its field absent without failing the photo. Only
a car-detection failure fails the photo, and a provider outage leaves it
pending for retry.

Photos are independent and safe to process concurrently; the team store is
the single cross-photo mutation and serializes internally.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from trackside.measure import MeasureConfig, WheelObservation, measure_car
from trackside.model import (
    ORIENTATION_LABELS,
    BoundingBox,
    CarAnnotation,
    Detection,
    DetectionClass,
    Embedding,
    PhotoRecord,
    PhotoStatus,
    WheelKeypoints,
)
from trackside.numbers import (
    DigitPatch,
    NumberResult,
    PatchParams,
    assemble_number,
    find_digit_patches,
)
from trackside.providers.base import ImageRegion, InferenceProvider, ProviderUnavailable
from trackside.synth import DEFAULT_MANUFACTURERS
from trackside.teams import TeamCentroidStore, TeamIdentityConfig


@dataclass
class PipelineConfig:
    """Thresholds, stage switches, and sub-module settings.

    Loadable from a JSON or TOML file sharing the api-service layout; keys
    mirror the attribute names.
    """

    car_score_threshold: float = 0.5
    attribute_score_threshold: float = 0.5
    pad_fraction: float = 0.0
    min_digit_confidence: float = 0.5
    roster: tuple[str, ...] = ()
    manufacturer_labels: tuple[str, ...] = DEFAULT_MANUFACTURERS
    enable_orientation: bool = True
    enable_team: bool = True
    enable_measurement: bool = True
    #: classify the brand-mark crop when one was detected, fall back to the
    #: whole car crop otherwise
    manufacturer_from_mark: bool = True
    load_pixels: bool = False
    seed: int = 0
    team: TeamIdentityConfig = field(default_factory=TeamIdentityConfig)
    measure: MeasureConfig = field(default_factory=MeasureConfig)
    patches: PatchParams = field(default_factory=PatchParams)

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        if path.suffix == ".toml":
            import tomllib

            with open(path, "rb") as f:
                raw = tomllib.load(f)
        else:
            with open(path, encoding="utf-8") as f:
                raw = json.load(f)
        return cls.from_dict(raw.get("pipeline", raw))

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        config = cls()
        for key in (
            "car_score_threshold",
            "attribute_score_threshold",
            "pad_fraction",
            "min_digit_confidence",
            "enable_orientation",
            "enable_team",
            "enable_measurement",
            "manufacturer_from_mark",
            "load_pixels",
            "seed",
        ):
            if key in raw:
                setattr(config, key, raw[key])
        if "roster" in raw:
            config.roster = tuple(raw["roster"])
        if "manufacturer_labels" in raw:
            config.manufacturer_labels = tuple(raw["manufacturer_labels"])
        team = raw.get("team", {})
        config.team = TeamIdentityConfig(
            min_number_confidence=team.get("min_number_confidence", 0.8),
            reference_threshold=team.get("reference_threshold", 10),
            assign_distance_threshold=team.get("assign_distance_threshold", 0.3),
        )
        measure = raw.get("measure", {})
        config.measure = MeasureConfig(
            known_disk_radius_mm=measure.get("known_disk_radius_mm", 190.5),
            min_radius_px=measure.get("min_radius_px", 1.0),
            scale_tolerance=measure.get("scale_tolerance", 0.10),
        )
        return config


@dataclass(frozen=True)
class ProcessResult:
    record: PhotoRecord
    embeddings: dict[str, Embedding]


def _load_photo_pixels(photo: PhotoRecord) -> np.ndarray | None:
    try:
        from PIL import Image

        with Image.open(photo.uri) as img:
            return np.asarray(img.convert("RGB"))
    except (OSError, ValueError):
        return None


def crop(
    photo: PhotoRecord,
    box: BoundingBox,
    pad_fraction: float = 0.0,
    pixels: np.ndarray | None = None,
) -> ImageRegion:
    """Crop a region out of a photo: the box expanded by ``pad_fraction`` of
    its own size on each side, clipped to the image bounds. The region keeps
    photo coordinates, so local<->photo transforms are exact inverses."""
    padded = _pad_box(box, pad_fraction).clipped(photo.width_px, photo.height_px)
    return ImageRegion(
        photo_id=photo.photo_id,
        box=padded,
        photo_width=photo.width_px,
        photo_height=photo.height_px,
        pixels=_slice_pixels(pixels, padded),
        uri=photo.uri,
    )


def crop_region(parent: ImageRegion, local_box: BoundingBox, pad_fraction: float = 0.0) -> ImageRegion:
    """Crop a sub-region out of an existing region; clips to the parent."""
    photo_box = parent.box_to_photo(_pad_box(local_box, pad_fraction))
    clipped = BoundingBox(
        max(photo_box.x_min, parent.box.x_min),
        max(photo_box.y_min, parent.box.y_min),
        min(photo_box.x_max, parent.box.x_max),
        min(photo_box.y_max, parent.box.y_max),
    )
    local = parent.box_to_local(clipped)
    return ImageRegion(
        photo_id=parent.photo_id,
        box=clipped,
        photo_width=parent.photo_width,
        photo_height=parent.photo_height,
        pixels=_slice_pixels(parent.pixels, local),
        uri=parent.uri,
    )


def _pad_box(box: BoundingBox, pad_fraction: float) -> BoundingBox:
    if pad_fraction <= 0.0:
        return box
    dx = box.width * pad_fraction
    dy = box.height * pad_fraction
    return BoundingBox(
        max(0.0, box.x_min - dx), max(0.0, box.y_min - dy), box.x_max + dx, box.y_max + dy
    )


def _slice_pixels(pixels: np.ndarray | None, box: BoundingBox) -> np.ndarray | None:
    if pixels is None:
        return None
    y0, y1 = int(math.floor(box.y_min)), int(math.ceil(box.y_max))
    x0, x1 = int(math.floor(box.x_min)), int(math.ceil(box.x_max))
    return pixels[y0:y1, x0:x1]


def select_primary_number_region(detections: Iterable[Detection]) -> Detection | None:
    """The number region to read: highest score, ties broken by larger box
    area, then by lowest x."""
    regions = [d for d in detections if d.class_label is DetectionClass.NUMBER_PLATE_REGION]
    if not regions:
        return None
    return min(regions, key=lambda d: (-d.score, -d.box.area, d.box.x_min))


def _read_number(
    provider: InferenceProvider,
    car_region: ImageRegion,
    number_detection: Detection,
    config: PipelineConfig,
) -> NumberResult | None:
    number_region = crop_region(car_region, number_detection.box)
    proposals = provider.propose_digit_boxes(number_region)
    patch_boxes = find_digit_patches(number_region, proposals=proposals, params=config.patches)
    patches = []
    for box in patch_boxes:
        patch_region = crop_region(number_region, box)
        probs = provider.classify_digit(patch_region)
        patches.append(DigitPatch.from_probabilities(box, probs))
    return assemble_number(patches, config.roster, config.min_digit_confidence)


def _measure(
    provider: InferenceProvider,
    car_region: ImageRegion,
    orientation,
    config: PipelineConfig,
) -> tuple[tuple, tuple]:
    """Returns (measurements, wheel keypoints in photo coordinates)."""
    wheel_boxes = provider.detect_wheels(car_region)
    observations = []
    photo_keypoints = []
    for scored in wheel_boxes:
        wheel_region = crop_region(car_region, scored.box)
        kp = provider.predict_wheel_keypoints(wheel_region)
        observations.append(
            WheelObservation(
                box=car_region.box_to_photo(scored.box),
                keypoints=kp,
                crop_origin=(wheel_region.box.x_min, wheel_region.box.y_min),
            )
        )
        photo_keypoints.append(kp.shifted(wheel_region.box.x_min, wheel_region.box.y_min))
    measurements = measure_car(observations, orientation, config.measure)
    return tuple(measurements), tuple(photo_keypoints)


def process_photo(
    photo: PhotoRecord,
    provider: InferenceProvider,
    config: PipelineConfig,
    team_store: TeamCentroidStore | None = None,
    force: bool = False,
) -> ProcessResult:
    """Run the full enrichment chain on one photo.

    No-op on an already-completed record unless ``force``. Raises
    ProviderUnavailable when car detection cannot run at all (the record
    stays pending for retry); any other car-detection failure marks the
    photo failed. Optional stage failures only blank their fields.
    """
    if photo.status is not PhotoStatus.PENDING and not force:
        return ProcessResult(photo, {})
    if force:
        photo = photo.with_result(PhotoStatus.PENDING)

    try:
        detections = provider.detect_cars(photo)
    except ProviderUnavailable:
        raise
    except Exception:
        return ProcessResult(photo.with_result(PhotoStatus.FAILED), {})

    cars = [d for d in detections if d.score >= config.car_score_threshold]
    if not cars:
        return ProcessResult(photo.with_result(PhotoStatus.NO_CAR), {})

    pixels = _load_photo_pixels(photo) if config.load_pixels else None
    annotations = []
    embeddings: dict[str, Embedding] = {}
    for index, car in enumerate(cars):
        car_region = crop(photo, car.box, config.pad_fraction, pixels)

        attributes: list[Detection] = []
        try:
            attributes = [
                d
                for d in provider.detect_attributes(car_region)
                if d.score >= config.attribute_score_threshold
            ]
        except Exception:
            attributes = []

        number_result = None
        number_detection = select_primary_number_region(attributes)
        if number_detection is not None:
            try:
                number_result = _read_number(provider, car_region, number_detection, config)
            except Exception:
                number_result = None

        manufacturer = None
        try:
            marks = [d for d in attributes if d.class_label is DetectionClass.MANUFACTURER_MARK]
            target = car_region
            if marks and config.manufacturer_from_mark:
                best_mark = max(marks, key=lambda d: (d.score, d.box.area))
                target = crop_region(car_region, best_mark.box)
            probs = provider.classify_manufacturer(target)
            if len(probs) == len(config.manufacturer_labels):
                manufacturer = config.manufacturer_labels[int(np.argmax(probs))]
        except Exception:
            manufacturer = None

        orientation = None
        if config.enable_orientation:
            try:
                probs = provider.classify_orientation(car_region)
                orientation = ORIENTATION_LABELS[int(np.argmax(probs))]
            except Exception:
                orientation = None

        team_assignment = None
        embedding_ref = None
        if config.enable_team:
            try:
                embedding = provider.encode_embedding(car_region)
                embedding_ref = f"{photo.photo_id}:{index}"
                embeddings[embedding_ref] = embedding
                if team_store is not None:
                    team_assignment = team_store.observe(embedding, number_result)
            except Exception:
                team_assignment = None
                embedding_ref = None

        measurements: tuple = ()
        wheel_keypoints: tuple = ()
        if (
            config.enable_measurement
            and orientation is not None
            and orientation in config.measure.eligible_orientations
        ):
            try:
                measurements, wheel_keypoints = _measure(
                    provider, car_region, orientation, config
                )
            except Exception:
                measurements, wheel_keypoints = (), ()

        annotations.append(
            CarAnnotation(
                car_box=car.box,
                car_score=car.score,
                number=number_result.number if number_result else None,
                number_confidence=number_result.confidence if number_result else None,
                number_off_roster=bool(number_result and number_result.off_roster),
                manufacturer=manufacturer,
                orientation=orientation,
                team_assignment=team_assignment,
                embedding_ref=embedding_ref,
                measurements=measurements,
                wheel_keypoints=wheel_keypoints,
            )
        )

    record = photo.with_result(PhotoStatus.PROCESSED, tuple(annotations))
    return ProcessResult(record, embeddings)


def run_photos(
    photos: Sequence[PhotoRecord],
    provider: InferenceProvider,
    config: PipelineConfig,
    team_store: TeamCentroidStore | None = None,
    workers: int = 1,
    force: bool = False,
    on_result: Callable[[ProcessResult], None] | None = None,
) -> list[ProcessResult]:
    """Process a batch, optionally fanning out over worker threads.

    Per-photo state stays in its worker; the team store serializes the only
    shared mutation. Order of the returned list follows the input.
    """

    def one(photo: PhotoRecord) -> ProcessResult:
        result = process_photo(photo, provider, config, team_store, force=force)
        if on_result is not None:
            on_result(result)
        return result

    if workers <= 1:
        return [one(p) for p in photos]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, photos))


def reassign_annotations(
    records: Iterable[PhotoRecord],
    embeddings: Callable[[str], Embedding | None],
    team_store: TeamCentroidStore,
    min_number_confidence: float | None = None,
) -> list[PhotoRecord]:
    """Re-run team assignment over stored embeddings with the final
    centroids, returning the records that changed.

    Assignments made before a centroid existed are back-filled this way
    rather than guessed at observation time. Reference-eligible annotations
    (high-confidence on-roster number) keep their own number's team.
    """
    gate = (
        team_store.config.min_number_confidence
        if min_number_confidence is None
        else min_number_confidence
    )
    changed = []
    for record in records:
        updates = []
        dirty = False
        for annotation in record.annotations:
            new_team = annotation.team_assignment
            if annotation.embedding_ref is not None:
                if (
                    annotation.number is not None
                    and not annotation.number_off_roster
                    and (annotation.number_confidence or 0.0) >= gate
                ):
                    new_team = annotation.number
                else:
                    embedding = embeddings(annotation.embedding_ref)
                    if embedding is not None:
                        new_team, _ = team_store.assign(embedding)
            if new_team != annotation.team_assignment:
                annotation = replace(annotation, team_assignment=new_team)
                dirty = True
            updates.append(annotation)
        if dirty:
            changed.append(record.with_result(record.status, tuple(updates)))
    return changed
