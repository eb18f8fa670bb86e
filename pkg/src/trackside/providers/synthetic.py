"""Deterministic provider backed by scene sidecar files.

Every output is derived from the photo's ``*.scene.json`` ground truth plus
the sidecar's noise controls; with all noise at zero the provider echoes the
sidecar exactly. Calls are pure functions of (input, sidecar, seed): RNG
streams are keyed by a stable hash of the noise seed, the photo id, the
operation name, and the target index, so repeated calls agree bitwise.
"""

from __future__ import annotations

import threading
from pathlib import Path

import numpy as np

from trackside.model import (
    ORIENTATION_LABELS,
    BoundingBox,
    Detection,
    DetectionClass,
    Embedding,
    Keypoint,
    PhotoRecord,
    WheelKeypoints,
)
from trackside.providers.base import (
    ALL_CAPABILITIES,
    Capability,
    ImageRegion,
    InferenceProvider,
    ProviderUnavailable,
    ScoredBox,
    UnreadableImage,
)
from trackside.synth import (
    DEFAULT_MANUFACTURERS,
    MANIFEST_NAME,
    SIDECAR_SUFFIX,
    CarTruth,
    EmbeddingSpace,
    SceneSidecar,
    load_manifest,
    load_sidecar,
    stable_rng,
)


def _noisy_onehot(index: int, size: int, noise: float, rng: np.random.Generator) -> np.ndarray:
    """One-hot mixed with a random simplex vector; argmax preserved for
    noise < 0.5 and the result always sums to 1."""
    probs = np.zeros(size)
    probs[index] = 1.0
    if noise > 0.0:
        w = rng.uniform(size=size)
        probs = (1.0 - noise) * probs + noise * (w / w.sum())
    return probs


class SyntheticProvider(InferenceProvider):
    """Reads SceneSidecar ground truth from a scenes directory.

    When an ``event.json`` manifest is present it supplies the team list,
    embedding space, and manufacturer labels; otherwise defaults apply and
    sidecars are located as ``<scenes_dir>/<photo_id>.scene.json``.
    """

    def __init__(
        self,
        scenes_dir: str | Path,
        capabilities: frozenset[Capability] = ALL_CAPABILITIES,
    ):
        self.scenes_dir = Path(scenes_dir)
        self.capabilities = frozenset(capabilities)
        self.metadata = {"backend": "synthetic-sidecar", "scenes_dir": str(self.scenes_dir)}
        self._lock = threading.Lock()
        self._sidecars: dict[str, SceneSidecar] = {}
        self._team_vectors: dict[str, np.ndarray] | None = None
        self._manifest = None
        if (self.scenes_dir / MANIFEST_NAME).exists():
            self._manifest = load_manifest(self.scenes_dir)

    def available(self) -> bool:
        return self.scenes_dir.is_dir()

    # -- sidecar access -----------------------------------------------------

    def _sidecar(self, photo_id: str) -> SceneSidecar:
        with self._lock:
            cached = self._sidecars.get(photo_id)
        if cached is not None:
            return cached
        path = self.scenes_dir / f"{photo_id}{SIDECAR_SUFFIX}"
        if not path.exists():
            raise UnreadableImage(f"no sidecar for photo {photo_id!r} at {path}")
        try:
            sidecar = load_sidecar(path)
        except (OSError, ValueError, KeyError) as exc:
            raise UnreadableImage(f"corrupt sidecar {path}: {exc}") from exc
        with self._lock:
            self._sidecars[photo_id] = sidecar
        return sidecar

    def _manufacturers(self) -> tuple[str, ...]:
        if self._manifest is not None:
            return tuple(self._manifest.manufacturers)
        return DEFAULT_MANUFACTURERS

    def _vectors(self) -> dict[str, np.ndarray]:
        if self._team_vectors is None:
            if self._manifest is not None:
                space = self._manifest.embedding
                teams = self._manifest.teams
            else:
                space = EmbeddingSpace()
                teams = ()
            with self._lock:
                if self._team_vectors is None:
                    self._team_vectors = space.vectors_for(teams) if teams else {}
        return self._team_vectors

    @staticmethod
    def _match_car(sidecar: SceneSidecar, box: BoundingBox) -> tuple[int, CarTruth] | None:
        best = None
        best_area = 0.0
        for i, car in enumerate(sidecar.cars):
            inter = car.box.intersection_area(box)
            if inter > best_area:
                best_area = inter
                best = (i, car)
        return best

    def _rng(self, sidecar: SceneSidecar, *key) -> np.random.Generator:
        return stable_rng(sidecar.noise.seed, sidecar.photo_id, *key)

    def _score(self, sidecar: SceneSidecar, *key) -> float:
        jitter = sidecar.noise.score_jitter
        if jitter <= 0.0:
            return 1.0
        return 1.0 - jitter * float(self._rng(sidecar, "score", *key).uniform())

    def _dropped(self, sidecar: SceneSidecar, *key) -> bool:
        p = sidecar.noise.dropout
        if p <= 0.0:
            return False
        return bool(self._rng(sidecar, "dropout", *key).uniform() < p)

    # -- capabilities -------------------------------------------------------

    def detect_cars(self, photo: PhotoRecord) -> list[Detection]:
        self.require(Capability.CAR_DETECTOR)
        sidecar = self._sidecar(photo.photo_id)
        detections = []
        for i, car in enumerate(sidecar.cars):
            if self._dropped(sidecar, "detect_cars", i):
                continue
            box = car.box.clipped(photo.width_px, photo.height_px)
            detections.append(
                Detection(box, DetectionClass.CAR, self._score(sidecar, "detect_cars", i))
            )
        detections.sort(key=lambda d: (-d.score, d.box.x_min))
        return detections

    def detect_attributes(self, region: ImageRegion) -> list[Detection]:
        self.require(Capability.ATTRIBUTE_DETECTOR)
        sidecar = self._sidecar(region.photo_id)
        match = self._match_car(sidecar, region.box)
        if match is None:
            return []
        idx, car = match
        detections = []
        for kind, box in (
            (DetectionClass.NUMBER_PLATE_REGION, car.number_region),
            (DetectionClass.MANUFACTURER_MARK, car.mark_box),
        ):
            if box is None or box.intersection_area(region.box) <= 0.0:
                continue
            if self._dropped(sidecar, "detect_attributes", idx, kind.value):
                continue
            visible = BoundingBox(
                max(box.x_min, region.box.x_min),
                max(box.y_min, region.box.y_min),
                min(box.x_max, region.box.x_max),
                min(box.y_max, region.box.y_max),
            )
            detections.append(
                Detection(
                    region.box_to_local(visible),
                    kind,
                    self._score(sidecar, "detect_attributes", idx, kind.value),
                )
            )
        detections.sort(key=lambda d: (-d.score, d.box.x_min))
        return detections

    def classify_digit(self, region: ImageRegion) -> np.ndarray:
        self.require(Capability.DIGIT_CLASSIFIER)
        sidecar = self._sidecar(region.photo_id)
        best_digit = None
        best_iou = 0.0
        for car in sidecar.cars:
            for glyph in car.glyphs:
                iou = glyph.box.iou(region.box)
                if iou > best_iou:
                    best_iou = iou
                    best_digit = glyph.digit
        if best_digit is None:
            return np.full(10, 0.1)
        rng = self._rng(sidecar, "classify_digit", round(region.box.x_min, 3),
                        round(region.box.y_min, 3))
        return _noisy_onehot(best_digit, 10, sidecar.noise.digit_noise, rng)

    def classify_manufacturer(self, region: ImageRegion) -> np.ndarray:
        self.require(Capability.MANUFACTURER_CLASSIFIER)
        sidecar = self._sidecar(region.photo_id)
        labels = self._manufacturers()
        match = self._match_car(sidecar, region.box)
        if match is None or match[1].manufacturer not in labels:
            return np.full(len(labels), 1.0 / len(labels))
        return _noisy_onehot(labels.index(match[1].manufacturer), len(labels), 0.0,
                             self._rng(sidecar, "classify_manufacturer"))

    def classify_orientation(self, region: ImageRegion) -> np.ndarray:
        self.require(Capability.ORIENTATION_CLASSIFIER)
        sidecar = self._sidecar(region.photo_id)
        match = self._match_car(sidecar, region.box)
        if match is None:
            return np.full(len(ORIENTATION_LABELS), 1.0 / len(ORIENTATION_LABELS))
        index = ORIENTATION_LABELS.index(match[1].orientation)
        return _noisy_onehot(index, len(ORIENTATION_LABELS), 0.0,
                             self._rng(sidecar, "classify_orientation"))

    def encode_embedding(self, region: ImageRegion) -> Embedding:
        self.require(Capability.EMBEDDING_ENCODER)
        sidecar = self._sidecar(region.photo_id)
        match = self._match_car(sidecar, region.box)
        vectors = self._vectors()
        if match is not None and match[1].team in vectors:
            vec = vectors[match[1].team].copy()
            eps = sidecar.noise.embedding_noise
            if eps > 0.0:
                rng = self._rng(sidecar, "encode_embedding", match[0])
                direction = rng.normal(size=vec.shape)
                direction /= np.linalg.norm(direction)
                vec = vec + direction * (eps * float(rng.uniform()))
        else:
            space = self._manifest.embedding if self._manifest else EmbeddingSpace()
            rng = stable_rng("background", region.photo_id,
                             round(region.box.x_min, 3), round(region.box.y_min, 3))
            vec = rng.normal(size=space.dim)
            vec /= np.linalg.norm(vec)
        return Embedding(vector=tuple(float(v) for v in vec), source_photo=region.photo_id)

    def detect_wheels(self, region: ImageRegion) -> list[ScoredBox]:
        self.require(Capability.WHEEL_DETECTOR)
        sidecar = self._sidecar(region.photo_id)
        match = self._match_car(sidecar, region.box)
        if match is None:
            return []
        idx, car = match
        wheels = []
        for w, wheel in enumerate(car.wheels):
            if wheel.box.intersection_area(region.box) <= 0.0:
                continue
            if self._dropped(sidecar, "detect_wheels", idx, w):
                continue
            wheels.append(
                ScoredBox(
                    region.box_to_local(wheel.box),
                    self._score(sidecar, "detect_wheels", idx, w),
                )
            )
        wheels.sort(key=lambda s: (-s.score, s.box.x_min))
        return wheels

    def predict_wheel_keypoints(self, region: ImageRegion) -> WheelKeypoints:
        self.require(Capability.WHEEL_KEYPOINTS)
        sidecar = self._sidecar(region.photo_id)
        best = None
        best_iou = 0.0
        for car in sidecar.cars:
            for wheel in car.wheels:
                iou = wheel.box.iou(region.box)
                if iou > best_iou:
                    best_iou = iou
                    best = wheel
        if best is None:
            raise UnreadableImage(f"region matches no wheel in photo {region.photo_id!r}")
        points = {}
        for name, (px, py) in best.edge_points().items():
            lx, ly = region.to_local(px, py)
            points[name] = Keypoint(lx, ly)
        cx, cy = region.to_local(*best.center)
        points["center"] = Keypoint(cx, cy)
        if best.ground_contact is not None:
            gx, gy = region.to_local(*best.ground_contact)
            points["ground_contact"] = Keypoint(gx, gy)
        else:
            # sentinel for unobservable ground contact
            points["ground_contact"] = Keypoint(region.width / 2.0, 0.0, visible=False)
        return WheelKeypoints(**points)

    def propose_digit_boxes(self, region: ImageRegion) -> list[ScoredBox] | None:
        sidecar = self._sidecar(region.photo_id)
        match = self._match_car(sidecar, region.box)
        if match is None:
            return []
        proposals = [
            ScoredBox(region.box_to_local(glyph.box), 1.0)
            for glyph in match[1].glyphs
            if glyph.box.intersection_area(region.box) > 0.0
        ]
        proposals.sort(key=lambda s: s.box.x_min)
        return proposals
