"""HTTP/JSON provider client for attaching real trained models.

Protocol: one POST per capability operation at ``{endpoint}/{operation}``
with body ``{"image": {...}, "params": {...}}``. The image is sent as a
``uri`` when known, or base64 PNG when the region carries decoded pixels.
Responses mirror the core-model JSON schemas (detections, probability
vectors, embeddings, keypoints). Timeouts and retry counts are configurable;
transport failures and non-2xx responses surface as ``ProviderUnavailable``
after retries, leaving the photo pending for a later attempt.
"""

from __future__ import annotations

import base64
import io
from typing import Any

import httpx
import numpy as np

from trackside.model import (
    Detection,
    Embedding,
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
)
from trackside.model import BoundingBox


def _image_payload(region: ImageRegion) -> dict[str, Any]:
    if region.pixels is not None:
        from PIL import Image

        arr = np.asarray(region.pixels)
        if arr.dtype != np.uint8:
            arr = np.clip(arr, 0, 255).astype(np.uint8)
        buf = io.BytesIO()
        Image.fromarray(arr).save(buf, format="PNG")
        return {"base64": base64.b64encode(buf.getvalue()).decode("ascii")}
    if region.uri is not None:
        return {"uri": region.uri}
    return {"photo_id": region.photo_id}


class RemoteProvider(InferenceProvider):
    """Speaks the remote inference protocol over HTTP."""

    def __init__(
        self,
        endpoint: str,
        capabilities: frozenset[Capability] = ALL_CAPABILITIES,
        timeout_s: float = 30.0,
        retries: int = 2,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.capabilities = frozenset(capabilities)
        self.retries = retries
        self.metadata = {"backend": "remote", "endpoint": self.endpoint}
        self._client = httpx.Client(timeout=timeout_s, transport=transport)

    def close(self) -> None:
        self._client.close()

    def _post(self, operation: str, payload: dict[str, Any]) -> dict[str, Any]:
        url = f"{self.endpoint}/{operation}"
        last_error: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                response = self._client.post(url, json=payload)
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = ProviderUnavailable(
                    f"{operation}: server returned {response.status_code}"
                )
                continue
            if response.status_code != 200:
                raise ProviderUnavailable(
                    f"{operation}: unexpected status {response.status_code}"
                )
            return response.json()
        raise ProviderUnavailable(f"{operation}: {last_error}")

    def _region_params(self, region: ImageRegion) -> dict[str, Any]:
        return {
            "photo_id": region.photo_id,
            "box": region.box.to_dict(),
            "photo_width": region.photo_width,
            "photo_height": region.photo_height,
        }

    def detect_cars(self, photo: PhotoRecord) -> list[Detection]:
        self.require(Capability.CAR_DETECTOR)
        body = self._post(
            "detect_cars",
            {
                "image": {"uri": photo.uri},
                "params": {
                    "photo_id": photo.photo_id,
                    "width_px": photo.width_px,
                    "height_px": photo.height_px,
                },
            },
        )
        detections = []
        for item in body.get("detections", []):
            det = Detection.from_dict(item)
            clipped = det.box.clipped(photo.width_px, photo.height_px)
            detections.append(Detection(clipped, det.class_label, det.score))
        detections.sort(key=lambda d: (-d.score, d.box.x_min))
        return detections

    def detect_attributes(self, region: ImageRegion) -> list[Detection]:
        self.require(Capability.ATTRIBUTE_DETECTOR)
        body = self._post(
            "detect_attributes",
            {"image": _image_payload(region), "params": self._region_params(region)},
        )
        detections = [Detection.from_dict(d) for d in body.get("detections", [])]
        detections.sort(key=lambda d: (-d.score, d.box.x_min))
        return detections

    def _classify(self, operation: str, region: ImageRegion, expected: int) -> np.ndarray:
        body = self._post(
            operation,
            {"image": _image_payload(region), "params": self._region_params(region)},
        )
        probs = np.asarray(body["probabilities"], dtype=float)
        if probs.shape != (expected,) or abs(float(probs.sum()) - 1.0) > 1e-6:
            raise ProviderUnavailable(f"{operation}: malformed probability vector")
        return probs

    def classify_digit(self, region: ImageRegion) -> np.ndarray:
        self.require(Capability.DIGIT_CLASSIFIER)
        return self._classify("classify_digit", region, 10)

    def classify_manufacturer(self, region: ImageRegion) -> np.ndarray:
        self.require(Capability.MANUFACTURER_CLASSIFIER)
        body = self._post(
            "classify_manufacturer",
            {"image": _image_payload(region), "params": self._region_params(region)},
        )
        probs = np.asarray(body["probabilities"], dtype=float)
        if probs.ndim != 1 or abs(float(probs.sum()) - 1.0) > 1e-6:
            raise ProviderUnavailable("classify_manufacturer: malformed probability vector")
        return probs

    def classify_orientation(self, region: ImageRegion) -> np.ndarray:
        self.require(Capability.ORIENTATION_CLASSIFIER)
        return self._classify("classify_orientation", region, 8)

    def encode_embedding(self, region: ImageRegion) -> Embedding:
        self.require(Capability.EMBEDDING_ENCODER)
        body = self._post(
            "encode_embedding",
            {"image": _image_payload(region), "params": self._region_params(region)},
        )
        return Embedding.from_dict(body["embedding"])

    def detect_wheels(self, region: ImageRegion) -> list[ScoredBox]:
        self.require(Capability.WHEEL_DETECTOR)
        body = self._post(
            "detect_wheels",
            {"image": _image_payload(region), "params": self._region_params(region)},
        )
        wheels = [
            ScoredBox(BoundingBox.from_dict(w["box"]), float(w["score"]))
            for w in body.get("wheels", [])
        ]
        wheels.sort(key=lambda s: (-s.score, s.box.x_min))
        return wheels

    def predict_wheel_keypoints(self, region: ImageRegion) -> WheelKeypoints:
        self.require(Capability.WHEEL_KEYPOINTS)
        body = self._post(
            "predict_wheel_keypoints",
            {"image": _image_payload(region), "params": self._region_params(region)},
        )
        return WheelKeypoints.from_dict(body["keypoints"])
