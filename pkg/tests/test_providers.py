import json

import httpx
import numpy as np
import pytest

from trackside.model import (
    BoundingBox,
    Detection,
    DetectionClass,
    PhotoRecord,
)
from trackside.providers import (
    Capability,
    ImageRegion,
    ProviderUnavailable,
    RemoteProvider,
    SyntheticProvider,
    UnreadableImage,
)
from trackside.synth import (
    NoiseControls,
    generate_event,
    load_sidecar,
    sidecar_path_for,
)
from tests.conftest import photos_from_manifest


def region_for(photo: PhotoRecord, box: BoundingBox) -> ImageRegion:
    return ImageRegion(
        photo_id=photo.photo_id,
        box=box,
        photo_width=photo.width_px,
        photo_height=photo.height_px,
    )


def first_car_photo(scenes, manifest):
    for entry in manifest.photos:
        sidecar = load_sidecar(sidecar_path_for(entry.uri))
        if sidecar.cars:
            photo = PhotoRecord(entry.photo_id, manifest.event_id, entry.uri,
                                entry.width_px, entry.height_px)
            return photo, sidecar
    raise AssertionError("no car photo in fixture")


class TestSyntheticEcho:
    def test_zero_noise_detections_match_sidecar(self, small_event):
        scenes, manifest = small_event
        provider = SyntheticProvider(scenes)
        for entry in manifest.photos:
            photo = PhotoRecord(entry.photo_id, manifest.event_id, entry.uri,
                                entry.width_px, entry.height_px)
            sidecar = load_sidecar(sidecar_path_for(entry.uri))
            detections = provider.detect_cars(photo)
            assert len(detections) == len(sidecar.cars)
            got = sorted((d.box.x_min, d.box.y_min) for d in detections)
            want = sorted((c.box.x_min, c.box.y_min) for c in sidecar.cars)
            assert got == want
            assert all(d.score == 1.0 for d in detections)
            assert all(d.class_label is DetectionClass.CAR for d in detections)

    def test_scores_sorted_descending(self, noisy_event):
        scenes, manifest = noisy_event
        provider = SyntheticProvider(scenes)
        for entry in manifest.photos[:10]:
            photo = PhotoRecord(entry.photo_id, manifest.event_id, entry.uri,
                                entry.width_px, entry.height_px)
            detections = provider.detect_cars(photo)
            scores = [d.score for d in detections]
            assert scores == sorted(scores, reverse=True)
            assert all(0.9 <= s <= 1.0 for s in scores)  # jitter 0.1

    def test_bitwise_determinism(self, noisy_event):
        scenes, manifest = noisy_event
        photo, _ = first_car_photo(scenes, manifest)
        a = SyntheticProvider(scenes)
        b = SyntheticProvider(scenes)
        assert a.detect_cars(photo) == b.detect_cars(photo)
        region = region_for(photo, a.detect_cars(photo)[0].box)
        assert a.detect_attributes(region) == b.detect_attributes(region)
        assert np.array_equal(a.classify_orientation(region), b.classify_orientation(region))
        assert a.encode_embedding(region) == b.encode_embedding(region)

    def test_dropout_one_empties_detections(self, tmp_path):
        manifest = generate_event(
            tmp_path, photos=5, teams=2, seed=4, noise=NoiseControls(dropout=1.0)
        )
        provider = SyntheticProvider(tmp_path)
        for photo in photos_from_manifest(manifest):
            assert provider.detect_cars(photo) == []

    def test_attribute_boxes_are_crop_local(self, small_event):
        scenes, manifest = small_event
        provider = SyntheticProvider(scenes)
        photo, sidecar = first_car_photo(scenes, manifest)
        car = sidecar.cars[0]
        region = region_for(photo, car.box)
        attributes = provider.detect_attributes(region)
        by_class = {d.class_label: d for d in attributes}
        number_local = by_class[DetectionClass.NUMBER_PLATE_REGION].box
        reconstructed = region.box_to_photo(number_local)
        assert reconstructed == car.number_region

    def test_no_number_region_when_hidden(self, small_event):
        scenes, manifest = small_event
        provider = SyntheticProvider(scenes)
        for entry in manifest.photos:
            sidecar = load_sidecar(sidecar_path_for(entry.uri))
            for car in sidecar.cars:
                if car.number is not None:
                    continue
                photo = PhotoRecord(entry.photo_id, manifest.event_id, entry.uri,
                                    entry.width_px, entry.height_px)
                attrs = provider.detect_attributes(region_for(photo, car.box))
                classes = {d.class_label for d in attrs}
                assert DetectionClass.NUMBER_PLATE_REGION not in classes
                return
        raise AssertionError("fixture has no hidden-number car")

    def test_digit_probabilities_contract(self, noisy_event):
        scenes, manifest = noisy_event
        provider = SyntheticProvider(scenes)
        photo, sidecar = first_car_photo(scenes, manifest)
        car = next(c for c in sidecar.cars if c.glyphs)
        for glyph in car.glyphs:
            region = region_for(photo, glyph.box)
            probs = provider.classify_digit(region)
            assert probs.shape == (10,)
            assert abs(probs.sum() - 1.0) < 1e-6
            assert int(np.argmax(probs)) == glyph.digit  # noise preserves argmax
            assert np.array_equal(probs, provider.classify_digit(region))

    def test_embeddings_same_team_identical_zero_noise(self, small_event):
        scenes, manifest = small_event
        provider = SyntheticProvider(scenes)
        by_team: dict[str, list] = {}
        for entry in manifest.photos:
            sidecar = load_sidecar(sidecar_path_for(entry.uri))
            photo = PhotoRecord(entry.photo_id, manifest.event_id, entry.uri,
                                entry.width_px, entry.height_px)
            for car in sidecar.cars:
                emb = provider.encode_embedding(region_for(photo, car.box))
                by_team.setdefault(car.team, []).append(np.asarray(emb.vector))
        assert len(by_team) >= 2
        for team, vectors in by_team.items():
            for v in vectors[1:]:
                assert np.array_equal(v, vectors[0])
        teams = sorted(by_team)
        d = manifest.embedding.inter_team_distance
        for i, a in enumerate(teams):
            for b in teams[i + 1 :]:
                cos = float(np.dot(by_team[a][0], by_team[b][0]))
                assert 1.0 - cos == pytest.approx(d, abs=1e-9)

    def test_embedding_noise_magnitude_bounded(self, noisy_event):
        scenes, manifest = noisy_event
        provider = SyntheticProvider(scenes)
        vectors = manifest.embedding.vectors_for(list(manifest.teams))
        for entry in manifest.photos[:10]:
            sidecar = load_sidecar(sidecar_path_for(entry.uri))
            photo = PhotoRecord(entry.photo_id, manifest.event_id, entry.uri,
                                entry.width_px, entry.height_px)
            for car in sidecar.cars:
                emb = provider.encode_embedding(region_for(photo, car.box))
                delta = np.linalg.norm(np.asarray(emb.vector) - vectors[car.team])
                assert delta <= sidecar.noise.embedding_noise + 1e-12

    def test_wheel_keypoints_sentinel(self, tmp_path):
        manifest = generate_event(tmp_path, photos=20, teams=2, seed=12)
        provider = SyntheticProvider(tmp_path)
        # rewrite one sidecar with a null ground contact
        for entry in manifest.photos:
            sidecar_path = sidecar_path_for(entry.uri)
            raw = json.loads(sidecar_path.read_text())
            wheels = [c for c in raw["cars"] if c["wheels"]]
            if not wheels:
                continue
            raw["cars"] = [c for c in raw["cars"]]
            target = wheels[0]["wheels"][0]
            target["ground_contact"] = None
            sidecar_path.write_text(json.dumps(raw))
            photo = PhotoRecord(entry.photo_id, manifest.event_id, entry.uri,
                                entry.width_px, entry.height_px)
            wheel_box = BoundingBox.from_dict(target["box"])
            kp = provider.predict_wheel_keypoints(region_for(photo, wheel_box))
            assert not kp.ground_contact.visible
            assert kp.ground_contact.x == pytest.approx(wheel_box.width / 2)
            assert kp.ground_contact.y == 0.0
            return
        raise AssertionError("no wheels in fixture")

    def test_capability_gate(self, small_event):
        scenes, manifest = small_event
        provider = SyntheticProvider(scenes, capabilities=frozenset({Capability.CAR_DETECTOR}))
        photo, sidecar = first_car_photo(scenes, manifest)
        assert provider.detect_cars(photo)
        region = region_for(photo, sidecar.cars[0].box)
        for call in (
            lambda: provider.detect_attributes(region),
            lambda: provider.classify_digit(region),
            lambda: provider.classify_manufacturer(region),
            lambda: provider.classify_orientation(region),
            lambda: provider.encode_embedding(region),
            lambda: provider.detect_wheels(region),
            lambda: provider.predict_wheel_keypoints(region),
        ):
            with pytest.raises(ProviderUnavailable):
                call()

    def test_missing_sidecar_unreadable(self, small_event):
        scenes, manifest = small_event
        provider = SyntheticProvider(scenes)
        ghost = PhotoRecord("nope", manifest.event_id, "nope.png", 10, 10)
        with pytest.raises(UnreadableImage):
            provider.detect_cars(ghost)


class TestRemoteProvider:
    def make_provider(self, handler, **kwargs) -> RemoteProvider:
        return RemoteProvider(
            "http://models.test/v1",
            transport=httpx.MockTransport(handler),
            **kwargs,
        )

    def test_detect_cars_request_and_response(self):
        seen = {}

        def handler(request: httpx.Request) -> httpx.Response:
            seen["url"] = str(request.url)
            seen["body"] = json.loads(request.content)
            return httpx.Response(200, json={
                "detections": [
                    {"box": {"x_min": 5, "y_min": 5, "x_max": 50, "y_max": 40},
                     "class_label": "car", "score": 0.9},
                    {"box": {"x_min": 60, "y_min": 5, "x_max": 120, "y_max": 40},
                     "class_label": "car", "score": 0.95},
                ]
            })

        provider = self.make_provider(handler)
        photo = PhotoRecord("p1", "e", "/data/p1.png", 200, 100)
        detections = provider.detect_cars(photo)
        assert seen["url"] == "http://models.test/v1/detect_cars"
        assert seen["body"]["image"] == {"uri": "/data/p1.png"}
        assert seen["body"]["params"]["photo_id"] == "p1"
        assert [d.score for d in detections] == [0.95, 0.9]

    def test_classify_orientation_roundtrip(self):
        def handler(request: httpx.Request) -> httpx.Response:
            probs = [0.0] * 8
            probs[2] = 1.0
            return httpx.Response(200, json={"probabilities": probs})

        provider = self.make_provider(handler)
        region = ImageRegion("p", BoundingBox(0, 0, 10, 10), 100, 100, uri="/data/p.png")
        probs = provider.classify_orientation(region)
        assert int(np.argmax(probs)) == 2

    def test_retry_on_server_error_then_success(self):
        calls = {"n": 0}

        def handler(request: httpx.Request) -> httpx.Response:
            calls["n"] += 1
            if calls["n"] == 1:
                return httpx.Response(503)
            return httpx.Response(200, json={"detections": []})

        provider = self.make_provider(handler, retries=2)
        photo = PhotoRecord("p1", "e", "u.png", 10, 10)
        assert provider.detect_cars(photo) == []
        assert calls["n"] == 2

    def test_exhausted_retries_raise(self):
        def handler(request: httpx.Request) -> httpx.Response:
            return httpx.Response(500)

        provider = self.make_provider(handler, retries=1)
        photo = PhotoRecord("p1", "e", "u.png", 10, 10)
        with pytest.raises(ProviderUnavailable):
            provider.detect_cars(photo)

    def test_undeclared_capability_never_calls_http(self):
        def handler(request: httpx.Request) -> httpx.Response:
            raise AssertionError("no HTTP call expected")

        provider = self.make_provider(
            handler, capabilities=frozenset({Capability.CAR_DETECTOR})
        )
        region = ImageRegion("p", BoundingBox(0, 0, 10, 10), 100, 100)
        with pytest.raises(ProviderUnavailable):
            provider.encode_embedding(region)

    def test_malformed_probabilities_rejected(self):
        def handler(request: httpx.Request) -> httpx.Response:
            return httpx.Response(200, json={"probabilities": [0.5, 0.2]})

        provider = self.make_provider(handler)
        region = ImageRegion("p", BoundingBox(0, 0, 10, 10), 100, 100)
        with pytest.raises(ProviderUnavailable):
            provider.classify_orientation(region)
