import numpy as np
import pytest

from trackside.model import (
    BoundingBox,
    Detection,
    DetectionClass,
    OrientationLabel,
    PhotoRecord,
    PhotoStatus,
)
from trackside.pipeline import (
    PipelineConfig,
    crop,
    crop_region,
    process_photo,
    reassign_annotations,
    run_photos,
    select_primary_number_region,
)
from trackside.providers import ProviderUnavailable, SyntheticProvider
from trackside.synth import (
    EmbeddingSpace,
    NoiseControls,
    generate_event,
    load_sidecar,
    sidecar_path_for,
)
from trackside.teams import TeamCentroidStore, TeamIdentityConfig
from tests.conftest import photos_from_manifest


def pipeline_config(manifest, **overrides) -> PipelineConfig:
    config = PipelineConfig(roster=tuple(manifest.roster),
                            manufacturer_labels=tuple(manifest.manufacturers))
    for key, value in overrides.items():
        setattr(config, key, value)
    return config


class TestCrop:
    def photo(self) -> PhotoRecord:
        return PhotoRecord("p", "e", "u.png", 100, 100)

    def test_zero_pad_identity(self):
        region = crop(self.photo(), BoundingBox(10, 10, 20, 20), 0.0)
        assert region.box == BoundingBox(10, 10, 20, 20)

    def test_pad_clipped_at_origin(self):
        region = crop(self.photo(), BoundingBox(0, 0, 10, 10), 0.5)
        assert region.box == BoundingBox(0, 0, 15, 15)

    def test_local_photo_round_trip(self):
        region = crop(self.photo(), BoundingBox(30, 40, 60, 90), 0.1)
        for point in ((0.0, 0.0), (5.5, 7.25), (12.0, 3.0)):
            photo_pt = region.to_photo(*point)
            assert region.to_local(*photo_pt) == point

    def test_nested_crop_composes(self):
        parent = crop(self.photo(), BoundingBox(20, 20, 80, 80), 0.0)
        child = crop_region(parent, BoundingBox(10, 10, 30, 30))
        assert child.box == BoundingBox(30, 30, 50, 50)

    def test_pixels_sliced(self):
        pixels = np.arange(100 * 100).reshape(100, 100)
        region = crop(self.photo(), BoundingBox(10, 20, 30, 40), 0.0, pixels)
        assert region.pixels.shape == (20, 20)
        assert region.pixels[0, 0] == 20 * 100 + 10


class TestSelectPrimaryNumberRegion:
    def det(self, score, x=0.0, w=10.0, h=10.0,
            label=DetectionClass.NUMBER_PLATE_REGION) -> Detection:
        return Detection(BoundingBox(x, 0, x + w, h), label, score)

    def test_highest_score_wins(self):
        a, b = self.det(0.9), self.det(0.7, x=20)
        assert select_primary_number_region([b, a]) is a

    def test_none_when_absent(self):
        mark = self.det(0.9, label=DetectionClass.MANUFACTURER_MARK)
        assert select_primary_number_region([mark]) is None

    def test_area_breaks_score_ties(self):
        small = self.det(0.8, x=0, w=10, h=10)
        large = self.det(0.8, x=20, w=20, h=10)
        assert select_primary_number_region([small, large]) is large

    def test_x_breaks_area_ties(self):
        right = self.det(0.8, x=50)
        left = self.det(0.8, x=5)
        assert select_primary_number_region([right, left]) is left


class TestProcessPhoto:
    def test_zero_noise_end_to_end_echo(self, small_event):
        scenes, manifest = small_event
        provider = SyntheticProvider(scenes)
        config = pipeline_config(manifest)
        store = TeamCentroidStore(TeamIdentityConfig(reference_threshold=2))
        for photo in photos_from_manifest(manifest):
            result = process_photo(photo, provider, config, store)
            sidecar = load_sidecar(sidecar_path_for(photo.uri))
            if not sidecar.cars:
                assert result.record.status is PhotoStatus.NO_CAR
                assert result.record.annotations == ()
                continue
            assert result.record.status is PhotoStatus.PROCESSED
            assert len(result.record.annotations) == len(sidecar.cars)
            for annotation, car in zip(result.record.annotations, sidecar.cars):
                assert annotation.number == car.number
                assert annotation.manufacturer == car.manufacturer
                assert annotation.orientation == car.orientation
                if car.number is not None:
                    assert annotation.number_confidence == pytest.approx(1.0)
                    assert annotation.team_assignment == car.team

    def test_idempotent_unless_forced(self, small_event):
        scenes, manifest = small_event
        provider = SyntheticProvider(scenes)
        config = pipeline_config(manifest)
        photo = photos_from_manifest(manifest)[0]
        first = process_photo(photo, provider, config).record
        again = process_photo(first, provider, config)
        assert again.record is first
        assert again.embeddings == {}
        forced = process_photo(first, provider, config, force=True)
        assert forced.record == first

    def test_provider_unavailable_leaves_pending(self, small_event):
        scenes, manifest = small_event
        provider = SyntheticProvider(scenes, capabilities=frozenset())
        photo = photos_from_manifest(manifest)[0]
        with pytest.raises(ProviderUnavailable):
            process_photo(photo, provider, pipeline_config(manifest))
        assert photo.status is PhotoStatus.PENDING

    def test_car_detection_crash_fails_photo(self, small_event):
        scenes, manifest = small_event

        class Crashing(SyntheticProvider):
            def detect_cars(self, photo):
                raise RuntimeError("backend exploded")

        photo = photos_from_manifest(manifest)[0]
        result = process_photo(photo, Crashing(scenes), pipeline_config(manifest))
        assert result.record.status is PhotoStatus.FAILED

    def test_optional_stage_failure_blanks_field_only(self, small_event):
        scenes, manifest = small_event

        class FlakyOrientation(SyntheticProvider):
            def classify_orientation(self, region):
                raise RuntimeError("orientation head crashed")

        photo = next(
            p for p in photos_from_manifest(manifest)
            if load_sidecar(sidecar_path_for(p.uri)).cars
        )
        result = process_photo(photo, FlakyOrientation(scenes), pipeline_config(manifest))
        assert result.record.status is PhotoStatus.PROCESSED
        for annotation in result.record.annotations:
            assert annotation.orientation is None
        sidecar = load_sidecar(sidecar_path_for(photo.uri))
        assert result.record.annotations[0].number == sidecar.cars[0].number

    def test_stage_isolation(self, small_event):
        scenes, manifest = small_event
        provider = SyntheticProvider(scenes)
        photo = next(
            p for p in photos_from_manifest(manifest)
            if load_sidecar(sidecar_path_for(p.uri)).cars
        )
        full = process_photo(photo, provider, pipeline_config(manifest)).record
        for disabled in ("enable_orientation", "enable_team", "enable_measurement"):
            config = pipeline_config(manifest, **{disabled: False})
            partial = process_photo(photo, provider, config).record
            for a_full, a_part in zip(full.annotations, partial.annotations):
                # upstream stages unchanged
                assert a_part.car_box == a_full.car_box
                assert a_part.number == a_full.number
                assert a_part.number_confidence == a_full.number_confidence
                assert a_part.manufacturer == a_full.manufacturer
                if disabled == "enable_orientation":
                    assert a_part.orientation is None
                if disabled == "enable_team":
                    assert a_part.embedding_ref is None
                if disabled == "enable_measurement":
                    assert a_part.measurements == ()

    def test_measurements_recover_wheelbase(self, small_event):
        scenes, manifest = small_event
        provider = SyntheticProvider(scenes)
        config = pipeline_config(manifest)
        wheelbase = manifest.expected["wheelbase_mm"]
        seen = 0
        for photo in photos_from_manifest(manifest):
            sidecar = load_sidecar(sidecar_path_for(photo.uri))
            result = process_photo(photo, provider, config)
            for annotation, car in zip(result.record.annotations, sidecar.cars):
                if car.orientation in (OrientationLabel.LEFT, OrientationLabel.RIGHT):
                    kinds = {m.kind.value for m in annotation.measurements}
                    assert kinds == {"center_line", "ground_line"}
                    for m in annotation.measurements:
                        assert m.length_mm == pytest.approx(wheelbase, rel=0.005)
                    seen += 1
                else:
                    assert annotation.measurements == ()
        assert seen >= 5


class TestDropout:
    def test_missing_field_rate_within_binomial_tolerance(self, tmp_path):
        p = 0.3
        manifest = generate_event(
            tmp_path, photos=120, teams=3, seed=17,
            hidden_number_fraction=0.0,
            noise=NoiseControls(seed=23, dropout=p),
            embedding=EmbeddingSpace(seed=5, dim=32, inter_team_distance=0.8),
        )
        provider = SyntheticProvider(tmp_path)
        config = pipeline_config(manifest)
        total_cars = 0
        missing_numbers = 0
        detected_cars = 0
        sidecar_cars = 0
        for photo in photos_from_manifest(manifest):
            sidecar = load_sidecar(sidecar_path_for(photo.uri))
            sidecar_cars += len(sidecar.cars)
            result = process_photo(photo, provider, config)
            for annotation in result.record.annotations:
                detected_cars += 1
                total_cars += 1
                if annotation.number is None:
                    missing_numbers += 1
        # car detections themselves drop out at rate p
        expected = sidecar_cars * (1 - p)
        sigma = (sidecar_cars * p * (1 - p)) ** 0.5
        assert abs(detected_cars - expected) <= 3 * sigma
        # among surviving cars, the number region drops out at rate p
        expected_missing = total_cars * p
        sigma_missing = (total_cars * p * (1 - p)) ** 0.5
        assert abs(missing_numbers - expected_missing) <= 3 * sigma_missing


class TestRunPhotos:
    def test_parallel_equals_serial_after_reassign(self, small_event):
        scenes, manifest = small_event
        config = pipeline_config(manifest)

        def run(workers: int):
            provider = SyntheticProvider(scenes)
            team_store = TeamCentroidStore(TeamIdentityConfig(reference_threshold=2))
            photos = photos_from_manifest(manifest)
            results = run_photos(photos, provider, config, team_store, workers=workers)
            records = {r.record.photo_id: r.record for r in results}
            embeddings = {}
            for r in results:
                embeddings.update(r.embeddings)
            changed = reassign_annotations(
                records.values(), embeddings.get, team_store
            )
            for record in changed:
                records[record.photo_id] = record
            return records

        serial = run(1)
        parallel = run(4)
        assert serial.keys() == parallel.keys()
        for photo_id in serial:
            assert serial[photo_id] == parallel[photo_id]

    def test_reassign_backfills_hidden_numbers(self, small_event):
        scenes, manifest = small_event
        provider = SyntheticProvider(scenes)
        config = pipeline_config(manifest)
        team_store = TeamCentroidStore(TeamIdentityConfig(reference_threshold=2))
        photos = photos_from_manifest(manifest)
        results = run_photos(photos, provider, config, team_store)
        records = {r.record.photo_id: r.record for r in results}
        embeddings = {}
        for r in results:
            embeddings.update(r.embeddings)
        changed = reassign_annotations(records.values(), embeddings.get, team_store)
        for record in changed:
            records[record.photo_id] = record
        for photo in photos:
            sidecar = load_sidecar(sidecar_path_for(photo.uri))
            record = records[photo.photo_id]
            for annotation, car in zip(record.annotations, sidecar.cars):
                assert annotation.team_assignment == car.team


def test_event_scale_batch(tmp_path):
    """Race-event-scale batch: thousands of photos process without error and
    the N/A fraction equals the generator's configured no-car fraction."""
    fraction = 0.02
    manifest = generate_event(
        tmp_path, photos=7000, teams=12, no_car_fraction=fraction, seed=29,
        embedding=EmbeddingSpace(seed=5, dim=64, inter_team_distance=0.8),
    )
    provider = SyntheticProvider(tmp_path)
    config = PipelineConfig(roster=tuple(manifest.roster),
                            manufacturer_labels=tuple(manifest.manufacturers))
    results = run_photos(photos_from_manifest(manifest), provider, config,
                         TeamCentroidStore())
    statuses = [r.record.status for r in results]
    assert all(s in (PhotoStatus.PROCESSED, PhotoStatus.NO_CAR) for s in statuses)
    na = sum(1 for s in statuses if s is PhotoStatus.NO_CAR) / len(statuses)
    assert na == fraction
