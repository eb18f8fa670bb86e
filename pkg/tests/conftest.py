import pytest

from trackside.model import PhotoRecord
from trackside.synth import EmbeddingSpace, NoiseControls, generate_event


def photos_from_manifest(manifest) -> list[PhotoRecord]:
    return [
        PhotoRecord(
            photo_id=e.photo_id,
            event_id=manifest.event_id,
            uri=e.uri,
            width_px=e.width_px,
            height_px=e.height_px,
        )
        for e in manifest.photos
    ]


@pytest.fixture(scope="session")
def small_event(tmp_path_factory):
    """40 photos, 4 teams, a couple of no-car photos; zero noise."""
    scenes = tmp_path_factory.mktemp("scenes-small")
    manifest = generate_event(
        scenes,
        photos=40,
        teams=4,
        no_car_fraction=0.05,
        seed=101,
        embedding=EmbeddingSpace(seed=5, dim=64, inter_team_distance=0.8),
    )
    return scenes, manifest


@pytest.fixture(scope="session")
def noisy_event(tmp_path_factory):
    """Event with score jitter and mild noise; structure unchanged."""
    scenes = tmp_path_factory.mktemp("scenes-noisy")
    manifest = generate_event(
        scenes,
        photos=30,
        teams=3,
        seed=7,
        noise=NoiseControls(seed=13, score_jitter=0.1, embedding_noise=0.05, digit_noise=0.1),
        embedding=EmbeddingSpace(seed=5, dim=64, inter_team_distance=0.8),
    )
    return scenes, manifest
