import json
import math

import numpy as np
import pytest

from trackside import synth
from trackside.model import OrientationLabel
from trackside.synth import (
    EmbeddingSpace,
    NoiseControls,
    SceneSidecar,
    generate_event,
    load_manifest,
    load_sidecar,
    sidecar_path_for,
    team_unit_vectors,
)


class TestTeamVectors:
    def test_unit_norm_and_exact_pairwise_distance(self):
        for d in (0.3, 0.8, 1.0):
            vectors = team_unit_vectors(["11", "43", "7"], dim=16, seed=3, inter_team_distance=d)
            for v in vectors.values():
                assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)
            teams = sorted(vectors)
            for i, a in enumerate(teams):
                for b in teams[i + 1 :]:
                    cos = float(np.dot(vectors[a], vectors[b]))
                    assert 1.0 - cos == pytest.approx(d, abs=1e-9)

    def test_independent_of_input_order(self):
        a = team_unit_vectors(["5", "9", "2"], 8, 1, 0.5)
        b = team_unit_vectors(["9", "2", "5"], 8, 1, 0.5)
        for team in ("2", "5", "9"):
            assert np.array_equal(a[team], b[team])

    def test_dim_must_exceed_team_count(self):
        with pytest.raises(ValueError):
            team_unit_vectors(["1", "2", "3"], dim=3, seed=0, inter_team_distance=0.5)


class TestGenerateEvent:
    def test_exact_no_car_and_feedback_counts(self, tmp_path):
        manifest = generate_event(
            tmp_path, photos=50, teams=3, no_car_fraction=0.1, feedback_fraction=0.04, seed=5
        )
        no_car = 0
        feedback = 0
        for entry in manifest.photos:
            sidecar = load_sidecar(sidecar_path_for(entry.uri))
            if not sidecar.cars:
                no_car += 1
            if sidecar.feedback_reason:
                feedback += 1
        assert no_car == 5 == manifest.expected["no_car_photos"]
        assert feedback == 2 == manifest.expected["feedback_photos"]

    def test_feedback_only_on_car_photos(self, tmp_path):
        manifest = generate_event(
            tmp_path, photos=30, teams=2, no_car_fraction=0.3, feedback_fraction=0.2, seed=8
        )
        for entry in manifest.photos:
            sidecar = load_sidecar(sidecar_path_for(entry.uri))
            if sidecar.feedback_reason:
                assert sidecar.cars

    def test_deterministic_under_seed(self, tmp_path):
        m1 = generate_event(tmp_path / "a", photos=10, teams=2, seed=9)
        m2 = generate_event(tmp_path / "b", photos=10, teams=2, seed=9)
        for e1, e2 in zip(m1.photos, m2.photos):
            s1 = json.loads(sidecar_path_for(e1.uri).read_text())
            s2 = json.loads(sidecar_path_for(e2.uri).read_text())
            assert s1 == s2

    def test_manifest_round_trip(self, tmp_path):
        manifest = generate_event(tmp_path, photos=5, teams=2, seed=1)
        loaded = load_manifest(tmp_path)
        assert loaded == manifest

    def test_visible_numbers_balanced_across_teams(self, tmp_path):
        manifest = generate_event(
            tmp_path, photos=60, teams=5, hidden_number_fraction=0.2, seed=2
        )
        counts = manifest.expected["visible_numbers_per_team"]
        assert min(counts.values()) >= 10
        assert max(counts.values()) - min(counts.values()) <= 3

    def test_roster_distinct_with_leading_zero_entry(self, tmp_path):
        manifest = generate_event(tmp_path, photos=4, teams=6, seed=4)
        assert len(set(manifest.roster)) == 6
        assert any(r.startswith("0") and len(r) == 2 for r in manifest.roster)

    def test_side_view_cars_have_consistent_wheels(self, tmp_path):
        manifest = generate_event(tmp_path, photos=24, teams=2, seed=6)
        checked = 0
        for entry in manifest.photos:
            sidecar = load_sidecar(sidecar_path_for(entry.uri))
            for car in sidecar.cars:
                if car.orientation in (OrientationLabel.LEFT, OrientationLabel.RIGHT):
                    assert len(car.wheels) == 2
                    separation = math.hypot(
                        car.wheels[1].center[0] - car.wheels[0].center[0],
                        car.wheels[1].center[1] - car.wheels[0].center[1],
                    )
                    # generator contract: separation / wheelbase == radius / disk radius
                    scale_a = separation / manifest.expected["wheelbase_mm"]
                    scale_b = car.wheels[0].disk_radius_px / manifest.expected["disk_radius_mm"]
                    assert scale_a == pytest.approx(scale_b, rel=1e-9)
                    checked += 1
                else:
                    assert not car.wheels
        assert checked > 0

    def test_sidecar_validates_wheel_circles(self):
        with pytest.raises(ValueError):
            SceneSidecar.from_dict(
                {
                    "photo_id": "p",
                    "width_px": 100,
                    "height_px": 100,
                    "cars": [
                        {
                            "box": {"x_min": 0, "y_min": 0, "x_max": 50, "y_max": 50},
                            "team": "1",
                            "orientation": "left",
                            "number": None,
                            "number_region": None,
                            "glyphs": [],
                            "manufacturer": None,
                            "mark_box": None,
                            "wheels": [
                                {
                                    "box": {"x_min": 0, "y_min": 0, "x_max": 20, "y_max": 20},
                                    "center": [10, 10],
                                    "disk_radius_px": -5.0,
                                    "ground_contact": None,
                                }
                            ],
                        }
                    ],
                    "noise": {},
                    "feedback_reason": None,
                }
            )

    def test_render_smoke(self, tmp_path):
        manifest = generate_event(tmp_path, photos=2, teams=2, seed=3, render=True)
        from PIL import Image

        for entry in manifest.photos:
            with Image.open(entry.uri) as img:
                assert img.size == (entry.width_px, entry.height_px)

    def test_bad_fractions_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            generate_event(tmp_path, photos=10, no_car_fraction=1.5)
