"""Synthetic event generator: scenes, sidecar ground truth, and rendering.

This is the engine's test backbone. It stands in for the proprietary photo
datasets: every generated photo gets a ``<basename>.scene.json`` sidecar
describing its cars (box, number and digit glyphs, manufacturer, orientation,
team, wheel geometry) plus noise controls, which the synthetic provider
echoes deterministically. Scenes can also be rendered to simple flat-color
PNGs (car rectangles, digit glyphs, wheel circles) so pixel-based code paths
are exercisable on the same ground truth.

Team embeddings are constructed so that any two team base vectors are unit
norm and sit at exactly the configured cosine distance: with an orthonormal
set ``q_0..q_n`` (seeded), team ``i`` gets ``sqrt(d) * q_i + sqrt(1-d) * q_n``,
giving ``u_i . u_j = 1 - d`` for ``i != j``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from trackside.model import (
    ORIENTATION_LABELS,
    BoundingBox,
    FeedbackReason,
    OrientationLabel,
)

SIDECAR_SUFFIX = ".scene.json"
MANIFEST_NAME = "event.json"

DEFAULT_MANUFACTURERS = ("chevrolet", "ford", "toyota", "dodge")

#: 3x5 bitmap glyphs; each digit is a single connected component.
DIGIT_FONT: dict[int, tuple[str, ...]] = {
    0: ("111", "101", "101", "101", "111"),
    1: ("010", "110", "010", "010", "111"),
    2: ("111", "001", "111", "100", "111"),
    3: ("111", "001", "111", "001", "111"),
    4: ("101", "101", "111", "001", "001"),
    5: ("111", "100", "111", "001", "111"),
    6: ("111", "100", "111", "101", "111"),
    7: ("111", "001", "010", "010", "010"),
    8: ("111", "101", "111", "101", "111"),
    9: ("111", "101", "111", "001", "111"),
}


def stable_rng(*parts: Any) -> np.random.Generator:
    """Seeded generator derived from a stable hash of the given parts.

    Unlike ``hash()``, the derivation is stable across processes, so provider
    outputs are reproducible run to run.
    """
    digest = hashlib.blake2b("\x1f".join(str(p) for p in parts).encode(), digest_size=8)
    return np.random.default_rng(int.from_bytes(digest.digest(), "big"))


def team_unit_vectors(
    teams: Sequence[str], dim: int, seed: int, inter_team_distance: float
) -> dict[str, np.ndarray]:
    """Per-team unit vectors with exact pairwise cosine distance.

    Teams are sorted before axis assignment so the mapping does not depend on
    input order. Requires ``dim > len(teams)``.
    """
    if not 0.0 < inter_team_distance <= 1.0:
        raise ValueError("inter_team_distance must be in (0, 1]")
    ordered = sorted(set(teams))
    if dim <= len(ordered):
        raise ValueError(f"embedding dim {dim} too small for {len(ordered)} teams")
    rng = np.random.default_rng(seed)
    basis = rng.normal(size=(dim, len(ordered) + 1))
    q, r = np.linalg.qr(basis)
    q = q * np.sign(np.diag(r))  # fix QR sign convention
    shared = q[:, -1]
    d = inter_team_distance
    return {
        team: math.sqrt(d) * q[:, i] + math.sqrt(1.0 - d) * shared
        for i, team in enumerate(ordered)
    }


@dataclass(frozen=True)
class EmbeddingSpace:
    """Deployment-wide embedding configuration for a synthetic event."""

    seed: int = 7
    dim: int = 256
    inter_team_distance: float = 0.8

    def vectors_for(self, teams: Sequence[str]) -> dict[str, np.ndarray]:
        return team_unit_vectors(teams, self.dim, self.seed, self.inter_team_distance)

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "dim": self.dim,
            "inter_team_distance": self.inter_team_distance,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EmbeddingSpace":
        return cls(int(d["seed"]), int(d["dim"]), float(d["inter_team_distance"]))


@dataclass(frozen=True)
class NoiseControls:
    """Provider noise knobs carried by each sidecar. All zero = exact echo."""

    seed: int = 0
    score_jitter: float = 0.0
    dropout: float = 0.0
    embedding_noise: float = 0.0
    digit_noise: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "score_jitter": self.score_jitter,
            "dropout": self.dropout,
            "embedding_noise": self.embedding_noise,
            "digit_noise": self.digit_noise,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "NoiseControls":
        return cls(
            seed=int(d.get("seed", 0)),
            score_jitter=float(d.get("score_jitter", 0.0)),
            dropout=float(d.get("dropout", 0.0)),
            embedding_noise=float(d.get("embedding_noise", 0.0)),
            digit_noise=float(d.get("digit_noise", 0.0)),
        )


@dataclass(frozen=True)
class GlyphTruth:
    box: BoundingBox
    digit: int

    def to_dict(self) -> dict[str, Any]:
        return {"box": self.box.to_dict(), "digit": self.digit}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "GlyphTruth":
        return cls(BoundingBox.from_dict(d["box"]), int(d["digit"]))


@dataclass(frozen=True)
class WheelTruth:
    """One wheel: tire box, disk center and radius, optional ground point.

    The four disk-edge keypoints are derived as the axis-aligned points at
    ``disk_radius_px`` from the center, so the circle is consistent by
    construction.
    """

    box: BoundingBox
    center: tuple[float, float]
    disk_radius_px: float
    ground_contact: tuple[float, float] | None

    def edge_points(self) -> dict[str, tuple[float, float]]:
        cx, cy = self.center
        r = self.disk_radius_px
        return {
            "top": (cx, cy - r),
            "right": (cx + r, cy),
            "bottom": (cx, cy + r),
            "left": (cx - r, cy),
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "box": self.box.to_dict(),
            "center": list(self.center),
            "disk_radius_px": self.disk_radius_px,
            "ground_contact": list(self.ground_contact) if self.ground_contact else None,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "WheelTruth":
        gc = d.get("ground_contact")
        return cls(
            box=BoundingBox.from_dict(d["box"]),
            center=(float(d["center"][0]), float(d["center"][1])),
            disk_radius_px=float(d["disk_radius_px"]),
            ground_contact=(float(gc[0]), float(gc[1])) if gc else None,
        )


@dataclass(frozen=True)
class CarTruth:
    box: BoundingBox
    team: str
    orientation: OrientationLabel
    number: str | None = None
    number_region: BoundingBox | None = None
    glyphs: tuple[GlyphTruth, ...] = ()
    manufacturer: str | None = None
    mark_box: BoundingBox | None = None
    wheels: tuple[WheelTruth, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "box": self.box.to_dict(),
            "team": self.team,
            "orientation": self.orientation.value,
            "number": self.number,
            "number_region": self.number_region.to_dict() if self.number_region else None,
            "glyphs": [g.to_dict() for g in self.glyphs],
            "manufacturer": self.manufacturer,
            "mark_box": self.mark_box.to_dict() if self.mark_box else None,
            "wheels": [w.to_dict() for w in self.wheels],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CarTruth":
        return cls(
            box=BoundingBox.from_dict(d["box"]),
            team=d["team"],
            orientation=OrientationLabel(d["orientation"]),
            number=d.get("number"),
            number_region=(
                BoundingBox.from_dict(d["number_region"]) if d.get("number_region") else None
            ),
            glyphs=tuple(GlyphTruth.from_dict(g) for g in d.get("glyphs", [])),
            manufacturer=d.get("manufacturer"),
            mark_box=BoundingBox.from_dict(d["mark_box"]) if d.get("mark_box") else None,
            wheels=tuple(WheelTruth.from_dict(w) for w in d.get("wheels", [])),
        )


@dataclass(frozen=True)
class SceneSidecar:
    """Per-photo ground truth consumed by the synthetic provider."""

    photo_id: str
    width_px: int
    height_px: int
    cars: tuple[CarTruth, ...] = ()
    noise: NoiseControls = NoiseControls()
    feedback_reason: str | None = None

    def __post_init__(self) -> None:
        for car in self.cars:
            if (
                car.box.x_max > self.width_px + 1e-9
                or car.box.y_max > self.height_px + 1e-9
            ):
                raise ValueError(f"car box outside photo bounds: {car.box}")
            for wheel in car.wheels:
                cx, cy = wheel.center
                for ex, ey in wheel.edge_points().values():
                    r = math.hypot(ex - cx, ey - cy)
                    if abs(r - wheel.disk_radius_px) > 1e-6:
                        raise ValueError("inconsistent wheel circle")

    def to_dict(self) -> dict[str, Any]:
        return {
            "photo_id": self.photo_id,
            "width_px": self.width_px,
            "height_px": self.height_px,
            "cars": [c.to_dict() for c in self.cars],
            "noise": self.noise.to_dict(),
            "feedback_reason": self.feedback_reason,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SceneSidecar":
        return cls(
            photo_id=d["photo_id"],
            width_px=int(d["width_px"]),
            height_px=int(d["height_px"]),
            cars=tuple(CarTruth.from_dict(c) for c in d.get("cars", [])),
            noise=NoiseControls.from_dict(d.get("noise", {})),
            feedback_reason=d.get("feedback_reason"),
        )


@dataclass(frozen=True)
class PhotoEntry:
    photo_id: str
    uri: str
    width_px: int
    height_px: int


@dataclass(frozen=True)
class EventManifest:
    """Event-level description written next to the sidecars as event.json.

    ``expected`` holds generator bookkeeping (exact no-car / feedback photo
    counts, physical dimensions) that oracle tests compare against.
    """

    event_id: str
    name: str
    series: str
    date: str
    photos: tuple[PhotoEntry, ...]
    roster: tuple[str, ...]
    teams: tuple[str, ...]
    manufacturers: tuple[str, ...]
    embedding: EmbeddingSpace
    expected: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "event_id": self.event_id,
            "name": self.name,
            "series": self.series,
            "date": self.date,
            "photos": [
                {
                    "photo_id": p.photo_id,
                    "uri": p.uri,
                    "width_px": p.width_px,
                    "height_px": p.height_px,
                }
                for p in self.photos
            ],
            "roster": list(self.roster),
            "teams": list(self.teams),
            "manufacturers": list(self.manufacturers),
            "embedding": self.embedding.to_dict(),
            "expected": self.expected,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EventManifest":
        return cls(
            event_id=d["event_id"],
            name=d["name"],
            series=d["series"],
            date=d["date"],
            photos=tuple(
                PhotoEntry(p["photo_id"], p["uri"], int(p["width_px"]), int(p["height_px"]))
                for p in d["photos"]
            ),
            roster=tuple(d["roster"]),
            teams=tuple(d["teams"]),
            manufacturers=tuple(d["manufacturers"]),
            embedding=EmbeddingSpace.from_dict(d["embedding"]),
            expected=dict(d.get("expected", {})),
        )


def sidecar_path_for(uri: str | Path) -> Path:
    p = Path(uri)
    return p.with_name(p.stem + SIDECAR_SUFFIX)


def load_sidecar(path: str | Path) -> SceneSidecar:
    with open(path, encoding="utf-8") as f:
        return SceneSidecar.from_dict(json.load(f))


def load_manifest(scenes_dir: str | Path) -> EventManifest:
    with open(Path(scenes_dir) / MANIFEST_NAME, encoding="utf-8") as f:
        return EventManifest.from_dict(json.load(f))


def _default_roster(n_teams: int, rng: np.random.Generator) -> list[str]:
    """Roster of distinct 1-2 digit numbers, including a leading-zero entry."""
    pool = [str(n) for n in rng.permutation(100)]
    roster = pool[:n_teams]
    if n_teams >= 3 and not any(len(r) == 2 and r[0] == "0" for r in roster):
        roster[-1] = "0" + roster[0][-1] if ("0" + roster[0][-1]) not in roster else "09"
    # dedupe, preserving order
    seen: set[str] = set()
    out = []
    for r in roster:
        if r not in seen:
            seen.add(r)
            out.append(r)
    while len(out) < n_teams:
        candidate = str(len(out) + 100)[1:]
        if candidate not in seen:
            out.append(candidate)
            seen.add(candidate)
    return out


def _make_car(
    slot: BoundingBox,
    team: str,
    number: str | None,
    manufacturer: str,
    orientation: OrientationLabel,
    rng: np.random.Generator,
    wheelbase_mm: float,
    disk_radius_mm: float,
) -> CarTruth:
    cw = slot.width * (0.75 + 0.15 * rng.random())
    ch = slot.height * (0.55 + 0.2 * rng.random())
    x0 = slot.x_min + (slot.width - cw) * rng.random()
    y0 = slot.y_min + (slot.height - ch) * rng.random()
    box = BoundingBox(round(x0, 1), round(y0, 1), round(x0 + cw, 1), round(y0 + ch, 1))

    number_region = None
    glyphs: tuple[GlyphTruth, ...] = ()
    if number is not None:
        rw = box.width * 0.30
        rh = box.height * 0.28
        rx = box.x_min + box.width * 0.34
        ry = box.y_min + box.height * 0.30
        number_region = BoundingBox(round(rx, 1), round(ry, 1), round(rx + rw, 1), round(ry + rh, 1))
        glyph_h = rh * 0.6
        glyph_w = glyph_h * 0.6  # 3x5 cells
        gap = glyph_w * 0.4
        total_w = len(number) * glyph_w + (len(number) - 1) * gap
        gx = number_region.x_min + (rw - total_w) / 2.0
        gy = number_region.y_min + (rh - glyph_h) / 2.0
        glyph_list = []
        for ch_ in number:
            glyph_list.append(
                GlyphTruth(
                    BoundingBox(
                        round(gx, 1), round(gy, 1), round(gx + glyph_w, 1), round(gy + glyph_h, 1)
                    ),
                    int(ch_),
                )
            )
            gx += glyph_w + gap
        glyphs = tuple(glyph_list)

    mark_side = min(box.width, box.height) * 0.12
    mark_box = BoundingBox(
        round(box.x_min + box.width * 0.05, 1),
        round(box.y_min + box.height * 0.08, 1),
        round(box.x_min + box.width * 0.05 + mark_side, 1),
        round(box.y_min + box.height * 0.08 + mark_side, 1),
    )

    wheels: tuple[WheelTruth, ...] = ()
    if orientation in (OrientationLabel.LEFT, OrientationLabel.RIGHT):
        # One consistent px/mm scale per car: recovering wheelbase_mm from the
        # disk-radius calibration is then exact at zero keypoint noise.
        separation_px = box.width * 0.62
        scale_px_per_mm = separation_px / wheelbase_mm
        disk_r = disk_radius_mm * scale_px_per_mm
        tire_r = disk_r * 1.45
        ground_y = box.y_max - box.height * 0.02
        cy = ground_y - tire_r
        front_cx = box.x_min + (box.width - separation_px) / 2.0
        wheel_list = []
        for cx in (front_cx, front_cx + separation_px):
            wheel_list.append(
                WheelTruth(
                    box=BoundingBox(cx - tire_r, cy - tire_r, cx + tire_r, cy + tire_r),
                    center=(cx, cy),
                    disk_radius_px=disk_r,
                    ground_contact=(cx, ground_y),
                )
            )
        wheels = tuple(wheel_list)

    return CarTruth(
        box=box,
        team=team,
        orientation=orientation,
        number=number,
        number_region=number_region,
        glyphs=glyphs,
        manufacturer=manufacturer,
        mark_box=mark_box,
        wheels=wheels,
    )


def generate_event(
    out_dir: str | Path,
    photos: int = 100,
    teams: int = 8,
    no_car_fraction: float = 0.0,
    feedback_fraction: float = 0.0,
    noise: NoiseControls = NoiseControls(),
    seed: int = 0,
    hidden_number_fraction: float = 0.2,
    max_cars_per_photo: int = 3,
    photo_size: tuple[int, int] = (1600, 1200),
    embedding: EmbeddingSpace | None = None,
    manufacturers: Sequence[str] = DEFAULT_MANUFACTURERS,
    wheelbase_mm: float = 2794.0,
    disk_radius_mm: float = 190.5,
    event_id: str | None = None,
    render: bool = False,
) -> EventManifest:
    """Generate a synthetic event: sidecars, manifest, optional PNGs.

    Exactly ``round(photos * no_car_fraction)`` photos contain no car and
    exactly ``round(photos * feedback_fraction)`` car photos carry a feedback
    marker, so event-level fractions are reproduced exactly rather than in
    expectation. Teams, orientations, manufacturers, and number visibility
    rotate deterministically over the car sequence, which keeps per-team
    reference counts balanced.
    """
    if photos < 1:
        raise ValueError("need at least one photo")
    if not 0.0 <= no_car_fraction <= 1.0 or not 0.0 <= feedback_fraction <= 1.0:
        raise ValueError("fractions must be in [0, 1]")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    width, height = photo_size
    event_id = event_id or f"synth-{seed:04d}"
    embedding = embedding or EmbeddingSpace()

    roster = _default_roster(teams, rng)
    team_ids = list(roster)

    n_no_car = round(photos * no_car_fraction)
    no_car_idx = set(rng.choice(photos, size=n_no_car, replace=False).tolist())
    car_photo_idx = [i for i in range(photos) if i not in no_car_idx]
    n_feedback = round(photos * feedback_fraction)
    if n_feedback > len(car_photo_idx):
        raise ValueError("feedback fraction exceeds available car photos")
    feedback_idx = set(
        rng.choice(len(car_photo_idx), size=n_feedback, replace=False).tolist()
    )
    feedback_photos = {car_photo_idx[j] for j in feedback_idx}

    hidden_every = round(1.0 / hidden_number_fraction) if hidden_number_fraction > 0 else 0
    reasons = [r.value for r in FeedbackReason]

    entries: list[PhotoEntry] = []
    car_counter = 0
    visible_per_team: dict[str, int] = {t: 0 for t in team_ids}
    seen_per_team: dict[str, int] = {t: 0 for t in team_ids}
    total_cars = 0
    side_cars = 0

    for i in range(photos):
        photo_id = f"{event_id}-ph{i:05d}"
        uri = str(out / f"{photo_id}.png")
        cars: list[CarTruth] = []
        if i not in no_car_idx:
            n_cars = int(rng.integers(1, max_cars_per_photo + 1))
            margin = 40.0
            slot_w = (width - 2 * margin) / n_cars
            for s in range(n_cars):
                team = team_ids[car_counter % len(team_ids)]
                orientation = ORIENTATION_LABELS[car_counter % len(ORIENTATION_LABELS)]
                # visibility rotates per team, so every team keeps the same
                # visible fraction regardless of how the cycles align
                hidden = (
                    hidden_every > 0
                    and seen_per_team[team] % hidden_every == hidden_every - 1
                )
                seen_per_team[team] += 1
                number = None if hidden else team
                manufacturer = manufacturers[car_counter % len(manufacturers)]
                slot = BoundingBox(
                    margin + s * slot_w + 8.0,
                    height * 0.25,
                    margin + (s + 1) * slot_w - 8.0,
                    height * 0.85,
                )
                car = _make_car(
                    slot, team, number, manufacturer, orientation, rng,
                    wheelbase_mm, disk_radius_mm,
                )
                cars.append(car)
                if number is not None:
                    visible_per_team[team] += 1
                if orientation in (OrientationLabel.LEFT, OrientationLabel.RIGHT):
                    side_cars += 1
                car_counter += 1
            total_cars += n_cars

        feedback_reason = None
        if i in feedback_photos:
            feedback_reason = reasons[int(rng.integers(0, len(reasons)))]

        sidecar = SceneSidecar(
            photo_id=photo_id,
            width_px=width,
            height_px=height,
            cars=tuple(cars),
            noise=noise,
            feedback_reason=feedback_reason,
        )
        with open(sidecar_path_for(uri), "w", encoding="utf-8") as f:
            json.dump(sidecar.to_dict(), f)
        if render:
            render_scene(sidecar).save(uri)
        entries.append(PhotoEntry(photo_id, uri, width, height))

    manifest = EventManifest(
        event_id=event_id,
        name=f"Synthetic event {event_id}",
        series="synthetic",
        date="2024-01-01",
        photos=tuple(entries),
        roster=tuple(roster),
        teams=tuple(team_ids),
        manufacturers=tuple(manufacturers),
        embedding=embedding,
        expected={
            "no_car_photos": n_no_car,
            "feedback_photos": n_feedback,
            "total_cars": total_cars,
            "side_view_cars": side_cars,
            "visible_numbers_per_team": visible_per_team,
            "wheelbase_mm": wheelbase_mm,
            "disk_radius_mm": disk_radius_mm,
            "no_car_fraction": n_no_car / photos,
            "feedback_fraction": n_feedback / photos,
        },
    )
    with open(out / MANIFEST_NAME, "w", encoding="utf-8") as f:
        json.dump(manifest.to_dict(), f, indent=2)
    return manifest


def _team_color(team: str) -> tuple[int, int, int]:
    rng = stable_rng("team-color", team)
    # keep cars dark so white number regions contrast
    return tuple(int(c) for c in rng.integers(30, 140, size=3))


def _brand_color(brand: str) -> tuple[int, int, int]:
    rng = stable_rng("brand-color", brand)
    return tuple(int(c) for c in rng.integers(120, 255, size=3))


def render_scene(sidecar: SceneSidecar):
    """Render a scene to a flat-color PIL image.

    Cars are team-colored rectangles, number regions are white with dark
    3x5 bitmap digits, manufacturer marks are brand-colored squares, wheels
    are dark circles with a hub dot.
    """
    from PIL import Image, ImageDraw

    img = Image.new("RGB", (sidecar.width_px, sidecar.height_px), (206, 206, 206))
    draw = ImageDraw.Draw(img)
    for car in sidecar.cars:
        b = car.box
        draw.rectangle([b.x_min, b.y_min, b.x_max, b.y_max], fill=_team_color(car.team))
        for wheel in car.wheels:
            wb = wheel.box
            draw.ellipse([wb.x_min, wb.y_min, wb.x_max, wb.y_max], fill=(24, 24, 24))
            cx, cy = wheel.center
            r = wheel.disk_radius_px * 0.25
            draw.ellipse([cx - r, cy - r, cx + r, cy + r], fill=(180, 180, 180))
        if car.mark_box is not None and car.manufacturer is not None:
            mb = car.mark_box
            draw.rectangle(
                [mb.x_min, mb.y_min, mb.x_max, mb.y_max], fill=_brand_color(car.manufacturer)
            )
        if car.number_region is not None:
            nr = car.number_region
            draw.rectangle([nr.x_min, nr.y_min, nr.x_max, nr.y_max], fill=(250, 250, 250))
            for glyph in car.glyphs:
                _draw_glyph(draw, glyph)
    return img


def _draw_glyph(draw, glyph: GlyphTruth) -> None:
    rows = DIGIT_FONT[glyph.digit]
    b = glyph.box
    cell_w = b.width / 3.0
    cell_h = b.height / 5.0
    for r, row in enumerate(rows):
        for c, bit in enumerate(row):
            if bit == "1":
                draw.rectangle(
                    [
                        b.x_min + c * cell_w,
                        b.y_min + r * cell_h,
                        b.x_min + (c + 1) * cell_w,
                        b.y_min + (r + 1) * cell_h,
                    ],
                    fill=(18, 18, 18),
                )
