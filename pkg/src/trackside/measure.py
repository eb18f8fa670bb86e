"""Metric measurement from wheel keypoints on side-view cars.

The wheel disk has a standardized physical radius, so its measured pixel
radius calibrates a mm-per-px scale for the photo; with two wheels in
profile, the line between disk centers and the line between ground-contact
points convert to millimeter lengths. Lengths are invariant to uniform
scaling and translation of pixel coordinates since pixels cancel through the
calibration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from trackside.model import (
    BoundingBox,
    Measurement,
    MeasurementKind,
    OrientationLabel,
    WheelKeypoints,
)


class MissingKeypoint(Exception):
    """A required keypoint (disk edges or center) is not visible."""


class DegenerateWheel(Exception):
    """Measured disk radius too small to calibrate against."""


class NotSideView(Exception):
    """Measurement requires a side-view orientation."""


class TooFewWheels(Exception):
    pass


class InconsistentScale(Exception):
    """Per-wheel scales disagree beyond tolerance (perspective distortion)."""


@dataclass(frozen=True)
class MeasureConfig:
    #: physical disk radius; a deployment setting (default 7.5 in), not a
    #: universal truth
    known_disk_radius_mm: float = 190.5
    min_radius_px: float = 1.0
    scale_tolerance: float = 0.10
    eligible_orientations: frozenset[OrientationLabel] = frozenset(
        {OrientationLabel.LEFT, OrientationLabel.RIGHT}
    )


class DiskRadius(NamedTuple):
    radius_px: float
    spread: float  # (max - min) / mean over the four edge distances


@dataclass(frozen=True)
class WheelObservation:
    """A wheel as seen by the pipeline: its box in photo coordinates, the
    predicted keypoints in crop-local coordinates, and the crop origin that
    maps them back to the photo."""

    box: BoundingBox
    keypoints: WheelKeypoints
    crop_origin: tuple[float, float] = (0.0, 0.0)

    def keypoints_in_photo(self) -> WheelKeypoints:
        return self.keypoints.shifted(self.crop_origin[0], self.crop_origin[1])


def disk_radius_px(kp: WheelKeypoints) -> DiskRadius:
    """Disk radius as the mean distance from the center to the four edge
    points, with the max relative spread of those distances as a quality
    signal. All five points must be visible; a zero radius is degenerate."""
    names = ("top", "right", "bottom", "left")
    points = kp.points()
    if not points["center"].visible:
        raise MissingKeypoint("center not visible")
    for name in names:
        if not points[name].visible:
            raise MissingKeypoint(f"{name} edge not visible")
    cx, cy = points["center"].x, points["center"].y
    distances = [math.hypot(points[n].x - cx, points[n].y - cy) for n in names]
    radius = sum(distances) / 4.0
    if radius <= 0.0:
        raise DegenerateWheel("all edge points coincide with the center")
    spread = (max(distances) - min(distances)) / radius
    return DiskRadius(radius, spread)


def calibrate_scale(
    radius_px: float, known_radius_mm: float, min_radius_px: float = 1.0
) -> float:
    """mm-per-px scale from the measured disk radius."""
    if known_radius_mm <= 0.0:
        raise ValueError("known radius must be positive")
    if radius_px <= min_radius_px:
        raise DegenerateWheel(f"disk radius {radius_px} px <= minimum {min_radius_px} px")
    return known_radius_mm / radius_px


def measure_distance(
    point_a: tuple[float, float], point_b: tuple[float, float], scale_mm_per_px: float
) -> float:
    """Generic point-pair measurement with an already-calibrated scale."""
    return math.hypot(point_b[0] - point_a[0], point_b[1] - point_a[1]) * scale_mm_per_px


def measure_car(
    wheels: Sequence[WheelObservation],
    orientation: OrientationLabel,
    config: MeasureConfig | None = None,
) -> list[Measurement]:
    """Center-line and ground-line measurements for a side-view car.

    Picks the two largest wheel boxes as the front/rear pair (ordered by x in
    photo coordinates), averages their calibrated scales after a consistency
    check, and emits the millimeter lengths. The ground line is omitted when
    either wheel's ground contact is the unobservable-point sentinel.
    ``wheel_ids`` in the results are indices into the input sequence.
    """
    config = config or MeasureConfig()
    if orientation not in config.eligible_orientations:
        raise NotSideView(f"orientation {orientation.value} is not an eligible side view")
    if len(wheels) < 2:
        raise TooFewWheels(f"need 2 wheels, got {len(wheels)}")

    by_area = sorted(range(len(wheels)), key=lambda i: -wheels[i].box.area)[:2]
    pair = sorted(by_area, key=lambda i: wheels[i].box.x_min)
    obs = [wheels[i] for i in pair]
    photo_kp = [o.keypoints_in_photo() for o in obs]

    scales = []
    for kp in photo_kp:
        radius, _ = disk_radius_px(kp)
        scales.append(calibrate_scale(radius, config.known_disk_radius_mm, config.min_radius_px))
    mean_scale = (scales[0] + scales[1]) / 2.0
    if abs(scales[0] - scales[1]) > config.scale_tolerance * mean_scale:
        raise InconsistentScale(
            f"wheel scales {scales[0]:.4f} and {scales[1]:.4f} mm/px differ beyond "
            f"{config.scale_tolerance:.0%}"
        )

    results = []
    centers = [(kp.center.x, kp.center.y) for kp in photo_kp]
    center_px = math.hypot(centers[1][0] - centers[0][0], centers[1][1] - centers[0][1])
    results.append(
        Measurement(
            kind=MeasurementKind.CENTER_LINE,
            length_mm=center_px * mean_scale,
            length_px=center_px,
            scale_mm_per_px=mean_scale,
            wheel_ids=(pair[0], pair[1]),
            endpoints=(centers[0], centers[1]),
        )
    )
    grounds = [kp.ground_contact for kp in photo_kp]
    if all(g.visible for g in grounds):
        ground_px = math.hypot(grounds[1].x - grounds[0].x, grounds[1].y - grounds[0].y)
        if ground_px > 0.0:
            results.append(
                Measurement(
                    kind=MeasurementKind.GROUND_LINE,
                    length_mm=ground_px * mean_scale,
                    length_px=ground_px,
                    scale_mm_per_px=mean_scale,
                    wheel_ids=(pair[0], pair[1]),
                    endpoints=((grounds[0].x, grounds[0].y), (grounds[1].x, grounds[1].y)),
                )
            )
    return results
