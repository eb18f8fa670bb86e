"""Car-number assembly: digit patches in, validated number string out.

Patch finding accepts either provider proposals (the synthetic provider
echoes sidecar glyph boxes) or, given pixels, a segmentation heuristic:
binarize by contrast against the dominant background color, extract
connected components, filter by aspect ratio and height, merge horizontally
adjacent fragments that overlap vertically, and suppress overlapping
candidates keeping the higher contrast. Classified patches are then read
left to right; the assembled string's confidence is the product of the
per-digit confidences, which downstream gates reference-embedding
collection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from trackside.model import BoundingBox, NumberValidation, validate_number
from trackside.providers.base import ImageRegion, ScoredBox


@dataclass(frozen=True)
class DigitPatch:
    """A classified digit candidate, box in region-local coordinates."""

    box: BoundingBox
    probabilities: tuple[float, ...]
    predicted_digit: int
    confidence: float

    def __post_init__(self) -> None:
        if len(self.probabilities) != 10:
            raise ValueError("need 10 digit probabilities")
        if abs(sum(self.probabilities) - 1.0) > 1e-6:
            raise ValueError("digit probabilities must sum to 1")
        if self.predicted_digit != int(np.argmax(self.probabilities)):
            raise ValueError("predicted_digit must be the argmax")
        if abs(self.confidence - max(self.probabilities)) > 1e-9:
            raise ValueError("confidence must equal the max probability")

    @classmethod
    def from_probabilities(cls, box: BoundingBox, probabilities) -> "DigitPatch":
        probs = tuple(float(p) for p in probabilities)
        best = int(np.argmax(probs))
        return cls(box=box, probabilities=probs, predicted_digit=best, confidence=probs[best])


@dataclass(frozen=True)
class NumberResult:
    """Assembled car number with overall confidence."""

    number: str
    confidence: float
    off_roster: bool = False


@dataclass(frozen=True)
class PatchParams:
    min_height_frac: float = 0.4
    aspect_range: tuple[float, float] = (0.2, 1.2)
    contrast_threshold: float = 40.0
    merge_vertical_overlap: float = 0.7
    #: stroke breaks sit a few pixels apart; real digit spacing is wider
    merge_gap_frac: float = 0.15  # of the taller component's height
    overlap_iou: float = 0.1


def suppress_overlaps(
    candidates: Sequence[ScoredBox], overlap_iou: float = 0.1
) -> list[ScoredBox]:
    """Reduce candidates to a pairwise-disjoint set (IoU < threshold),
    keeping the higher score on conflict."""
    kept: list[ScoredBox] = []
    for cand in sorted(candidates, key=lambda c: (-c.score, c.box.x_min)):
        if all(cand.box.iou(k.box) < overlap_iou for k in kept):
            kept.append(cand)
    return kept


def _clip_to_region(box: BoundingBox, region: ImageRegion) -> BoundingBox | None:
    x_min = max(box.x_min, 0.0)
    y_min = max(box.y_min, 0.0)
    x_max = min(box.x_max, region.width)
    y_max = min(box.y_max, region.height)
    if x_min >= x_max or y_min >= y_max:
        return None
    return BoundingBox(x_min, y_min, x_max, y_max)


def _component_candidates(pixels: np.ndarray, params: PatchParams) -> list[ScoredBox]:
    gray = pixels.astype(float)
    if gray.ndim == 3:
        gray = gray.mean(axis=2)
    values, counts = np.unique(np.round(gray).astype(int), return_counts=True)
    background = float(values[np.argmax(counts)])
    contrast = np.abs(gray - background)
    mask = contrast > params.contrast_threshold
    if not mask.any():
        return []
    # 8-connectivity: diagonal strokes stay one component
    labels, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    region_h = gray.shape[0]
    candidates = []
    for sl in ndimage.find_objects(labels):
        if sl is None:
            continue
        ys, xs = sl
        h = ys.stop - ys.start
        w = xs.stop - xs.start
        if h < params.min_height_frac * region_h:
            continue
        aspect = w / h
        if not (params.aspect_range[0] <= aspect <= params.aspect_range[1]):
            continue
        comp_mask = mask[sl]
        score = float(contrast[sl][comp_mask].mean())
        candidates.append(
            ScoredBox(
                BoundingBox(float(xs.start), float(ys.start), float(xs.stop), float(ys.stop)),
                score,
            )
        )
    return candidates


def _merge_adjacent(candidates: list[ScoredBox], params: PatchParams) -> list[ScoredBox]:
    """Merge horizontally adjacent fragments whose vertical overlap is at
    least the configured fraction of the shorter fragment."""
    items = sorted(candidates, key=lambda c: c.box.x_min)
    merged = True
    while merged and len(items) > 1:
        merged = False
        for i in range(len(items) - 1):
            a, b = items[i], items[i + 1]
            gap = b.box.x_min - a.box.x_max
            taller = max(a.box.height, b.box.height)
            v_overlap = min(a.box.y_max, b.box.y_max) - max(a.box.y_min, b.box.y_min)
            shorter = min(a.box.height, b.box.height)
            if gap <= params.merge_gap_frac * taller and v_overlap >= params.merge_vertical_overlap * shorter:
                box = BoundingBox(
                    a.box.x_min,
                    min(a.box.y_min, b.box.y_min),
                    max(a.box.x_max, b.box.x_max),
                    max(a.box.y_max, b.box.y_max),
                )
                if box.width / box.height > params.aspect_range[1]:
                    continue  # would be wider than any single glyph
                weight_a, weight_b = a.box.area, b.box.area
                score = (a.score * weight_a + b.score * weight_b) / (weight_a + weight_b)
                items[i : i + 2] = [ScoredBox(box, score)]
                merged = True
                break
    return items


def find_digit_patches(
    region: ImageRegion,
    proposals: Sequence[ScoredBox] | None = None,
    params: PatchParams | None = None,
) -> list[BoundingBox]:
    """Locate per-digit boxes inside a number region, left to right.

    Uses provider proposals when given, else the pixel heuristic, else
    returns nothing. Output boxes are region-local, fully inside the region,
    and pairwise disjoint (IoU < 0.1).
    """
    params = params or PatchParams()
    if proposals is not None:
        clipped = []
        for p in proposals:
            box = _clip_to_region(p.box, region)
            if box is not None:
                clipped.append(ScoredBox(box, p.score))
        candidates = clipped
    elif region.pixels is not None and region.pixels.size > 0:
        candidates = _merge_adjacent(_component_candidates(region.pixels, params), params)
    else:
        return []
    kept = suppress_overlaps(candidates, params.overlap_iou)
    return [c.box for c in sorted(kept, key=lambda c: c.box.x_min)]


def assemble_number(
    patches: Iterable[DigitPatch],
    roster: Iterable[str],
    min_digit_conf: float = 0.5,
) -> NumberResult | None:
    """Combine classified digit patches into the final number prediction.

    Patches are re-sorted by x, so input order never matters; digits below
    the confidence floor are dropped. Overall confidence is the product of
    the surviving digits' confidences (digits treated as independent). An
    all-digit string absent from the roster comes back flagged off-roster
    with its confidence unchanged; returns None when nothing survives.
    """
    ordered = sorted(patches, key=lambda p: (p.box.x_min, p.box.y_min))
    survivors = [p for p in ordered if p.confidence >= min_digit_conf]
    if not survivors:
        return None
    number = "".join(str(p.predicted_digit) for p in survivors)
    confidence = float(np.prod([p.confidence for p in survivors]))
    status = validate_number(number, roster)
    return NumberResult(
        number=number,
        confidence=confidence,
        off_roster=status is not NumberValidation.VALID,
    )
