"""Offline metrics: detection mAP, classification accuracy, keypoint AP/AR,
and deterministic dataset splitting.

These power the model-update decision loop: test sets (augmented from user
feedback) are scored here, and CI gates on the results via the CLI's
``--gate`` flags.

Matching follows the usual greedy scheme: per image, predictions in
descending score order each claim the unmatched ground-truth instance of the
same class with the highest overlap at or above the threshold. Average
precision is the area under the 101-point interpolated precision-recall
curve; COCO-style summaries average over thresholds 0.50:0.05:0.95.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from trackside.model import BoundingBox

COCO_THRESHOLDS: tuple[float, ...] = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_POINTS = np.linspace(0.0, 1.0, 101)


class NoGroundTruth(Exception):
    """No class has any ground-truth instance; every AP is undefined."""


class BadFractions(Exception):
    pass


@dataclass(frozen=True)
class BoxPrediction:
    image_id: str
    label: str
    box: BoundingBox
    score: float


@dataclass(frozen=True)
class BoxTruth:
    image_id: str
    label: str
    box: BoundingBox


@dataclass(frozen=True)
class KeypointPrediction:
    image_id: str
    points: tuple[tuple[float, float], ...]
    score: float


@dataclass(frozen=True)
class KeypointTruth:
    image_id: str
    points: tuple[tuple[float, float], ...]
    visibility: tuple[bool, ...]
    area: float


def _interpolated_ap(scores: list[float], hits: list[bool], n_truth: int) -> float:
    """101-point interpolated AP from per-prediction hit flags.

    ``scores``/``hits`` are parallel, already sorted by descending score.
    """
    if n_truth == 0:
        raise NoGroundTruth("AP undefined without ground truth")
    if not hits:
        return 0.0
    tp = np.cumsum(np.asarray(hits, dtype=float))
    ranks = np.arange(1, len(hits) + 1, dtype=float)
    precision = tp / ranks
    recall = tp / n_truth
    # precision envelope: best precision at any recall >= r
    ap = 0.0
    for r in RECALL_POINTS:
        mask = recall >= r - 1e-12
        ap += float(precision[mask].max()) if mask.any() else 0.0
    return ap / len(RECALL_POINTS)


def _sorted_predictions(preds: Iterable[BoxPrediction]) -> list[BoxPrediction]:
    return sorted(preds, key=lambda p: (-p.score, p.image_id, p.box.x_min, p.box.y_min))


def _greedy_hits(
    preds: list[BoxPrediction],
    truths_by_image: Mapping[str, list[BoxTruth]],
    iou_threshold: float,
) -> list[bool]:
    matched: dict[str, set[int]] = {}
    hits = []
    for pred in preds:
        candidates = truths_by_image.get(pred.image_id, [])
        used = matched.setdefault(pred.image_id, set())
        best_iou = 0.0
        best_idx = None
        for i, truth in enumerate(candidates):
            if i in used:
                continue
            iou = pred.box.iou(truth.box)
            if iou >= iou_threshold and iou > best_iou:
                best_iou = iou
                best_idx = i
        if best_idx is None:
            hits.append(False)
        else:
            used.add(best_idx)
            hits.append(True)
    return hits


@dataclass(frozen=True)
class MeanApReport:
    """Per-class AP by threshold, plus the two headline summaries.

    ``map_per_threshold[t]`` is the class-mean AP at IoU threshold ``t``;
    ``map_coco`` additionally averages over the thresholds. ``ap50`` is the
    conventional single-threshold reading at IoU 0.5 when present.
    """

    per_class: dict[str, dict[float, float]]
    map_per_threshold: dict[float, float]
    map_coco: float
    ap50: float | None
    skipped_classes: tuple[str, ...]


def mean_average_precision(
    predictions: Iterable[BoxPrediction],
    ground_truth: Iterable[BoxTruth],
    iou_thresholds: Sequence[float] = COCO_THRESHOLDS,
) -> MeanApReport:
    """Greedy-matched detection mAP over the given IoU thresholds.

    Classes without any ground truth have undefined AP: they are excluded
    from the means with a warning (predictions for them are ignored). Raises
    NoGroundTruth when that leaves nothing to score.
    """
    truths = list(ground_truth)
    preds = list(predictions)
    classes_with_truth = sorted({t.label for t in truths})
    if not classes_with_truth:
        raise NoGroundTruth("ground truth is empty")
    skipped = tuple(sorted({p.label for p in preds} - set(classes_with_truth)))
    for label in skipped:
        warnings.warn(f"class {label!r} has predictions but no ground truth; AP skipped")

    per_class: dict[str, dict[float, float]] = {}
    for label in classes_with_truth:
        class_truths: dict[str, list[BoxTruth]] = {}
        for t in truths:
            if t.label == label:
                class_truths.setdefault(t.image_id, []).append(t)
        n_truth = sum(len(v) for v in class_truths.values())
        class_preds = _sorted_predictions(p for p in preds if p.label == label)
        scores = [p.score for p in class_preds]
        per_class[label] = {}
        for threshold in iou_thresholds:
            hits = _greedy_hits(class_preds, class_truths, threshold)
            per_class[label][threshold] = _interpolated_ap(scores, hits, n_truth)

    map_per_threshold = {
        t: float(np.mean([per_class[c][t] for c in classes_with_truth]))
        for t in iou_thresholds
    }
    map_coco = float(np.mean(list(map_per_threshold.values())))
    ap50 = map_per_threshold.get(0.5)
    return MeanApReport(per_class, map_per_threshold, map_coco, ap50, skipped)


@dataclass(frozen=True)
class AccuracyReport:
    overall: float
    per_class: dict[str, float | None]


def accuracy_table(
    pairs: Sequence[tuple[str, str]],
    labels: Sequence[str] | None = None,
) -> AccuracyReport:
    """Micro-average and per-class accuracy from (predicted, true) pairs.

    Per-class accuracy groups by true label. Requested labels absent from
    the data report ``None`` rather than 0.
    """
    if not pairs:
        raise ValueError("accuracy_table needs at least one sample")
    universe = list(labels) if labels is not None else sorted({true for _, true in pairs})
    correct_by_class: dict[str, int] = {}
    total_by_class: dict[str, int] = {}
    for predicted, true in pairs:
        total_by_class[true] = total_by_class.get(true, 0) + 1
        if predicted == true:
            correct_by_class[true] = correct_by_class.get(true, 0) + 1
    per_class: dict[str, float | None] = {}
    for label in universe:
        total = total_by_class.get(label, 0)
        per_class[label] = None if total == 0 else correct_by_class.get(label, 0) / total
    overall = sum(correct_by_class.values()) / len(pairs)
    return AccuracyReport(overall=overall, per_class=per_class)


def object_keypoint_similarity(
    pred_points: Sequence[tuple[float, float]],
    truth: KeypointTruth,
    falloff: float = 0.05,
) -> float:
    """COCO-style similarity with one uniform falloff constant in place of
    per-joint sigmas; averaged over visible ground-truth points."""
    visible = [i for i, v in enumerate(truth.visibility) if v]
    if not visible:
        return 0.0
    var = (2.0 * falloff) ** 2
    total = 0.0
    for i in visible:
        dx = pred_points[i][0] - truth.points[i][0]
        dy = pred_points[i][1] - truth.points[i][1]
        total += math.exp(-(dx * dx + dy * dy) / (2.0 * truth.area * var + np.spacing(1)))
    return total / len(visible)


@dataclass(frozen=True)
class KeypointApArReport:
    ap: float
    ar: float
    ap_per_threshold: dict[float, float]
    ar_per_threshold: dict[float, float]


def keypoint_ap_ar(
    predictions: Iterable[KeypointPrediction],
    ground_truth: Iterable[KeypointTruth],
    oks_thresholds: Sequence[float] = COCO_THRESHOLDS,
    falloff: float = 0.05,
) -> KeypointApArReport:
    """AP and AR for keypoint sets, matched greedily by score on similarity."""
    truths = list(ground_truth)
    preds = sorted(predictions, key=lambda p: (-p.score, p.image_id))
    n_truth = len(truths)
    if n_truth == 0:
        raise NoGroundTruth("ground truth is empty")
    truths_by_image: dict[str, list[KeypointTruth]] = {}
    for t in truths:
        truths_by_image.setdefault(t.image_id, []).append(t)

    ap_per_threshold = {}
    ar_per_threshold = {}
    for threshold in oks_thresholds:
        matched: dict[str, set[int]] = {}
        hits = []
        for pred in preds:
            candidates = truths_by_image.get(pred.image_id, [])
            used = matched.setdefault(pred.image_id, set())
            best_oks = 0.0
            best_idx = None
            for i, truth in enumerate(candidates):
                if i in used:
                    continue
                oks = object_keypoint_similarity(pred.points, truth, falloff)
                if oks >= threshold and oks > best_oks:
                    best_oks = oks
                    best_idx = i
            if best_idx is None:
                hits.append(False)
            else:
                used.add(best_idx)
                hits.append(True)
        scores = [p.score for p in preds]
        ap_per_threshold[threshold] = _interpolated_ap(scores, hits, n_truth)
        ar_per_threshold[threshold] = sum(hits) / n_truth
    return KeypointApArReport(
        ap=float(np.mean(list(ap_per_threshold.values()))),
        ar=float(np.mean(list(ar_per_threshold.values()))),
        ap_per_threshold=ap_per_threshold,
        ar_per_threshold=ar_per_threshold,
    )


def split_dataset(
    items: Sequence,
    fractions: tuple[float, float, float],
    seed: int,
) -> tuple[list, list, list]:
    """Deterministic train/val/test split.

    Fractions must sum to 1 within 1e-9. Sizes follow largest-remainder
    rounding, so they are within one item of exact proportionality; the three
    parts are disjoint and cover the input.
    """
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise BadFractions(f"bad fractions: {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise BadFractions(f"fractions must sum to 1, got {sum(fractions)}")
    n = len(items)
    base = [int(math.floor(f * n)) for f in fractions]
    remainders = [f * n - b for f, b in zip(fractions, base)]
    leftover = n - sum(base)
    for i in sorted(range(3), key=lambda i: -remainders[i])[:leftover]:
        base[i] += 1
    order = np.random.default_rng(seed).permutation(n)
    parts = []
    start = 0
    for size in base:
        parts.append([items[int(i)] for i in order[start : start + size]])
        start += size
    return parts[0], parts[1], parts[2]
