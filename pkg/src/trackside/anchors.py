"""Anchor-shape proposal by k-means over ground-truth box shapes.

Dataset tooling for detector training pipelines: clusters labeled box shapes
to propose anchor aspect ratios. Two distance modes: ``aspect_ratio``
clusters the scalar w/h with squared distance, ``iou`` clusters (w, h)
shapes with distance 1 - IoU computed on boxes re-centered at the origin.

Determinism and order independence: deduplicated shapes are canonically
sorted before seeded initialization, cluster means reduce over sorted member
values, and the returned centroids are sorted, so a permutation of the input
cannot change the result. Each restart runs Lloyd iterations to an
assignment fixed point (or 300 iterations); the best of 10 seeded restarts
by mean best-match score is returned.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class KTooLarge(Exception):
    pass


class EmptyInput(Exception):
    pass


def cocentered_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """IoU of (w, h) shapes re-centered at the origin; broadcasts over the
    leading axis of ``a`` against each row of ``b``."""
    inter = np.minimum(a[..., None, 0], b[None, :, 0]) * np.minimum(
        a[..., None, 1], b[None, :, 1]
    )
    area_a = (a[..., 0] * a[..., 1])[..., None]
    area_b = (b[:, 0] * b[:, 1])[None, :]
    return inter / (area_a + area_b - inter)


def _ratio_similarity(values: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """min/max ratio = IoU of equal-height boxes with widths v and c."""
    v = values[:, None]
    c = centroids[None, :]
    return np.minimum(v, c) / np.maximum(v, c)


@dataclass(frozen=True)
class AnchorResult:
    mode: str
    #: scalars (aspect_ratio mode) or (w, h) pairs (iou mode), canonically sorted
    centroids: tuple
    mean_best_iou: float
    iterations: int

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "centroids": [list(c) if isinstance(c, tuple) else c for c in self.centroids],
            "mean_best_iou": self.mean_best_iou,
            "iterations": self.iterations,
        }


def _lloyd(
    values: np.ndarray,
    init: np.ndarray,
    distances_fn,
    max_iter: int,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Run Lloyd iterations to an assignment fixed point.

    ``values`` is (n, d). Empty clusters keep their previous centroid. The
    returned centroids are the member means of the returned assignment, so
    re-running the update + assignment steps changes nothing.
    """
    centroids = init.copy()
    assignment = None
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        new_assignment = np.argmin(distances_fn(values, centroids), axis=1)
        if assignment is not None and np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
        for j in range(len(centroids)):
            members = values[assignment == j]
            if len(members):
                # sort members before reducing: exact permutation invariance
                order = np.lexsort(members.T[::-1])
                centroids[j] = members[order].mean(axis=0)
    return centroids, assignment, iterations


def kmeans_anchors(
    boxes: Sequence[tuple[float, float]],
    k: int,
    distance: str = "aspect_ratio",
    seed: int = 0,
    restarts: int = 10,
    max_iter: int = 300,
) -> AnchorResult:
    """Cluster (w, h) box shapes into k anchor shapes.

    Requires ``1 <= k <= number of distinct shapes``. Returns the centroids
    plus the mean best-match score: for every input box, the best IoU against
    any centroid (ratio IoU in aspect mode), averaged.
    """
    if not boxes:
        raise EmptyInput("no boxes given")
    shapes = np.asarray(boxes, dtype=float)
    if shapes.ndim != 2 or shapes.shape[1] != 2 or (shapes <= 0).any():
        raise ValueError("boxes must be positive (w, h) pairs")
    distinct = np.unique(shapes, axis=0)
    if k < 1 or k > len(distinct):
        raise KTooLarge(f"k={k} not in [1, {len(distinct)} distinct boxes]")
    if distance not in ("aspect_ratio", "iou"):
        raise ValueError(f"unknown distance mode: {distance}")

    if distance == "aspect_ratio":
        values = (shapes[:, 0] / shapes[:, 1])[:, None]
        pool = np.unique(distinct[:, 0] / distinct[:, 1])[:, None]
        if len(pool) < k:  # distinct boxes may collapse to equal ratios
            pool = (distinct[:, 0] / distinct[:, 1])[:, None]

        def distances_fn(v, c):
            return (v[:, 0][:, None] - c[:, 0][None, :]) ** 2

        def score_fn(v, c):
            return _ratio_similarity(v[:, 0], c[:, 0])

    else:
        values = shapes
        pool = distinct

        def distances_fn(v, c):
            return 1.0 - cocentered_iou(v, c)

        def score_fn(v, c):
            return cocentered_iou(v, c)

    seeds = np.random.SeedSequence(seed).spawn(max(restarts, 1))
    best = None
    for ss in seeds:
        rng = np.random.default_rng(ss)
        idx = rng.choice(len(pool), size=k, replace=False)
        centroids, _, iterations = _lloyd(values, pool[np.sort(idx)], distances_fn, max_iter)
        # sort the per-box scores before averaging: the mean is then exactly
        # independent of input order
        score = float(np.sort(score_fn(values, centroids).max(axis=1)).mean())
        if best is None or score > best[0]:
            best = (score, centroids, iterations)

    score, centroids, iterations = best
    order = np.lexsort(centroids.T[::-1])
    centroids = centroids[order]
    if distance == "aspect_ratio":
        out = tuple(float(c[0]) for c in centroids)
    else:
        out = tuple((float(c[0]), float(c[1])) for c in centroids)
    return AnchorResult(mode=distance, centroids=out, mean_best_iou=score, iterations=iterations)
