"""Team identification from car-crop embeddings.

Number recognition gates reference collection: when a car's number is read
with high confidence, its embedding joins that team's reference list, and
once a team has enough references their arithmetic mean becomes the team
centroid. From then on any embedding within the assignment distance of a
centroid is labeled with that team. Closeness is always cosine distance,
``1 - cos(a, b)``, so uniform rescaling of all embeddings changes nothing.

Also implements the three clustering-quality metrics used to track encoder
health: mean within-cluster deviation, mean inter-centroid distance, and the
delta between cross-class and within-class pairwise distances (higher delta
means better separation).
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from trackside.model import Embedding
from trackside.numbers import NumberResult


class ZeroVector(Exception):
    """Cosine distance is undefined for an all-zero vector."""


class DimensionMismatch(Exception):
    """Embeddings within one deployment must share one dimension."""


class EmptyCluster(Exception):
    pass


class FewerThanTwoCentroids(Exception):
    pass


class InsufficientData(Exception):
    pass


def _as_array(v: "Embedding | np.ndarray | Sequence[float]") -> np.ndarray:
    if isinstance(v, Embedding):
        return np.asarray(v.vector, dtype=float)
    return np.asarray(v, dtype=float)


def cosine_distance(a, b) -> float:
    """``1 - (a . b) / (|a| |b|)``, in ``[0, 2]``.

    Raises ZeroVector for an all-zero input and DimensionMismatch when the
    vectors disagree in length.
    """
    va, vb = _as_array(a), _as_array(b)
    if va.shape != vb.shape:
        raise DimensionMismatch(f"dimensions differ: {va.shape} vs {vb.shape}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine distance undefined for zero vector")
    return 1.0 - float(np.dot(va, vb)) / (na * nb)


@dataclass
class TeamIdentityConfig:
    min_number_confidence: float = 0.8
    reference_threshold: int = 10
    assign_distance_threshold: float = 0.3


@dataclass
class _TeamState:
    references: list[np.ndarray] = field(default_factory=list)
    centroid: np.ndarray | None = None

    @property
    def finalized(self) -> bool:
        return self.centroid is not None


class TeamCentroidStore:
    """Accumulates reference embeddings per team and assigns by centroid.

    Mutations are serialized behind a lock, so pipeline workers may call
    ``observe`` concurrently; reads see a consistent snapshot. The centroid
    is recomputed as the batch mean on every accepted reference, and keeps
    refining as references continue to arrive past the threshold.
    """

    def __init__(self, config: TeamIdentityConfig | None = None):
        self.config = config or TeamIdentityConfig()
        self._teams: dict[str, _TeamState] = {}
        self._dimension: int | None = None
        self._lock = threading.RLock()

    def _check_dimension(self, vec: np.ndarray) -> None:
        if self._dimension is None:
            self._dimension = vec.shape[0]
        elif vec.shape[0] != self._dimension:
            raise DimensionMismatch(
                f"embedding dimension {vec.shape[0]} != store dimension {self._dimension}"
            )

    def observe(self, embedding: Embedding, number_result: NumberResult | None) -> str | None:
        """Record one car observation; returns the team assignment, if any.

        A high-confidence on-roster number makes the observation reference
        eligible: the embedding is appended to that team's references (the
        centroid is recomputed once the count reaches the threshold) and the
        assignment is the number's own team. Otherwise the observation is
        assigned the nearest finalized centroid within the distance
        threshold, or nothing.
        """
        vec = _as_array(embedding)
        with self._lock:
            self._check_dimension(vec)
            eligible = (
                number_result is not None
                and not number_result.off_roster
                and number_result.confidence >= self.config.min_number_confidence
            )
            if eligible:
                state = self._teams.setdefault(number_result.number, _TeamState())
                state.references.append(vec)
                if len(state.references) >= self.config.reference_threshold:
                    state.centroid = np.mean(np.stack(state.references), axis=0)
                return number_result.number
            team, _ = self.assign(vec)
            return team

    def assign(self, embedding) -> tuple[str | None, float | None]:
        """Nearest finalized centroid under the distance threshold.

        Ties break toward the lowest team id. Returns (None, None) when no
        centroid qualifies.
        """
        vec = _as_array(embedding)
        with self._lock:
            self._check_dimension(vec)
            best_team = None
            best_distance = None
            for team in sorted(self._teams):
                centroid = self._teams[team].centroid
                if centroid is None:
                    continue
                d = cosine_distance(vec, centroid)
                if best_distance is None or d < best_distance:
                    best_team, best_distance = team, d
            if best_distance is not None and best_distance < self.config.assign_distance_threshold:
                return best_team, best_distance
            return None, None

    def reference_count(self, team: str) -> int:
        with self._lock:
            state = self._teams.get(team)
            return len(state.references) if state else 0

    def centroid(self, team: str) -> np.ndarray | None:
        with self._lock:
            state = self._teams.get(team)
            return None if state is None or state.centroid is None else state.centroid.copy()

    def teams(self) -> list[str]:
        with self._lock:
            return sorted(self._teams)

    def snapshot(self) -> dict[str, Any]:
        """JSON-ready view: per team the centroid, reference count, and
        finalized flag, plus the store configuration."""
        with self._lock:
            return {
                "config": {
                    "min_number_confidence": self.config.min_number_confidence,
                    "reference_threshold": self.config.reference_threshold,
                    "assign_distance_threshold": self.config.assign_distance_threshold,
                },
                "teams": {
                    team: {
                        "centroid": None if s.centroid is None else [float(x) for x in s.centroid],
                        "reference_count": len(s.references),
                        "finalized": s.finalized,
                    }
                    for team, s in self._teams.items()
                },
            }

    def dump(self) -> dict[str, Any]:
        """Full JSON-ready state (references included) for restart recovery."""
        with self._lock:
            return {
                "config": self.snapshot()["config"],
                "teams": {
                    team: {
                        "references": [[float(x) for x in r] for r in s.references],
                        "centroid": None if s.centroid is None else [float(x) for x in s.centroid],
                    }
                    for team, s in self._teams.items()
                },
            }

    @classmethod
    def restore(cls, payload: Mapping[str, Any]) -> "TeamCentroidStore":
        cfg = payload.get("config", {})
        store = cls(
            TeamIdentityConfig(
                min_number_confidence=float(cfg.get("min_number_confidence", 0.8)),
                reference_threshold=int(cfg.get("reference_threshold", 10)),
                assign_distance_threshold=float(cfg.get("assign_distance_threshold", 0.3)),
            )
        )
        for team, s in payload.get("teams", {}).items():
            state = _TeamState(
                references=[np.asarray(r, dtype=float) for r in s.get("references", [])],
                centroid=None if s.get("centroid") is None else np.asarray(s["centroid"], dtype=float),
            )
            store._teams[team] = state
            if state.references:
                store._check_dimension(state.references[0])
        return store

    def save(self, path: str | Path) -> None:
        tmp = Path(str(path) + ".tmp")
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(self.dump(), f)
        tmp.replace(path)

    @classmethod
    def load(cls, path: str | Path) -> "TeamCentroidStore":
        with open(path, encoding="utf-8") as f:
            return cls.restore(json.load(f))


def _cluster_arrays(clusters: Mapping[str, Iterable]) -> dict[str, list[np.ndarray]]:
    return {team: [_as_array(v) for v in members] for team, members in clusters.items()}


def mean_cluster_deviation(clusters: Mapping[str, Iterable]) -> float:
    """Mean over clusters of the average cosine distance from each member to
    its cluster centroid (the arithmetic mean of the members). Lower is
    better."""
    arrays = _cluster_arrays(clusters)
    if not arrays:
        raise EmptyCluster("no clusters given")
    per_cluster = []
    for team, members in arrays.items():
        if not members:
            raise EmptyCluster(f"cluster {team!r} is empty")
        centroid = np.mean(np.stack(members), axis=0)
        per_cluster.append(
            float(np.mean([cosine_distance(m, centroid) for m in members]))
        )
    return float(np.mean(per_cluster))


def mean_centroid_deviation(centroids: Sequence) -> float:
    """Average cosine distance over all unordered centroid pairs. Higher is
    better."""
    arrays = [_as_array(c) for c in centroids]
    if len(arrays) < 2:
        raise FewerThanTwoCentroids("need at least two centroids")
    distances = [cosine_distance(a, b) for a, b in combinations(arrays, 2)]
    return float(np.mean(distances))


def mean_intra_outra_delta(clusters: Mapping[str, Iterable]) -> float:
    """Separation delta, computed without centroids.

    intra: for each class with at least two members, the mean pairwise
    within-class distance; averaged over those classes. outra: for each pair
    of classes, the mean pairwise cross-class distance; averaged over pairs.
    Returns ``outra - intra`` so that larger values mean better separation.
    """
    arrays = _cluster_arrays(clusters)
    if len(arrays) < 2 or any(not members for members in arrays.values()):
        raise InsufficientData("need >= 2 clusters, each with >= 1 member")
    intra_means = []
    for members in arrays.values():
        if len(members) < 2:
            continue
        intra_means.append(
            float(np.mean([cosine_distance(a, b) for a, b in combinations(members, 2)]))
        )
    if not intra_means:
        raise InsufficientData("intra term needs a cluster with >= 2 members")
    outra_means = []
    for (_, members_a), (_, members_b) in combinations(sorted(arrays.items()), 2):
        outra_means.append(
            float(np.mean([cosine_distance(a, b) for a in members_a for b in members_b]))
        )
    return float(np.mean(outra_means)) - float(np.mean(intra_means))
