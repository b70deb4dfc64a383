"""Seeded Lloyd k-means used to split one class's selected features into
several prototypes.

Distances are squared Euclidean on whatever points are passed in; the
labeling module hands over unit-norm features, so this matches the cosine
convention used elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .numerics import as_matrix, make_rng

__all__ = ["KMeansConfig", "KMeansResult", "kmeans", "kmeans_plus_plus_init"]

InitMethod = Literal["kmeans_plus_plus", "first_S_points"]


@dataclass(frozen=True)
class KMeansConfig:
    num_clusters: int
    max_iters: int = 100
    tol: float = 1e-6
    seed: int = 0
    init: InitMethod = "kmeans_plus_plus"

    def __post_init__(self):
        if self.num_clusters < 1:
            raise ValueError("num_clusters must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.init not in ("kmeans_plus_plus", "first_S_points"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass
class KMeansResult:
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    iterations_run: int
    # inertia of the assignment step at each Lloyd iteration, then the final one
    inertia_history: list[float] = field(default_factory=list)


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def kmeans_plus_plus_init(points, S: int, rng: np.random.Generator) -> np.ndarray:
    """D^2-weighted seeding.

    The first centroid is drawn uniformly; each later one with probability
    proportional to its squared distance from the nearest chosen centroid.
    Once every point coincides with a chosen centroid (e.g. ``S > n``), the
    remaining centroids are uniform draws, i.e. duplicates.
    """
    pts = as_matrix(points, "points")
    n = pts.shape[0]
    if n == 0:
        raise ValueError("empty cluster input")
    chosen = [int(rng.integers(n))]
    closest = _sq_dists(pts, pts[chosen[0]][None, :])[:, 0]
    for _ in range(1, S):
        total = closest.sum()
        if total > 0.0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            idx = int(rng.integers(n))
        chosen.append(idx)
        closest = np.minimum(closest, _sq_dists(pts, pts[idx][None, :])[:, 0])
    return pts[chosen].copy()


def _initial_centroids(pts: np.ndarray, cfg: KMeansConfig) -> np.ndarray:
    S = cfg.num_clusters
    if cfg.init == "first_S_points":
        # cycle through the points when there are fewer than S
        return pts[np.arange(S) % pts.shape[0]].copy()
    return kmeans_plus_plus_init(pts, S, make_rng(cfg.seed))


def _repair_empty(pts, centroids, labels, dists):
    """Move each empty centroid onto the point farthest from its own centroid."""
    S = centroids.shape[0]
    counts = np.bincount(labels, minlength=S)
    for j in np.flatnonzero(counts == 0):
        own = dists[np.arange(len(labels)), labels]
        far = int(np.argmax(own))
        centroids[j] = pts[far]
        # the reseeded point now sits on centroid j at distance zero
        counts[labels[far]] -= 1
        labels[far] = j
        counts[j] += 1
        dists[:, j] = _sq_dists(pts, centroids[j][None, :])[:, 0]
    return centroids, labels


def kmeans(points, cfg: KMeansConfig) -> KMeansResult:
    """Lloyd iterations until the largest centroid shift drops below ``tol``.

    Always returns exactly ``cfg.num_clusters`` centroids. With fewer points
    than clusters some centroids are duplicates; clusters that empty out are
    reseeded by :func:`_repair_empty`.
    """
    pts = as_matrix(points, "points")
    if pts.shape[0] == 0:
        raise ValueError("empty cluster input")
    if pts.shape[1] == 0:
        raise ValueError("points must have at least one column")

    centroids = _initial_centroids(pts, cfg)
    history: list[float] = []
    iters = 0
    for iters in range(1, cfg.max_iters + 1):
        dists = _sq_dists(pts, centroids)
        labels = np.argmin(dists, axis=1)
        history.append(float(dists[np.arange(len(labels)), labels].sum()))

        new = centroids.copy()
        for j in range(centroids.shape[0]):
            mask = labels == j
            if mask.any():
                new[j] = pts[mask].mean(axis=0)
        new, labels = _repair_empty(pts, new, labels, _sq_dists(pts, new))

        shift = np.sqrt(((new - centroids) ** 2).sum(axis=1)).max()
        centroids = new
        if shift < cfg.tol:
            break

    dists = _sq_dists(pts, centroids)
    labels = np.argmin(dists, axis=1)
    inertia = float(dists[np.arange(len(labels)), labels].sum())
    history.append(inertia)
    return KMeansResult(
        centroids=centroids,
        assignments=labels.astype(np.int64),
        inertia=inertia,
        iterations_run=iters,
        inertia_history=history,
    )
