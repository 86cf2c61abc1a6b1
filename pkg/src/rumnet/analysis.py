"""Post-fit interpretation: customer-type clustering and attribute sweeps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ChoiceEvent
from .models import ChoiceModel


def kmeans(points, k: int, rng: np.random.Generator, max_iter: int = 100,
           standardize: bool = False, sse_history: list | None = None):
    """Lloyd's algorithm with distance-weighted seeding.

    The first centroid is a uniformly chosen point; each subsequent seed is
    drawn with probability proportional to squared distance from the nearest
    centroid so far. Iteration stops at a label fixpoint or after max_iter
    rounds; a cluster that empties is re-seeded to the current farthest
    point. Nearest-centroid ties resolve to the lowest centroid index.

    Returns (centroids, labels) in the original feature scale.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("points must be a non-empty (m, d) array")
    if k < 1:
        raise ValueError("k must be >= 1")
    distinct = np.unique(pts, axis=0).shape[0]
    if k > distinct:
        raise ValueError(f"k={k} exceeds the {distinct} distinct points")
    mu, sd = 0.0, 1.0
    work = pts
    if standardize:
        mu = pts.mean(axis=0)
        sd = pts.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        work = (pts - mu) / sd

    m = work.shape[0]
    centroids = np.empty((k, work.shape[1]))
    centroids[0] = work[rng.integers(m)]
    d2 = ((work - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            probs = d2 / total
            choice = rng.choice(m, p=probs)
        else:
            choice = rng.integers(m)
        centroids[j] = work[choice]
        d2 = np.minimum(d2, ((work - centroids[j]) ** 2).sum(axis=1))

    labels = None
    for _ in range(max_iter):
        dist = ((work[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(dist, axis=1)
        if sse_history is not None:
            sse_history.append(float(dist[np.arange(m), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        nearest = dist[np.arange(m), labels].copy()
        for j in range(k):
            mask = labels == j
            if mask.any():
                centroids[j] = work[mask].mean(axis=0)
            else:
                far = int(np.argmax(nearest))
                centroids[j] = work[far]
                nearest[far] = -1.0  # claimed; next empty cluster picks another
    return centroids * sd + mu, labels


def within_cluster_sse(points, centroids, labels) -> float:
    pts = np.asarray(points, dtype=np.float64)
    return float(((pts - np.asarray(centroids)[labels]) ** 2).sum())


@dataclass
class SweepSpec:
    """One-dimensional attribute sweep around a base event."""

    base_event: ChoiceEvent
    target_alternative: int
    target_feature: int
    lo: float
    hi: float
    steps: int

    def __post_init__(self):
        if self.steps < 2:
            raise ValueError("steps must be >= 2")
        if not 0 <= self.target_alternative < self.base_event.n_alternatives:
            raise ValueError(f"target_alternative {self.target_alternative} out of range")
        if not 0 <= self.target_feature < self.base_event.d_x:
            raise ValueError(f"target_feature {self.target_feature} out of range")


def sweep(model: ChoiceModel, spec: SweepSpec):
    """Predicted probability curves as one product feature moves over a grid.

    Exactly one scalar is mutated per row; everything else in the event
    stays fixed. Returns (grid values (steps,), probabilities (steps, n)).
    """
    base = spec.base_event
    values = np.linspace(spec.lo, spec.hi, spec.steps)
    probs = np.empty((spec.steps, base.n_alternatives))
    for r, v in enumerate(values):
        products = base.products.copy()
        products[spec.target_alternative, spec.target_feature] = v
        event = ChoiceEvent(base.customer, products, base.available, base.chosen)
        probs[r] = model.probabilities(event)
    return values, probs
