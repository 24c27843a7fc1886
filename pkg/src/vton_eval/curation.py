"""Dataset curation: resolution gating, clustering, sampling, splits, occlusion.

Every stochastic step takes an explicit seed and is deterministic given
it; clustering is our own Lloyd loop with k-means++ seeding so the
iteration contract (movement tolerance, iteration cap, per-iteration
inertia monotonicity) is pinned down rather than library-defined.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass

import numpy as np

from .core import SPLITS, BinaryMask, ValidationError

MIN_SIDE = 1024
MAX_SIDE = 1536
DEFAULT_K = 20
KMEANS_TOL = 1e-6
KMEANS_MAX_ITER = 300


class CurationError(ValueError):
    pass


def resolution_filter(width: int, height: int,
                      min_side: int = MIN_SIDE, max_side: int = MAX_SIDE) -> bool:
    """Accept iff both sides are at least min_side and the longer side at most max_side."""
    if width <= 0 or height <= 0:
        return False
    return min(width, height) >= min_side and max(width, height) <= max_side


@dataclass(frozen=True)
class ClusterAssignment:
    index: int
    cluster: int
    distance: float  # euclidean distance to the assigned centroid


@dataclass(frozen=True)
class KMeansResult:
    assignments: tuple
    centroids: np.ndarray
    inertia: float
    n_iter: int
    inertia_history: tuple

    def labels(self) -> list[int]:
        return [a.cluster for a in self.assignments]


def _plus_plus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = points[first]
    d2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # All remaining points coincide with a centroid; pick uniformly.
            choice = int(rng.integers(n))
        else:
            choice = int(rng.choice(n, p=d2 / total))
        centroids[c] = points[choice]
        d2 = np.minimum(d2, np.sum((points - centroids[c]) ** 2, axis=1))
    return centroids


def kmeans_cluster(embeddings, k: int = DEFAULT_K, seed: int = 0,
                   tol: float = KMEANS_TOL, max_iter: int = KMEANS_MAX_ITER) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding, deterministic given the seed.

    Stops when the largest centroid movement drops below `tol` or after
    `max_iter` iterations. Empty clusters are re-seeded on the point
    currently farthest from its centroid.
    """
    points = np.asarray(embeddings, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise CurationError("embeddings must be a non-empty (N, D) array")
    n = points.shape[0]
    if n < k:
        raise CurationError(f"need at least k={k} points, got {n}")
    rng = np.random.default_rng(seed)
    centroids = _plus_plus_init(points, k, rng)
    history = []
    labels = np.zeros(n, dtype=np.int64)
    d2 = np.zeros(n, dtype=np.float64)
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        dists = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels = dists.argmin(axis=1)
        d2 = dists[np.arange(n), labels]
        inertia = float(d2.sum())
        if history and inertia > history[-1] + 1e-9 * max(1.0, history[-1]):
            raise AssertionError(
                f"inertia increased {history[-1]} -> {inertia} at iteration {n_iter}")
        history.append(inertia)
        new_centroids = centroids.copy()
        for c in range(k):
            members = points[labels == c]
            if members.shape[0] == 0:
                # Deterministic re-seed: farthest point, lowest index on ties.
                far = int(d2.argmax())
                new_centroids[c] = points[far]
                labels[far] = c
                d2[far] = 0.0
            else:
                new_centroids[c] = members.mean(axis=0)
        movement = float(np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max())
        centroids = new_centroids
        if movement < tol:
            break
    dists = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = dists.argmin(axis=1)
    d2 = dists[np.arange(n), labels]
    assignments = tuple(
        ClusterAssignment(index=i, cluster=int(labels[i]), distance=float(math.sqrt(d2[i])))
        for i in range(n))
    return KMeansResult(assignments=assignments, centroids=centroids,
                        inertia=float(d2.sum()), n_iter=n_iter,
                        inertia_history=tuple(history))


def stratified_sample(items, target_n: int, seed: int = 0, k: int | None = None) -> list:
    """Pick exactly target_n ids balanced across clusters.

    `items` is a sequence of (id, cluster) pairs. Each cluster starts
    with quota floor(target_n / k); clusters smaller than the quota
    contribute everything, and the shortfall is redistributed round-robin
    over the largest clusters that still have capacity. Within-cluster
    selection is a seeded uniform draw without replacement.
    """
    items = list(items)
    n = len(items)
    if target_n > n:
        raise CurationError(f"target_n {target_n} exceeds pool size {n}")
    if target_n < 0:
        raise CurationError("target_n must be non-negative")
    by_cluster = defaultdict(list)
    for item_id, cluster in items:
        by_cluster[int(cluster)].append(item_id)
    clusters = sorted(by_cluster)
    if k is None:
        k = len(clusters)
    quota = target_n // k if k else 0
    alloc = {c: min(len(by_cluster[c]), quota) for c in clusters}
    shortfall = target_n - sum(alloc.values())
    # Largest clusters first, cluster id breaking ties, cycling one at a time.
    ordering = sorted(clusters, key=lambda c: (-len(by_cluster[c]), c))
    while shortfall > 0:
        progressed = False
        for c in ordering:
            if shortfall == 0:
                break
            if alloc[c] < len(by_cluster[c]):
                alloc[c] += 1
                shortfall -= 1
                progressed = True
        if not progressed:
            raise CurationError("internal allocation error: no capacity left")
    rng = np.random.default_rng(seed)
    selected = []
    for c in clusters:
        members = by_cluster[c]
        take = alloc[c]
        if take == len(members):
            selected.extend(members)
        else:
            idx = rng.choice(len(members), size=take, replace=False)
            selected.extend(members[i] for i in sorted(int(i) for i in idx))
    return selected


def make_splits(items, ratios, seed: int = 0) -> dict:
    """Stratified split per category; returns {id: split_name}.

    `items` is a sequence of (id, category_id); `ratios` maps the three
    split names to fractions summing to 1. Within each category the
    assigned counts follow largest-remainder rounding, so per-category
    proportions deviate from the global ratios by less than one item.
    """
    if isinstance(ratios, (tuple, list)):
        ratios = dict(zip(SPLITS, ratios))
    if set(ratios) != set(SPLITS):
        raise CurationError(f"ratios must name exactly the splits {SPLITS}")
    total = math.fsum(ratios[s] for s in SPLITS)
    if abs(total - 1.0) > 1e-9:
        raise CurationError(f"ratios must sum to 1, got {total}")
    by_category = defaultdict(list)
    for item_id, category in items:
        by_category[int(category)].append(item_id)
    rng = np.random.default_rng(seed)
    out = {}
    for category in sorted(by_category):
        members = list(by_category[category])
        perm = rng.permutation(len(members))
        members = [members[int(i)] for i in perm]
        counts = _largest_remainder(len(members), [ratios[s] for s in SPLITS])
        start = 0
        for split_name, count in zip(SPLITS, counts):
            for item_id in members[start:start + count]:
                out[item_id] = split_name
            start += count
    return out


def _largest_remainder(n: int, fractions) -> list[int]:
    exact = [n * f for f in fractions]
    counts = [int(math.floor(e)) for e in exact]
    remainder = n - sum(counts)
    order = sorted(range(len(fractions)),
                   key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[:remainder]:
        counts[i] += 1
    return counts


def build_masked_person(gt_image, gt_mask: BinaryMask) -> np.ndarray:
    """Black occlusion layer over the garment region; everything else untouched."""
    arr = np.asarray(gt_image)
    if arr.shape[:2] != gt_mask.bits.shape:
        raise ValidationError(
            f"mask shape {gt_mask.bits.shape} does not match image {arr.shape[:2]}")
    out = arr.copy()
    out[gt_mask.bits] = 0
    return out


def cluster_counts(labels) -> "Counter":
    return Counter(int(c) for c in labels)


def caption_manifest(records, client, image_loader=None):
    """Two-stage captioning: classify upper/lower, then category-specific caption.

    Returns (captioned_records, failures); a failed record keeps its old
    caption and shows up in `failures` as (record_id, stage, message)
    rather than being dropped.
    """
    from dataclasses import replace

    from .core import load_image

    loader = image_loader or (lambda rec: load_image(rec.garment_path))
    out = []
    failures = []
    for rec in records:
        try:
            image = loader(rec)
            category = client.classify_garment(image)
        except Exception as exc:
            failures.append((rec.id, "classify", str(exc)))
            out.append(rec)
            continue
        try:
            caption = client.caption_garment(image, category)
        except Exception as exc:
            failures.append((rec.id, "caption", str(exc)))
            out.append(rec)
            continue
        out.append(replace(rec, caption=caption))
    return out, failures
