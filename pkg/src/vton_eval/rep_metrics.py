"""Representation-based fidelity scores.

S_global is the cosine of whole-image embeddings; S_rep^(k) is the
cosine of embeddings of mask-multiplied images at erosion level k.
Per-pair values aggregate to S_rep_mean (mean over present levels) and
S_overall (mean of S_global and S_rep_mean).
"""

from __future__ import annotations

import math

from .backends import DegenerateEmbeddingError, cosine
from .core import FULL_IMAGE, BinaryMask, Embedding, RepScoreSet, ValidationError
from .morphology import DEFAULT_LEVELS, StructuringElement, erosion_hierarchy


def global_consistency(emb_gen: Embedding, emb_gt: Embedding) -> float:
    """Cosine similarity between global image embeddings."""
    if emb_gen.variant != FULL_IMAGE or emb_gt.variant != FULL_IMAGE:
        raise ValidationError("global consistency needs full_image embeddings")
    return cosine(emb_gen, emb_gt)


def garment_fidelity_at_scale(gen_image, gen_mask_k: BinaryMask,
                              gt_image, gt_mask_k: BinaryMask,
                              backend, level: int,
                              gen_id: str = "gen", gt_id: str = "gt") -> float | None:
    """Masked feature similarity at one erosion level; None when a side is degenerate."""
    if gen_mask_k.is_empty or gt_mask_k.is_empty:
        return None
    emb_gen = backend.masked_embedding(gen_id, gen_image, gen_mask_k, level)
    emb_gt = backend.masked_embedding(gt_id, gt_image, gt_mask_k, level)
    try:
        return cosine(emb_gen, emb_gt)
    except DegenerateEmbeddingError:
        # Non-empty mask over all-black content still has no direction.
        return None


def multi_scale_fidelity(gen_image, gen_mask: BinaryMask,
                         gt_image, gt_mask: BinaryMask,
                         elem: StructuringElement | None = None,
                         levels: int = DEFAULT_LEVELS,
                         backend=None,
                         gen_id: str = "gen", gt_id: str = "gt") -> RepScoreSet:
    """Build both erosion hierarchies and score every level plus the aggregates."""
    if backend is None:
        raise ValidationError("an embedding backend is required")
    elem = elem or StructuringElement.square(3)
    gen_levels = erosion_hierarchy(gen_mask, elem, levels)
    gt_levels = erosion_hierarchy(gt_mask, elem, levels)
    emb_gen = backend.full_embedding(gen_id, gen_image)
    emb_gt = backend.full_embedding(gt_id, gt_image)
    s_global = global_consistency(emb_gen, emb_gt)
    per_level = []
    for k in range(levels):
        per_level.append(garment_fidelity_at_scale(
            gen_image, gen_levels[k], gt_image, gt_levels[k],
            backend, k, gen_id=gen_id, gt_id=gt_id))
    return build_rep_scores(s_global, per_level)


def build_rep_scores(s_global: float, per_level) -> RepScoreSet:
    present = [v for v in per_level if v is not None]
    if present:
        s_rep_mean = aggregate_rep(present)
        s_overall = aggregate_overall(s_global, s_rep_mean)
    else:
        s_rep_mean = None
        s_overall = None
    return RepScoreSet(s_global=s_global, s_rep=tuple(per_level),
                       s_rep_mean=s_rep_mean, s_overall=s_overall)


def aggregate_rep(level_scores) -> float:
    """Arithmetic mean of the per-scale scores."""
    values = list(level_scores)
    if not values:
        raise ValidationError("cannot aggregate an empty score list")
    return math.fsum(values) / len(values)


def aggregate_overall(s_global: float, s_rep_mean: float) -> float:
    """Arithmetic mean of the global score and the multi-scale mean."""
    return (s_global + s_rep_mean) / 2.0


def file_backend_rep_scores(backend, gen_id: str, gt_id: str,
                            levels: int = DEFAULT_LEVELS) -> RepScoreSet:
    """Score a pair purely from adapter-produced embedding files.

    Degenerate levels are detected by zero-norm vectors rather than by
    mask emptiness, since the masks never leave the adapter.
    """
    emb_gen = backend.full_embedding(gen_id)
    emb_gt = backend.full_embedding(gt_id)
    s_global = global_consistency(emb_gen, emb_gt)
    per_level = []
    for k in range(levels):
        try:
            e_gen = backend.masked_embedding(gen_id, level=k)
            e_gt = backend.masked_embedding(gt_id, level=k)
            per_level.append(cosine(e_gen, e_gt))
        except DegenerateEmbeddingError:
            per_level.append(None)
    return build_rep_scores(s_global, per_level)
