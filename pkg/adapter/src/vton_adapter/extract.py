"""Feature and mask extraction: everything the evaluation engine consumes.

The adapter never computes metrics. It materializes, in the engine's
file formats and naming conventions:

  <id>__gt.full_image.vten / <id>__<method>.full_image.vten
  <source_id>.masked_level_<k>.vten      (k = 0..3 by default)
  <source_id>.lpips_<layer>.vten + lpips_w_<layer>.vten
  fid_real.vten / fid_<method>.vten      ((N, D) matrices)
  <source_id>.mask.png                   (8-bit, >127 = foreground)

Masked embeddings multiply the engine-exported eroded masks
(`rep-eval --emit-masks`) into the image at native resolution, so both
components share identical erosion results.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .encoder import LPIPS_LAYERS, Encoder
from .tensorio import write_vten

MASK_THRESHOLD = 12  # |image - occluded| above this marks the garment region


def load_jsonl(path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def resolve(path, base) -> Path:
    p = Path(path)
    return p if p.is_absolute() else Path(base) / p


def load_image(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def load_mask_bits(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("L")) > 127


def save_mask_bits(bits: np.ndarray, path) -> None:
    Image.fromarray(np.where(bits, 255, 0).astype(np.uint8), mode="L").save(path)


def gt_source_id(triplet_id: str) -> str:
    return f"{triplet_id}__gt"


def gen_source_id(triplet_id: str, method_id: str) -> str:
    return f"{triplet_id}__{method_id}"


def iter_images(manifest_path, results_path):
    """Yield (source_id, image_path, triplet_id, method_id|None) for gt + generated."""
    base = Path(manifest_path).parent
    res_base = Path(results_path).parent if results_path else None
    for rec in load_jsonl(manifest_path):
        yield gt_source_id(rec["id"]), resolve(rec["ground_truth_path"], base), rec["id"], None
    if results_path:
        for res in load_jsonl(results_path):
            yield (gen_source_id(res["triplet_id"], res["method_id"]),
                   resolve(res["image_path"], res_base), res["triplet_id"],
                   res["method_id"])


def extract_embeddings(manifest_path, results_path, out_dir, masks_dir,
                       encoder: Encoder, levels: int = 4) -> dict:
    """Full-image and per-level masked embeddings for every gt and generated image."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    masks = Path(masks_dir)
    written = 0
    skipped_levels = 0
    for source_id, image_path, _, _ in iter_images(manifest_path, results_path):
        image = load_image(image_path)
        write_vten(encoder.embed(image), out / f"{source_id}.full_image.vten")
        written += 1
        for k in range(levels):
            mask_path = masks / f"{source_id}.mask_level_{k}.png"
            if not mask_path.exists():
                skipped_levels += 1
                continue
            bits = load_mask_bits(mask_path)
            if bits.shape != image.shape[:2]:
                raise ValueError(
                    f"{mask_path}: mask {bits.shape} does not match image "
                    f"{image.shape[:2]}")
            masked = image * bits[:, :, None]
            if not bits.any():
                # Empty eroded region: a zero vector tells the engine the
                # level is degenerate (zero norm), matching its convention.
                vector = np.zeros_like(encoder.embed(masked))
            else:
                vector = encoder.embed(masked)
            write_vten(vector, out / f"{source_id}.masked_level_{k}.vten")
            written += 1
    (out / "metadata.json").write_text(
        json.dumps(encoder.metadata(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    return {"files": written, "skipped_levels": skipped_levels, "out": str(out)}


def occlusion_diff_mask(image: np.ndarray, occluded: np.ndarray,
                        threshold: int = MASK_THRESHOLD) -> np.ndarray:
    """Garment region recovered from the black-occlusion person image.

    Stand-in for detection-prompted segmentation: the garment is where
    the (generated or ground-truth) image differs from the occluded
    person image. Exact on occlusion-built data; heuristic elsewhere.
    """
    diff = np.abs(image.astype(np.int16) - occluded.astype(np.int16)).max(axis=2)
    return diff > threshold


def extract_masks(manifest_path, results_path, out_dir,
                  threshold: int = MASK_THRESHOLD) -> dict:
    """Garment masks for ground-truth and generated images, plus an updated
    results manifest with gen_mask_path filled."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = Path(manifest_path).parent
    records = {r["id"]: r for r in load_jsonl(manifest_path)}
    written = 0
    for rec in records.values():
        occluded = load_image(resolve(rec["masked_person_path"], base))
        gt = load_image(resolve(rec["ground_truth_path"], base))
        bits = occlusion_diff_mask(gt, occluded, threshold)
        save_mask_bits(bits, out / f"{gt_source_id(rec['id'])}.mask.png")
        written += 1
    updated = []
    if results_path:
        res_base = Path(results_path).parent
        for res in load_jsonl(results_path):
            rec = records[res["triplet_id"]]
            occluded = load_image(resolve(rec["masked_person_path"], base))
            gen = load_image(resolve(res["image_path"], res_base))
            source = gen_source_id(res["triplet_id"], res["method_id"])
            mask_path = out / f"{source}.mask.png"
            save_mask_bits(occlusion_diff_mask(gen, occluded, threshold), mask_path)
            written += 1
            res = dict(res)
            res["gen_mask_path"] = str(mask_path.resolve())
            updated.append(res)
        updated_path = out / "results_with_masks.jsonl"
        with open(updated_path, "w", encoding="utf-8") as fh:
            for res in sorted(updated, key=lambda r: (r["triplet_id"], r["method_id"])):
                fh.write(json.dumps(res, ensure_ascii=False, sort_keys=True) + "\n")
    return {"masks": written, "out": str(out)}


def extract_lpips(manifest_path, results_path, out_dir, encoder: Encoder) -> dict:
    """Per-image layer stacks plus unit layer weights."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    channels_per_layer = {}
    written = 0
    for source_id, image_path, _, _ in iter_images(manifest_path, results_path):
        stacks = encoder.layer_features(load_image(image_path))
        for layer in LPIPS_LAYERS:
            feats = stacks[layer]
            channels_per_layer[layer] = feats.shape[0]
            write_vten(feats, out / f"{source_id}.lpips_{layer}.vten")
            written += 1
    for layer, channels in channels_per_layer.items():
        write_vten(np.ones(channels, dtype=np.float32), out / f"lpips_w_{layer}.vten")
        written += 1
    return {"files": written, "out": str(out)}


def extract_fid(manifest_path, results_path, out_dir, encoder: Encoder) -> dict:
    """(N, D) feature matrices: the real set and one per method."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    real = []
    per_method = {}
    for source_id, image_path, triplet_id, method_id in iter_images(
            manifest_path, results_path):
        vector = encoder.embed(load_image(image_path))
        if method_id is None:
            real.append((triplet_id, vector))
        else:
            per_method.setdefault(method_id, []).append((triplet_id, vector))
    write_vten(np.stack([v for _, v in sorted(real, key=lambda x: x[0])]),
               out / "fid_real.vten")
    for method in sorted(per_method):
        rows = sorted(per_method[method], key=lambda x: x[0])
        write_vten(np.stack([v for _, v in rows]), out / f"fid_{method}.vten")
    return {"sets": 1 + len(per_method), "out": str(out)}
