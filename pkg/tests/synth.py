"""Synthetic triplet corpora for pipeline and CLI tests.

Each triplet is a 64x64 scene: gradient background, a textured garment
block with a known mask, and the blacked-out person image derived from
them. Two canned method behaviors: "good" adds mild noise to the ground
truth, "bad" replaces the garment interior with noise and shifts the
background.
"""

import json
from pathlib import Path

import numpy as np

from vton_eval.core import BinaryMask, save_image, save_mask
from vton_eval.curation import build_masked_person

SIZE = 64


def _garment_texture(rng):
    base = rng.integers(40, 216, size=3)
    yy, xx = np.mgrid[0:SIZE, 0:SIZE]
    stripe = ((yy // int(rng.integers(3, 7)) + xx // int(rng.integers(3, 7))) % 2)
    tex = np.empty((SIZE, SIZE, 3), dtype=np.float64)
    for c in range(3):
        tex[:, :, c] = base[c] * (0.6 + 0.4 * stripe)
    return tex.clip(0, 255).astype(np.uint8)


def make_triplet(rng):
    garment = _garment_texture(rng)
    yy = np.mgrid[0:SIZE, 0:SIZE][0]
    background = np.stack([
        40 + yy * 2.0,
        90 + yy * 1.2,
        140 - yy * 0.8,
    ], axis=-1).clip(0, 255)
    bits = np.zeros((SIZE, SIZE), dtype=bool)
    y0, x0 = rng.integers(8, 16, size=2)
    h, w = rng.integers(28, 40, size=2)
    bits[y0:min(y0 + h, 56), x0:min(x0 + w, 56)] = True
    gt = background.copy()
    gt[bits] = garment[bits]
    gt = gt.astype(np.uint8)
    mask = BinaryMask(bits=bits)
    masked_person = build_masked_person(gt, mask)
    return garment, gt, mask, masked_person


def degrade(gt, mask, rng, kind):
    out = gt.astype(np.float64).copy()
    if kind == "good":
        out += rng.normal(0, 2.0, size=out.shape)
    elif kind == "bad":
        interior = mask.bits.copy()
        interior[:, :] = False
        ys, xs = np.where(mask.bits)
        if len(ys):
            interior[ys.min() + 6:ys.max() - 5, xs.min() + 6:xs.max() - 5] = True
            interior &= mask.bits
        noise = rng.uniform(0, 255, size=out.shape)
        out[interior] = noise[interior]
        out += rng.normal(0, 12.0, size=out.shape)
    else:
        raise ValueError(kind)
    return out.clip(0, 255).astype(np.uint8)


def build_corpus(root, n_triplets=6, methods=("good", "bad"), seed=0):
    """Write images, manifest.jsonl, and results.jsonl under `root`."""
    root = Path(root)
    images = root / "images"
    images.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    manifest_rows = []
    result_rows = []
    for i in range(n_triplets):
        tid = f"t{i:03d}"
        garment, gt, mask, masked_person = make_triplet(rng)
        save_image(garment, images / f"{tid}_garment.png")
        save_image(gt, images / f"{tid}_gt.png")
        save_image(masked_person, images / f"{tid}_person.png")
        save_mask(mask, images / f"{tid}_mask.png")
        manifest_rows.append({
            "id": tid,
            "garment_path": f"images/{tid}_garment.png",
            "ground_truth_path": f"images/{tid}_gt.png",
            "masked_person_path": f"images/{tid}_person.png",
            "gt_mask_path": f"images/{tid}_mask.png",
            "caption": f"synthetic garment {i}",
            "category_id": i % 20,
            "split": "test",
        })
        for method in methods:
            gen = degrade(gt, mask, rng, method)
            save_image(gen, images / f"{tid}_{method}.png")
            result_rows.append({
                "triplet_id": tid,
                "method_id": method,
                "image_path": f"images/{tid}_{method}.png",
                "gen_mask_path": f"images/{tid}_mask.png",
            })
    manifest_path = root / "manifest.jsonl"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        for row in manifest_rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    results_path = root / "results.jsonl"
    with open(results_path, "w", encoding="utf-8") as fh:
        for row in result_rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return manifest_path, results_path
