"""Adapter tests, including the cross-component round trip through the
evaluation engine's file interfaces (the engine is a test dependency
only; the adapter package itself never imports it)."""

import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from vton_adapter.encoder import Encoder, LPIPS_LAYERS, STUB_DIMENSION
from vton_adapter.extract import (
    extract_embeddings,
    extract_fid,
    extract_lpips,
    extract_masks,
    occlusion_diff_mask,
)
from vton_adapter.tensorio import read_vten, write_vten


def save_image(arr, path):
    Image.fromarray(np.asarray(arr, dtype=np.uint8)).save(path)


def save_mask(bits, path):
    Image.fromarray(np.where(bits, 255, 0).astype(np.uint8), mode="L").save(path)


def make_corpus(root, n=2, method="self"):
    """Triplets whose generated image is the ground truth itself."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(3)
    manifest_rows, result_rows = [], []
    for i in range(n):
        tid = f"t{i:02d}"
        gt = rng.integers(0, 256, (64, 64, 3), dtype=np.uint8)
        bits = np.zeros((64, 64), dtype=bool)
        bits[12:52, 16:48] = True
        gt[~bits] = (gt[~bits] // 2) + 64  # background distinct from black
        masked_person = gt.copy()
        masked_person[bits] = 0
        save_image(gt, root / "images" / f"{tid}_gt.png")
        save_image(gt, root / "images" / f"{tid}_garment.png")
        save_image(masked_person, root / "images" / f"{tid}_person.png")
        save_mask(bits, root / "images" / f"{tid}_mask.png")
        manifest_rows.append({
            "id": tid,
            "garment_path": f"images/{tid}_garment.png",
            "ground_truth_path": f"images/{tid}_gt.png",
            "masked_person_path": f"images/{tid}_person.png",
            "gt_mask_path": f"images/{tid}_mask.png",
            "caption": "",
            "category_id": 0,
            "split": "test",
        })
        result_rows.append({
            "triplet_id": tid,
            "method_id": method,
            "image_path": f"images/{tid}_gt.png",
            "gen_mask_path": f"images/{tid}_mask.png",
        })
    manifest = root / "manifest.jsonl"
    results = root / "results.jsonl"
    with open(manifest, "w") as fh:
        for row in manifest_rows:
            fh.write(json.dumps(row) + "\n")
    with open(results, "w") as fh:
        for row in result_rows:
            fh.write(json.dumps(row) + "\n")
    return manifest, results


class TestTensorIo:
    def test_round_trip(self, tmp_path):
        arr = np.random.default_rng(0).standard_normal((5, 7)).astype(np.float32)
        write_vten(arr, tmp_path / "x.vten")
        assert np.array_equal(read_vten(tmp_path / "x.vten"), arr)

    def test_engine_reads_adapter_files(self, tmp_path):
        from vton_eval.tensorio import read_tensor

        arr = np.random.default_rng(1).standard_normal(129).astype(np.float32)
        write_vten(arr, tmp_path / "y.vten")
        blob = read_tensor(tmp_path / "y.vten")
        assert blob.shape == (129,)
        assert np.array_equal(blob.values, arr)


class TestEncoder:
    def test_deterministic_across_instances(self):
        image = np.random.default_rng(2).integers(0, 256, (48, 48, 3), dtype=np.uint8)
        a = Encoder("stub").embed(image)
        b = Encoder("stub").embed(image)
        assert np.array_equal(a, b)
        assert a.shape == (STUB_DIMENSION,)

    def test_layer_features_shapes(self):
        image = np.zeros((64, 64, 3), dtype=np.uint8)
        stacks = Encoder("stub").layer_features(image)
        assert set(stacks) == set(LPIPS_LAYERS)
        for feats in stacks.values():
            assert feats.ndim == 3

    def test_metadata_documents_preprocessing(self):
        meta = Encoder("stub").metadata()
        assert "resize224" in meta["preprocess"]
        assert meta["dimension"] == STUB_DIMENSION


class TestMasks:
    def test_occlusion_diff_recovers_exact_region(self):
        rng = np.random.default_rng(5)
        image = rng.integers(64, 256, (32, 32, 3), dtype=np.uint8)
        bits = np.zeros((32, 32), dtype=bool)
        bits[8:24, 4:30] = True
        occluded = image.copy()
        occluded[bits] = 0
        recovered = occlusion_diff_mask(image, occluded)
        assert np.array_equal(recovered, bits)

    def test_extract_masks_writes_files_and_results(self, tmp_path):
        manifest, results = make_corpus(tmp_path)
        out = tmp_path / "masks"
        summary = extract_masks(manifest, results, out)
        assert summary["masks"] == 4  # 2 gt + 2 generated
        assert (out / "t00__gt.mask.png").exists()
        assert (out / "t00__self.mask.png").exists()
        updated = [json.loads(line) for line in
                   (out / "results_with_masks.jsonl").read_text().splitlines()]
        assert all(Path(r["gen_mask_path"]).exists() for r in updated)


class TestExtraction:
    def test_byte_identical_reruns(self, tmp_path):
        manifest, results = make_corpus(tmp_path, n=1)
        masks = tmp_path / "hier"
        masks.mkdir()
        bits = np.zeros((64, 64), dtype=bool)
        bits[12:52, 16:48] = True
        for source in ("t00__gt", "t00__self"):
            for k in range(4):
                save_mask(bits, masks / f"{source}.mask_level_{k}.png")
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            extract_embeddings(manifest, results, out, masks, Encoder("stub"))
        name = "t00__gt.masked_level_2.vten"
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_dimension_matches_descriptor(self, tmp_path):
        manifest, results = make_corpus(tmp_path, n=1)
        masks = tmp_path / "hier"
        masks.mkdir()
        out = tmp_path / "emb"
        extract_embeddings(manifest, results, out, masks, Encoder("stub"))
        vec = read_vten(out / "t00__gt.full_image.vten")
        meta = json.loads((out / "metadata.json").read_text())
        assert vec.shape == (meta["dimension"],)

    def test_lpips_weight_files(self, tmp_path):
        manifest, results = make_corpus(tmp_path, n=1)
        out = tmp_path / "lpips"
        extract_lpips(manifest, results, out, Encoder("stub"))
        for layer in LPIPS_LAYERS:
            weights = read_vten(out / f"lpips_w_{layer}.vten")
            feats = read_vten(out / f"t00__gt.lpips_{layer}.vten")
            assert weights.shape == (feats.shape[0],)

    def test_fid_matrices(self, tmp_path):
        manifest, results = make_corpus(tmp_path, n=3)
        out = tmp_path / "fid"
        extract_fid(manifest, results, out, Encoder("stub"))
        real = read_vten(out / "fid_real.vten")
        gen = read_vten(out / "fid_self.vten")
        assert real.shape == gen.shape == (3, STUB_DIMENSION)
        assert np.array_equal(real, gen)  # self method reuses gt images


class TestEngineRoundTrip:
    """Cross-component acceptance: engine consumes adapter artifacts."""

    def test_self_evaluation_scores_one(self, tmp_path):
        from vton_eval.cli import main as engine_main

        manifest, results = make_corpus(tmp_path, n=2)
        store = tmp_path / "store"
        masks = tmp_path / "hier"

        # 1. Engine exports the eroded mask hierarchies.
        code = engine_main(["rep-eval", "--manifest", str(manifest),
                            "--results", str(results), "--store", str(store),
                            "--emit-masks", str(masks)])
        assert code == 0

        # 2. Adapter embeds gt and generated images through those masks.
        emb_dir = tmp_path / "emb"
        extract_embeddings(manifest, results, emb_dir, masks, Encoder("stub"))

        # 3. Engine rescores purely from the adapter's files.
        store2 = tmp_path / "store2"
        code = engine_main(["rep-eval", "--manifest", str(manifest),
                            "--results", str(results), "--store", str(store2),
                            "--backend", f"file:{emb_dir}"])
        assert code == 0
        from vton_eval.store import read_aggregates

        agg = read_aggregates(store2)[0]
        assert agg.method_id == "self"
        assert agg.s_global == pytest.approx(1.0, abs=1e-6)
        for level_mean in agg.s_rep:
            assert level_mean == pytest.approx(1.0, abs=1e-6)
        assert agg.s_overall == pytest.approx(1.0, abs=1e-6)
        print("ACCEPTANCE PASS: adapter round trip (self-evaluation S_overall = "
              f"{agg.s_overall:.9f})")

    def test_lpips_features_flow_into_engine(self, tmp_path):
        from vton_eval.pipeline import run_pixel_eval
        from vton_eval.store import read_aggregates

        manifest, results = make_corpus(tmp_path, n=2)
        lpips_dir = tmp_path / "lpips"
        extract_lpips(manifest, results, lpips_dir, Encoder("stub"))
        store = tmp_path / "store"
        run_pixel_eval(manifest, results, store, lpips_dir=lpips_dir)
        agg = read_aggregates(store)[0]
        assert agg.lpips == pytest.approx(0.0, abs=1e-9)  # identical images

    def test_fid_features_flow_into_engine(self, tmp_path):
        from vton_eval.pipeline import run_fid_from_features
        from vton_eval.store import read_aggregates

        manifest, results = make_corpus(tmp_path, n=3)
        fid_dir = tmp_path / "fid"
        extract_fid(manifest, results, fid_dir, Encoder("stub"))
        store = tmp_path / "store"
        run_fid_from_features(fid_dir / "fid_real.vten",
                              [f"self={fid_dir / 'fid_self.vten'}"], store)
        agg = read_aggregates(store)[0]
        assert agg.fid == pytest.approx(0.0, abs=1e-6)
