"""Acceptance gate: one test per release criterion, each printing a
PASS line with its measured numbers. Run with `pytest tests/test_acceptance.py -v -s`.
"""

import itertools
import json
import math
import time

import numpy as np
import pytest

from golden_rows import (
    HUMAN_ROWS,
    PUBLISHED_OVERALL_CORRELATION,
    REP_ROWS,
    VLM_ROWS,
)
from synth import build_corpus
from test_correlations import brute_kendall_tau_b, brute_pearson, brute_spearman
from vton_eval.backends import BuiltinBackend, embed_builtin
from vton_eval.core import BinaryMask, HumanRating, load_image, save_image
from vton_eval.correlations import kendall_tau, pearson, spearman
from vton_eval.curation import kmeans_cluster, resolution_filter, stratified_sample
from vton_eval.manifest import load_manifest, save_ratings
from vton_eval.morphology import StructuringElement, erode, erosion_hierarchy, self_dilated
from vton_eval.pixel_metrics import fid, gaussian_stats, lpips_aggregate, psnr, ssim
from vton_eval.rep_metrics import aggregate_overall, aggregate_rep, multi_scale_fidelity
from vton_eval.vlm import (
    JudgeRequest,
    MalformedResponseError,
    MissingFieldError,
    ScoreOutOfRangeError,
    VlmClient,
    parse_judge_response,
)

SQ3 = StructuringElement.square(3)


def _passed(name, detail=""):
    print(f"ACCEPTANCE PASS: {name}" + (f" ({detail})" if detail else ""))


def _subset(a: BinaryMask, b: BinaryMask) -> bool:
    return not (a.bits & ~b.bits).any()


def test_morphology_suite():
    start = time.monotonic()
    composite2 = self_dilated(SQ3, 1)
    composite3 = self_dilated(SQ3, 2)

    # Exhaustive 3x3 masks.
    for bits_int in range(512):
        bits = np.array([(bits_int >> i) & 1 for i in range(9)],
                        dtype=bool).reshape(3, 3)
        mask = BinaryMask(bits=bits)
        levels = erosion_hierarchy(mask, SQ3, levels=4)
        for k in range(3):
            assert _subset(levels[k + 1], levels[k])
        assert _subset(erode(mask, SQ3), mask)
        assert np.array_equal(erode(erode(mask, SQ3), SQ3).bits,
                              erode(mask, composite2).bits)
        for drop in range(9):
            if not bits.flat[drop]:
                continue
            smaller = bits.copy()
            smaller.flat[drop] = False
            assert _subset(erode(BinaryMask(bits=smaller), SQ3), erode(mask, SQ3))

    # 500 random 64x64 masks.
    rng = np.random.default_rng(2026)
    for _ in range(500):
        bits = rng.random((64, 64)) < rng.uniform(0.3, 0.9)
        mask = BinaryMask(bits=bits)
        levels = erosion_hierarchy(mask, SQ3, levels=4)
        for k in range(3):
            assert _subset(levels[k + 1], levels[k])
        assert _subset(levels[1], mask)
        assert np.array_equal(levels[2].bits, erode(mask, composite2).bits)
        assert np.array_equal(levels[3].bits, erode(mask, composite3).bits)
        smaller = BinaryMask(bits=bits & (rng.random((64, 64)) < 0.9))
        assert _subset(erode(smaller, SQ3), erode(mask, SQ3))

    elapsed = time.monotonic() - start
    assert elapsed < 10.0
    _passed("morphology suite", f"512 exhaustive + 500 random masks in {elapsed:.2f}s")


def test_published_representation_rows():
    worst = 0.0
    for method, row in REP_ROWS.items():
        s_global, levels = row[0], row[1:5]
        s_rep_mean = aggregate_rep(levels)
        s_overall = aggregate_overall(s_global, s_rep_mean)
        assert abs(s_rep_mean - row[5]) <= 0.001, method
        assert abs(s_overall - row[6]) <= 0.001, method
        worst = max(worst, abs(s_rep_mean - row[5]), abs(s_overall - row[6]))
    _passed("representation table golden", f"9 methods, worst gap {worst:.4f}")


def test_published_semantic_rows():
    worst = 0.0
    for method, row in VLM_ROWS.items():
        mean = sum(row[:5]) / 5.0
        assert abs(mean - row[5]) <= 0.001, method
        worst = max(worst, abs(mean - row[5]))
    _passed("semantic table golden", f"9 methods, worst gap {worst:.4f}")


def test_self_evaluation_identity():
    rng = np.random.default_rng(77)
    backend = BuiltinBackend()
    for trial in range(3):
        image = rng.integers(0, 256, (48, 48, 3), dtype=np.uint8)
        bits = np.zeros((48, 48), dtype=bool)
        bits[8:40, 10:38] = True
        mask = BinaryMask(bits=bits)
        scores = multi_scale_fidelity(image, mask, image, mask, backend=backend)
        assert abs(scores.s_global - 1.0) <= 1e-9
        for value in scores.s_rep:
            assert value is not None and abs(value - 1.0) <= 1e-9
        assert abs(scores.s_overall - 1.0) <= 1e-9
        assert abs(ssim(image, image) - 1.0) <= 1e-9
        assert psnr(image, image) == math.inf
        feats = [rng.standard_normal((8, 4, 4))]
        assert lpips_aggregate(feats, feats, [np.ones(8)]) == 0.0
        features = rng.standard_normal((32, 12))
        stats = gaussian_stats(features)
        assert fid(stats, stats) <= 1e-6
    _passed("self-evaluation identity",
            "S_global = S_rep = S_overall = 1, SSIM = 1, PSNR = inf, LPIPS = 0, FID = 0")


def test_correlation_oracle():
    checked = 0
    for n in range(3, 7):
        x = [float(v) for v in range(1, n + 1)]
        for perm in itertools.permutations(x):
            y = list(perm)
            assert kendall_tau(x, y) == pytest.approx(brute_kendall_tau_b(x, y), abs=1e-12)
            assert spearman(x, y) == pytest.approx(brute_spearman(x, y), abs=1e-12)
            assert pearson(x, y) == pytest.approx(brute_pearson(x, y), abs=1e-12)
            checked += 1

    rng = np.random.default_rng(4242)
    tied = 0
    while tied < 1000:
        n = int(rng.integers(3, 12))
        x = rng.integers(0, 4, size=n).astype(float)
        y = rng.integers(0, 4, size=n).astype(float)
        if np.all(x == x[0]) or np.all(y == y[0]):
            continue
        assert kendall_tau(x, y) == pytest.approx(
            brute_kendall_tau_b(list(x), list(y)), abs=1e-12)
        tied += 1
    _passed("correlation oracle", f"{checked} permutations + {tied} tied inputs")


def test_method_level_correlation_sanity():
    methods = sorted(REP_ROWS)
    overall = [REP_ROWS[m][6] for m in methods]
    human = [HUMAN_ROWS[m][5] for m in methods]
    rho_s = spearman(overall, human)
    rho_k = kendall_tau(overall, human)
    assert rho_s == pytest.approx(brute_spearman(overall, human), abs=1e-12)
    assert rho_k == pytest.approx(brute_kendall_tau_b(overall, human), abs=1e-12)
    rho_s_pub, rho_k_pub = PUBLISHED_OVERALL_CORRELATION
    assert abs(rho_s - rho_s_pub) <= 0.10
    assert abs(rho_k - rho_k_pub) <= 0.10
    _passed("table-level correlation sanity",
            f"rho_s={rho_s:.3f} (published {rho_s_pub}), "
            f"rho_k={rho_k:.3f} (published {rho_k_pub})")


def test_fid_closed_form_and_rotation():
    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(25):
        d = int(rng.integers(2, 12))
        mu1, mu2 = rng.standard_normal(d), rng.standard_normal(d)
        v1 = rng.uniform(0.05, 4.0, d)
        v2 = rng.uniform(0.05, 4.0, d)
        got = fid(gaussian_stats_from(mu1, np.diag(v1)),
                  gaussian_stats_from(mu2, np.diag(v2)))
        want = float(np.sum((mu1 - mu2) ** 2 + (np.sqrt(v1) - np.sqrt(v2)) ** 2))
        assert got == pytest.approx(want, abs=1e-6)
        worst = max(worst, abs(got - want))

    feats1 = rng.standard_normal((60, 7)) * 2.0 + 1.0
    feats2 = rng.standard_normal((70, 7)) * 0.5
    base = fid(gaussian_stats(feats1), gaussian_stats(feats2))
    for _ in range(5):
        q, _ = np.linalg.qr(rng.standard_normal((7, 7)))
        rotated = fid(gaussian_stats(feats1 @ q.T), gaussian_stats(feats2 @ q.T))
        assert rotated == pytest.approx(base, abs=1e-5)
    _passed("FID closed form + rotation invariance", f"worst diagonal gap {worst:.2e}")


def gaussian_stats_from(mean, cov):
    from vton_eval.pixel_metrics import GaussianStats

    return GaussianStats(mean=mean, covariance=cov, count=10)


def test_curation_criteria(tmp_path):
    # Resolution gate: exact [1024, 1536] min/max-side box.
    for w in (1000, 1023, 1024, 1200, 1536, 1537, 1600):
        for h in (1000, 1023, 1024, 1200, 1536, 1537, 1600):
            want = min(w, h) >= 1024 and max(w, h) <= 1536
            assert resolution_filter(w, h) == want, (w, h)

    # Stratified sampling: exactly target_n unique ids.
    rng = np.random.default_rng(55)
    items = [(f"i{i}", int(rng.integers(0, 20))) for i in range(500)]
    for target in (17, 100, 499):
        picked = stratified_sample(items, target, seed=3)
        assert len(picked) == target and len(set(picked)) == target

    # 3-blob clustering recovers the generating labels.
    centers = [(0.0, 0.0), (12.0, 0.0), (0.0, 12.0)]
    points, truth = [], []
    for label, center in enumerate(centers):
        pts = rng.normal(loc=center, scale=0.1, size=(50, 2))
        points.append(pts)
        truth += [label] * 50
    points = np.concatenate(points)
    labels = np.array(kmeans_cluster(points, k=3, seed=1).labels())
    for blob in range(3):
        assert len(set(labels[np.array(truth) == blob].tolist())) == 1

    # Same seed => identical manifests.
    from test_cli import TestCurate
    from vton_eval.pipeline import run_curate

    candidates = TestCurate()._candidates(tmp_path)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    for out in (out_a, out_b):
        run_curate(candidates, out, seed=12, k=3, target_n=25)
    assert ((out_a / "manifest.jsonl").read_bytes()
            == (out_b / "manifest.jsonl").read_bytes())
    _passed("curation criteria",
            "gate box exact, target_n exact, blobs recovered, seed-stable")


EXAMPLE_PAYLOAD = """{
  "reasoning": {
    "background_analysis": "Brief analysis...",
    "person_analysis": "Brief analysis...",
    "garment_analysis": "Brief analysis...",
    "realism_analysis": "Brief analysis..."
  },
  "scores": {
    "background_consistency": 4.5,
    "person_consistency": 4.0,
    "texture_fidelity": 3.5,
    "shape_preservation": 4.0,
    "overall_realism": 4.0
  },
  "final_weighted_score": 4.0
}"""


def test_vlm_parsing_and_mock_run(tmp_path):
    vector = parse_judge_response(EXAMPLE_PAYLOAD)
    assert (vector.s_bg, vector.s_id, vector.s_tex, vector.s_shape,
            vector.s_real) == (4.5, 4.0, 3.5, 4.0, 4.0)
    assert vector.s_avg == pytest.approx(4.0, abs=1e-12)

    obj = json.loads(EXAMPLE_PAYLOAD)
    obj["scores"]["background_consistency"] = 6
    with pytest.raises(ScoreOutOfRangeError):
        parse_judge_response(json.dumps(obj))
    obj = json.loads(EXAMPLE_PAYLOAD)
    del obj["scores"]
    with pytest.raises(MissingFieldError):
        parse_judge_response(json.dumps(obj))
    with pytest.raises(MalformedResponseError):
        parse_judge_response("no structure here")

    # Mock-endpoint scoring: 10 triplets, flaky first attempts, retry accounting.
    rng = np.random.default_rng(6)
    image_paths = []
    for name in ("g", "gt", "gen"):
        p = tmp_path / f"{name}.png"
        save_image(rng.integers(0, 256, (16, 16, 3), dtype=np.uint8), p)
        image_paths.append(str(p))
    attempts_by_call = {"n": 0}

    def flaky(payload):
        attempts_by_call["n"] += 1
        if attempts_by_call["n"] % 3 == 1 and attempts_by_call["n"] <= 12:
            return {"choices": [{"message": {"content": "hmm, not JSON"}}]}
        return {"choices": [{"message": {"content": EXAMPLE_PAYLOAD}}]}

    archive = tmp_path / "archive.jsonl"
    client = VlmClient(flaky, model="mock", archive_path=archive, backoff_s=0)
    outcomes = [client.score_triplet(JudgeRequest(f"t{i}", "m", *image_paths))
                for i in range(10)]
    assert all(o.ok for o in outcomes)
    total_attempts = sum(o.attempts for o in outcomes)
    archive_rows = [json.loads(line) for line in archive.read_text().splitlines()]
    assert len(archive_rows) == total_attempts
    retried = [o for o in outcomes if o.attempts > 1]
    assert retried, "mock was built to force retries"
    _passed("VLM parsing + mock endpoint",
            f"10 triplets, {total_attempts} attempts, {len(retried)} retried")


def test_end_to_end_synthetic_benchmark(tmp_path):
    from vton_eval.cli import EXIT_OK, main
    from vton_eval.pipeline import run_judge, run_meta_eval
    from vton_eval.vlm import VlmClient

    start = time.monotonic()
    manifest, results = build_corpus(tmp_path, n_triplets=50,
                                     methods=("good", "bad"), seed=2026)
    store = tmp_path / "store"

    def run(argv):
        return main([str(a) for a in argv])

    assert run(["rep-eval", "--manifest", manifest, "--results", results,
                "--store", store]) == EXIT_OK
    assert run(["pixel-eval", "--manifest", manifest, "--results", results,
                "--store", store]) == EXIT_OK
    assert run(["fid", "--manifest", manifest, "--results", results,
                "--store", store]) == EXIT_OK

    def fake_transport(payload):
        return {"choices": [{"message": {"content": EXAMPLE_PAYLOAD}}]}

    client = VlmClient(fake_transport, model="mock", backoff_s=0)
    coverage = run_judge(manifest, results, store, client, workers=4)
    assert coverage["scored"] == 100

    ts = "2026-06-01T00:00:00+00:00"
    ratings = []
    rng = np.random.default_rng(8)
    for i in range(50):
        for method, base in (("good", 4), ("bad", 2)):
            for rater in ("r1", "r2"):
                jitter = int(rng.integers(0, 2))
                score = max(1, min(5, base + jitter))
                ratings.append(HumanRating(f"t{i:03d}", method, rater,
                                           (score,) * 5, ts))
    ratings_path = tmp_path / "ratings.jsonl"
    save_ratings(ratings, ratings_path)

    meta_out = tmp_path / "meta"
    summary = run_meta_eval(store, ratings_path=ratings_path, level="sample",
                            out_dir=meta_out)
    assert "core" in summary["reports"]
    assert (meta_out / "correlation_core.csv").exists()

    report_out = tmp_path / "report"
    assert run(["report", "--store", store, "--out-dir", report_out]) == EXIT_OK

    import csv

    with open(report_out / "table_semantic.csv", newline="") as fh:
        semantic = list(csv.DictReader(fh))
    assert {r["method"] for r in semantic} == {"good", "bad"}
    assert "s_avg_vlm" in semantic[0] and "s_avg_human" in semantic[0]
    with open(report_out / "table_representation.csv", newline="") as fh:
        rep = list(csv.DictReader(fh))
    assert set(rep[0]) == {"method", "s_global", "s_rep_0", "s_rep_1", "s_rep_2",
                           "s_rep_3", "s_rep_mean", "s_overall"}
    with open(report_out / "table_pixel.csv", newline="") as fh:
        pixel = list(csv.DictReader(fh))
    assert set(pixel[0]) == {"method", "psnr", "ssim", "lpips", "fid"}
    with open(meta_out / "correlation_core.csv", newline="") as fh:
        corr = list(csv.DictReader(fh))
    assert set(corr[0]) == {"metric", "rho_s", "rho_k", "rho_p"}

    by_method = {r["method"]: r for r in rep}
    assert float(by_method["good"]["s_overall"]) > float(by_method["bad"]["s_overall"])

    elapsed = time.monotonic() - start
    assert elapsed < 60.0
    _passed("end-to-end synthetic benchmark",
            f"50 triplets x 2 methods -> 4 table shapes in {elapsed:.1f}s")
