"""Command implementations behind the CLI: pure-ish functions over files.

Per-pair work fans out over a thread pool; every output sequence is
sorted by (triplet, method) before writing so reruns with the same
config and seed are byte-identical (VLM calls excluded).
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import manifest as mf
from . import store as st
from .backends import BuiltinBackend, FileBackend, embed_builtin
from .core import SCORE_DIMS, load_image, load_mask, save_image, save_mask
from .correlations import (
    METRIC_COLUMNS,
    REP_DETAIL_COLUMNS,
    VLM_DETAIL_COLUMNS,
    CorrelationError,
    CorrelationReport,
    aggregate_human,
    correlate_columns,
)
from .curation import (
    build_masked_person,
    cluster_counts,
    kmeans_cluster,
    make_splits,
    resolution_filter,
    stratified_sample,
)
from .morphology import StructuringElement, erosion_hierarchy
from .pixel_metrics import MetricInputError, fid, gaussian_stats, lpips_aggregate, psnr, ssim
from .rep_metrics import file_backend_rep_scores, multi_scale_fidelity
from .tensorio import read_tensor
from .core import TripletRecord
from .vlm import JudgeRequest


class PipelineError(RuntimeError):
    pass


def gt_source_id(triplet_id: str) -> str:
    return f"{triplet_id}__gt"


def gen_source_id(triplet_id: str, method_id: str) -> str:
    return f"{triplet_id}__{method_id}"


def make_element(name: str) -> StructuringElement:
    if not name.startswith("square"):
        raise PipelineError(f"unknown structuring element {name!r}")
    size = int(name[len("square"):] or 3)
    return StructuringElement.square(size)


def load_pairs(manifest_path, results_path):
    """(record, result) pairs, joining results onto the triplet manifest."""
    records = {r.id: r for r in mf.load_manifest(manifest_path)}
    results = mf.load_results(results_path)
    pairs = []
    for res in results:
        if res.triplet_id not in records:
            raise PipelineError(
                f"result references unknown triplet {res.triplet_id!r}")
        pairs.append((records[res.triplet_id], res))
    pairs.sort(key=lambda p: (p[1].triplet_id, p[1].method_id))
    return pairs


def _pmap(fn, items, workers: int):
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# -- representation evaluation -------------------------------------------


def make_backend(kind: str):
    if kind == "builtin":
        return BuiltinBackend()
    if kind.startswith("file:"):
        return FileBackend(kind[len("file:"):])
    raise PipelineError(f"unknown backend kind {kind!r}")


def run_rep_eval(manifest_path, results_path, store_dir, backend_kind="builtin",
                 levels=4, element="square3", workers=4, emit_masks=None) -> dict:
    pairs = load_pairs(manifest_path, results_path)
    backend = make_backend(backend_kind)
    elem = make_element(element)
    base = Path(manifest_path).parent
    res_base = Path(results_path).parent
    from_files = backend_kind.startswith("file:")
    if emit_masks and from_files:
        raise PipelineError("--emit-masks needs pixel access; use the builtin backend")
    emit_dir = None
    if emit_masks:
        emit_dir = Path(emit_masks)
        emit_dir.mkdir(parents=True, exist_ok=True)
    emitted_gt = set()

    def score_pair(pair):
        record, result = pair
        tid, mid = result.triplet_id, result.method_id
        rows = []
        if from_files:
            scores = file_backend_rep_scores(
                backend, gen_source_id(tid, mid), gt_source_id(tid), levels)
        else:
            if result.gen_mask_path is None:
                return [st.ScoreRow(tid, mid, "rep_error", None,
                                    flag="missing generated mask")]
            gt_image = load_image(mf.resolve_path(record.ground_truth_path, base))
            gt_mask = load_mask(mf.resolve_path(record.gt_mask_path, base))
            gen_image = load_image(mf.resolve_path(result.image_path, res_base))
            gen_mask = load_mask(mf.resolve_path(result.gen_mask_path, res_base))
            scores = multi_scale_fidelity(
                gen_image, gen_mask, gt_image, gt_mask, elem=elem, levels=levels,
                backend=backend, gen_id=gen_source_id(tid, mid),
                gt_id=gt_source_id(tid))
            if emit_dir is not None:
                if tid not in emitted_gt:
                    _write_hierarchy(gt_mask, elem, levels, emit_dir, gt_source_id(tid))
                    emitted_gt.add(tid)
                _write_hierarchy(gen_mask, elem, levels, emit_dir,
                                 gen_source_id(tid, mid))
        rows.append(st.ScoreRow(tid, mid, "s_global", scores.s_global))
        for k, value in enumerate(scores.s_rep):
            rows.append(st.ScoreRow(tid, mid, f"s_rep_{k}", value,
                                    flag=None if value is not None else "degenerate"))
        rows.append(st.ScoreRow(tid, mid, "s_rep_mean", scores.s_rep_mean,
                                flag=None if scores.s_rep_mean is not None else "degenerate"))
        rows.append(st.ScoreRow(tid, mid, "s_overall", scores.s_overall,
                                flag=None if scores.s_overall is not None else "degenerate"))
        return rows

    all_rows = []
    for rows in _pmap(score_pair, pairs, workers):
        all_rows.extend(rows)
    all_rows.sort(key=lambda r: (r.triplet_id, r.method_id, r.metric))
    st.append_scores(store_dir, all_rows)
    st.write_aggregates(st.compact(store_dir), store_dir)
    expected = [(r.triplet_id, r.method_id) for _, r in pairs]
    return st.coverage(store_dir, expected, "s_global")


def _write_hierarchy(mask, elem, levels, out_dir, source_id) -> None:
    for k, level in enumerate(erosion_hierarchy(mask, elem, levels)):
        save_mask(level, out_dir / f"{source_id}.mask_level_{k}.png")


# -- pixel evaluation ------------------------------------------------------


def _discover_lpips_layers(lpips_dir: Path) -> list[str]:
    layers = sorted(p.name[len("lpips_w_"):-len(".vten")]
                    for p in lpips_dir.glob("lpips_w_*.vten"))
    if not layers:
        raise PipelineError(f"no lpips_w_<layer>.vten weights under {lpips_dir}")
    return layers


def run_pixel_eval(manifest_path, results_path, store_dir, workers=4,
                   lpips_dir=None) -> dict:
    pairs = load_pairs(manifest_path, results_path)
    base = Path(manifest_path).parent
    res_base = Path(results_path).parent
    layers = None
    weights = None
    if lpips_dir is not None:
        lpips_dir = Path(lpips_dir)
        layers = _discover_lpips_layers(lpips_dir)
        weights = [read_tensor(lpips_dir / f"lpips_w_{layer}.vten").as_float64()
                   for layer in layers]

    def score_pair(pair):
        record, result = pair
        tid, mid = result.triplet_id, result.method_id
        gt_image = load_image(mf.resolve_path(record.ground_truth_path, base))
        gen_image = load_image(mf.resolve_path(result.image_path, res_base))
        try:
            rows = [st.ScoreRow(tid, mid, "psnr", psnr(gen_image, gt_image)),
                    st.ScoreRow(tid, mid, "ssim", ssim(gen_image, gt_image))]
        except MetricInputError as exc:
            return [st.ScoreRow(tid, mid, "pixel_error", None, flag=str(exc))]
        if layers is not None:
            try:
                gen_stack = [read_tensor(
                    lpips_dir / f"{gen_source_id(tid, mid)}.lpips_{layer}.vten"
                ).as_float64() for layer in layers]
                gt_stack = [read_tensor(
                    lpips_dir / f"{gt_source_id(tid)}.lpips_{layer}.vten"
                ).as_float64() for layer in layers]
                rows.append(st.ScoreRow(
                    tid, mid, "lpips", lpips_aggregate(gen_stack, gt_stack, weights)))
            except (OSError, MetricInputError) as exc:
                rows.append(st.ScoreRow(tid, mid, "lpips", None, flag=str(exc)))
        return rows

    all_rows = []
    for rows in _pmap(score_pair, pairs, workers):
        all_rows.extend(rows)
    all_rows.sort(key=lambda r: (r.triplet_id, r.method_id, r.metric))
    st.append_scores(store_dir, all_rows)
    st.write_aggregates(st.compact(store_dir), store_dir)
    expected = [(r.triplet_id, r.method_id) for _, r in pairs]
    return st.coverage(store_dir, expected, "psnr")


# -- FID -------------------------------------------------------------------


def run_fid_from_images(manifest_path, results_path, store_dir) -> dict:
    """Builtin-embedder feature sets: ground truth vs each method's outputs."""
    pairs = load_pairs(manifest_path, results_path)
    base = Path(manifest_path).parent
    res_base = Path(results_path).parent
    gt_feats = {}
    by_method = {}
    for record, result in pairs:
        if record.id not in gt_feats:
            image = load_image(mf.resolve_path(record.ground_truth_path, base))
            gt_feats[record.id] = embed_builtin(image).vector
        by_method.setdefault(result.method_id, []).append(
            embed_builtin(load_image(
                mf.resolve_path(result.image_path, res_base))).vector)
    real = gaussian_stats(np.array([gt_feats[t] for t in sorted(gt_feats)]))
    rows = []
    for method in sorted(by_method):
        stats = gaussian_stats(np.array(by_method[method]))
        rows.append(st.ScoreRow(st.SET_LEVEL, method, "fid", fid(stats, real)))
    st.append_scores(store_dir, rows)
    st.write_aggregates(st.compact(store_dir), store_dir)
    return {"methods": len(rows)}


def run_fid_from_features(real_path, gen_specs, store_dir) -> dict:
    """Adapter-provided (N, D) feature matrices, one per set."""
    real = gaussian_stats(read_tensor(real_path).as_float64())
    rows = []
    for spec in gen_specs:
        method, _, path = spec.partition("=")
        if not path:
            raise PipelineError(f"expected method=features.vten, got {spec!r}")
        stats = gaussian_stats(read_tensor(path).as_float64())
        rows.append(st.ScoreRow(st.SET_LEVEL, method, "fid", fid(stats, real)))
    st.append_scores(store_dir, rows)
    st.write_aggregates(st.compact(store_dir), store_dir)
    return {"methods": len(rows)}


# -- VLM judging -----------------------------------------------------------


def run_judge(manifest_path, results_path, store_dir, client, workers=4) -> dict:
    pairs = load_pairs(manifest_path, results_path)
    base = Path(manifest_path).parent
    res_base = Path(results_path).parent

    def judge_pair(pair):
        record, result = pair
        req = JudgeRequest(
            triplet_id=result.triplet_id,
            method_id=result.method_id,
            garment_image=mf.resolve_path(record.garment_path, base),
            ground_truth_image=mf.resolve_path(record.ground_truth_path, base),
            generated_image=mf.resolve_path(result.image_path, res_base),
        )
        outcome = client.score_triplet(req)
        tid, mid = result.triplet_id, result.method_id
        if not outcome.ok:
            return [st.ScoreRow(tid, mid, "vlm_failed", None, flag=outcome.error)]
        vector = outcome.vector
        rows = [st.ScoreRow(tid, mid, f"vlm_{dim}", getattr(vector, dim))
                for dim in SCORE_DIMS]
        rows.append(st.ScoreRow(tid, mid, "vlm_s_avg", vector.s_avg))
        return rows

    all_rows = []
    for rows in _pmap(judge_pair, pairs, workers):
        all_rows.extend(rows)
    all_rows.sort(key=lambda r: (r.triplet_id, r.method_id, r.metric))
    st.append_scores(store_dir, all_rows)
    st.write_aggregates(st.compact(store_dir), store_dir)
    expected = [(r.triplet_id, r.method_id) for _, r in pairs]
    return st.coverage(store_dir, expected, "vlm_s_avg")


# -- curation ----------------------------------------------------------------


def load_candidates(path) -> list[dict]:
    out = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if obj["id"] in seen:
                raise PipelineError(f"{path}:{lineno}: duplicate candidate {obj['id']!r}")
            seen.add(obj["id"])
            out.append(obj)
    return out


def run_curate(candidates_path, out_dir, seed=0, k=20, target_n=None,
               min_side=1024, max_side=1536, ratios=(0.8, 0.1, 0.1)) -> dict:
    """Filter -> cluster -> sample -> split -> emit manifest (plus cluster report)."""
    candidates = load_candidates(candidates_path)
    base = Path(candidates_path).parent
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    kept = []
    for cand in candidates:
        width, height = cand.get("width"), cand.get("height")
        if width is None or height is None:
            from PIL import Image

            with Image.open(mf.resolve_path(cand["ground_truth_path"], base)) as img:
                width, height = img.size
        if resolution_filter(int(width), int(height), min_side, max_side):
            kept.append(cand)
    if not kept:
        raise PipelineError("resolution gate rejected every candidate")

    vectors = np.array([
        embed_builtin(load_image(mf.resolve_path(c["garment_path"], base))).vector
        for c in kept])
    clustering = kmeans_cluster(vectors, k=k, seed=seed)
    labels = clustering.labels()

    assignments_path = out / "cluster_assignments.jsonl"
    with open(assignments_path, "w", encoding="utf-8") as fh:
        for cand, assignment in zip(kept, clustering.assignments):
            fh.write(json.dumps({
                "id": cand["id"], "cluster": assignment.cluster,
                "distance": round(assignment.distance, 9),
            }, sort_keys=True) + "\n")

    if target_n is None:
        target_n = len(kept)
    selected = set(stratified_sample(
        [(c["id"], label) for c, label in zip(kept, labels)], target_n, seed=seed, k=k))
    chosen = [(c, label) for c, label in zip(kept, labels) if c["id"] in selected]
    splits = make_splits([(c["id"], label) for c, label in chosen], ratios, seed=seed)

    masked_dir = out / "masked"
    records = []
    for cand, label in chosen:
        masked_path = cand.get("masked_person_path")
        if not masked_path:
            masked_dir.mkdir(parents=True, exist_ok=True)
            gt = load_image(mf.resolve_path(cand["ground_truth_path"], base))
            mask = load_mask(mf.resolve_path(cand["gt_mask_path"], base))
            target = masked_dir / f"{cand['id']}.png"
            save_image(build_masked_person(gt, mask), target)
            masked_path = str(target.relative_to(out))
        records.append(TripletRecord(
            id=cand["id"],
            garment_path=_rebase(cand["garment_path"], base, out),
            ground_truth_path=_rebase(cand["ground_truth_path"], base, out),
            masked_person_path=masked_path,
            gt_mask_path=_rebase(cand["gt_mask_path"], base, out),
            caption=cand.get("caption", ""),
            category_id=label,
            split=splits[cand["id"]],
            verified=bool(cand.get("verified", False)),
        ))
    manifest_path = out / "manifest.jsonl"
    mf.save_manifest(records, manifest_path)

    from .report import write_cluster_report

    write_cluster_report(cluster_counts(label for _, label in chosen), out)
    return {
        "candidates": len(candidates), "kept": len(kept),
        "selected": len(records), "clusters": k,
        "manifest": str(manifest_path),
    }


def _rebase(path: str, base: Path, out: Path) -> str:
    """Make candidate-relative paths resolvable from the output manifest."""
    import os

    if os.path.isabs(path):
        return path
    return os.path.relpath((base / path).resolve(), out.resolve())


def run_caption(manifest_path, out_path, client) -> dict:
    from .curation import caption_manifest

    records = mf.load_manifest(manifest_path)
    base = Path(manifest_path).parent
    captioned, failures = caption_manifest(
        records, client,
        image_loader=lambda rec: load_image(mf.resolve_path(rec.garment_path, base)))
    mf.save_manifest(captioned, out_path)
    failures_path = Path(out_path).with_suffix(".failures.jsonl")
    if failures:
        with open(failures_path, "w", encoding="utf-8") as fh:
            for rec_id, stage, message in failures:
                fh.write(json.dumps({"id": rec_id, "stage": stage,
                                     "error": message}, sort_keys=True) + "\n")
    return {"records": len(records), "failed": len(failures),
            "out": str(out_path)}


# -- meta evaluation ---------------------------------------------------------


def run_meta_eval(store_dir, ratings_path=None, human_column="s_avg",
                  level="method", out_dir=None) -> dict:
    from .correlations import correlate_all
    from .report import write_correlation_report

    ratings = mf.load_ratings(ratings_path) if ratings_path else []
    aggregates = st.compact(store_dir, ratings=ratings)
    st.write_aggregates(aggregates, store_dir)
    if not aggregates:
        raise PipelineError("no results in store")

    reports = {}
    if level == "method":
        reports["core"] = correlate_all(aggregates, human_column, METRIC_COLUMNS)
        reports["vlm_dims"] = correlate_all(aggregates, human_column, VLM_DETAIL_COLUMNS)
        reports["rep_dims"] = correlate_all(aggregates, human_column, REP_DETAIL_COLUMNS)
    elif level == "sample":
        reports["core"] = _sample_level_report(store_dir, ratings, human_column)
    else:
        raise PipelineError(f"unknown correlation level {level!r}")

    if out_dir is not None:
        write_correlation_report(reports, aggregates, out_dir)
    skipped = {name: dict(r.skipped) for name, r in reports.items() if r.skipped}
    return {"reports": {name: {m: vars(e) for m, e in r.entries.items()}
                        for name, r in reports.items()},
            "skipped": skipped}


def _sample_level_report(store_dir, ratings, human_column) -> CorrelationReport:
    """One point per (triplet, method) pair instead of per method."""
    latest = st.latest_by_key(st.read_scores(store_dir))
    human_items = aggregate_human(ratings)
    entries = {}
    skipped = {}
    n_used = 0
    sample_columns = [("vlm_s_avg", +1, "s_avg"), ("s_overall", +1, "s_overall"),
                      ("psnr", +1, "psnr"), ("ssim", +1, "ssim"),
                      ("lpips", -1, "-lpips")]
    for metric, sign, label in sample_columns:
        xs, ys = [], []
        for key in sorted(human_items):
            item = human_items[key]
            if not item["complete"]:
                continue
            row = latest.get((key[0], key[1], metric))
            if row is None or row.value is None:
                continue
            import math as _math

            if _math.isinf(row.value):
                continue
            xs.append(sign * row.value)
            ys.append(item[human_column])
        if len(xs) < 3:
            skipped[label] = f"only {len(xs)} usable samples"
            continue
        try:
            entries[label] = correlate_columns(xs, ys)
            n_used = max(n_used, len(xs))
        except CorrelationError as exc:
            skipped[label] = str(exc)
    return CorrelationReport(human_column=human_column, level="sample",
                             n=n_used, entries=entries, skipped=skipped)
