"""Append-only results store and per-method compaction.

Per-pair scores live in `scores.jsonl`, one record per (triplet, method,
metric); re-appending a key overrides on compaction (last write wins),
which keeps every command crash-safe and idempotent. `aggregates.jsonl`
is the compacted per-method summary consumed by reports and the
meta-evaluation.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path

from .core import SCORE_DIMS, MethodAggregate
from .correlations import aggregate_human

SCORES_FILE = "scores.jsonl"
AGGREGATES_FILE = "aggregates.jsonl"

VLM_METRICS = tuple(f"vlm_{d}" for d in SCORE_DIMS) + ("vlm_s_avg",)
REP_LEVEL_METRICS = ("s_rep_0", "s_rep_1", "s_rep_2", "s_rep_3")
REP_METRICS = ("s_global",) + REP_LEVEL_METRICS + ("s_rep_mean", "s_overall")
PIXEL_METRICS = ("psnr", "ssim", "lpips")
SET_LEVEL = ""  # triplet_id of method-level records (fid)


class StoreError(ValueError):
    pass


@dataclass(frozen=True)
class ScoreRow:
    triplet_id: str
    method_id: str
    metric: str
    value: float | None
    flag: str | None = None


def _encode(row: ScoreRow) -> str:
    obj = {"triplet_id": row.triplet_id, "method_id": row.method_id,
           "metric": row.metric}
    if row.value is None:
        obj["value"] = None
    elif math.isinf(row.value):
        obj["value"] = None
        obj["flag"] = "inf"
    else:
        obj["value"] = float(row.value)
    if row.flag is not None:
        obj["flag"] = row.flag
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


def append_scores(store_dir, rows) -> None:
    path = Path(store_dir) / SCORES_FILE
    Path(store_dir).mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as fh:
        for row in rows:
            fh.write(_encode(row) + "\n")


def read_scores(store_dir) -> list[ScoreRow]:
    path = Path(store_dir) / SCORES_FILE
    if not os.path.exists(path):
        return []
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise StoreError(f"{path}:{lineno}: {exc}") from exc
            value = obj.get("value")
            flag = obj.get("flag")
            if flag == "inf" and value is None:
                value = math.inf
            rows.append(ScoreRow(obj["triplet_id"], obj["method_id"],
                                 obj["metric"], value, flag))
    return rows


def latest_by_key(rows) -> dict:
    """Last write wins per (triplet, method, metric)."""
    out = {}
    for row in rows:
        out[(row.triplet_id, row.method_id, row.metric)] = row
    return out


def _mean(values) -> float | None:
    vals = [v for v in values if v is not None]
    if not vals:
        return None
    return math.fsum(vals) / len(vals)


def compact(store_dir, ratings=None) -> list[MethodAggregate]:
    """Fold per-pair rows (and optional human ratings) into per-method rows.

    Means run over triplet-sorted values with fsum, so the reduction
    order never depends on how workers interleaved their writes.
    """
    latest = latest_by_key(read_scores(store_dir))
    methods = sorted({m for (_, m, _) in latest})
    by_method = {m: {} for m in methods}
    for (triplet, method, metric), row in latest.items():
        by_method[method].setdefault(metric, {})[triplet] = row

    human_items = aggregate_human(ratings) if ratings else {}
    aggregates = []
    for method in methods:
        metrics = by_method[method]
        agg = MethodAggregate(method_id=method)

        def values(name, metrics=metrics):
            rows = metrics.get(name, {})
            return [rows[t].value for t in sorted(rows) if t != SET_LEVEL]

        # VLM: a pair counts once; failures are separate rows.
        vlm_avg = values("vlm_s_avg")
        agg.vlm_scored = len([v for v in vlm_avg if v is not None])
        agg.vlm_failed = len(metrics.get("vlm_failed", {}))
        if agg.vlm_scored:
            for dim in SCORE_DIMS:
                agg.vlm[dim] = _mean(values(f"vlm_{dim}"))
            agg.vlm["s_avg"] = _mean(vlm_avg)

        # Representation scores with per-level exclusion counts.
        rep_pairs = metrics.get("s_global", {})
        agg.rep_pairs = len(rep_pairs)
        if rep_pairs:
            agg.s_global = _mean(values("s_global"))
            agg.s_rep = []
            agg.s_rep_excluded = []
            for name in REP_LEVEL_METRICS:
                level_values = values(name)
                agg.s_rep.append(_mean(level_values))
                agg.s_rep_excluded.append(
                    agg.rep_pairs - len([v for v in level_values if v is not None]))
            overall = values("s_overall")
            agg.s_rep_mean = _mean(values("s_rep_mean"))
            agg.s_overall = _mean(overall)
            agg.rep_excluded_pairs = len([v for v in overall if v is None])

        # Pixel metrics; infinite PSNR pairs are counted, never averaged.
        psnr_values = values("psnr")
        finite = [v for v in psnr_values if v is not None and not math.isinf(v)]
        agg.psnr_inf_count = len([v for v in psnr_values
                                  if v is not None and math.isinf(v)])
        agg.psnr = _mean(finite) if finite else None
        agg.ssim = _mean(values("ssim"))
        agg.lpips = _mean(values("lpips"))

        fid_rows = metrics.get("fid", {})
        if SET_LEVEL in fid_rows:
            agg.fid = fid_rows[SET_LEVEL].value

        # Human means over complete items only.
        items = {k: v for k, v in human_items.items() if k[1] == method}
        complete = [v for _, v in sorted(items.items()) if v["complete"]]
        agg.human_items = len(items)
        agg.human_incomplete = len(items) - len(complete)
        if complete:
            for dim in SCORE_DIMS + ("s_avg",):
                agg.human[dim] = math.fsum(v[dim] for v in complete) / len(complete)

        triplets = {t for rows in metrics.values() for t in rows if t != SET_LEVEL}
        agg.sample_count = len(triplets)
        aggregates.append(agg)
    return aggregates


def write_aggregates(aggregates, store_dir) -> None:
    path = Path(store_dir) / AGGREGATES_FILE
    with open(path, "w", encoding="utf-8") as fh:
        for agg in sorted(aggregates, key=lambda a: a.method_id):
            fh.write(json.dumps(asdict(agg), ensure_ascii=False, sort_keys=True) + "\n")


def read_aggregates(store_dir) -> list[MethodAggregate]:
    path = Path(store_dir) / AGGREGATES_FILE
    if not os.path.exists(path):
        raise StoreError(f"no aggregates at {path}; run compaction first")
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(MethodAggregate(**json.loads(line)))
    return out


def coverage(store_dir, expected_pairs, metric: str) -> dict:
    """How many expected (triplet, method) pairs have a non-null value for metric."""
    latest = latest_by_key(read_scores(store_dir))
    scored = 0
    missing = []
    for pair in sorted(expected_pairs):
        row = latest.get((pair[0], pair[1], metric))
        if row is not None and (row.value is not None or row.flag == "inf"):
            scored += 1
        else:
            missing.append(pair)
    return {"metric": metric, "expected": len(expected_pairs),
            "scored": scored, "missing": missing}
