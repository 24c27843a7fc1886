"""Line-delimited manifests: triplet records, method results, human ratings.

One JSON object per line, UTF-8, field names exactly as in the domain
types. Paths inside a manifest are resolved relative to the manifest's
own directory unless absolute.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict
from pathlib import Path

from PIL import Image

from .core import GeneratedResult, HumanRating, TripletRecord, ValidationError


class ManifestError(ValueError):
    """Parse or invariant failure, with the offending line number."""


def _iter_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise ManifestError(f"{path}:{lineno}: expected an object")
            yield lineno, obj


def load_manifest(path, resolve: bool = False) -> list[TripletRecord]:
    """Load triplet records, enforcing unique ids and per-record invariants.

    With resolve=True every referenced file must exist and decode as an
    image (the record is then "resolved" in the sense of the data model).
    """
    records = []
    seen = set()
    base = Path(path).parent
    for lineno, obj in _iter_lines(path):
        try:
            rec = TripletRecord(
                id=obj["id"],
                garment_path=obj["garment_path"],
                ground_truth_path=obj["ground_truth_path"],
                masked_person_path=obj["masked_person_path"],
                gt_mask_path=obj["gt_mask_path"],
                caption=obj.get("caption", ""),
                category_id=int(obj["category_id"]),
                split=obj.get("split", "test"),
                verified=bool(obj.get("verified", False)),
            )
        except KeyError as exc:
            raise ManifestError(f"{path}:{lineno}: missing field {exc}") from exc
        except (ValidationError, TypeError, ValueError) as exc:
            raise ManifestError(f"{path}:{lineno}: {exc}") from exc
        if rec.id in seen:
            raise ManifestError(f"{path}:{lineno}: duplicate id {rec.id!r}")
        seen.add(rec.id)
        if resolve:
            _check_images(rec, base, f"{path}:{lineno}")
        records.append(rec)
    return records


def _check_images(rec: TripletRecord, base: Path, where: str) -> None:
    for field_name in ("garment_path", "ground_truth_path",
                       "masked_person_path", "gt_mask_path"):
        p = resolve_path(getattr(rec, field_name), base)
        if not os.path.exists(p):
            raise ManifestError(f"{where}: {field_name} {p} does not exist")
        try:
            with Image.open(p) as img:
                img.verify()
        except Exception as exc:
            raise ManifestError(f"{where}: {field_name} {p} does not decode: {exc}") from exc


def resolve_path(p: str, base) -> str:
    p = str(p)
    return p if os.path.isabs(p) else str(Path(base) / p)


def save_manifest(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(asdict(rec), ensure_ascii=False, sort_keys=True) + "\n")


def load_results(path) -> list[GeneratedResult]:
    """Load generated results; (triplet_id, method_id) must be unique."""
    results = []
    seen = set()
    for lineno, obj in _iter_lines(path):
        try:
            res = GeneratedResult(
                triplet_id=obj["triplet_id"],
                method_id=obj["method_id"],
                image_path=obj["image_path"],
                gen_mask_path=obj.get("gen_mask_path"),
            )
        except KeyError as exc:
            raise ManifestError(f"{path}:{lineno}: missing field {exc}") from exc
        except (ValidationError, TypeError) as exc:
            raise ManifestError(f"{path}:{lineno}: {exc}") from exc
        key = (res.triplet_id, res.method_id)
        if key in seen:
            raise ManifestError(f"{path}:{lineno}: duplicate (triplet, method) {key}")
        seen.add(key)
        results.append(res)
    return results


def save_results(results, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for res in results:
            obj = asdict(res)
            if obj.get("gen_mask_path") is None:
                obj.pop("gen_mask_path")
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


def load_ratings(path) -> list[HumanRating]:
    ratings = []
    for lineno, obj in _iter_lines(path):
        try:
            ratings.append(HumanRating(
                triplet_id=obj["triplet_id"],
                method_id=obj["method_id"],
                rater_id=obj["rater_id"],
                scores=tuple(obj["scores"]),
                timestamp=obj["timestamp"],
            ))
        except KeyError as exc:
            raise ManifestError(f"{path}:{lineno}: missing field {exc}") from exc
        except ValidationError as exc:
            raise ManifestError(f"{path}:{lineno}: {exc}") from exc
    return ratings


def save_ratings(ratings, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in ratings:
            fh.write(json.dumps(asdict(r), ensure_ascii=False, sort_keys=True) + "\n")
