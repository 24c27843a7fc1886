"""Domain types shared by every stage of the evaluation engine.

All types are immutable values after construction and safe to share
across parallel workers.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np
from PIL import Image

NUM_CATEGORIES = 20
SPLITS = ("train", "validation", "test")

# The five semantic dimensions, in rubric order.
SCORE_DIMS = ("s_bg", "s_id", "s_tex", "s_shape", "s_real")

FULL_IMAGE = "full_image"
_MASKED_RE = re.compile(r"^masked_level_(\d+)$")


class ValidationError(ValueError):
    """Raised when a record violates one of its invariants."""


def masked_variant(level: int) -> str:
    if level < 0:
        raise ValidationError(f"erosion level must be >= 0, got {level}")
    return f"masked_level_{level}"


def parse_variant(variant: str) -> int | None:
    """Return the erosion level for a masked variant, None for full_image."""
    if variant == FULL_IMAGE:
        return None
    m = _MASKED_RE.match(variant)
    if not m:
        raise ValidationError(f"unknown embedding variant {variant!r}")
    return int(m.group(1))


@dataclass(frozen=True)
class TripletRecord:
    """One evaluation case: garment, ground truth, masked person, garment mask."""

    id: str
    garment_path: str
    ground_truth_path: str
    masked_person_path: str
    gt_mask_path: str
    caption: str = ""
    category_id: int = 0
    split: str = "test"
    verified: bool = False

    def __post_init__(self):
        if not self.id:
            raise ValidationError("record id must be non-empty")
        if not 0 <= self.category_id < NUM_CATEGORIES:
            raise ValidationError(
                f"record {self.id}: category_id {self.category_id} outside [0, {NUM_CATEGORIES - 1}]"
            )
        if self.split not in SPLITS:
            raise ValidationError(f"record {self.id}: unknown split {self.split!r}")


@dataclass(frozen=True)
class GeneratedResult:
    """A method's output image for one triplet."""

    triplet_id: str
    method_id: str
    image_path: str
    gen_mask_path: str | None = None

    def __post_init__(self):
        if not self.triplet_id or not self.method_id:
            raise ValidationError("triplet_id and method_id must be non-empty")


@dataclass(frozen=True)
class BinaryMask:
    """2-D boolean garment region, row-major."""

    bits: np.ndarray  # shape (height, width), bool

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.ndim != 2:
            raise ValidationError(f"mask must be 2-D, got shape {arr.shape}")
        object.__setattr__(self, "bits", arr.astype(bool))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def is_empty(self) -> bool:
        """Degenerate-mask flag: no foreground pixels left."""
        return not bool(self.bits.any())

    def area(self) -> int:
        return int(self.bits.sum())


def load_mask(path) -> BinaryMask:
    """Read an 8-bit single-channel mask image; pixel > 127 means foreground."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"))
    return BinaryMask(bits=arr > 127)


def save_mask(mask: BinaryMask, path) -> None:
    arr = np.where(mask.bits, 255, 0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


def load_image(path) -> np.ndarray:
    """Read an image as (H, W, 3) uint8 RGB."""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def save_image(array: np.ndarray, path) -> None:
    Image.fromarray(np.asarray(array, dtype=np.uint8), mode="RGB").save(path)


@dataclass(frozen=True)
class Embedding:
    """A feature vector with provenance (backend, source image, masking variant)."""

    vector: np.ndarray  # float64, 1-D
    backend_id: str
    source_id: str = ""
    variant: str = FULL_IMAGE

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float64).reshape(-1)
        if vec.size == 0:
            raise ValidationError("embedding vector must be non-empty")
        if not np.all(np.isfinite(vec)):
            raise ValidationError("embedding vector contains non-finite values")
        parse_variant(self.variant)
        object.__setattr__(self, "vector", vec)

    @property
    def dimension(self) -> int:
        return int(self.vector.size)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))

    @property
    def degenerate(self) -> bool:
        """True when the (masked) source region was empty: zero norm, cosine undefined."""
        return self.norm == 0.0


@dataclass(frozen=True)
class VlmScoreVector:
    """Five semantic scores from the judge, plus their unweighted mean.

    `vlm_final` keeps the judge's own final_weighted_score for the record;
    it is never used in aggregation.
    """

    s_bg: float
    s_id: float
    s_tex: float
    s_shape: float
    s_real: float
    s_avg: float
    reasoning: tuple[str, str, str, str] = ("", "", "", "")
    vlm_final: float | None = None

    def __post_init__(self):
        for name in SCORE_DIMS:
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and not isinstance(value, bool)):
                raise ValidationError(f"{name} must be numeric, got {value!r}")
            if not 1.0 <= float(value) <= 5.0:
                raise ValidationError(f"{name} = {value} outside [1, 5]")
        mean = sum(float(getattr(self, n)) for n in SCORE_DIMS) / 5.0
        if abs(self.s_avg - mean) > 1e-9:
            raise ValidationError(
                f"s_avg {self.s_avg} differs from dimension mean {mean} by more than 1e-9"
            )
        if len(self.reasoning) != 4:
            raise ValidationError("reasoning must hold exactly four analysis strings")

    @classmethod
    def from_scores(cls, s_bg, s_id, s_tex, s_shape, s_real,
                    reasoning=("", "", "", ""), vlm_final=None) -> "VlmScoreVector":
        s_avg = (s_bg + s_id + s_tex + s_shape + s_real) / 5.0
        return cls(s_bg, s_id, s_tex, s_shape, s_real, s_avg,
                   reasoning=tuple(reasoning), vlm_final=vlm_final)

    def as_dict(self) -> dict:
        out = {name: float(getattr(self, name)) for name in SCORE_DIMS}
        out["s_avg"] = float(self.s_avg)
        return out


@dataclass(frozen=True)
class RepScoreSet:
    """Representation scores for one pair: global plus per-erosion-level.

    Levels where the eroded region was empty carry None and are excluded
    from the per-pair mean (counted upstream, never zero-filled).
    """

    s_global: float
    s_rep: tuple  # one float or None per erosion level
    s_rep_mean: float | None
    s_overall: float | None

    def __post_init__(self):
        scores = [self.s_global] + [v for v in self.s_rep if v is not None]
        if self.s_rep_mean is not None:
            scores.append(self.s_rep_mean)
        if self.s_overall is not None:
            scores.append(self.s_overall)
        for value in scores:
            if not -1.0 - 1e-12 <= value <= 1.0 + 1e-12:
                raise ValidationError(f"representation score {value} outside [-1, 1]")
        present = [v for v in self.s_rep if v is not None]
        if present:
            mean = math.fsum(present) / len(present)
            if self.s_rep_mean is None or abs(self.s_rep_mean - mean) > 1e-9:
                raise ValidationError("s_rep_mean is not the mean of the present levels")
            overall = (self.s_global + self.s_rep_mean) / 2.0
            if self.s_overall is None or abs(self.s_overall - overall) > 1e-9:
                raise ValidationError("s_overall is not the mean of s_global and s_rep_mean")
        else:
            if self.s_rep_mean is not None or self.s_overall is not None:
                raise ValidationError("means must be None when every level is missing")

    @property
    def missing_levels(self) -> tuple[int, ...]:
        return tuple(k for k, v in enumerate(self.s_rep) if v is None)


@dataclass(frozen=True)
class PixelScoreSet:
    """Per-pair pixel metrics. PSNR may be the +inf sentinel (identical images)."""

    psnr: float
    ssim: float
    lpips: float | None = None

    def __post_init__(self):
        if not -1.0 - 1e-12 <= self.ssim <= 1.0 + 1e-12:
            raise ValidationError(f"ssim {self.ssim} outside [-1, 1]")
        if self.lpips is not None and self.lpips < 0:
            raise ValidationError(f"lpips {self.lpips} must be non-negative")


@dataclass(frozen=True)
class HumanRating:
    """One rater's five Likert scores for a (triplet, method) item."""

    triplet_id: str
    method_id: str
    rater_id: str
    scores: tuple[int, int, int, int, int]
    timestamp: str  # ISO-8601, UTC

    def __post_init__(self):
        if len(self.scores) != 5:
            raise ValidationError("exactly five scores required")
        for s in self.scores:
            if not isinstance(s, int) or isinstance(s, bool) or not 1 <= s <= 5:
                raise ValidationError(f"score {s!r} must be an integer in 1..5")
        object.__setattr__(self, "scores", tuple(int(s) for s in self.scores))
        try:
            datetime.fromisoformat(self.timestamp)
        except ValueError as exc:
            raise ValidationError(f"bad timestamp {self.timestamp!r}") from exc


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class MethodAggregate:
    """Per-method summary row: the input of the correlation meta-evaluation.

    Every mean is a plain float or None when that metric was never computed
    for the method. Counter fields record exclusions so that missing data
    is visible instead of silently biasing means.
    """

    method_id: str
    sample_count: int = 0
    vlm: dict = field(default_factory=dict)        # s_bg..s_real, s_avg -> mean
    vlm_scored: int = 0
    vlm_failed: int = 0
    s_global: float | None = None
    s_rep: list = field(default_factory=list)      # per-level mean or None
    s_rep_excluded: list = field(default_factory=list)  # per-level exclusion count
    s_rep_mean: float | None = None
    s_overall: float | None = None
    rep_pairs: int = 0
    rep_excluded_pairs: int = 0
    psnr: float | None = None                      # mean over finite pairs
    psnr_inf_count: int = 0
    ssim: float | None = None
    lpips: float | None = None
    fid: float | None = None
    human: dict = field(default_factory=dict)      # s_bg..s_real, s_avg -> mean
    human_items: int = 0
    human_incomplete: int = 0

    def metric_value(self, name: str) -> float | None:
        """Column lookup used by the meta-evaluation and the report tables."""
        if name in ("s_avg",) + SCORE_DIMS:
            return self.vlm.get(name)
        if name.startswith("human_"):
            return self.human.get(name[len("human_"):])
        if name.startswith("s_rep_") and name[len("s_rep_"):].isdigit():
            k = int(name[len("s_rep_"):])
            return self.s_rep[k] if k < len(self.s_rep) else None
        plain = {
            "s_global": self.s_global,
            "s_rep_mean": self.s_rep_mean,
            "s_overall": self.s_overall,
            "psnr": self.psnr,
            "ssim": self.ssim,
            "lpips": self.lpips,
            "fid": self.fid,
        }
        if name in plain:
            return plain[name]
        raise KeyError(name)


@dataclass(frozen=True)
class CorrelationEntry:
    rho_s: float
    rho_k: float
    rho_p: float

    def __post_init__(self):
        for value in (self.rho_s, self.rho_k, self.rho_p):
            if not -1.0 - 1e-12 <= value <= 1.0 + 1e-12:
                raise ValidationError(f"correlation {value} outside [-1, 1]")


@dataclass(frozen=True)
class CorrelationReport:
    """Correlations of each metric column against one human column."""

    human_column: str
    level: str                     # "method" or "sample"
    n: int
    entries: dict                  # metric name -> CorrelationEntry
    skipped: dict = field(default_factory=dict)  # metric name -> reason
