"""Versioned prompt assets for judging, captioning, and garment classification.

The texts ship as fixed files inside the package so that a run can be
tied to an exact prompt hash; nothing here is assembled at runtime.
"""

from __future__ import annotations

import hashlib
from importlib import resources

PROMPT_VERSION = "v1"

UPPER_BODY = "upper_body"
LOWER_BODY = "lower_body"
CATEGORIES = (UPPER_BODY, LOWER_BODY)

# Rubric headers in prompt order; the parser and the study service
# rely on this ordering.
DIMENSION_HEADERS = (
    "Dimension 1: Background Consistency",
    "Dimension 2: Person Identity & Body Consistency",
    "Dimension 3: Texture Fidelity",
    "Dimension 4: Shape Preservation",
    "Dimension 5: Overall Realism",
)


def _asset(name: str) -> str:
    ref = resources.files("vton_eval.vlm").joinpath("assets", f"{name}_{PROMPT_VERSION}.txt")
    return ref.read_text(encoding="utf-8")


def build_judge_prompt() -> tuple[str, str]:
    """(system_text, user_text) for the five-dimension judge."""
    return _asset("judge_system"), _asset("judge_user")


def build_caption_prompt(category: str) -> tuple[str, str]:
    """(system_text, user_text) for dense captioning of one garment category."""
    if category not in CATEGORIES:
        raise ValueError(f"unknown garment category {category!r}")
    suffix = "upper" if category == UPPER_BODY else "lower"
    return _asset(f"caption_system_{suffix}"), _asset(f"caption_user_{suffix}")


def classify_garment_prompt() -> str:
    """Coarse upper/lower classification; dresses map to upper-body."""
    return _asset("classify")


def prompt_asset_hash() -> str:
    """SHA-256 over every shipped prompt, stable across runs."""
    digest = hashlib.sha256()
    for name in ("judge_system", "judge_user", "caption_system_upper",
                 "caption_user_upper", "caption_system_lower",
                 "caption_user_lower", "classify"):
        digest.update(name.encode("utf-8"))
        digest.update(b"\x00")
        digest.update(_asset(name).encode("utf-8"))
        digest.update(b"\x00")
    return digest.hexdigest()
