"""VLM judge and captioning over a chat-completions style HTTP API.

The transport is a plain callable (payload dict -> response dict) so
tests can swap in fakes; the default transport wraps `requests`. Raw
request/response attempts are archived append-only for auditability.
"""

from __future__ import annotations

import base64
import hashlib
import json
import mimetypes
import os
import re
import threading
import time
from dataclasses import dataclass

import requests

from ..core import VlmScoreVector, utc_now_iso
from . import prompts

API_KEY_ENV = "VTON_EVAL_API_KEY"
MAX_ATTEMPTS = 3
DEFAULT_IN_FLIGHT = 4

SCORE_FIELDS = (
    ("background_consistency", "s_bg"),
    ("person_consistency", "s_id"),
    ("texture_fidelity", "s_tex"),
    ("shape_preservation", "s_shape"),
    ("overall_realism", "s_real"),
)
REASONING_FIELDS = ("background_analysis", "person_analysis",
                    "garment_analysis", "realism_analysis")

_FENCE_RE = re.compile(r"^```[a-zA-Z0-9_-]*\s*|\s*```$")


class VlmError(Exception):
    pass


class TransportError(VlmError):
    """Network-level failure; retried with backoff."""


class AuthError(VlmError):
    """Credential rejected; not retried."""


class JudgeParseError(VlmError):
    """Base of the three distinguishable parse failures."""


class MalformedResponseError(JudgeParseError):
    pass


class MissingFieldError(JudgeParseError):
    pass


class ScoreOutOfRangeError(JudgeParseError):
    pass


@dataclass(frozen=True)
class JudgeRequest:
    """Inputs for one judge call; attachment order is fixed by the prompt."""

    triplet_id: str
    method_id: str
    garment_image: str
    ground_truth_image: str
    generated_image: str


@dataclass(frozen=True)
class CaptionRequest:
    garment_image: str
    category: str  # upper_body | lower_body


@dataclass(frozen=True)
class JudgeOutcome:
    triplet_id: str
    method_id: str
    vector: VlmScoreVector | None
    attempts: int
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.vector is not None


def _extract_json_object(text: str) -> dict:
    stripped = _FENCE_RE.sub("", (text or "").strip()).strip()
    candidates = [stripped]
    start = stripped.find("{")
    end = stripped.rfind("}")
    if start != -1 and end > start:
        candidates.append(stripped[start:end + 1])
    for candidate in candidates:
        try:
            obj = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    raise MalformedResponseError("no JSON object found in response")


def _require_number(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MalformedResponseError(f"{name} is not a number: {value!r}")
    return float(value)


def parse_judge_response(text: str) -> VlmScoreVector:
    """Strict parse of the judge's JSON reply.

    Code fences and stray prose around the object are tolerated; missing
    fields, non-numeric scores and out-of-range values raise distinct
    error types so retries can be accounted per failure kind.
    """
    obj = _extract_json_object(text)
    if "reasoning" not in obj:
        raise MissingFieldError("missing 'reasoning'")
    if "scores" not in obj:
        raise MissingFieldError("missing 'scores'")
    if "final_weighted_score" not in obj:
        raise MissingFieldError("missing 'final_weighted_score'")
    reasoning_obj = obj["reasoning"]
    scores_obj = obj["scores"]
    if not isinstance(reasoning_obj, dict) or not isinstance(scores_obj, dict):
        raise MalformedResponseError("'reasoning' and 'scores' must be objects")
    reasoning = []
    for field in REASONING_FIELDS:
        if field not in reasoning_obj:
            raise MissingFieldError(f"missing reasoning field {field!r}")
        reasoning.append(str(reasoning_obj[field]))
    values = {}
    for field, attr in SCORE_FIELDS:
        if field not in scores_obj:
            raise MissingFieldError(f"missing score field {field!r}")
        value = _require_number(scores_obj[field], field)
        if not 1.0 <= value <= 5.0:
            raise ScoreOutOfRangeError(f"{field} = {value} outside [1, 5]")
        values[attr] = value
    final = _require_number(obj["final_weighted_score"], "final_weighted_score")
    if not 1.0 <= final <= 5.0:
        raise ScoreOutOfRangeError(f"final_weighted_score = {final} outside [1, 5]")
    return VlmScoreVector.from_scores(reasoning=tuple(reasoning), vlm_final=final,
                                      **values)


def _data_url(path: str) -> str:
    mime = mimetypes.guess_type(str(path))[0] or "image/png"
    with open(path, "rb") as fh:
        encoded = base64.b64encode(fh.read()).decode("ascii")
    return f"data:{mime};base64,{encoded}"


def build_judge_payload(req: JudgeRequest, model: str) -> dict:
    """Chat payload with images attached as (garment, ground truth, generated)."""
    system_text, user_text = prompts.build_judge_prompt()
    content = [{"type": "text", "text": user_text}]
    for label, path in (("[Garment Image]", req.garment_image),
                        ("[Ground Truth Image]", req.ground_truth_image),
                        ("[Generated Image]", req.generated_image)):
        content.append({"type": "text", "text": label})
        content.append({"type": "image_url", "image_url": {"url": _data_url(path)}})
    return {
        "model": model,
        "temperature": 0,
        "messages": [
            {"role": "system", "content": system_text},
            {"role": "user", "content": content},
        ],
    }


def http_transport(endpoint: str, api_key: str | None = None, timeout: float = 120.0):
    """Default transport: POST the payload as JSON, return the decoded body."""
    key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)

    def send(payload: dict) -> dict:
        headers = {"Content-Type": "application/json"}
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = requests.post(endpoint, json=payload, headers=headers, timeout=timeout)
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"endpoint rejected credentials (HTTP {resp.status_code})")
        if resp.status_code != 200:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise TransportError(f"response body is not JSON: {exc}") from exc

    return send


def response_text(response: dict) -> str:
    try:
        return response["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise MalformedResponseError(f"unexpected response envelope: {exc}") from exc


class VlmClient:
    """Judge/caption client with bounded retries and an append-only archive."""

    def __init__(self, transport, model: str, archive_path=None,
                 max_attempts: int = MAX_ATTEMPTS, backoff_s: float = 0.5,
                 sleep=time.sleep):
        self.transport = transport
        self.model = model
        self.archive_path = archive_path
        self.max_attempts = max_attempts
        self.backoff_s = backoff_s
        self._sleep = sleep
        self._archive_lock = threading.Lock()

    def _archive(self, record: dict) -> None:
        if self.archive_path is None:
            return
        line = json.dumps(record, ensure_ascii=False, sort_keys=True)
        with self._archive_lock:
            with open(self.archive_path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def _call(self, payload: dict, meta: dict):
        """One transport+parse attempt loop shared by judge and caption calls."""
        payload_hash = hashlib.sha256(
            json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()
        last_error = None
        for attempt in range(1, self.max_attempts + 1):
            record = dict(meta, attempt=attempt, timestamp=utc_now_iso(),
                          payload_hash=payload_hash)
            try:
                response = self.transport(payload)
                text = response_text(response)
                record.update(status="ok", response=text)
                self._archive(record)
                return text, attempt
            except AuthError:
                record.update(status="auth_error")
                self._archive(record)
                raise
            except (TransportError, MalformedResponseError) as exc:
                last_error = exc
                record.update(status=type(exc).__name__, error=str(exc))
                self._archive(record)
                if attempt < self.max_attempts:
                    self._sleep(self.backoff_s * (2 ** (attempt - 1)))
        raise last_error

    def score_triplet(self, req: JudgeRequest) -> JudgeOutcome:
        """At most max_attempts attempts; exhaustion yields a scored-failure record."""
        payload = build_judge_payload(req, self.model)
        meta = {"kind": "judge", "triplet_id": req.triplet_id, "method_id": req.method_id}
        payload_hash = hashlib.sha256(
            json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()
        last_error = None
        for attempt in range(1, self.max_attempts + 1):
            record = dict(meta, attempt=attempt, timestamp=utc_now_iso(),
                          payload_hash=payload_hash)
            try:
                response = self.transport(payload)
                text = response_text(response)
            except AuthError:
                record.update(status="auth_error")
                self._archive(record)
                raise
            except (TransportError, MalformedResponseError) as exc:
                last_error = exc
                record.update(status=type(exc).__name__, error=str(exc))
                self._archive(record)
                if attempt < self.max_attempts:
                    self._sleep(self.backoff_s * (2 ** (attempt - 1)))
                continue
            try:
                vector = parse_judge_response(text)
            except JudgeParseError as exc:
                last_error = exc
                record.update(status=type(exc).__name__, error=str(exc), response=text)
                self._archive(record)
                if attempt < self.max_attempts:
                    self._sleep(self.backoff_s * (2 ** (attempt - 1)))
                continue
            record.update(status="ok", response=text)
            self._archive(record)
            return JudgeOutcome(req.triplet_id, req.method_id, vector, attempt)
        return JudgeOutcome(req.triplet_id, req.method_id, None, self.max_attempts,
                            error=f"{type(last_error).__name__}: {last_error}")

    def classify_garment(self, image_path_or_array) -> str:
        """upper_body/lower_body decision; dresses count as upper-body."""
        text = self._simple_image_call(prompts.classify_garment_prompt(), None,
                                       image_path_or_array, meta={"kind": "classify"})
        word = text.strip().strip(".").lower()
        if word.startswith("upper"):
            return prompts.UPPER_BODY
        if word.startswith("lower"):
            return prompts.LOWER_BODY
        raise MalformedResponseError(f"expected 'upper' or 'lower', got {text!r}")

    def caption_garment(self, image_path_or_array, category: str) -> str:
        system_text, user_text = prompts.build_caption_prompt(category)
        text = self._simple_image_call(user_text, system_text, image_path_or_array,
                                       meta={"kind": "caption", "category": category})
        caption = text.strip()
        if not caption:
            raise MalformedResponseError("empty caption")
        return caption

    def _simple_image_call(self, user_text, system_text, image, meta) -> str:
        content = [{"type": "text", "text": user_text},
                   {"type": "image_url", "image_url": {"url": _image_ref(image)}}]
        messages = []
        if system_text:
            messages.append({"role": "system", "content": system_text})
        messages.append({"role": "user", "content": content})
        payload = {"model": self.model, "temperature": 0, "messages": messages}
        text, _ = self._call(payload, meta)
        return text


def _image_ref(image) -> str:
    if isinstance(image, (str, os.PathLike)):
        return _data_url(image)
    # In-memory array: PNG-encode on the fly.
    import io

    import numpy as np
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")
