from .client import (
    API_KEY_ENV,
    AuthError,
    CaptionRequest,
    JudgeOutcome,
    JudgeParseError,
    JudgeRequest,
    MalformedResponseError,
    MissingFieldError,
    ScoreOutOfRangeError,
    TransportError,
    VlmClient,
    VlmError,
    build_judge_payload,
    http_transport,
    parse_judge_response,
    response_text,
)
from .prompts import (
    CATEGORIES,
    DIMENSION_HEADERS,
    LOWER_BODY,
    PROMPT_VERSION,
    UPPER_BODY,
    build_caption_prompt,
    build_judge_prompt,
    classify_garment_prompt,
    prompt_asset_hash,
)

__all__ = [
    "API_KEY_ENV", "AuthError", "CaptionRequest", "JudgeOutcome",
    "JudgeParseError", "JudgeRequest", "MalformedResponseError",
    "MissingFieldError", "ScoreOutOfRangeError", "TransportError",
    "VlmClient", "VlmError", "build_judge_payload", "http_transport",
    "parse_judge_response", "response_text",
    "CATEGORIES", "DIMENSION_HEADERS", "LOWER_BODY", "PROMPT_VERSION",
    "UPPER_BODY", "build_caption_prompt", "build_judge_prompt",
    "classify_garment_prompt", "prompt_asset_hash",
]
