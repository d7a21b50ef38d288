"""Worker-side codec for the pipeline's line-delimited JSON protocol.

The full wire contract lives in PROTOCOL.md at the repository root; this
module implements the half a worker needs: decode one request line
defensively, encode one response line canonically. A request that cannot
be decoded at all is answered with id 0, so the helpers here never raise
past the serve loop.
"""

from __future__ import annotations

import json
from typing import Any

PROTOCOL_VERSION = 1

# Each stage serves exactly one op (plus the hello handshake).
STAGE_OPS = {
    "separation": "separate",
    "diarization": "diarize",
    "vad": "vad",
    "transcription": "transcribe_batch",
    "scoring": "score_batch",
}


class RequestUndecodable(ValueError):
    """The line is not a JSON object; the worker must answer with id 0."""


def decode_request(line: bytes) -> dict[str, Any]:
    try:
        record = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, ValueError, RecursionError) as exc:
        raise RequestUndecodable(f"undecodable request: {exc}") from None
    if not isinstance(record, dict):
        raise RequestUndecodable(
            f"request must be an object, got {type(record).__name__}"
        )
    return record


def request_id(record: dict[str, Any]) -> int | None:
    """The request's id, or None when absent or not a plain int."""
    rid = record.get("id")
    if isinstance(rid, bool) or not isinstance(rid, int):
        return None
    return rid


def encode_response(record: dict[str, Any]) -> bytes:
    text = json.dumps(
        record, sort_keys=True, separators=(",", ":"), allow_nan=False,
        ensure_ascii=False,
    )
    return text.encode("utf-8") + b"\n"


def ok(rid: int, **fields: Any) -> dict[str, Any]:
    return {"id": rid, "status": "ok", **fields}


def error(rid: int, detail: str) -> dict[str, Any]:
    return {"id": rid, "status": "error", "error_detail": detail}
