"""Wire protocol shared by the engine and stage workers.

One UTF-8 JSON object per line. Requests carry a per-connection
monotonically increasing integer ``id`` and an ``op``; responses echo the
``id`` and carry ``status`` ("ok" or "error", with ``error_detail`` text on
error) plus op-specific result fields. ``hello`` must precede every other
op. Audio never travels inline: requests reference WAV files inside a
run-scoped exchange directory.

Everything arriving from a worker is untrusted: every decode and shape
check in this module raises :class:`ProtocolViolation` rather than letting
a malformed record crash the engine.
"""

from __future__ import annotations

import json
import math
from typing import Any

from ..errors import ProtocolViolation
from ..segmenter import SpeakerTurn, VadChunk

PROTOCOL_VERSION = 1

OPS = frozenset(
    {"hello", "separate", "diarize", "vad", "transcribe_batch", "score_batch"}
)

STAGES = frozenset({"separation", "diarization", "vad", "transcription", "scoring"})

# Slack for float round-trips when checking times against the clip duration.
TIME_EPS = 1e-6


def encode_record(record: dict[str, Any]) -> bytes:
    """Serialize one message to its on-wire form (sorted keys, one line)."""
    text = json.dumps(
        record, ensure_ascii=False, sort_keys=True, separators=(",", ":"), allow_nan=False
    )
    return text.encode("utf-8") + b"\n"


def decode_record(line: bytes | str) -> dict[str, Any]:
    """Parse one wire line into a message dict.

    Raises ProtocolViolation for anything that is not a single JSON object:
    bad UTF-8, unparseable text, scalars, arrays, or pathological nesting.
    """
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolViolation(f"record is not valid UTF-8: {exc}") from exc
    try:
        record = json.loads(line)
    except (ValueError, RecursionError) as exc:
        raise ProtocolViolation(f"record is not valid JSON: {exc}") from exc
    if not isinstance(record, dict):
        raise ProtocolViolation(
            f"record must be a JSON object, got {type(record).__name__}"
        )
    return record


def _require(record: dict[str, Any], key: str) -> Any:
    if key not in record:
        raise ProtocolViolation(f"record is missing required field {key!r}")
    return record[key]


def _as_int(value: Any, label: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ProtocolViolation(f"{label} must be an integer, got {value!r}")
    return value


def _as_finite(value: Any, label: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ProtocolViolation(f"{label} must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ProtocolViolation(f"{label} must be finite, got {value!r}")
    return value


def _as_str(value: Any, label: str) -> str:
    if not isinstance(value, str):
        raise ProtocolViolation(f"{label} must be a string, got {value!r}")
    return value


def _as_list(value: Any, label: str) -> list:
    if not isinstance(value, list):
        raise ProtocolViolation(f"{label} must be a list, got {type(value).__name__}")
    return value


def _as_dict(value: Any, label: str) -> dict:
    if not isinstance(value, dict):
        raise ProtocolViolation(f"{label} must be an object, got {type(value).__name__}")
    return value


class WorkerReportedError(Exception):
    """A well-formed error response; the transport maps it onto the taxonomy."""


def check_response(record: dict[str, Any], expected_id: int) -> dict[str, Any]:
    """Validate the response envelope: id echo and status.

    Returns the record if status is ok; raises WorkerReportedError carrying
    the worker's error_detail if status is error.
    """
    got_id = _as_int(_require(record, "id"), "id")
    if got_id != expected_id:
        raise ProtocolViolation(f"response id {got_id} does not match request id {expected_id}")
    status = _as_str(_require(record, "status"), "status")
    if status == "ok":
        return record
    if status == "error":
        detail = _as_str(_require(record, "error_detail"), "error_detail")
        raise WorkerReportedError(detail)
    raise ProtocolViolation(f"status must be 'ok' or 'error', got {status!r}")


def parse_hello(record: dict[str, Any]) -> tuple[str, int, int, list[str]]:
    """Extract (stage, version, max_batch, languages) from a hello response."""
    stage = _as_str(_require(record, "stage"), "stage")
    version = _as_int(_require(record, "version"), "version")
    caps = _as_dict(_require(record, "capabilities"), "capabilities")
    max_batch = _as_int(_require(caps, "max_batch"), "capabilities.max_batch")
    if max_batch < 1:
        raise ProtocolViolation(f"capabilities.max_batch must be >= 1, got {max_batch}")
    languages = [
        _as_str(x, "capabilities.languages[]")
        for x in _as_list(caps.get("languages", []), "capabilities.languages")
    ]
    return stage, version, max_batch, languages


def parse_audio_path(record: dict[str, Any]) -> str:
    return _as_str(_require(record, "audio_path"), "audio_path")


def parse_turns(record: dict[str, Any], duration_s: float) -> list[SpeakerTurn]:
    """Validate a diarize response: sorted turns within [0, duration]."""
    turns: list[SpeakerTurn] = []
    prev_start = -math.inf
    for i, entry in enumerate(_as_list(_require(record, "turns"), "turns")):
        entry = _as_dict(entry, f"turns[{i}]")
        start = _as_finite(_require(entry, "start_s"), f"turns[{i}].start_s")
        end = _as_finite(_require(entry, "end_s"), f"turns[{i}].end_s")
        speaker = _as_str(_require(entry, "speaker"), f"turns[{i}].speaker")
        if not speaker:
            raise ProtocolViolation(f"turns[{i}].speaker is empty")
        if start < -TIME_EPS or end > duration_s + TIME_EPS or start >= end:
            raise ProtocolViolation(
                f"turns[{i}] [{start}, {end}] outside [0, {duration_s:.6f}] or empty"
            )
        if start < prev_start:
            raise ProtocolViolation(f"turns[{i}] not sorted by start time")
        prev_start = start
        turns.append(SpeakerTurn(max(start, 0.0), min(end, duration_s), speaker))
    return turns


def parse_chunks(record: dict[str, Any], duration_s: float) -> list[VadChunk]:
    """Validate a vad response: sorted, non-overlapping, within [0, duration]."""
    chunks: list[VadChunk] = []
    prev_end = 0.0
    for i, entry in enumerate(_as_list(_require(record, "chunks"), "chunks")):
        entry = _as_dict(entry, f"chunks[{i}]")
        start = _as_finite(_require(entry, "start_s"), f"chunks[{i}].start_s")
        end = _as_finite(_require(entry, "end_s"), f"chunks[{i}].end_s")
        if start < -TIME_EPS or end > duration_s + TIME_EPS or start >= end:
            raise ProtocolViolation(
                f"chunks[{i}] [{start}, {end}] outside [0, {duration_s:.6f}] or empty"
            )
        if start < prev_end - TIME_EPS:
            raise ProtocolViolation(f"chunks[{i}] overlaps or precedes chunk {i - 1}")
        prev_end = end
        chunks.append(VadChunk(max(start, 0.0), min(end, duration_s)))
    return chunks


def parse_batch_results(
    record: dict[str, Any], expected_ids: list[str], kind: str
) -> list[dict[str, Any]]:
    """Validate a batch response: one result per input, order-aligned.

    Each result either carries the payload fields for ``kind`` or an
    ``error`` marker string; the caller decides how to surface partial
    failures.
    """
    results = _as_list(_require(record, "results"), "results")
    if len(results) != len(expected_ids):
        raise ProtocolViolation(
            f"expected {len(expected_ids)} results, got {len(results)}"
        )
    out: list[dict[str, Any]] = []
    for i, (entry, expected) in enumerate(zip(results, expected_ids)):
        entry = _as_dict(entry, f"results[{i}]")
        seg = _as_str(_require(entry, "segment_id"), f"results[{i}].segment_id")
        if seg != expected:
            raise ProtocolViolation(
                f"results[{i}].segment_id {seg!r} does not match request {expected!r}"
            )
        if "error" in entry:
            out.append({"segment_id": seg, "error": _as_str(entry["error"], f"results[{i}].error")})
            continue
        if kind == "asr":
            out.append(
                {
                    "segment_id": seg,
                    "transcript": _as_str(_require(entry, "transcript"), f"results[{i}].transcript"),
                    "language": _as_str(_require(entry, "language"), f"results[{i}].language"),
                    "language_confidence": _check_confidence(
                        _as_finite(
                            _require(entry, "language_confidence"),
                            f"results[{i}].language_confidence",
                        ),
                        i,
                    ),
                }
            )
        elif kind == "score":
            out.append(
                {
                    "segment_id": seg,
                    "score": _as_finite(_require(entry, "score"), f"results[{i}].score"),
                }
            )
        else:  # pragma: no cover - internal misuse
            raise ValueError(f"unknown batch kind {kind!r}")
    return out


def _check_confidence(value: float, i: int) -> float:
    if not (0.0 <= value <= 1.0):
        raise ProtocolViolation(f"results[{i}].language_confidence {value} outside [0, 1]")
    return value
