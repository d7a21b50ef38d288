"""Persist kept segments as canonical WAVs plus a line-delimited manifest.

One UTF-8 JSON object per line, keys in a fixed order, every float printed
with exactly six decimals. Records round their float fields to six
decimals at construction, which makes write-then-read the identity and
manifest files stable enough to diff byte for byte.
"""

from __future__ import annotations

import json
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import TARGET_SAMPLE_RATE, AudioBuffer, encode_wav
from .errors import InvariantViolation, IoFailure, ParseError, QuantizationOverflow

MANIFEST_NAME = "manifest.jsonl"

DURATION_TOLERANCE = 1e-6
MIN_SEGMENT_S = 3.0
MAX_SEGMENT_S = 30.0

_FLOAT_FIELDS = ("lang_conf", "start", "end", "duration", "quality")
_FIELD_ORDER = (
    "id",
    "wav",
    "text",
    "language",
    "lang_conf",
    "speaker",
    "start",
    "end",
    "duration",
    "quality",
    "source_id",
)


def _r6(x: float) -> float:
    return round(float(x), 6)


@dataclass(frozen=True)
class ManifestRecord:
    """One kept segment: audio location, transcript, and provenance."""

    id: str
    wav: str
    text: str
    language: str
    lang_conf: float
    speaker: str
    start: float
    end: float
    duration: float
    quality: float
    source_id: str


def make_record(
    *,
    id: str,
    wav: str,
    text: str,
    language: str,
    lang_conf: float,
    speaker: str,
    start: float,
    end: float,
    quality: float,
    source_id: str,
) -> ManifestRecord:
    """Build a record with floats pre-rounded to the serialized precision.

    Duration derives from the rounded endpoints, so the stored triple
    satisfies the duration invariant exactly.
    """
    start_r = _r6(start)
    end_r = _r6(end)
    return ManifestRecord(
        id=id,
        wav=wav,
        text=text,
        language=language,
        lang_conf=_r6(lang_conf),
        speaker=speaker,
        start=start_r,
        end=end_r,
        duration=_r6(end_r - start_r),
        quality=_r6(quality),
        source_id=source_id,
    )


def segment_relpath(language: str, source_id: str, index: int) -> str:
    return f"{language}/{source_id}/{index:05d}.wav"


def record_to_line(record: ManifestRecord) -> str:
    parts = []
    for key in _FIELD_ORDER:
        value = getattr(record, key)
        if key in _FLOAT_FIELDS:
            rendered = f"{value:.6f}"
        else:
            rendered = json.dumps(value, ensure_ascii=False)
        parts.append(f'"{key}":{rendered}')
    return "{" + ",".join(parts) + "}"


def line_to_record(line: str, line_no: int) -> ManifestRecord:
    try:
        data = json.loads(line)
    except ValueError as exc:
        raise ParseError(f"bad manifest line: {exc}", line_no) from exc
    if not isinstance(data, dict):
        raise ParseError("manifest line is not an object", line_no)
    missing = [k for k in _FIELD_ORDER if k not in data]
    if missing:
        raise ParseError(f"manifest line is missing fields {missing}", line_no)
    extra = [k for k in data if k not in _FIELD_ORDER]
    if extra:
        raise ParseError(f"manifest line has unknown fields {extra}", line_no)
    kwargs = {}
    for key in _FIELD_ORDER:
        value = data[key]
        if key in _FLOAT_FIELDS:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ParseError(f"field {key!r} must be a number", line_no)
            kwargs[key] = float(value)
        else:
            if not isinstance(value, str):
                raise ParseError(f"field {key!r} must be a string", line_no)
            kwargs[key] = value
    return ManifestRecord(**kwargs)


def check_record(
    record: ManifestRecord, base_dir: Path | None = None
) -> list[str]:
    """Return this record's invariant violations (empty when clean)."""
    problems: list[str] = []
    if abs(record.duration - (record.end - record.start)) > DURATION_TOLERANCE:
        problems.append(
            f"{record.id}: duration {record.duration:.6f} != end - start "
            f"{record.end - record.start:.6f}"
        )
    if not (MIN_SEGMENT_S <= record.duration <= MAX_SEGMENT_S):
        problems.append(
            f"{record.id}: duration {record.duration:.6f} outside "
            f"[{MIN_SEGMENT_S}, {MAX_SEGMENT_S}]"
        )
    if not (0.0 <= record.lang_conf <= 1.0):
        problems.append(f"{record.id}: lang_conf {record.lang_conf} outside [0, 1]")
    if base_dir is not None:
        wav_path = base_dir / record.wav
        if not wav_path.exists():
            problems.append(f"{record.id}: audio file {record.wav} is missing")
        else:
            try:
                with wave.open(str(wav_path), "rb") as wav:
                    channels = wav.getnchannels()
                    rate = wav.getframerate()
            except (OSError, wave.Error) as exc:
                problems.append(f"{record.id}: audio file {record.wav} unreadable: {exc}")
            else:
                if channels != 1:
                    problems.append(f"{record.id}: {record.wav} has {channels} channels, want 1")
                if rate != TARGET_SAMPLE_RATE:
                    problems.append(
                        f"{record.id}: {record.wav} is {rate} Hz, want {TARGET_SAMPLE_RATE}"
                    )
    return problems


def write_manifest(records: list[ManifestRecord], path: Path) -> None:
    """Write all records in canonical (id) order."""
    ordered = sorted(records, key=lambda r: r.id)
    try:
        with path.open("w", encoding="utf-8") as fh:
            for record in ordered:
                fh.write(record_to_line(record) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write manifest {path}: {exc}") from exc


def read_manifest(path: Path, base_dir: Path | None = None) -> list[ManifestRecord]:
    """Load a manifest, raising on the first bad or invariant-breaking line."""
    records: list[ManifestRecord] = []
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoFailure(f"cannot read manifest {path}: {exc}") from exc
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        record = line_to_record(line, line_no)
        problems = check_record(record, base_dir)
        if problems:
            raise InvariantViolation("; ".join(problems), line_no)
        records.append(record)
    return records


def collect_violations(path: Path, base_dir: Path | None = None) -> list[tuple[int, str]]:
    """Validate every line, returning (line number, problem) pairs."""
    violations: list[tuple[int, str]] = []
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        return [(0, f"cannot read manifest {path}: {exc}")]
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = line_to_record(line, line_no)
        except ParseError as exc:
            violations.append((line_no, exc.args[0]))
            continue
        for problem in check_record(record, base_dir):
            violations.append((line_no, problem))
    return violations


def write_segment(buffer: AudioBuffer, record: ManifestRecord, out_root: Path) -> Path:
    """Write one kept segment's WAV under the output root.

    The pipeline normalizes peaks to at most 1.0 before this point, so
    quantization cannot overflow; a hotter buffer is a bug upstream.
    """
    peak = float(np.max(np.abs(buffer.samples))) if buffer.frame_count else 0.0
    if peak > 1.0 + 1e-9:
        raise QuantizationOverflow(f"{record.id}: peak {peak} exceeds full scale")
    wav_path = out_root / record.wav
    try:
        wav_path.parent.mkdir(parents=True, exist_ok=True)
        wav_path.write_bytes(encode_wav(buffer))
    except OSError as exc:
        raise IoFailure(f"cannot write segment {wav_path}: {exc}") from exc
    return wav_path
