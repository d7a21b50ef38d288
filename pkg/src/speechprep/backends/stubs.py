"""Deterministic built-in stage engines.

These let the full pipeline run and be tested with no external models:
separation is a passthrough, diarization and transcription replay sidecar
fixture files (with graceful fallbacks), VAD is a plain energy detector,
and scoring is a fixed function of signal level. Identical inputs yield
identical outputs on every run and platform.

Sidecar conventions (JSON next to the source file):
  <source stem>.turns.json        [{"start_s", "end_s", "speaker"}, ...]
  <source stem>.transcripts.json  [{"start_s", "end_s", "text", "language",
                                    "confidence"}, ...]
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..audio import AudioBuffer
from ..filtering import AsrResult, QualityScore
from ..segmenter import SpeakerTurn, VadChunk

FALLBACK_SPEAKER = "S0"


def separate_passthrough(buf: AudioBuffer) -> AudioBuffer:
    """Identity separation: pretend the input is already a clean vocal stem."""
    return buf


def turns_sidecar_path(source_path: Path) -> Path:
    return source_path.with_suffix(".turns.json")


def transcripts_sidecar_path(source_path: Path) -> Path:
    return source_path.with_suffix(".transcripts.json")


def diarize_sidecar(buf: AudioBuffer, source_path: Path) -> list[SpeakerTurn]:
    """Replay the fixture's turn list; without one, a single full-length turn."""
    sidecar = turns_sidecar_path(source_path)
    duration = buf.duration_s
    if not sidecar.exists():
        if duration <= 0.0:
            return []
        return [SpeakerTurn(0.0, duration, FALLBACK_SPEAKER)]
    entries = json.loads(sidecar.read_text(encoding="utf-8"))
    turns = [
        SpeakerTurn(
            float(e["start_s"]), min(float(e["end_s"]), duration), str(e["speaker"])
        )
        for e in entries
    ]
    return sorted(turns)


@dataclass(frozen=True)
class EnergyVadParams:
    """Frame rule for the built-in energy detector."""

    frame_ms: int = 30
    hop_ms: int = 10
    threshold_dbfs: float = -40.0
    hangover_ms: int = 300

    def __post_init__(self):
        if self.frame_ms <= 0 or self.hop_ms <= 0:
            raise ValueError("frame_ms and hop_ms must be positive")
        if self.hangover_ms < 0:
            raise ValueError("hangover_ms must be >= 0")


def detect_voiced(buf: AudioBuffer, params: EnergyVadParams = EnergyVadParams()) -> list[VadChunk]:
    """Energy VAD: a frame is voiced iff its RMS exceeds the threshold.

    Frames of ``frame_ms`` advance by ``hop_ms``; voiced frames closer than
    ``hangover_ms`` apart belong to one chunk. A chunk spans from the start
    of its first voiced frame to the end of its last one.
    """
    x = np.asarray(buf.samples, dtype=np.float64)
    n = x.shape[0]
    if n == 0:
        return []
    rate = buf.sample_rate
    frame = max(1, round(rate * params.frame_ms / 1000))
    hop = max(1, round(rate * params.hop_ms / 1000))

    if n < frame:
        starts = np.array([0], dtype=np.int64)
        frame = n
    else:
        starts = np.arange(0, n - frame + 1, hop, dtype=np.int64)

    csum = np.concatenate(([0.0], np.cumsum(x * x)))
    energy = (csum[starts + frame] - csum[starts]) / frame
    threshold_energy = 10.0 ** (params.threshold_dbfs / 10.0)
    voiced = np.flatnonzero(energy > threshold_energy)
    if voiced.size == 0:
        return []

    max_gap_hops = params.hangover_ms // params.hop_ms
    chunks: list[VadChunk] = []
    run_first = run_last = int(voiced[0])
    for k in voiced[1:]:
        k = int(k)
        if k - run_last > max_gap_hops:
            chunks.append(_frame_span(run_first, run_last, starts, frame, rate, n))
            run_first = k
        run_last = k
    chunks.append(_frame_span(run_first, run_last, starts, frame, rate, n))
    return chunks


def _frame_span(
    first: int, last: int, starts: np.ndarray, frame: int, rate: int, n: int
) -> VadChunk:
    start_s = float(starts[first]) / rate
    end_s = min(float(starts[last]) + frame, n) / rate
    return VadChunk(start_s, end_s)


def transcribe_sidecar(
    source_path: Path, spans: list[tuple[float, float]]
) -> list[AsrResult]:
    """Replay fixture transcripts for each requested span.

    A sidecar entry belongs to a span when the entry's midpoint falls inside
    it; a span's transcript is its entries' texts joined in time order. With
    no sidecar or no matching entries the transcript is empty (the pipeline
    drops such segments downstream).
    """
    sidecar = transcripts_sidecar_path(source_path)
    entries: list[dict] = []
    if sidecar.exists():
        entries = json.loads(sidecar.read_text(encoding="utf-8"))
        entries.sort(key=lambda e: float(e["start_s"]))

    results: list[AsrResult] = []
    for start_s, end_s in spans:
        hits = [
            e
            for e in entries
            if start_s <= (float(e["start_s"]) + float(e["end_s"])) / 2.0 < end_s
        ]
        if not hits:
            results.append(AsrResult("", "und", 0.0))
            continue
        text = " ".join(str(e["text"]) for e in hits)
        language = str(hits[0].get("language", "en"))
        confidence = min(float(e.get("confidence", 1.0)) for e in hits)
        results.append(AsrResult(text, language, confidence))
    return results


def score_signal(buf: AudioBuffer) -> QualityScore:
    """Synthetic quality score: 3.8 + dBFS/20, clamped to [1, 5].

    Digital silence has no level, which clamps to the floor score of 1.0.
    """
    x = np.asarray(buf.samples, dtype=np.float64)
    rms = float(np.sqrt(np.mean(x * x))) if x.size else 0.0
    if rms <= 0.0:
        return QualityScore(1.0)
    dbfs = 20.0 * math.log10(rms)
    return QualityScore(min(5.0, max(1.0, 3.8 + dbfs / 20.0)))
