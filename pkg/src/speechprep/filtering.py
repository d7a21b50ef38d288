"""Gate segments on language, quality score, and character-rate outliers.

Three gates run in order: language identity/confidence, quality score,
then a per-source rejection of segments whose average character duration
falls outside the Tukey fences (quartiles +/- multiplier * IQR) computed
over that source's surviving segments. Sources are filtered independently
of one another, so the stage parallelizes trivially.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

from .errors import EmptyInput, EmptyTranscript

DEFAULT_LANGUAGES = frozenset({"en", "zh", "de", "fr", "ja", "ko"})


@dataclass(frozen=True)
class AsrResult:
    """Transcription plus language identification for one segment."""

    transcript: str
    language: str
    language_confidence: float

    def __post_init__(self):
        if not (0.0 <= self.language_confidence <= 1.0):
            raise ValueError(f"confidence {self.language_confidence} outside [0, 1]")


@dataclass(frozen=True)
class QualityScore:
    """Non-intrusive overall-quality estimate, nominally 1..5."""

    value: float


@dataclass(frozen=True)
class QuartileSummary:
    q1: float
    q3: float
    iqr: float
    lower_fence: float
    upper_fence: float


@dataclass(frozen=True)
class FilterPolicy:
    """Thresholds for the three gates. Language codes compare lowercased."""

    allowed_languages: frozenset[str] = DEFAULT_LANGUAGES
    min_language_confidence: float = 0.80
    min_quality: float = 3.0
    iqr_multiplier: float = 1.5
    min_segments_for_iqr: int = 4

    def __post_init__(self):
        if self.iqr_multiplier <= 0.0:
            raise ValueError(f"iqr_multiplier must be > 0, got {self.iqr_multiplier}")
        object.__setattr__(
            self,
            "allowed_languages",
            frozenset(lang.lower() for lang in self.allowed_languages),
        )


@dataclass(frozen=True)
class Rejection:
    """Why a gate dropped a segment."""

    reason: str
    value: float | str
    threshold: float | str


@dataclass(frozen=True)
class FilterCandidate:
    """A segment as the filter stage sees it."""

    segment_id: str
    source_id: str
    duration_s: float
    asr: AsrResult
    quality: QualityScore


@dataclass(frozen=True)
class DropRecord:
    """One drop-ledger entry."""

    segment_id: str
    stage: str
    reason: str
    value: float | str
    threshold: float | str


def language_gate(r: AsrResult, p: FilterPolicy) -> Rejection | None:
    """Keep iff the language is allowed and confidence >= the floor."""
    lang = r.language.lower()
    if lang not in p.allowed_languages:
        return Rejection("language", lang, ",".join(sorted(p.allowed_languages)))
    if r.language_confidence < p.min_language_confidence:
        return Rejection("confidence", r.language_confidence, p.min_language_confidence)
    return None


def quality_gate(s: QualityScore, p: FilterPolicy) -> Rejection | None:
    """Keep iff the score meets the floor (inclusive)."""
    if s.value < p.min_quality:
        return Rejection("quality", s.value, p.min_quality)
    return None


def non_whitespace_chars(text: str) -> int:
    return sum(1 for ch in text if not ch.isspace())


def avg_char_duration(
    duration_s: float,
    transcript: str,
    char_count: Callable[[str], int] = non_whitespace_chars,
) -> float:
    """Seconds per transcript character.

    ``char_count`` is a hook for swapping in a phone counter; the default
    counts non-whitespace characters, which needs no language model.
    """
    n = char_count(transcript)
    if n == 0:
        raise EmptyTranscript("transcript has no countable characters")
    return duration_s / n


def quartiles(values: Sequence[float], multiplier: float = 1.5) -> QuartileSummary:
    """Q1/Q3 by linear interpolation between order statistics (type 7)."""
    if len(values) == 0:
        raise EmptyInput("quartiles of an empty list")
    v = sorted(values)

    def at(q: float) -> float:
        pos = (len(v) - 1) * q
        lo = int(pos)
        frac = pos - lo
        if frac == 0.0:
            return v[lo]
        return v[lo] + frac * (v[lo + 1] - v[lo])

    q1, q3 = at(0.25), at(0.75)
    iqr = q3 - q1
    return QuartileSummary(q1, q3, iqr, q1 - multiplier * iqr, q3 + multiplier * iqr)


def iqr_outlier_gate(
    values: Sequence[float], p: FilterPolicy
) -> list[Rejection | None]:
    """Flag values strictly outside the fences of their own distribution.

    Fences are meaningless for tiny samples, so sources with fewer than
    ``min_segments_for_iqr`` values keep everything.
    """
    if len(values) < p.min_segments_for_iqr:
        return [None] * len(values)
    fences = quartiles(values, p.iqr_multiplier)
    out: list[Rejection | None] = []
    for x in values:
        if x < fences.lower_fence:
            out.append(Rejection("char_duration_outlier", x, fences.lower_fence))
        elif x > fences.upper_fence:
            out.append(Rejection("char_duration_outlier", x, fences.upper_fence))
        else:
            out.append(None)
    return out


def filter_stage(
    segments: Sequence[FilterCandidate], policy: FilterPolicy = FilterPolicy()
) -> tuple[list[FilterCandidate], list[DropRecord]]:
    """Run all three gates; every input ends up kept or in the drop ledger.

    The IQR gate sees only the segments that survived the first two gates,
    grouped by source.
    """
    kept: list[FilterCandidate] = []
    drops: list[DropRecord] = []
    survivors: list[FilterCandidate] = []

    for seg in segments:
        rej = language_gate(seg.asr, policy) or quality_gate(seg.quality, policy)
        if rej is None and non_whitespace_chars(seg.asr.transcript) == 0:
            # Should have been dropped at the ASR hand-off; be safe here.
            rej = Rejection("empty_transcript", "", "")
        if rej is None:
            survivors.append(seg)
        else:
            drops.append(
                DropRecord(seg.segment_id, "filter", rej.reason, rej.value, rej.threshold)
            )

    by_source: dict[str, list[FilterCandidate]] = {}
    for seg in survivors:
        by_source.setdefault(seg.source_id, []).append(seg)

    dropped_ids: dict[str, DropRecord] = {}
    for source_id, segs in by_source.items():
        values = [avg_char_duration(s.duration_s, s.asr.transcript) for s in segs]
        for seg, rej in zip(segs, iqr_outlier_gate(values, policy)):
            if rej is not None:
                dropped_ids[seg.segment_id] = DropRecord(
                    seg.segment_id, "filter", rej.reason, rej.value, rej.threshold
                )

    for seg in survivors:
        if seg.segment_id in dropped_ids:
            drops.append(dropped_ids[seg.segment_id])
        else:
            kept.append(seg)
    return kept, drops
