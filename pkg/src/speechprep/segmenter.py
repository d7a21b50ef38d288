"""Turn diarization annotations plus voiced chunks into bounded clips.

Coarse step: speaker turns are resolved so no output interval contains two
speakers (overlaps are excised, close same-speaker turns merge). Fine step:
voiced chunks inside each turn are greedily stitched into spans of
``min_s``..``max_s`` seconds. Spans are contiguous windows, not spliced
audio: short silences between chunks stay inside a span.

Everything here is a pure function of its arguments.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass


@dataclass(frozen=True, order=True)
class SpeakerTurn:
    """A diarization interval attributed to one speaker."""

    start_s: float
    end_s: float
    speaker_label: str

    def __post_init__(self):
        if not (0.0 <= self.start_s < self.end_s):
            raise ValueError(f"bad turn interval [{self.start_s}, {self.end_s}]")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True, order=True)
class VadChunk:
    """A voiced time interval."""

    start_s: float
    end_s: float

    def __post_init__(self):
        if not self.start_s < self.end_s:
            raise ValueError(f"bad chunk interval [{self.start_s}, {self.end_s}]")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class SegmentSpan:
    """An output clip: one speaker, duration within the stitch bounds."""

    source_id: str
    speaker_label: str
    start_s: float
    end_s: float

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class StitchPolicy:
    """Bounds for stitching voiced chunks into spans."""

    min_s: float = 3.0
    max_s: float = 30.0
    max_gap_s: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.min_s < self.max_s):
            raise ValueError(f"need 0 < min_s < max_s, got {self.min_s}, {self.max_s}")
        if self.max_gap_s < 0.0:
            raise ValueError(f"max_gap_s must be >= 0, got {self.max_gap_s}")


def resolve_turns(
    turns: list[SpeakerTurn], max_gap_s: float = 1.0
) -> list[SpeakerTurn]:
    """Make turns single-speaker and non-overlapping.

    Same-speaker turns separated by less than ``max_gap_s`` merge first;
    then every region covered by two or more speakers is excised from all
    turns. Merging before excision guarantees the output never overlaps
    and never bridges a region where a second speaker was active.
    """
    if not turns:
        return []

    by_speaker: dict[str, list[SpeakerTurn]] = {}
    for t in sorted(turns):
        by_speaker.setdefault(t.speaker_label, []).append(t)

    merged: list[SpeakerTurn] = []
    for label, ts in by_speaker.items():
        cur_start, cur_end = ts[0].start_s, ts[0].end_s
        for t in ts[1:]:
            if t.start_s - cur_end < max_gap_s:
                cur_end = max(cur_end, t.end_s)
            else:
                merged.append(SpeakerTurn(cur_start, cur_end, label))
                cur_start, cur_end = t.start_s, t.end_s
        merged.append(SpeakerTurn(cur_start, cur_end, label))
    merged.sort()

    # Sweep all interval boundaries; keep the sub-intervals covered exactly once.
    points = sorted({x for t in merged for x in (t.start_s, t.end_s)})
    coverage_one: list[tuple[float, float]] = []
    for lo, hi in zip(points, points[1:]):
        mid = (lo + hi) / 2.0
        if sum(1 for t in merged if t.start_s <= mid < t.end_s) == 1:
            coverage_one.append((lo, hi))

    resolved: list[SpeakerTurn] = []
    for t in merged:
        piece_start = None
        piece_end = None
        for lo, hi in coverage_one:
            if lo < t.start_s or hi > t.end_s:
                continue
            if piece_end is not None and lo == piece_end:
                piece_end = hi
            else:
                if piece_start is not None and piece_end > piece_start:
                    resolved.append(SpeakerTurn(piece_start, piece_end, t.speaker_label))
                piece_start, piece_end = lo, hi
        if piece_start is not None and piece_end > piece_start:
            resolved.append(SpeakerTurn(piece_start, piece_end, t.speaker_label))
    resolved.sort()
    return resolved


def stitch(
    turn: SpeakerTurn,
    chunks: list[VadChunk],
    policy: StitchPolicy = StitchPolicy(),
    source_id: str = "",
) -> list[SegmentSpan]:
    """Greedy left-to-right accumulation of voiced chunks into spans.

    A chunk joins the open run iff the gap to the previous chunk is at most
    ``max_gap_s`` and the run's span stays within ``max_s`` after joining.
    Closed runs outside [min_s, max_s] are discarded, never merged backward
    (backward merging could overshoot ``max_s``).
    """
    spans: list[SegmentSpan] = []
    run_start = run_end = None

    def close():
        if run_start is None:
            return
        length = run_end - run_start
        if policy.min_s <= length <= policy.max_s:
            spans.append(SegmentSpan(source_id, turn.speaker_label, run_start, run_end))

    for c in sorted(chunks):
        if run_start is None:
            run_start, run_end = c.start_s, c.end_s
        elif (
            c.start_s - run_end <= policy.max_gap_s
            and c.end_s - run_start <= policy.max_s
        ):
            run_end = c.end_s
        else:
            close()
            run_start, run_end = c.start_s, c.end_s
    close()
    return spans


def assign_chunks(
    turns: list[SpeakerTurn], chunks: list[VadChunk]
) -> dict[int, list[VadChunk]]:
    """Assign each chunk to the resolved turn containing its midpoint.

    The assigned chunk is clipped to the turn's interval; chunks whose
    midpoint falls outside every turn are dropped.
    """
    starts = [t.start_s for t in turns]
    assigned: dict[int, list[VadChunk]] = {i: [] for i in range(len(turns))}
    for c in chunks:
        mid = (c.start_s + c.end_s) / 2.0
        i = bisect_right(starts, mid) - 1
        if i < 0 or mid >= turns[i].end_s:
            continue
        lo = max(c.start_s, turns[i].start_s)
        hi = min(c.end_s, turns[i].end_s)
        if lo < hi:
            assigned[i].append(VadChunk(lo, hi))
    return assigned


def segment_source(
    turns: list[SpeakerTurn],
    chunks: list[VadChunk],
    policy: StitchPolicy = StitchPolicy(),
    source_id: str = "",
) -> list[SegmentSpan]:
    """Resolve turns, hand each chunk to its turn, stitch, and sort."""
    resolved = resolve_turns(turns, policy.max_gap_s)
    if not resolved:
        return []
    assigned = assign_chunks(resolved, sorted(chunks))
    spans: list[SegmentSpan] = []
    for i, turn in enumerate(resolved):
        spans.extend(stitch(turn, assigned[i], policy, source_id))
    spans.sort(key=lambda s: s.start_s)
    return spans
