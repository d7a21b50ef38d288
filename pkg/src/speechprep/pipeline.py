"""Drive the six-stage pipeline over a corpus with bounded parallelism.

The unit of parallelism is the source item; stages within an item run
sequentially. Items never share mutable state, results are merged in
canonical (item id) order, and statistics use exact summation, so the
manifest and report are identical for any worker count. A failing stage
quarantines only its item; the run completes and reports it.
"""

from __future__ import annotations

import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import math

from .audio import INT16_SCALE, AudioBuffer, quantize_int16, standardize_with_info
from .backends.gateway import BackendSet, ItemContext, SegmentAudio, build_backend_set
from .config import RunConfig
from .errors import NoInputs, SpeechPrepError
from .filtering import (
    AsrResult,
    DropRecord,
    FilterCandidate,
    QualityScore,
    filter_stage,
    non_whitespace_chars,
)
from .manifest import MANIFEST_NAME, ManifestRecord, make_record, segment_relpath, write_manifest, write_segment
from .report import (
    STAGE_ASR,
    STAGE_DIARIZATION,
    STAGE_FILTERING,
    STAGE_ORDER,
    STAGE_SEPARATION,
    STAGE_SOURCE,
    STAGE_VAD,
    ClipRecord,
    FailedItem,
    PipelineReport,
    collect_stats,
    compute_rtf,
    render_report,
)
from .segmenter import assign_chunks, resolve_turns, stitch

SOURCE_SUFFIX = ".wav"


@dataclass(frozen=True)
class SourceItem:
    """One input file; its id doubles as the item id everywhere."""

    source_id: str
    path: Path


def discover_sources(input_roots: list[Path]) -> list[SourceItem]:
    """Enumerate source WAVs under the roots, ids from root-relative paths."""
    items: list[SourceItem] = []
    seen: set[str] = set()
    for root in input_roots:
        for path in sorted(root.rglob(f"*{SOURCE_SUFFIX}")):
            rel = path.relative_to(root).with_suffix("")
            source_id = "_".join(rel.parts)
            candidate = source_id
            bump = 2
            while candidate in seen:
                candidate = f"{source_id}~{bump}"
                bump += 1
            seen.add(candidate)
            items.append(SourceItem(candidate, path))
    if not items:
        raise NoInputs(f"no {SOURCE_SUFFIX} files under {[str(r) for r in input_roots]}")
    return items


@dataclass
class ItemResult:
    """Everything one item contributes to the merged run outputs."""

    item_id: str
    status: str  # "ok" | "failed"
    failure: FailedItem | None = None
    stage_clips: dict[str, list[ClipRecord]] = field(default_factory=dict)
    records: list[ManifestRecord] = field(default_factory=list)
    drops: list[DropRecord] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "status": self.status,
            "failure": asdict(self.failure) if self.failure else None,
            "stage_clips": {
                stage: [asdict(c) for c in clips]
                for stage, clips in self.stage_clips.items()
            },
            "records": [asdict(r) for r in self.records],
            "drops": [asdict(d) for d in self.drops],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ItemResult":
        return cls(
            item_id=data["item_id"],
            status=data["status"],
            failure=FailedItem(**data["failure"]) if data["failure"] else None,
            stage_clips={
                stage: [ClipRecord(**c) for c in clips]
                for stage, clips in data["stage_clips"].items()
            },
            records=[ManifestRecord(**r) for r in data["records"]],
            drops=[DropRecord(**d) for d in data["drops"]],
        )


def process_item(
    item: SourceItem,
    cfg: RunConfig,
    backends: BackendSet,
    out_root: Path,
    exchange_root: Path,
) -> ItemResult:
    """Run one source item through all six stages.

    Any engine-raised error (or unreadable input) quarantines the item:
    the result carries the failing stage and reason instead of clips.
    """
    result = ItemResult(item.source_id, "ok")
    stage = "standardize"
    try:
        ctx = ItemContext(cfg.run_id, item.source_id, item.path, exchange_root)
        raw = item.path.read_bytes()
        std = standardize_with_info(raw, cfg.loudness)
        # Every stage after standardization consumes the interchange format
        # (16-bit PCM), whether a backend runs in process or behind the wire,
        # so local and remote runs stay bit-identical.
        audio = AudioBuffer(
            quantize_int16(std.buffer.samples).astype("f8") / INT16_SCALE,
            std.buffer.sample_rate,
        )

        def maybe_score(labeled: list[tuple[str, AudioBuffer]]) -> list[float | None]:
            nonlocal stage
            if not labeled:
                return []
            if not cfg.score_stages:
                return [None] * len(labeled)
            prior, stage = stage, "score"
            values = [q.value for q in backends.scoring.score(ctx, labeled)]
            stage = prior
            return values

        source_quality = maybe_score([("source", audio)])[0]
        result.stage_clips[STAGE_SOURCE] = [ClipRecord(audio.duration_s, source_quality)]

        stage = "separate"
        separated = backends.separation.separate(ctx, audio)
        sep_quality = maybe_score([("separated", separated)])[0]
        result.stage_clips[STAGE_SEPARATION] = [ClipRecord(separated.duration_s, sep_quality)]

        stage = "diarize"
        turns = resolve_turns(
            backends.diarization.diarize(ctx, separated), cfg.turn_max_gap_s
        )
        turn_slices = [
            (f"turn-{k:04d}", separated.slice_seconds(t.start_s, t.end_s))
            for k, t in enumerate(turns)
        ]
        turn_qualities = maybe_score(turn_slices)
        result.stage_clips[STAGE_DIARIZATION] = [
            ClipRecord(t.duration_s, q) for t, q in zip(turns, turn_qualities)
        ]

        stage = "vad"
        chunks = backends.vad.detect(ctx, separated)
        assigned = assign_chunks(turns, sorted(chunks))
        spans = []
        for i, turn in enumerate(turns):
            spans.extend(stitch(turn, assigned[i], cfg.stitch, item.source_id))
        spans.sort(key=lambda s: s.start_s)

        segments = [
            SegmentAudio(
                segment_id=f"{item.source_id}:{k:05d}",
                span_index=k,
                buffer=separated.slice_seconds(span.start_s, span.end_s),
                start_s=span.start_s,
                end_s=span.end_s,
            )
            for k, span in enumerate(spans)
        ]
        # Span scores feed the quality gate, so they are always computed.
        stage = "score"
        span_qualities = (
            [q.value for q in backends.scoring.score(
                ctx, [(f"span-{seg.span_index:05d}", seg.buffer) for seg in segments]
            )]
            if segments
            else []
        )
        stage = "vad"
        result.stage_clips[STAGE_VAD] = [
            ClipRecord(seg.end_s - seg.start_s, q)
            for seg, q in zip(segments, span_qualities)
        ]

        stage = "transcribe"
        asr_results = backends.transcription.transcribe(ctx, segments)

        transcribed: list[tuple[SegmentAudio, float, AsrResult]] = []
        for seg, quality, asr in zip(segments, span_qualities, asr_results):
            if non_whitespace_chars(asr.transcript) == 0:
                result.drops.append(
                    DropRecord(seg.segment_id, "asr", "empty_transcript", "", "")
                )
            else:
                transcribed.append((seg, quality, asr))
        result.stage_clips[STAGE_ASR] = [
            ClipRecord(seg.end_s - seg.start_s, quality)
            for seg, quality, _ in transcribed
        ]

        stage = "filter"
        by_id = {seg.segment_id: (seg, quality, asr) for seg, quality, asr in transcribed}
        candidates = [
            FilterCandidate(
                segment_id=seg.segment_id,
                source_id=item.source_id,
                duration_s=seg.end_s - seg.start_s,
                asr=asr,
                quality=QualityScore(quality),
            )
            for seg, quality, asr in transcribed
        ]
        kept, filter_drops = filter_stage(candidates, cfg.filter)
        result.drops.extend(filter_drops)
        result.stage_clips[STAGE_FILTERING] = [
            ClipRecord(c.duration_s, c.quality.value) for c in kept
        ]

        stage = "persist"
        for candidate in kept:
            seg, quality, asr = by_id[candidate.segment_id]
            language = asr.language.lower()
            record = make_record(
                id=candidate.segment_id,
                wav=segment_relpath(language, item.source_id, seg.span_index),
                text=asr.transcript,
                language=language,
                lang_conf=asr.language_confidence,
                speaker=spans[seg.span_index].speaker_label,
                start=seg.start_s,
                end=seg.end_s,
                quality=quality,
                source_id=item.source_id,
            )
            write_segment(seg.buffer, record, out_root)
            result.records.append(record)
    except (SpeechPrepError, OSError) as exc:
        return ItemResult(
            item.source_id,
            "failed",
            failure=FailedItem(item.source_id, stage, type(exc).__name__, str(exc)),
        )
    return result


def _state_path(out_root: Path, item_id: str) -> Path:
    return out_root / "state" / f"{item_id}.json"


def _load_state(out_root: Path, item_id: str) -> ItemResult | None:
    path = _state_path(out_root, item_id)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        return ItemResult.from_dict(data)
    except (OSError, ValueError, KeyError, TypeError):
        return None


def _save_state(out_root: Path, result: ItemResult) -> None:
    path = _state_path(out_root, result.item_id)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(
            json.dumps(result.to_dict(), sort_keys=True) + "\n", encoding="utf-8"
        )
        tmp.replace(path)
    except OSError as exc:
        print(f"warning: cannot save item state for {result.item_id}: {exc}", file=sys.stderr)


def run_pipeline(cfg: RunConfig) -> tuple[PipelineReport, list[ManifestRecord]]:
    """Process every discovered source item and persist all run outputs.

    Returns the report and the kept manifest records; raises only for
    whole-run problems (no inputs, all items failed, unbuildable backends).
    """
    start = time.monotonic()
    roots = [Path(r) for r in cfg.input_roots]
    items = discover_sources(roots)
    out_root = Path(cfg.output_root)
    out_root.mkdir(parents=True, exist_ok=True)
    exchange_root = cfg.resolve_exchange_root()

    backends = build_backend_set(
        cfg.backends, timeouts=cfg.timeouts, vad_params=cfg.vad
    )
    try:
        def handle(item: SourceItem) -> ItemResult:
            if cfg.resume:
                cached = _load_state(out_root, item.source_id)
                if cached is not None:
                    return cached
            result = process_item(item, cfg, backends, out_root, exchange_root)
            _save_state(out_root, result)
            return result

        if cfg.parallelism == 1:
            results = [handle(item) for item in items]
        else:
            with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
                results = list(pool.map(handle, items))
    finally:
        backends.close()

    results.sort(key=lambda r: r.item_id)
    ok_results = [r for r in results if r.status == "ok"]
    if not ok_results:
        failures = "; ".join(
            f"{r.failure.item_id}: {r.failure.kind}: {r.failure.message}"
            for r in results
            if r.failure
        )
        raise SpeechPrepError(f"all {len(results)} items failed ({failures})")

    stage_clips: dict[str, list[ClipRecord]] = {stage: [] for stage in STAGE_ORDER}
    for result in ok_results:
        for stage in STAGE_ORDER:
            stage_clips[stage].extend(result.stage_clips.get(stage, []))

    source_hours = math.fsum(c.duration_s for c in stage_clips[STAGE_SOURCE]) / 3600.0
    stages = tuple(
        collect_stats(stage, stage_clips[stage], source_hours=source_hours)
        for stage in STAGE_ORDER
    )

    records = [record for result in ok_results for record in result.records]
    write_manifest(records, out_root / MANIFEST_NAME)

    wall_s = time.monotonic() - start
    report = PipelineReport(
        run_id=cfg.run_id,
        stages=stages,
        wall_processing_s=wall_s,
        rtf=compute_rtf(wall_s, source_hours),
        failed_items=tuple(r.failure for r in results if r.failure is not None),
        drops=tuple(drop for result in ok_results for drop in result.drops),
    )
    report.save(out_root / "report.json")
    (out_root / "report.txt").write_text(render_report(report), encoding="utf-8")
    return report, records
