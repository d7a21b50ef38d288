"""Speech-dataset preprocessing engine.

Takes in-the-wild speech recordings through six stages — loudness/rate
standardization, source separation, speaker diarization, VAD-based
segmentation, batched transcription, and quality filtering — and emits
training-ready clips with a line-delimited manifest and a per-stage
statistics report. Model-dependent stages run behind a pluggable worker
protocol with deterministic built-in stubs.
"""

from .audio import (
    AudioBuffer,
    LoudnessSpec,
    StandardizeResult,
    TARGET_SAMPLE_RATE,
    decode,
    encode_wav,
    standardize,
    standardize_buffer,
    standardize_with_info,
)
from .config import RunConfig, build_config
from .filtering import (
    AsrResult,
    FilterCandidate,
    FilterPolicy,
    QualityScore,
    filter_stage,
    quartiles,
)
from .manifest import ManifestRecord, make_record, read_manifest, write_manifest
from .pipeline import SourceItem, discover_sources, run_pipeline
from .report import (
    ClipRecord,
    PipelineReport,
    StageStats,
    collect_stats,
    compute_rtf,
    render_report,
    render_stage_table,
)
from .segmenter import SegmentSpan, SpeakerTurn, StitchPolicy, VadChunk, segment_source

__version__ = "0.1.0"

__all__ = [
    "AsrResult",
    "AudioBuffer",
    "ClipRecord",
    "FilterCandidate",
    "FilterPolicy",
    "LoudnessSpec",
    "ManifestRecord",
    "PipelineReport",
    "QualityScore",
    "RunConfig",
    "SegmentSpan",
    "SourceItem",
    "SpeakerTurn",
    "StageStats",
    "StandardizeResult",
    "StitchPolicy",
    "TARGET_SAMPLE_RATE",
    "VadChunk",
    "build_config",
    "collect_stats",
    "compute_rtf",
    "decode",
    "discover_sources",
    "encode_wav",
    "filter_stage",
    "make_record",
    "quartiles",
    "read_manifest",
    "render_report",
    "render_stage_table",
    "run_pipeline",
    "segment_source",
    "standardize",
    "standardize_buffer",
    "standardize_with_info",
    "write_manifest",
]
