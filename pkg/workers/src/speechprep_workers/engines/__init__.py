"""Stage engines: the model logic behind each protocol op.

An engine is a plain object with one stage-specific method:

    separation     separate(audio_path, output_path) -> path written
    diarization    diarize(audio_path) -> [(start_s, end_s, speaker), ...]
    vad            detect(audio_path, params) -> [(start_s, end_s), ...]
    transcription  transcribe(items) -> [result dict | ItemFailure, ...]
    scoring        score(items) -> [float | ItemFailure, ...]

Real engines import their model libraries lazily inside the constructor,
so a missing dependency or weight file surfaces as ModelLoadFailure at
handshake time instead of an import error at process start. The fake
engines are dependency-free and deterministic; they exist for protocol
conformance testing and for dry-running a deployment without models.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..config import WorkerRuntimeConfig


class ModelLoadFailure(RuntimeError):
    """The stage model could not be loaded; reported in the hello response."""


@dataclass(frozen=True)
class ItemFailure:
    """Per-item failure inside a batch; rendered as a wire error marker."""

    detail: str


def resolve_torch_device(selector: str, torch_module) -> str:
    """Map the config's device selector onto a torch device string."""
    if selector == "auto":
        return "cuda" if torch_module.cuda.is_available() else "cpu"
    return selector


def build_engine(cfg: WorkerRuntimeConfig):
    if cfg.engine == "fake":
        from . import fake

        return fake.build(cfg)
    if cfg.stage == "separation":
        from .separation import MdxNetSeparation

        return MdxNetSeparation(cfg)
    if cfg.stage == "diarization":
        from .diarization import PyannoteDiarization

        return PyannoteDiarization(cfg)
    if cfg.stage == "vad":
        from .vad import SileroVad

        return SileroVad(cfg)
    if cfg.stage == "transcription":
        from .transcription import WhisperTranscription

        return WhisperTranscription(cfg)
    from .scoring import DnsmosScoring

    return DnsmosScoring(cfg)
