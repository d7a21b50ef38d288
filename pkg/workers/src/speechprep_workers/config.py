"""Runtime configuration for a stage worker process."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

STAGES = ("separation", "diarization", "vad", "transcription", "scoring")
ENGINES = ("real", "fake")

# Published models per stage; --model overrides (a name or a local path).
DEFAULT_MODELS = {
    "separation": "UVR-MDX-NET-Inst_3.onnx",
    "diarization": "pyannote/speaker-diarization-3.1",
    "vad": "silero-vad",
    "transcription": "medium",
    "scoring": "sig_bak_ovr.onnx",
}


def default_cache_dir() -> Path:
    env = os.environ.get("SPEECHPREP_WORKERS_CACHE")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "speechprep-workers"


@dataclass(frozen=True)
class WorkerRuntimeConfig:
    """Everything a worker needs beyond the protocol itself.

    ``language`` is a pass-through hint for the transcription model;
    ``model`` defaults per stage (see DEFAULT_MODELS); ``device`` is
    ``auto`` / ``cpu`` / ``cuda[:N]``, resolved by each adapter.
    """

    stage: str
    engine: str = "real"
    model: str | None = None
    device: str = "auto"
    batch_size: int = 8
    language: str | None = None
    cache_dir: Path = field(default_factory=default_cache_dir)

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}; expected one of {STAGES}")
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine {self.engine!r}; expected one of {ENGINES}")
        if isinstance(self.batch_size, bool) or not isinstance(self.batch_size, int):
            raise ValueError(f"batch_size must be an int, got {self.batch_size!r}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.device:
            raise ValueError("device must be non-empty")

    def resolved_model(self) -> str:
        return self.model if self.model is not None else DEFAULT_MODELS[self.stage]
