"""Speaker diarization with the pyannote 3.1 pipeline.

Wraps ``pyannote.audio`` (``pip install 'speechprep-workers[diarization]'``).
The pretrained pipeline is gated on Hugging Face; set ``HF_TOKEN`` (or
``HUGGINGFACE_TOKEN``) to a token that has accepted its terms.
"""

from __future__ import annotations

import os

from ..config import WorkerRuntimeConfig
from . import ModelLoadFailure, resolve_torch_device


class PyannoteDiarization:
    def __init__(self, cfg: WorkerRuntimeConfig):
        try:
            import torch
            from pyannote.audio import Pipeline
        except Exception as exc:
            raise ModelLoadFailure(f"pyannote.audio unavailable: {exc}") from None
        token = os.environ.get("HF_TOKEN") or os.environ.get("HUGGINGFACE_TOKEN")
        try:
            self._pipeline = Pipeline.from_pretrained(
                cfg.resolved_model(),
                use_auth_token=token,
                cache_dir=str(cfg.cache_dir / "pyannote"),
            )
            if self._pipeline is None:
                raise RuntimeError("from_pretrained returned nothing (gated model?)")
            self._pipeline.to(torch.device(resolve_torch_device(cfg.device, torch)))
        except Exception as exc:
            raise ModelLoadFailure(
                f"could not load diarization pipeline {cfg.resolved_model()!r}: {exc}"
            ) from None

    def diarize(self, audio_path: str) -> list[tuple[float, float, str]]:
        annotation = self._pipeline(audio_path)
        turns = [
            (float(segment.start), float(segment.end), str(label))
            for segment, _, label in annotation.itertracks(yield_label=True)
        ]
        turns.sort()
        return turns
