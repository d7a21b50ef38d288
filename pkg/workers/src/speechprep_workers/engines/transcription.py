"""Multilingual transcription with the Whisper medium model.

Wraps ``faster-whisper`` (``pip install
'speechprep-workers[transcription]'``), the CTranslate2 port of Whisper.
The model's built-in VAD is disabled: segment boundaries come from the
pipeline's upstream diarization and VAD stages, so re-detecting them here
would only discard audio the pipeline already vetted. Decoding uses the
published model's defaults (beam size 5, temperature fallback schedule).
"""

from __future__ import annotations

from ..config import WorkerRuntimeConfig
from . import ItemFailure, ModelLoadFailure


class WhisperTranscription:
    def __init__(self, cfg: WorkerRuntimeConfig):
        try:
            from faster_whisper import WhisperModel
        except Exception as exc:
            raise ModelLoadFailure(f"faster-whisper unavailable: {exc}") from None
        device = "auto" if cfg.device == "auto" else cfg.device.split(":", 1)[0]
        device_index = 0
        if ":" in cfg.device:
            device_index = int(cfg.device.split(":", 1)[1])
        try:
            self._model = WhisperModel(
                cfg.resolved_model(),
                device=device,
                device_index=device_index,
                download_root=str(cfg.cache_dir / "whisper"),
            )
        except Exception as exc:
            raise ModelLoadFailure(
                f"could not load ASR model {cfg.resolved_model()!r}: {exc}"
            ) from None
        self._language_hint = cfg.language

    def transcribe(self, items: list[dict]) -> list[dict | ItemFailure]:
        results: list[dict | ItemFailure] = []
        for item in items:
            try:
                segments, info = self._model.transcribe(
                    item["audio_path"],
                    language=self._language_hint,
                    vad_filter=False,
                )
                transcript = "".join(s.text for s in segments).strip()
            except Exception as exc:
                results.append(ItemFailure(f"{type(exc).__name__}: {exc}"))
                continue
            results.append(
                {
                    "transcript": transcript,
                    "language": str(info.language),
                    "language_confidence": float(info.language_probability),
                }
            )
        return results
