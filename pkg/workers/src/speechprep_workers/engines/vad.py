"""Voice activity detection with the Silero-VAD model.

Wraps the ``silero-vad`` package (``pip install
'speechprep-workers[vad]'``). The model brings its own detector tuned on
far more than frame energy, so the engine's framing parameters in the
request are ignored; the pipeline treats them as a description of its
built-in detector, not a mandate.
"""

from __future__ import annotations

from ..config import WorkerRuntimeConfig
from . import ModelLoadFailure

MODEL_RATE = 16000


class SileroVad:
    def __init__(self, cfg: WorkerRuntimeConfig):
        try:
            from silero_vad import get_speech_timestamps, load_silero_vad, read_audio
        except Exception as exc:
            raise ModelLoadFailure(f"silero-vad unavailable: {exc}") from None
        try:
            self._model = load_silero_vad()
        except Exception as exc:
            raise ModelLoadFailure(f"could not load silero-vad model: {exc}") from None
        self._get_speech_timestamps = get_speech_timestamps
        self._read_audio = read_audio

    def detect(self, audio_path: str, params: dict) -> list[tuple[float, float]]:
        del params  # the model has its own thresholds
        audio = self._read_audio(audio_path, sampling_rate=MODEL_RATE)
        stamps = self._get_speech_timestamps(
            audio, self._model, sampling_rate=MODEL_RATE
        )
        return [(s["start"] / MODEL_RATE, s["end"] / MODEL_RATE) for s in stamps]
