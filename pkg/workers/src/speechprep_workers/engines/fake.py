"""Deterministic dependency-free engines for conformance tests and dry runs.

Each fake honors the stage's output contract exactly (that is the point)
while computing something trivially checkable: separation copies bytes,
diarization yields one whole-file turn, VAD thresholds raw amplitude,
transcription emits duration-proportional filler text, scoring maps
duration onto a fixed quality band.
"""

from __future__ import annotations

import math
import shutil
from pathlib import Path

import numpy as np

from ..config import WorkerRuntimeConfig
from ..wavio import read_wav, wav_duration
from . import ItemFailure

CHUNK_S = 5.0  # fake VAD slices the voiced region into pieces this long


class FakeSeparation:
    def separate(self, audio_path: str, output_path: str) -> str:
        if Path(output_path) != Path(audio_path):
            shutil.copyfile(audio_path, output_path)
        return output_path


class FakeDiarization:
    def diarize(self, audio_path: str) -> list[tuple[float, float, str]]:
        duration = wav_duration(audio_path)
        if duration <= 0.0:
            return []
        return [(0.0, duration, "S0")]


class FakeVad:
    def detect(self, audio_path: str, params: dict) -> list[tuple[float, float]]:
        samples, rate = read_wav(audio_path)
        threshold = 10.0 ** (float(params.get("threshold_dbfs", -40.0)) / 20.0)
        voiced = np.flatnonzero(np.abs(samples) >= threshold)
        if voiced.size == 0:
            return []
        start = voiced[0] / rate
        end = (voiced[-1] + 1) / rate
        bounds = [start + i * CHUNK_S for i in range(math.ceil((end - start) / CHUNK_S))]
        return [(lo, min(lo + CHUNK_S, end)) for lo in bounds]


class FakeTranscription:
    languages = ["en"]

    def transcribe(self, items: list[dict]) -> list[dict | ItemFailure]:
        results: list[dict | ItemFailure] = []
        for item in items:
            try:
                duration = wav_duration(item["audio_path"])
            except Exception as exc:
                results.append(ItemFailure(f"{type(exc).__name__}: {exc}"))
                continue
            words = max(1, round(duration))
            results.append(
                {
                    "transcript": " ".join(["lorem"] * words),
                    "language": "en",
                    "language_confidence": 0.99,
                }
            )
        return results


class FakeScoring:
    def score(self, items: list[dict]) -> list[float | ItemFailure]:
        results: list[float | ItemFailure] = []
        for item in items:
            try:
                duration = wav_duration(item["audio_path"])
            except Exception as exc:
                results.append(ItemFailure(f"{type(exc).__name__}: {exc}"))
                continue
            results.append(round(3.2 + 0.6 * (duration - math.floor(duration)), 4))
        return results


def build(cfg: WorkerRuntimeConfig):
    return {
        "separation": FakeSeparation,
        "diarization": FakeDiarization,
        "vad": FakeVad,
        "transcription": FakeTranscription,
        "scoring": FakeScoring,
    }[cfg.stage]()
