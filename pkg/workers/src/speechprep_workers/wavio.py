"""Minimal WAV io for the pipeline's interchange format (16-bit PCM)."""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np


def read_wav(path: str | Path) -> tuple[np.ndarray, int]:
    """Read a PCM16 WAV as (mono float64 in [-1, 1], rate)."""
    with wave.open(str(path), "rb") as wav:
        rate = wav.getframerate()
        channels = wav.getnchannels()
        width = wav.getsampwidth()
        raw = wav.readframes(wav.getnframes())
    if width != 2:
        raise ValueError(f"expected 16-bit PCM, got {8 * width}-bit: {path}")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if channels > 1:
        samples = samples.reshape(-1, channels).mean(axis=1)
    return samples, rate


def write_wav(path: str | Path, samples: np.ndarray, rate: int) -> None:
    """Write mono float samples in [-1, 1] as PCM16."""
    ints = np.clip(np.rint(np.asarray(samples) * 32768.0), -32768, 32767)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(rate)
        wav.writeframes(ints.astype("<i2").tobytes())


def wav_geometry(path: str | Path) -> tuple[int, int]:
    """(frame count, rate) from the header, without reading samples."""
    with wave.open(str(path), "rb") as wav:
        return wav.getnframes(), wav.getframerate()


def wav_duration(path: str | Path) -> float:
    frames, rate = wav_geometry(path)
    return frames / rate


def resample_linear(samples: np.ndarray, n_out: int) -> np.ndarray:
    """Resample to exactly n_out frames by linear interpolation.

    Only used to coerce a model's output geometry back onto its input's;
    engines needing quality resampling do it with their own libraries.
    """
    n_in = len(samples)
    if n_in == n_out:
        return samples
    if n_in == 0 or n_out == 0:
        return np.zeros(n_out, dtype=np.float64)
    grid_out = np.linspace(0.0, n_in - 1.0, num=n_out)
    return np.interp(grid_out, np.arange(n_in, dtype=np.float64), samples)
