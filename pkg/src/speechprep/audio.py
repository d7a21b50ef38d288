"""Decode and standardize raw audio to the pipeline's canonical format.

Canonical form: mono, 24 kHz, RMS loudness pulled toward -20 dBFS with the
applied gain clamped to [-3, +3] dB, and peak magnitude capped at 1.0.

All functions are pure: they never mutate their inputs and hold no state,
so they are safe to call from any number of worker threads.
"""

from __future__ import annotations

import io
import math
import struct
import wave
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.signal import resample_poly

from .errors import (
    CorruptContainer,
    EmptyAudio,
    InvalidRate,
    SilentAudio,
    UnsupportedFormat,
)

TARGET_SAMPLE_RATE = 24_000

# 16-bit PCM <-> float convention: divide by 32768 on read, multiply by
# 32768 and saturate on write. Asymmetric, but round-trip stable.
INT16_SCALE = 32768.0


@dataclass(frozen=True)
class AudioBuffer:
    """Decoded audio samples.

    ``samples`` is float64, shape (frames,) for mono or (frames, channels)
    for multi-channel audio. Amplitudes are dimensionless; after
    standardization every magnitude is <= 1.0.
    """

    samples: np.ndarray
    sample_rate: int

    @property
    def channel_count(self) -> int:
        return 1 if self.samples.ndim == 1 else self.samples.shape[1]

    @property
    def frame_count(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return self.frame_count / self.sample_rate

    def slice_seconds(self, start_s: float, end_s: float) -> "AudioBuffer":
        """Cut [start_s, end_s) to a new buffer (mono only)."""
        lo = max(0, int(round(start_s * self.sample_rate)))
        hi = min(self.frame_count, int(round(end_s * self.sample_rate)))
        return AudioBuffer(self.samples[lo:hi], self.sample_rate)


@dataclass(frozen=True)
class LoudnessSpec:
    """Loudness targeting parameters: target RMS level and the gain clamp."""

    target_dbfs: float = -20.0
    gain_clamp_db: tuple[float, float] = (-3.0, 3.0)

    def __post_init__(self):
        lo, hi = self.gain_clamp_db
        if not (lo <= 0.0 <= hi):
            raise ValueError(f"gain clamp {self.gain_clamp_db} must bracket 0 dB")
        if not self.target_dbfs < 0.0:
            raise ValueError(f"target_dbfs {self.target_dbfs} must be negative")


def decode(raw: bytes) -> AudioBuffer:
    """Decode a PCM WAV container into float samples.

    Supports 8/16/24/32-bit integer PCM. Multi-channel layouts are kept
    as (frames, channels) for the downmix step. 16-bit values map to
    float by dividing by 32768.
    """
    if len(raw) == 0:
        raise EmptyAudio("zero-length input")
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise UnsupportedFormat("not a RIFF/WAVE container")
    try:
        with wave.open(io.BytesIO(raw), "rb") as wf:
            channels = wf.getnchannels()
            rate = wf.getframerate()
            width = wf.getsampwidth()
            n_frames = wf.getnframes()
            payload = wf.readframes(n_frames)
    except wave.Error as exc:
        if "unknown format" in str(exc):
            raise UnsupportedFormat(str(exc)) from exc
        raise CorruptContainer(str(exc)) from exc
    except (EOFError, struct.error) as exc:
        raise CorruptContainer(str(exc)) from exc
    if rate <= 0 or channels <= 0:
        raise CorruptContainer(f"nonsensical header: rate={rate} channels={channels}")

    if width == 1:
        # 8-bit WAV is unsigned with midpoint 128
        flat = (np.frombuffer(payload, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    elif width == 2:
        flat = np.frombuffer(payload, dtype="<i2").astype(np.float64) / INT16_SCALE
    elif width == 3:
        b = np.frombuffer(payload, dtype=np.uint8)
        if len(b) % 3:
            raise CorruptContainer("24-bit payload not a multiple of 3 bytes")
        as32 = (
            b[0::3].astype(np.int32)
            | (b[1::3].astype(np.int32) << 8)
            | (b[2::3].astype(np.int32) << 16)
        )
        as32 = np.where(as32 >= 1 << 23, as32 - (1 << 24), as32)
        flat = as32.astype(np.float64) / float(1 << 23)
    elif width == 4:
        flat = np.frombuffer(payload, dtype="<i4").astype(np.float64) / float(1 << 31)
    else:
        raise UnsupportedFormat(f"unsupported sample width {width}")

    if len(flat) % channels:
        raise CorruptContainer("payload length not a multiple of the frame size")
    samples = flat if channels == 1 else flat.reshape(-1, channels)
    if samples.shape[0] == 0:
        raise EmptyAudio("container holds zero frames")
    return AudioBuffer(samples, rate)


def downmix_to_mono(buf: AudioBuffer) -> AudioBuffer:
    """Average all channels into one."""
    if buf.channel_count == 1:
        return buf
    return AudioBuffer(buf.samples.mean(axis=1), buf.sample_rate)


def resample_length(n_frames: int, src_rate: int, dst_rate: int) -> int:
    """Frames produced by resampling: round(n * dst / src), half away from zero."""
    return int(math.floor(n_frames * dst_rate / src_rate + 0.5))


def resample(buf: AudioBuffer, dst_rate: int) -> AudioBuffer:
    """Band-limited (polyphase windowed-sinc) resampling of a mono buffer."""
    if dst_rate <= 0:
        raise InvalidRate(f"destination rate must be positive, got {dst_rate}")
    if buf.channel_count != 1:
        raise ValueError("resample expects a mono buffer; downmix first")
    if dst_rate == buf.sample_rate:
        return buf
    ratio = Fraction(dst_rate, buf.sample_rate)
    out = resample_poly(buf.samples, ratio.numerator, ratio.denominator)
    want = resample_length(buf.frame_count, buf.sample_rate, dst_rate)
    if len(out) > want:
        out = out[:want]
    elif len(out) < want:
        out = np.pad(out, (0, want - len(out)))
    return AudioBuffer(out, dst_rate)


def compute_dbfs(buf: AudioBuffer) -> float:
    """Whole-buffer RMS level in dB relative to full scale (RMS 1.0 = 0 dBFS)."""
    if buf.frame_count == 0:
        raise EmptyAudio("cannot measure an empty buffer")
    rms = math.sqrt(float(np.mean(np.square(buf.samples))))
    if rms == 0.0:
        raise SilentAudio("buffer RMS is zero")
    return 20.0 * math.log10(rms)


def apply_gain_clamped(
    buf: AudioBuffer, spec: LoudnessSpec = LoudnessSpec()
) -> tuple[AudioBuffer, float]:
    """Scale toward the target loudness, with the gain clamped to the spec.

    Returns the scaled buffer and the gain actually applied in dB.
    """
    level = compute_dbfs(buf)
    desired = spec.target_dbfs - level
    lo, hi = spec.gain_clamp_db
    applied = min(max(desired, lo), hi)
    if applied == 0.0:
        return buf, 0.0
    return AudioBuffer(buf.samples * 10.0 ** (applied / 20.0), buf.sample_rate), applied


def peak_normalize(buf: AudioBuffer) -> AudioBuffer:
    """Divide by the peak magnitude, but only when it exceeds 1.0.

    Unconditional rescaling would undo the loudness targeting, so this acts
    purely as a clipping guard.
    """
    if buf.frame_count == 0:
        return buf
    peak = float(np.max(np.abs(buf.samples)))
    if peak <= 1.0:
        return buf
    return AudioBuffer(buf.samples / peak, buf.sample_rate)


@dataclass(frozen=True)
class StandardizeResult:
    """Standardized buffer plus what the gain stage did to it."""

    buffer: AudioBuffer
    applied_gain_db: float
    silent: bool


def standardize_buffer(
    buf: AudioBuffer,
    loudness: LoudnessSpec = LoudnessSpec(),
    target_rate: int = TARGET_SAMPLE_RATE,
) -> StandardizeResult:
    """downmix -> resample -> clamped gain -> peak guard, on a decoded buffer.

    A silent input skips the gain stage and is tagged (downstream VAD will
    discard it); failing hard would abort a whole source file.
    """
    buf = resample(downmix_to_mono(buf), target_rate)
    if buf.frame_count == 0:
        raise EmptyAudio("resampling produced zero frames")
    try:
        buf, applied = apply_gain_clamped(buf, loudness)
        silent = False
    except SilentAudio:
        applied, silent = 0.0, True
    return StandardizeResult(peak_normalize(buf), applied, silent)


def standardize_with_info(
    raw: bytes,
    loudness: LoudnessSpec = LoudnessSpec(),
    target_rate: int = TARGET_SAMPLE_RATE,
) -> StandardizeResult:
    """Full pipeline from container bytes; see standardize_buffer."""
    return standardize_buffer(decode(raw), loudness, target_rate)


def standardize(
    raw: bytes,
    loudness: LoudnessSpec = LoudnessSpec(),
    target_rate: int = TARGET_SAMPLE_RATE,
) -> AudioBuffer:
    """Full standardization; see standardize_with_info for the gain report."""
    return standardize_with_info(raw, loudness, target_rate).buffer


def encode_wav(buf: AudioBuffer) -> bytes:
    """Encode a mono buffer as 16-bit PCM WAV (saturating quantization)."""
    if buf.channel_count != 1:
        raise ValueError("encode_wav expects a mono buffer")
    ints = quantize_int16(buf.samples)
    out = io.BytesIO()
    with wave.open(out, "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(buf.sample_rate)
        wf.writeframes(ints.tobytes())
    return out.getvalue()


def quantize_int16(samples: np.ndarray) -> np.ndarray:
    """Float [-1, 1] -> int16 by the write-side convention (x * 32768, saturated)."""
    scaled = np.rint(samples * INT16_SCALE)
    return np.clip(scaled, -32768, 32767).astype("<i2")
