"""Vocal-stem separation with the UVR-MDX-Net Inst 3 model.

Wraps the ``audio-separator`` package (``pip install
'speechprep-workers[separation]'``), which runs the ONNX MDX-Net family
and fetches weights on first use into the configured cache directory.
The model works at its own internal rate, so the adapter coerces the
vocal stem back onto the input's exact geometry (rate and frame count),
which the protocol requires.
"""

from __future__ import annotations

from pathlib import Path

from ..config import WorkerRuntimeConfig
from ..wavio import resample_linear, wav_geometry, write_wav
from . import ModelLoadFailure


class MdxNetSeparation:
    def __init__(self, cfg: WorkerRuntimeConfig):
        try:
            from audio_separator.separator import Separator
            import soundfile  # audio-separator dependency; robust stem reader
        except Exception as exc:
            raise ModelLoadFailure(f"audio-separator unavailable: {exc}") from None
        self._soundfile = soundfile
        self._stem_dir = cfg.cache_dir / "separated"
        try:
            self._separator = Separator(
                model_file_dir=str(cfg.cache_dir / "uvr"),
                output_dir=str(self._stem_dir),
                output_format="WAV",
                output_single_stem="Vocals",
            )
            self._separator.load_model(cfg.resolved_model())
        except Exception as exc:
            raise ModelLoadFailure(
                f"could not load separation model {cfg.resolved_model()!r}: {exc}"
            ) from None

    def separate(self, audio_path: str, output_path: str) -> str:
        produced = self._separator.separate(audio_path)
        if not produced:
            raise RuntimeError("separator produced no stems")
        stem_path = Path(produced[0])
        if not stem_path.is_absolute():
            stem_path = self._stem_dir / stem_path
        stem, _ = self._soundfile.read(str(stem_path), dtype="float64", always_2d=True)
        stem = stem.mean(axis=1)
        in_frames, in_rate = wav_geometry(audio_path)
        # Equal durations make frame-count interpolation the whole rate fix.
        write_wav(output_path, resample_linear(stem, in_frames), in_rate)
        return output_path
