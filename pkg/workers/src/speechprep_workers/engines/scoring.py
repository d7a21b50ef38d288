"""Perceptual quality scoring with the DNSMOS P.835 OVRL model.

Runs the published ONNX scorer with ``onnxruntime`` (``pip install
'speechprep-workers[scoring]'``). The weight file is fetched once into
the cache directory (or point ``--model`` at a local copy). Scores are
the OVRL head after the scorer's published polynomial calibration,
averaged over 9.01 s windows hopped by one second.
"""

from __future__ import annotations

import urllib.request
from pathlib import Path

import numpy as np

from ..config import WorkerRuntimeConfig
from ..wavio import read_wav, resample_linear
from . import ItemFailure, ModelLoadFailure

MODEL_URL = (
    "https://raw.githubusercontent.com/microsoft/DNS-Challenge/master"
    "/DNSMOS/DNSMOS/sig_bak_ovr.onnx"
)
MODEL_RATE = 16000
WINDOW_S = 9.01

# Published calibration mapping raw model heads onto the P.835 scale.
POLY_OVR = np.poly1d([-0.06766283, 1.11546468, 0.04602535])


class DnsmosScoring:
    def __init__(self, cfg: WorkerRuntimeConfig):
        try:
            import onnxruntime
        except Exception as exc:
            raise ModelLoadFailure(f"onnxruntime unavailable: {exc}") from None
        model_path = Path(cfg.resolved_model())
        if not model_path.is_file():
            model_path = cfg.cache_dir / "dnsmos" / "sig_bak_ovr.onnx"
        try:
            if not model_path.is_file():
                model_path.parent.mkdir(parents=True, exist_ok=True)
                urllib.request.urlretrieve(MODEL_URL, model_path)
            providers = ["CPUExecutionProvider"]
            if cfg.device.startswith(("cuda", "auto")):
                providers = ["CUDAExecutionProvider"] + providers
            self._session = onnxruntime.InferenceSession(
                str(model_path), providers=providers
            )
        except Exception as exc:
            raise ModelLoadFailure(f"could not load DNSMOS model: {exc}") from None
        self._input_name = self._session.get_inputs()[0].name

    def _score_one(self, audio_path: str) -> float:
        samples, rate = read_wav(audio_path)
        if rate != MODEL_RATE:
            samples = resample_linear(
                samples, max(1, round(len(samples) * MODEL_RATE / rate))
            )
        window = int(WINDOW_S * MODEL_RATE)
        while len(samples) < window:
            samples = np.concatenate([samples, samples]) if len(samples) else np.zeros(window)
        hops = int(len(samples) / MODEL_RATE - WINDOW_S) + 1
        scores = []
        for idx in range(max(1, hops)):
            piece = samples[idx * MODEL_RATE : idx * MODEL_RATE + window]
            feed = {self._input_name: piece[np.newaxis, :].astype(np.float32)}
            _, _, ovr_raw = self._session.run(None, feed)[0][0]
            scores.append(float(POLY_OVR(ovr_raw)))
        return float(np.mean(scores))

    def score(self, items: list[dict]) -> list[float | ItemFailure]:
        results: list[float | ItemFailure] = []
        for item in items:
            try:
                results.append(self._score_one(item["audio_path"]))
            except Exception as exc:
                results.append(ItemFailure(f"{type(exc).__name__}: {exc}"))
        return results
