"""Stage workers for the speechprep pipeline.

Each worker is a long-lived process speaking the pipeline's line-delimited
JSON protocol (PROTOCOL.md at the repository root) over standard streams
or TCP, wrapping one real pretrained model per stage: vocal-stem
separation, speaker diarization, voice activity detection, multilingual
transcription, or perceptual quality scoring. A dependency-free fake
engine per stage supports conformance testing and dry runs.
"""

from .config import STAGES, WorkerRuntimeConfig

__all__ = ["STAGES", "WorkerRuntimeConfig"]
