"""The protocol serve loop shared by every stage worker.

One request is in flight at a time; horizontal scaling is more
processes. The loop never dies on a bad request: undecodable lines are
answered with id 0, decodable-but-invalid ones with a request-level
error, and engine exceptions become error responses on a still-healthy
connection. The engine itself is built lazily at the first handshake so
a model that cannot load is reported in the hello response instead of
killing the process.

Stage output contracts (turn and chunk bounds, batch alignment) are
enforced here, after the engine returns: the host pipeline drops the
connection on any violation, so a worker that cleans up model edge cases
(a diarizer overshooting the file end by a sample, say) is strictly more
useful than one that relays them.
"""

from __future__ import annotations

import math
import socket
import sys
from pathlib import Path
from typing import Any, BinaryIO

from . import protocol
from .config import WorkerRuntimeConfig
from .engines import ItemFailure, ModelLoadFailure, build_engine
from .wavio import wav_duration, wav_geometry

UNBATCHED_STAGES = {"separation", "diarization", "vad"}
VAD_PARAM_KEYS = ("frame_ms", "hop_ms", "threshold_dbfs", "hangover_ms")


def _path_field(record: dict[str, Any], name: str) -> str:
    value = record.get(name)
    if not isinstance(value, str) or not value:
        raise ValueError(f"request needs a non-empty string {name!r}")
    return value


def _batch_items(record: dict[str, Any], max_batch: int) -> list[dict[str, Any]]:
    items = record.get("items")
    if not isinstance(items, list):
        raise ValueError("request needs an 'items' list")
    if len(items) > max_batch:
        raise ValueError(f"batch of {len(items)} exceeds max_batch {max_batch}")
    for i, item in enumerate(items):
        if not isinstance(item, dict):
            raise ValueError(f"items[{i}] must be an object")
        if not isinstance(item.get("segment_id"), str):
            raise ValueError(f"items[{i}] needs a string segment_id")
        _path_field(item, "audio_path")
    return items


class WorkerServer:
    def __init__(self, cfg: WorkerRuntimeConfig, engine_factory=build_engine):
        self.cfg = cfg
        self.max_batch = 1 if cfg.stage in UNBATCHED_STAGES else cfg.batch_size
        self._engine_factory = engine_factory
        self._engine = None
        self._load_failure: str | None = None
        self._greeted = False

    def reset_session(self) -> None:
        """A new connection starts before its own hello, like a fresh spawn."""
        self._greeted = False

    def handle_line(self, line: bytes) -> bytes:
        try:
            record = protocol.decode_request(line)
        except protocol.RequestUndecodable as exc:
            return protocol.encode_response(protocol.error(0, str(exc)))
        rid = protocol.request_id(record)
        if rid is None:
            return protocol.encode_response(protocol.error(0, "missing integer id"))
        try:
            response = self._dispatch(rid, record)
        except Exception as exc:  # never die on a bad request
            response = protocol.error(rid, f"{type(exc).__name__}: {exc}")
        return protocol.encode_response(response)

    def _dispatch(self, rid: int, record: dict[str, Any]) -> dict[str, Any]:
        op = record.get("op")
        if op == "hello":
            return self._hello(rid, record)
        if not self._greeted:
            return protocol.error(rid, f"hello must precede {op!r}")
        served = protocol.STAGE_OPS[self.cfg.stage]
        if op != served:
            return protocol.error(
                rid, f"stage {self.cfg.stage!r} serves op {served!r}, got {op!r}"
            )
        handler = {
            "separate": self._separate,
            "diarize": self._diarize,
            "vad": self._vad,
            "transcribe_batch": self._transcribe,
            "score_batch": self._score,
        }[op]
        return handler(rid, record)

    def _hello(self, rid: int, record: dict[str, Any]) -> dict[str, Any]:
        version = record.get("version")
        if version != protocol.PROTOCOL_VERSION:
            return protocol.error(
                rid,
                f"unsupported protocol version {version!r}; "
                f"worker speaks version {protocol.PROTOCOL_VERSION}",
            )
        if self._engine is None and self._load_failure is None:
            try:
                self._engine = self._engine_factory(self.cfg)
            except ModelLoadFailure as exc:
                self._load_failure = str(exc)
            except Exception as exc:
                self._load_failure = f"{type(exc).__name__}: {exc}"
        if self._load_failure is not None:
            return protocol.error(rid, f"model load failed: {self._load_failure}")
        self._greeted = True
        languages = list(getattr(self._engine, "languages", None) or [])
        return protocol.ok(
            rid,
            stage=self.cfg.stage,
            version=protocol.PROTOCOL_VERSION,
            capabilities={"max_batch": self.max_batch, "languages": languages},
        )

    def _separate(self, rid: int, record: dict[str, Any]) -> dict[str, Any]:
        in_path = _path_field(record, "audio_path")
        out_path = _path_field(record, "output_path")
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        produced = self._engine.separate(in_path, out_path)
        if wav_geometry(produced) != wav_geometry(in_path):
            raise RuntimeError("separated stem does not match input geometry")
        return protocol.ok(rid, audio_path=produced)

    def _diarize(self, rid: int, record: dict[str, Any]) -> dict[str, Any]:
        path = _path_field(record, "audio_path")
        duration = wav_duration(path)
        turns = []
        for start, end, speaker in self._engine.diarize(path):
            start, end = _clamped_span(start, end, duration)
            if start is not None and speaker:
                turns.append({"start_s": start, "end_s": end, "speaker": str(speaker)})
        turns.sort(key=lambda t: (t["start_s"], t["end_s"], t["speaker"]))
        return protocol.ok(rid, turns=turns)

    def _vad(self, rid: int, record: dict[str, Any]) -> dict[str, Any]:
        path = _path_field(record, "audio_path")
        duration = wav_duration(path)
        params = {k: record[k] for k in VAD_PARAM_KEYS if k in record}
        chunks = []
        floor = 0.0
        for start, end in sorted(self._engine.detect(path, params)):
            start, end = _clamped_span(max(start, floor), end, duration)
            if start is not None:
                chunks.append({"start_s": start, "end_s": end})
                floor = end
        return protocol.ok(rid, chunks=chunks)

    def _transcribe(self, rid: int, record: dict[str, Any]) -> dict[str, Any]:
        items = _batch_items(record, self.max_batch)
        results = self._aligned(items, self._engine.transcribe(items))
        rendered = []
        for item, result in zip(items, results):
            if isinstance(result, ItemFailure):
                rendered.append({"segment_id": item["segment_id"], "error": result.detail})
                continue
            confidence = float(result["language_confidence"])
            if not math.isfinite(confidence):
                rendered.append(
                    {"segment_id": item["segment_id"], "error": "non-finite confidence"}
                )
                continue
            rendered.append(
                {
                    "segment_id": item["segment_id"],
                    "transcript": str(result["transcript"]),
                    "language": str(result["language"]),
                    "language_confidence": min(1.0, max(0.0, confidence)),
                }
            )
        return protocol.ok(rid, results=rendered)

    def _score(self, rid: int, record: dict[str, Any]) -> dict[str, Any]:
        items = _batch_items(record, self.max_batch)
        results = self._aligned(items, self._engine.score(items))
        rendered = []
        for item, result in zip(items, results):
            if isinstance(result, ItemFailure):
                rendered.append({"segment_id": item["segment_id"], "error": result.detail})
            elif not math.isfinite(float(result)):
                rendered.append({"segment_id": item["segment_id"], "error": "non-finite score"})
            else:
                rendered.append({"segment_id": item["segment_id"], "score": float(result)})
        return protocol.ok(rid, results=rendered)

    @staticmethod
    def _aligned(items: list, results: list) -> list:
        if len(results) != len(items):
            raise RuntimeError(
                f"engine returned {len(results)} results for {len(items)} items"
            )
        return results


def _clamped_span(
    start: float, end: float, duration: float
) -> tuple[float, float] | tuple[None, None]:
    """Clamp a span into [0, duration]; (None, None) when nothing remains."""
    start, end = float(start), float(end)
    if not (math.isfinite(start) and math.isfinite(end)):
        return None, None
    start, end = max(start, 0.0), min(end, duration)
    if end - start <= 0.0:
        return None, None
    return start, end


def serve_stream(server: WorkerServer, reader: BinaryIO, writer: BinaryIO) -> None:
    server.reset_session()
    while True:
        line = reader.readline()
        if not line.endswith(b"\n"):
            return  # EOF, possibly mid-line
        writer.write(server.handle_line(line[:-1]))
        writer.flush()


def serve_tcp(server: WorkerServer, host: str, port: int) -> None:
    listener = socket.create_server((host, port))
    print(f"LISTENING {listener.getsockname()[1]}", flush=True)
    while True:
        client, _ = listener.accept()
        with client, client.makefile("rb") as reader, client.makefile("wb") as writer:
            try:
                serve_stream(server, reader, writer)
            except OSError:
                pass


def serve_stdio(server: WorkerServer) -> None:
    serve_stream(server, sys.stdin.buffer, sys.stdout.buffer)
