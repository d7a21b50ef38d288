"""Reference protocol worker wrapping the built-in stub engines.

Runs one stage over standard streams (default) or a local TCP socket, so
the transport layer can be exercised end to end without any real model.
Fault-injection flags let tests simulate version skew, load failures, and
mid-request worker death.

    python -m speechprep.backends.stub_worker --stage vad
    python -m speechprep.backends.stub_worker --stage scoring --listen 127.0.0.1:0
"""

from __future__ import annotations

import argparse
import os
import socket
import sys
from pathlib import Path
from typing import Any, BinaryIO

from ..audio import decode
from ..errors import ProtocolViolation
from . import protocol, stubs

UNBATCHED_STAGES = {"separation", "diarization", "vad"}


class StubWorker:
    def __init__(self, args: argparse.Namespace):
        self.stage = args.stage
        self.version = args.protocol_version
        self.max_batch = 1 if args.stage in UNBATCHED_STAGES else args.max_batch
        self.crash_on = args.crash_on
        self.hello_error = args.hello_error
        self.greeted = False

    def _maybe_crash(self, path: str) -> None:
        if self.crash_on and self.crash_on in path:
            os._exit(13)

    def handle_line(self, line: bytes) -> dict[str, Any]:
        try:
            record = protocol.decode_record(line)
        except ProtocolViolation as exc:
            return {"id": 0, "status": "error", "error_detail": str(exc)}
        request_id = record.get("id")
        if not isinstance(request_id, int) or isinstance(request_id, bool):
            return {"id": 0, "status": "error", "error_detail": "missing integer id"}
        op = record.get("op")
        try:
            if op == "hello":
                return self._hello(request_id, record)
            if not self.greeted:
                return self._error(request_id, f"hello must precede {op!r}")
            if op == "separate":
                return self._separate(request_id, record)
            if op == "diarize":
                return self._diarize(request_id, record)
            if op == "vad":
                return self._vad(request_id, record)
            if op == "transcribe_batch":
                return self._transcribe(request_id, record)
            if op == "score_batch":
                return self._score(request_id, record)
            return self._error(request_id, f"unknown op {op!r}")
        except Exception as exc:  # never die on a bad request
            return self._error(request_id, f"{type(exc).__name__}: {exc}")

    @staticmethod
    def _error(request_id: int, detail: str) -> dict[str, Any]:
        return {"id": request_id, "status": "error", "error_detail": detail}

    def _hello(self, request_id: int, record: dict[str, Any]) -> dict[str, Any]:
        if self.hello_error:
            return self._error(request_id, self.hello_error)
        engine_version = record.get("version")
        if engine_version != self.version:
            return self._error(
                request_id,
                f"unsupported protocol version {engine_version}; "
                f"worker speaks version {self.version}",
            )
        self.greeted = True
        return {
            "id": request_id,
            "status": "ok",
            "stage": self.stage,
            "version": self.version,
            "capabilities": {"max_batch": self.max_batch, "languages": []},
        }

    def _load(self, path_text: str):
        self._maybe_crash(path_text)
        return decode(Path(path_text).read_bytes())

    def _separate(self, request_id: int, record: dict[str, Any]) -> dict[str, Any]:
        in_path = record["audio_path"]
        out_path = record["output_path"]
        self._maybe_crash(in_path)
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        # Passthrough separation: the vocal stem is the input, bit for bit.
        Path(out_path).write_bytes(Path(in_path).read_bytes())
        return {"id": request_id, "status": "ok", "audio_path": out_path}

    def _diarize(self, request_id: int, record: dict[str, Any]) -> dict[str, Any]:
        buf = self._load(record["audio_path"])
        source = Path(record.get("source_path", record["audio_path"]))
        turns = stubs.diarize_sidecar(buf, source)
        return {
            "id": request_id,
            "status": "ok",
            "turns": [
                {"start_s": t.start_s, "end_s": t.end_s, "speaker": t.speaker_label}
                for t in turns
            ],
        }

    def _vad(self, request_id: int, record: dict[str, Any]) -> dict[str, Any]:
        buf = self._load(record["audio_path"])
        defaults = stubs.EnergyVadParams()
        params = stubs.EnergyVadParams(
            frame_ms=int(record.get("frame_ms", defaults.frame_ms)),
            hop_ms=int(record.get("hop_ms", defaults.hop_ms)),
            threshold_dbfs=float(record.get("threshold_dbfs", defaults.threshold_dbfs)),
            hangover_ms=int(record.get("hangover_ms", defaults.hangover_ms)),
        )
        chunks = stubs.detect_voiced(buf, params)
        return {
            "id": request_id,
            "status": "ok",
            "chunks": [{"start_s": c.start_s, "end_s": c.end_s} for c in chunks],
        }

    def _check_batch(self, items: list) -> None:
        if len(items) > self.max_batch:
            raise ValueError(f"batch of {len(items)} exceeds max_batch {self.max_batch}")

    def _transcribe(self, request_id: int, record: dict[str, Any]) -> dict[str, Any]:
        items = record["items"]
        self._check_batch(items)
        results = []
        for item in items:
            self._maybe_crash(item["audio_path"])
            segment_id = item["segment_id"]
            try:
                source = Path(item.get("source_path", item["audio_path"]))
                span = (float(item.get("start_s", 0.0)), float(item.get("end_s", 1e12)))
                asr = stubs.transcribe_sidecar(source, [span])[0]
            except Exception as exc:
                results.append({"segment_id": segment_id, "error": str(exc)})
                continue
            results.append(
                {
                    "segment_id": segment_id,
                    "transcript": asr.transcript,
                    "language": asr.language,
                    "language_confidence": asr.language_confidence,
                }
            )
        return {"id": request_id, "status": "ok", "results": results}

    def _score(self, request_id: int, record: dict[str, Any]) -> dict[str, Any]:
        items = record["items"]
        self._check_batch(items)
        results = []
        for item in items:
            segment_id = item["segment_id"]
            try:
                buf = self._load(item["audio_path"])
            except Exception as exc:
                results.append({"segment_id": segment_id, "error": str(exc)})
                continue
            results.append(
                {"segment_id": segment_id, "score": stubs.score_signal(buf).value}
            )
        return {"id": request_id, "status": "ok", "results": results}


def serve_stream(worker: StubWorker, reader: BinaryIO, writer: BinaryIO) -> None:
    while True:
        line = reader.readline()
        if not line.endswith(b"\n"):
            return  # EOF, possibly mid-line; a fresh connection starts clean
        response = worker.handle_line(line[:-1])
        writer.write(protocol.encode_record(response))
        writer.flush()


def serve_tcp(worker_args: argparse.Namespace, host: str, port: int) -> None:
    server = socket.create_server((host, port))
    actual_port = server.getsockname()[1]
    print(f"LISTENING {actual_port}", flush=True)
    while True:
        client, _ = server.accept()
        # Fresh protocol state per connection, as with a fresh subprocess.
        worker = StubWorker(worker_args)
        with client, client.makefile("rb") as reader, client.makefile("wb") as writer:
            try:
                serve_stream(worker, reader, writer)
            except OSError:
                pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--stage", required=True, choices=sorted(protocol.STAGES))
    parser.add_argument("--max-batch", type=int, default=16)
    parser.add_argument("--protocol-version", type=int, default=protocol.PROTOCOL_VERSION)
    parser.add_argument(
        "--crash-on",
        default=None,
        help="exit immediately when a request references a path containing this text",
    )
    parser.add_argument(
        "--hello-error",
        default=None,
        help="answer every hello with this error detail (simulates a load failure)",
    )
    parser.add_argument(
        "--listen",
        default=None,
        metavar="HOST:PORT",
        help="serve on a TCP socket instead of standard streams (port 0 picks one)",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.listen:
        host, _, port_text = args.listen.rpartition(":")
        serve_tcp(args, host, int(port_text))
        return 0
    worker = StubWorker(args)
    serve_stream(worker, sys.stdin.buffer, sys.stdout.buffer)
    return 0


if __name__ == "__main__":
    sys.exit(main())
