"""Stage backends behind one engine-facing API.

The orchestrator hands each backend in-memory audio plus an ItemContext;
in-process stub backends compute directly on the buffer, while remote
backends materialize WAV files into the run-scoped exchange directory and
speak the wire protocol. Remote responses are validated here, so a faulty
worker surfaces as ProtocolViolation / WorkerCrash / Timeout on the item
being processed, never as engine state corruption.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from ..audio import AudioBuffer, decode, encode_wav
from ..errors import BackendError, ConnectFailed, PartialBatch, ProtocolViolation
from ..filtering import AsrResult, QualityScore
from ..segmenter import SpeakerTurn, VadChunk
from . import protocol, stubs, transport
from .stubs import EnergyVadParams


@dataclass(frozen=True)
class ItemContext:
    """Where one source item's exchange files live."""

    run_id: str
    item_id: str
    source_path: Path
    exchange_root: Path

    @property
    def item_dir(self) -> Path:
        return self.exchange_root / self.run_id / self.item_id


@dataclass(frozen=True)
class SegmentAudio:
    """One segment of an item, as batch ops consume it."""

    segment_id: str
    span_index: int
    buffer: AudioBuffer
    start_s: float
    end_s: float


def _materialize(ctx: ItemContext, name: str, buf: AudioBuffer) -> Path:
    path = ctx.item_dir / f"{name}.wav"
    if not path.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_wav(buf))
    return path


def _batches(items: list, size: int) -> list[list]:
    return [items[i : i + size] for i in range(0, len(items), size)]


class SeparationBackend:
    def separate(self, ctx: ItemContext, buf: AudioBuffer) -> AudioBuffer:
        raise NotImplementedError

    def close(self) -> None:
        pass


class DiarizationBackend:
    def diarize(self, ctx: ItemContext, buf: AudioBuffer) -> list[SpeakerTurn]:
        raise NotImplementedError

    def close(self) -> None:
        pass


class VadBackend:
    def detect(self, ctx: ItemContext, buf: AudioBuffer) -> list[VadChunk]:
        raise NotImplementedError

    def close(self) -> None:
        pass


class AsrBackend:
    def transcribe(self, ctx: ItemContext, items: list[SegmentAudio]) -> list[AsrResult]:
        raise NotImplementedError

    def close(self) -> None:
        pass


class ScoringBackend:
    def score(self, ctx: ItemContext, items: list[tuple[str, AudioBuffer]]) -> list[QualityScore]:
        raise NotImplementedError

    def close(self) -> None:
        pass


class StubSeparation(SeparationBackend):
    def separate(self, ctx: ItemContext, buf: AudioBuffer) -> AudioBuffer:
        return stubs.separate_passthrough(buf)


class StubDiarization(DiarizationBackend):
    def diarize(self, ctx: ItemContext, buf: AudioBuffer) -> list[SpeakerTurn]:
        return stubs.diarize_sidecar(buf, ctx.source_path)


class StubVad(VadBackend):
    def __init__(self, params: EnergyVadParams = EnergyVadParams()):
        self.params = params

    def detect(self, ctx: ItemContext, buf: AudioBuffer) -> list[VadChunk]:
        return stubs.detect_voiced(buf, self.params)


class StubAsr(AsrBackend):
    def transcribe(self, ctx: ItemContext, items: list[SegmentAudio]) -> list[AsrResult]:
        spans = [(it.start_s, it.end_s) for it in items]
        return stubs.transcribe_sidecar(ctx.source_path, spans)


class StubScoring(ScoringBackend):
    def score(self, ctx: ItemContext, items: list[tuple[str, AudioBuffer]]) -> list[QualityScore]:
        return [stubs.score_signal(buf) for _, buf in items]


class _RemoteMixin:
    """Shared connect/identify logic for protocol-speaking backends."""

    expected_stage: str

    def __init__(self, conn: transport.WorkerConnection):
        self.conn = conn
        self._identified = False

    def _connect(self) -> transport.WorkerConnection:
        self.conn.connect()
        if not self._identified:
            if self.conn.stage != self.expected_stage:
                raise ConnectFailed(
                    f"worker {self.conn.name} identifies as stage "
                    f"{self.conn.stage!r}, expected {self.expected_stage!r}"
                )
            self._identified = True
        return self.conn

    def _request(self, op: str, payload: dict) -> dict:
        try:
            return self.conn.request(op, payload)
        except protocol.WorkerReportedError as exc:
            raise BackendError(f"{self.expected_stage} worker error: {exc}") from exc

    def close(self) -> None:
        self.conn.close()


class RemoteSeparation(_RemoteMixin, SeparationBackend):
    expected_stage = "separation"

    def separate(self, ctx: ItemContext, buf: AudioBuffer) -> AudioBuffer:
        self._connect()
        in_path = _materialize(ctx, "standardized", buf)
        out_path = ctx.item_dir / "separated.wav"
        record = self._request(
            "separate",
            {"audio_path": str(in_path), "output_path": str(out_path)},
        )
        got = Path(protocol.parse_audio_path(record))
        try:
            separated = decode(got.read_bytes())
        except Exception as exc:  # any decode fault means the worker broke the contract
            raise ProtocolViolation(f"separated audio at {got} unreadable: {exc}") from exc
        if separated.sample_rate != buf.sample_rate:
            raise ProtocolViolation(
                f"separation changed sample rate {buf.sample_rate} -> {separated.sample_rate}"
            )
        if separated.frame_count != buf.frame_count:
            raise ProtocolViolation(
                f"separation changed frame count {buf.frame_count} -> {separated.frame_count}"
            )
        return separated


class RemoteDiarization(_RemoteMixin, DiarizationBackend):
    expected_stage = "diarization"

    def diarize(self, ctx: ItemContext, buf: AudioBuffer) -> list[SpeakerTurn]:
        self._connect()
        path = _materialize(ctx, "separated", buf)
        record = self._request(
            "diarize",
            {"audio_path": str(path), "source_path": str(ctx.source_path)},
        )
        return protocol.parse_turns(record, buf.duration_s)


class RemoteVad(_RemoteMixin, VadBackend):
    expected_stage = "vad"

    def __init__(self, conn: transport.WorkerConnection, params: EnergyVadParams):
        super().__init__(conn)
        self.params = params

    def detect(self, ctx: ItemContext, buf: AudioBuffer) -> list[VadChunk]:
        self._connect()
        path = _materialize(ctx, "separated", buf)
        record = self._request(
            "vad",
            {
                "audio_path": str(path),
                "frame_ms": self.params.frame_ms,
                "hop_ms": self.params.hop_ms,
                "threshold_dbfs": self.params.threshold_dbfs,
                "hangover_ms": self.params.hangover_ms,
            },
        )
        return protocol.parse_chunks(record, buf.duration_s)


class RemoteAsr(_RemoteMixin, AsrBackend):
    expected_stage = "transcription"

    def transcribe(self, ctx: ItemContext, items: list[SegmentAudio]) -> list[AsrResult]:
        if not items:
            return []
        conn = self._connect()
        by_id: dict[str, AsrResult] = {}
        failures: list[tuple[str, str]] = []
        for batch in _batches(items, conn.max_batch):
            request_items = []
            for it in batch:
                path = _materialize(ctx, f"asr-{it.span_index:05d}", it.buffer)
                request_items.append(
                    {
                        "segment_id": it.segment_id,
                        "audio_path": str(path),
                        "start_s": it.start_s,
                        "end_s": it.end_s,
                        "source_path": str(ctx.source_path),
                    }
                )
            record = self._request("transcribe_batch", {"items": request_items})
            parsed = protocol.parse_batch_results(
                record, [it.segment_id for it in batch], "asr"
            )
            for entry in parsed:
                if "error" in entry:
                    failures.append((entry["segment_id"], entry["error"]))
                else:
                    by_id[entry["segment_id"]] = AsrResult(
                        entry["transcript"], entry["language"], entry["language_confidence"]
                    )
        if failures:
            raise PartialBatch(
                f"{len(failures)} of {len(items)} segments failed transcription",
                results=[by_id.get(it.segment_id) for it in items],
                failures=failures,
            )
        return [by_id[it.segment_id] for it in items]


class RemoteScoring(_RemoteMixin, ScoringBackend):
    expected_stage = "scoring"

    def score(self, ctx: ItemContext, items: list[tuple[str, AudioBuffer]]) -> list[QualityScore]:
        if not items:
            return []
        conn = self._connect()
        by_id: dict[str, QualityScore] = {}
        failures: list[tuple[str, str]] = []
        for batch in _batches(items, conn.max_batch):
            request_items = []
            for label, buf in batch:
                path = _materialize(ctx, f"score-{label}", buf)
                request_items.append({"segment_id": label, "audio_path": str(path)})
            record = self._request("score_batch", {"items": request_items})
            parsed = protocol.parse_batch_results(record, [label for label, _ in batch], "score")
            for entry in parsed:
                if "error" in entry:
                    failures.append((entry["segment_id"], entry["error"]))
                else:
                    by_id[entry["segment_id"]] = QualityScore(entry["score"])
        if failures:
            raise PartialBatch(
                f"{len(failures)} of {len(items)} segments failed scoring",
                results=[by_id.get(label) for label, _ in items],
                failures=failures,
            )
        return [by_id[label] for label, _ in items]


_STUB_BUILDERS = {
    "separation": lambda params: StubSeparation(),
    "diarization": lambda params: StubDiarization(),
    "vad": lambda params: StubVad(params),
    "transcription": lambda params: StubAsr(),
    "scoring": lambda params: StubScoring(),
}

_REMOTE_BUILDERS = {
    "separation": lambda conn, params: RemoteSeparation(conn),
    "diarization": lambda conn, params: RemoteDiarization(conn),
    "vad": lambda conn, params: RemoteVad(conn, params),
    "transcription": lambda conn, params: RemoteAsr(conn),
    "scoring": lambda conn, params: RemoteScoring(conn),
}


def build_backend(
    stage: str,
    descriptor: str,
    *,
    timeout_s: float = transport.DEFAULT_TIMEOUT_S,
    vad_params: EnergyVadParams = EnergyVadParams(),
):
    """Construct one stage backend from its descriptor string.

    Descriptors: ``stub`` (in-process deterministic engine),
    ``subprocess:<command line>`` (spawn a protocol worker),
    ``tcp:<host>:<port>`` (connect to a running protocol worker).
    """
    if stage not in _STUB_BUILDERS:
        raise ValueError(f"unknown stage {stage!r}")
    if descriptor == "stub":
        return _STUB_BUILDERS[stage](vad_params)
    if descriptor.startswith("subprocess:"):
        command = descriptor[len("subprocess:") :]
        conn = transport.subprocess_connection(command, timeout_s)
        return _REMOTE_BUILDERS[stage](conn, vad_params)
    if descriptor.startswith("tcp:"):
        rest = descriptor[len("tcp:") :]
        host, _, port_text = rest.rpartition(":")
        if not host or not port_text.isdigit():
            raise ValueError(f"bad tcp descriptor {descriptor!r}, want tcp:<host>:<port>")
        conn = transport.tcp_connection(host, int(port_text), timeout_s)
        return _REMOTE_BUILDERS[stage](conn, vad_params)
    raise ValueError(
        f"bad backend descriptor {descriptor!r} for stage {stage}: "
        "want 'stub', 'subprocess:<command>', or 'tcp:<host>:<port>'"
    )


@dataclass
class BackendSet:
    """The five stage backends one run uses."""

    separation: SeparationBackend
    diarization: DiarizationBackend
    vad: VadBackend
    transcription: AsrBackend
    scoring: ScoringBackend

    def close(self) -> None:
        for backend in (
            self.separation,
            self.diarization,
            self.vad,
            self.transcription,
            self.scoring,
        ):
            backend.close()


def build_backend_set(
    descriptors: dict[str, str],
    *,
    timeouts: dict[str, float] | None = None,
    vad_params: EnergyVadParams = EnergyVadParams(),
) -> BackendSet:
    """Build all five stage backends from a {stage: descriptor} mapping."""
    timeouts = timeouts or {}
    kwargs = {}
    for stage in ("separation", "diarization", "vad", "transcription", "scoring"):
        descriptor = descriptors.get(stage, "stub")
        kwargs[stage] = build_backend(
            stage,
            descriptor,
            timeout_s=timeouts.get(stage, transport.DEFAULT_TIMEOUT_S),
            vad_params=vad_params,
        )
    return BackendSet(**kwargs)
