"""Protocol conformance, driven through real worker processes.

Every test runs the fake (dependency-free) engines; what is under test
is the serve loop: framing, handshake, error discipline, batching, and
the stage output contracts the host pipeline will enforce.
"""

import importlib.util
import json
import socket
import wave

import pytest

from workerharness import WorkerClient, write_tone_wav

STAGES = ("separation", "diarization", "vad", "transcription", "scoring")


def frames_and_rate(path):
    with wave.open(str(path), "rb") as wav:
        return wav.getnframes(), wav.getframerate()


class TestHandshake:
    @pytest.mark.parametrize("stage", STAGES)
    def test_hello_shape(self, client, stage):
        reply = client(stage).hello(rid=7)
        assert reply["id"] == 7
        assert reply["status"] == "ok"
        assert reply["stage"] == stage
        assert reply["version"] == 1
        caps = reply["capabilities"]
        assert isinstance(caps["max_batch"], int) and caps["max_batch"] >= 1
        assert isinstance(caps["languages"], list)

    def test_version_mismatch_refused(self, client):
        reply = client("vad").hello(version=99)
        assert reply["status"] == "error"
        assert "version" in reply["error_detail"]

    def test_unbatched_stage_advertises_batch_one(self, client):
        reply = client("vad", "--batch", "16").hello()
        assert reply["capabilities"]["max_batch"] == 1

    def test_batch_flag_reaches_capabilities(self, client):
        reply = client("transcription", "--batch", "5").hello()
        assert reply["capabilities"]["max_batch"] == 5

    def test_op_before_hello_refused(self, client, burst_wav):
        worker = client("vad")
        reply = worker.send({"id": 1, "op": "vad", "audio_path": str(burst_wav)})
        assert reply["status"] == "error"
        assert "hello" in reply["error_detail"]
        assert worker.hello(rid=2)["status"] == "ok"


class TestErrorDiscipline:
    def test_garbage_line_answered_with_id_zero(self, client):
        worker = client("vad")
        reply = worker.send_raw(b"this is not json\n")
        assert reply["id"] == 0
        assert reply["status"] == "error"
        assert reply["error_detail"]
        assert worker.hello()["status"] == "ok"

    def test_bare_newline_answered_with_id_zero(self, client):
        assert client("vad").send_raw(b"\n")["id"] == 0

    def test_non_object_answered_with_id_zero(self, client):
        assert client("vad").send_raw(b"[1, 2]\n")["id"] == 0

    @pytest.mark.parametrize("bad_id", [None, "3", True, 1.5])
    def test_unusable_id_answered_with_id_zero(self, client, bad_id):
        reply = client("vad").send({"id": bad_id, "op": "hello", "version": 1})
        assert reply["id"] == 0
        assert reply["status"] == "error"

    def test_unknown_op_echoes_id(self, client):
        worker = client("vad")
        worker.hello()
        reply = worker.send({"id": 2, "op": "summon"})
        assert reply["id"] == 2
        assert reply["status"] == "error"

    def test_wrong_op_for_stage_refused(self, client, burst_wav):
        worker = client("vad")
        worker.hello()
        reply = worker.send(
            {"id": 2, "op": "separate", "audio_path": str(burst_wav), "output_path": "x"}
        )
        assert reply["status"] == "error"
        assert "vad" in reply["error_detail"]

    def test_missing_field_is_request_level_error(self, client, burst_wav, tmp_path):
        worker = client("separation")
        worker.hello()
        reply = worker.send({"id": 2, "op": "separate", "audio_path": str(burst_wav)})
        assert reply["id"] == 2
        assert reply["status"] == "error"
        assert "output_path" in reply["error_detail"]
        good = worker.send(
            {
                "id": 3,
                "op": "separate",
                "audio_path": str(burst_wav),
                "output_path": str(tmp_path / "sep.wav"),
            }
        )
        assert good["status"] == "ok"

    def test_ids_are_echoed_not_enforced(self, client):
        worker = client("diarization")
        assert worker.hello(rid=5)["id"] == 5
        reply = worker.send({"id": 3, "op": "summon"})
        assert reply["id"] == 3


class TestStageContracts:
    def test_separation_preserves_geometry(self, client, burst_wav, tmp_path):
        worker = client("separation")
        worker.hello()
        out_path = tmp_path / "deep" / "separated.wav"
        reply = worker.send(
            {
                "id": 2,
                "op": "separate",
                "audio_path": str(burst_wav),
                "output_path": str(out_path),
            }
        )
        assert reply["status"] == "ok"
        assert reply["audio_path"] == str(out_path)
        assert frames_and_rate(out_path) == frames_and_rate(burst_wav)

    def test_diarization_turns_within_bounds(self, client, burst_wav):
        worker = client("diarization")
        worker.hello()
        reply = worker.send(
            {
                "id": 2,
                "op": "diarize",
                "audio_path": str(burst_wav),
                "source_path": str(burst_wav),
            }
        )
        assert reply["status"] == "ok"
        turns = reply["turns"]
        assert turns, "expected at least one turn on voiced audio"
        for turn in turns:
            assert 0.0 <= turn["start_s"] < turn["end_s"] <= 8.0
            assert turn["speaker"]
        starts = [t["start_s"] for t in turns]
        assert starts == sorted(starts)

    def test_vad_chunks_sorted_non_overlapping(self, client, burst_wav):
        worker = client("vad")
        worker.hello()
        reply = worker.send(
            {
                "id": 2,
                "op": "vad",
                "audio_path": str(burst_wav),
                "frame_ms": 30,
                "hop_ms": 10,
                "threshold_dbfs": -40.0,
                "hangover_ms": 300,
            }
        )
        assert reply["status"] == "ok"
        chunks = reply["chunks"]
        assert chunks, "expected voiced chunks on tone audio"
        previous_end = 0.0
        for chunk in chunks:
            assert previous_end <= chunk["start_s"] < chunk["end_s"] <= 8.0
            previous_end = chunk["end_s"]
        assert chunks[0]["start_s"] == pytest.approx(1.0, abs=0.05)
        assert chunks[-1]["end_s"] == pytest.approx(7.0, abs=0.05)

    def test_vad_silence_empty(self, client, silence_wav):
        worker = client("vad")
        worker.hello()
        reply = worker.send({"id": 2, "op": "vad", "audio_path": str(silence_wav)})
        assert reply == {"id": 2, "status": "ok", "chunks": []}

    def test_transcription_results_aligned(self, client, burst_wav, silence_wav):
        worker = client("transcription")
        worker.hello()
        items = [
            {"segment_id": f"seg-{i}", "audio_path": str(path), "start_s": 0.0, "end_s": 1.0}
            for i, path in enumerate([burst_wav, silence_wav, burst_wav])
        ]
        reply = worker.send({"id": 2, "op": "transcribe_batch", "items": items})
        assert reply["status"] == "ok"
        results = reply["results"]
        assert [r["segment_id"] for r in results] == ["seg-0", "seg-1", "seg-2"]
        for result in results:
            assert result["transcript"]
            assert result["language"] == "en"
            assert 0.0 <= result["language_confidence"] <= 1.0

    def test_transcription_error_marker_isolated(self, client, burst_wav, tmp_path):
        worker = client("transcription")
        worker.hello()
        items = [
            {"segment_id": "good-1", "audio_path": str(burst_wav)},
            {"segment_id": "bad", "audio_path": str(tmp_path / "missing.wav")},
            {"segment_id": "good-2", "audio_path": str(burst_wav)},
        ]
        reply = worker.send({"id": 2, "op": "transcribe_batch", "items": items})
        results = reply["results"]
        assert "error" in results[1] and results[1]["segment_id"] == "bad"
        assert results[0]["transcript"] and results[2]["transcript"]

    def test_scoring_scores_finite(self, client, burst_wav):
        worker = client("scoring")
        worker.hello()
        items = [{"segment_id": "s0", "audio_path": str(burst_wav)}]
        reply = worker.send({"id": 2, "op": "score_batch", "items": items})
        result = reply["results"][0]
        assert result["segment_id"] == "s0"
        assert isinstance(result["score"], float)
        assert 1.0 <= result["score"] <= 5.0

    def test_scoring_unreadable_item_marked(self, client, tmp_path):
        worker = client("scoring")
        worker.hello()
        items = [{"segment_id": "s0", "audio_path": str(tmp_path / "nope.wav")}]
        reply = worker.send({"id": 2, "op": "score_batch", "items": items})
        assert "error" in reply["results"][0]

    def test_oversized_batch_refused(self, client, burst_wav):
        worker = client("transcription", "--batch", "2")
        worker.hello()
        items = [
            {"segment_id": f"s{i}", "audio_path": str(burst_wav)} for i in range(3)
        ]
        reply = worker.send({"id": 2, "op": "transcribe_batch", "items": items})
        assert reply["status"] == "error"
        assert "batch" in reply["error_detail"]

    @pytest.mark.parametrize(
        "record",
        [
            {"id": 2, "op": "transcribe_batch", "items": "not a list"},
            {"id": 2, "op": "transcribe_batch", "items": [17]},
            {"id": 2, "op": "transcribe_batch", "items": [{"audio_path": "x"}]},
            {"id": 2, "op": "transcribe_batch", "items": [{"segment_id": "a"}]},
        ],
    )
    def test_malformed_batch_items_refused(self, client, record):
        worker = client("transcription")
        worker.hello()
        reply = worker.send(record)
        assert reply["id"] == 2
        assert reply["status"] == "error"


class TestModelLoadFailure:
    @pytest.mark.skipif(
        importlib.util.find_spec("faster_whisper") is not None,
        reason="exercises the missing-dependency path",
    )
    def test_reported_in_hello_and_not_retried_as_ok(self):
        with WorkerClient("--stage", "transcription", "--engine", "real") as worker:
            reply = worker.hello()
            assert reply["status"] == "error"
            assert "model load failed" in reply["error_detail"]
            follow_up = worker.send({"id": 2, "op": "transcribe_batch", "items": []})
            assert follow_up["status"] == "error"
            assert "hello" in follow_up["error_detail"]
            again = worker.hello(rid=3)
            assert again["status"] == "error"


class TestTcpTransport:
    def test_serves_and_resets_per_connection(self, burst_wav):
        with WorkerClient(
            "--stage", "vad", "--engine", "fake", "--listen", "127.0.0.1:0"
        ) as worker:
            banner = worker.proc.stdout.readline().decode()
            assert banner.startswith("LISTENING ")
            port = int(banner.split()[1])

            def roundtrip(sock, record):
                sock.sendall(json.dumps(record).encode() + b"\n")
                buf = b""
                while not buf.endswith(b"\n"):
                    buf += sock.recv(4096)
                return json.loads(buf)

            with socket.create_connection(("127.0.0.1", port), timeout=10) as conn:
                assert roundtrip(conn, {"id": 1, "op": "hello", "version": 1})["status"] == "ok"
                reply = roundtrip(
                    conn, {"id": 2, "op": "vad", "audio_path": str(burst_wav)}
                )
                assert reply["status"] == "ok" and reply["chunks"]

            # A fresh connection starts before its own hello, like a fresh spawn.
            with socket.create_connection(("127.0.0.1", port), timeout=10) as conn:
                reply = roundtrip(
                    conn, {"id": 1, "op": "vad", "audio_path": str(burst_wav)}
                )
                assert reply["status"] == "error"
                assert "hello" in reply["error_detail"]
                assert roundtrip(conn, {"id": 2, "op": "hello", "version": 1})["status"] == "ok"
            worker.proc.kill()


def test_zero_length_file_yields_no_turns(client, tmp_path):
    empty = write_tone_wav(tmp_path / "empty.wav", [], 0.0)
    worker = client("diarization")
    worker.hello()
    reply = worker.send({"id": 2, "op": "diarize", "audio_path": str(empty)})
    assert reply == {"id": 2, "status": "ok", "turns": []}
