"""Acceptance gate: the properties a release of this engine must hold.

Each test is one criterion; `pytest -v` prints one pass/fail line per
criterion. Sweeps use fixed seeds so every run measures the same cases,
and each timed criterion asserts its own wall-clock budget.
"""

from __future__ import annotations

import math
import random
import time
from pathlib import Path

import numpy as np
import pytest

from testenv import GOLDEN_DIR, WORKER_CMD
from corpusgen import build_corpus_with_corrupt_file
from speechprep.audio import (
    AudioBuffer,
    LoudnessSpec,
    compute_dbfs,
    resample_length,
    standardize_buffer,
)
from speechprep.backends import protocol
from speechprep.cli import EXIT_OK, main
from speechprep.config import build_config
from speechprep.errors import ProtocolViolation
from speechprep.filtering import (
    AsrResult,
    FilterCandidate,
    FilterPolicy,
    QualityScore,
    quality_gate,
    language_gate,
    quartiles,
    filter_stage,
)
from speechprep.pipeline import run_pipeline
from speechprep.report import ClipRecord, collect_stats, compute_rtf, render_stage_table
from speechprep.segmenter import (
    SpeakerTurn,
    StitchPolicy,
    VadChunk,
    segment_source,
    stitch,
)
from test_segmenter import exhaustive_stitch


def test_acceptance_rtf_formula_reproduction():
    """240.5 wall minutes over 666.94 audio hours is an RTF of 0.00601."""
    rtf = compute_rtf(240.5 * 60.0, 666.94)
    assert abs(rtf - 0.00601) <= 0.00005
    assert f"{rtf:.5f}" == "0.00601"


def test_acceptance_retention_formula_reproduction():
    """Keeping 258.44 of 666.94 source hours renders as 38.75% retention."""
    final = collect_stats("final", [ClipRecord(258.44 * 3600.0)], source_hours=666.94)
    assert final.retention_pct == pytest.approx(38.75, abs=0.01)
    table = render_stage_table(
        [collect_stats("src", [ClipRecord(666.94 * 3600.0)]), final]
    )
    assert "(38.75%)" in table


def test_acceptance_standardization_sweep():
    """1000 randomized buffers: mono 24 kHz out, resample-length formula,
    gain clamped to +/-3 dB, -20 dBFS +/- 1e-4 when unclamped, peak <= 1,
    and re-standardizing an unclamped result is the identity. Under 60 s."""
    t0 = time.monotonic()
    rng = np.random.default_rng(20260818)
    spec = LoudnessSpec()
    rates = [8000, 16000, 22050, 24000, 32000, 44100, 48000]
    checked = unclamped = clamped = 0
    for case in range(1000):
        rate = rates[case % len(rates)]
        channels = 1 + case % 3
        frames = int(rng.integers(rate // 50, rate))
        shape = (frames,) if channels == 1 else (frames, channels)
        # Half the draws sit near the target so the unclamped regime gets
        # real coverage; the rest sweep -80..+1 dBFS to exercise the clamp.
        decade = rng.uniform(-1.2, -0.8) if case % 2 else rng.uniform(-4.0, 0.05)
        samples = rng.standard_normal(shape) * 10.0**decade
        if case % 97 == 0:
            samples = np.zeros(shape)
        result = standardize_buffer(AudioBuffer(samples, rate), spec)
        out = result.buffer

        assert out.sample_rate == 24000
        assert out.channel_count == 1
        assert out.frame_count == resample_length(frames, rate, 24000)
        peak = float(np.max(np.abs(out.samples)))
        assert peak <= 1.0 + 1e-12
        lo, hi = spec.gain_clamp_db
        assert lo - 1e-9 <= result.applied_gain_db <= hi + 1e-9
        if result.silent:
            assert not np.any(out.samples)
            continue
        if lo + 1e-9 < result.applied_gain_db < hi - 1e-9 and peak < 0.999:
            assert abs(compute_dbfs(out) - spec.target_dbfs) <= 1e-4
            again = standardize_buffer(out, spec)
            assert abs(again.applied_gain_db) <= 1e-6
            np.testing.assert_allclose(again.buffer.samples, out.samples, atol=1e-9)
            unclamped += 1
        else:
            clamped += 1
        checked += 1
    assert checked >= 900  # silence is rare by construction
    assert unclamped >= 200 and clamped >= 200  # both regimes exercised
    assert time.monotonic() - t0 < 60.0


def _grid_times(rng: random.Random, n: int, limit: float) -> list[float]:
    ticks = sorted(rng.sample(range(int(limit * 4)), n))
    return [t / 4.0 for t in ticks]


def _random_chunks(rng: random.Random, max_chunks: int, limit: float) -> list[VadChunk]:
    count = rng.randint(0, max_chunks)
    times = _grid_times(rng, 2 * count, limit)
    return [VadChunk(times[2 * i], times[2 * i + 1]) for i in range(count)]


def test_acceptance_segmentation_sweep():
    """1000 randomized (turns, chunks) instances: every output span is
    3-30 s, single-speaker, non-overlapping; greedy stitching equals the
    exhaustive oracle on 1000 instances of <= 10 chunks. Under 120 s."""
    t0 = time.monotonic()
    policy = StitchPolicy()
    rng = random.Random(20260818)

    for _ in range(1000):
        turns = []
        for _ in range(rng.randint(1, 5)):
            a, b = _grid_times(rng, 2, 60.0)
            turns.append(SpeakerTurn(a, b, f"S{rng.randint(0, 2)}"))
        turns.sort(key=lambda t: (t.start_s, t.end_s))
        chunks = _random_chunks(rng, 14, 60.0)
        spans = segment_source(turns, chunks, policy, "sweep")
        for span in spans:
            assert policy.min_s - 1e-9 <= span.duration_s <= policy.max_s + 1e-9
            assert any(t.speaker_label == span.speaker_label for t in turns)
        for left, right in zip(spans, spans[1:]):
            assert left.end_s <= right.start_s + 1e-9

    for _ in range(1000):
        turn = SpeakerTurn(0.0, 60.0, "S0")
        chunks = _random_chunks(rng, 10, 60.0)
        assert stitch(turn, chunks, policy, "") == exhaustive_stitch(turn, chunks, policy)

    assert time.monotonic() - t0 < 120.0


def test_acceptance_filtering_sweep():
    """Quartiles match a sort-based oracle on 10000 random lists of length
    <= 12; gates are monotone in their thresholds; filtering conserves
    segments; and the three boundary cases (confidence 0.80, quality 3.0,
    fence-equal char rate) are all keeps. Under 60 s."""
    t0 = time.monotonic()
    rng = random.Random(20260818)

    for _ in range(10000):
        values = [rng.uniform(0.0, 10.0) for _ in range(rng.randint(1, 12))]
        summary = quartiles(values)
        q1, q3 = np.percentile(values, [25.0, 75.0], method="linear")
        assert math.isclose(summary.q1, q1, abs_tol=1e-9)
        assert math.isclose(summary.q3, q3, abs_tol=1e-9)
        assert summary.lower_fence == pytest.approx(q1 - 1.5 * (q3 - q1))
        assert summary.upper_fence == pytest.approx(q3 + 1.5 * (q3 - q1))

    for _ in range(300):
        asr = AsrResult("words", "en", rng.random())
        score = QualityScore(rng.uniform(1.0, 5.0))
        loose = FilterPolicy(min_language_confidence=0.3, min_quality=2.0)
        strict = FilterPolicy(min_language_confidence=0.8, min_quality=3.5)
        if language_gate(asr, strict) is None:
            assert language_gate(asr, loose) is None
        if quality_gate(score, strict) is None:
            assert quality_gate(score, loose) is None

    for _ in range(200):
        batch = [
            FilterCandidate(
                f"s:{i:05d}",
                f"src{rng.randint(0, 2)}",
                rng.uniform(3.0, 30.0),
                AsrResult("x" * rng.randint(1, 40), rng.choice(["en", "zh", "xx"]), rng.random()),
                QualityScore(rng.uniform(1.0, 5.0)),
            )
            for i in range(rng.randint(0, 25))
        ]
        kept, drops = filter_stage(batch)
        assert len(kept) + len(drops) == len(batch)
        kept_ids = [c.segment_id for c in kept]
        drop_ids = [d.segment_id for d in drops]
        assert set(kept_ids).isdisjoint(drop_ids)
        assert sorted(kept_ids + drop_ids) == sorted(c.segment_id for c in batch)

    # Boundary keeps: exactly-at-threshold values stay in.
    on_conf = FilterCandidate("k:0", "k", 5.0, AsrResult("ten chars!", "en", 0.80), QualityScore(4.0))
    on_quality = FilterCandidate("k:1", "k", 5.0, AsrResult("ten chars!", "en", 0.95), QualityScore(3.0))
    assert language_gate(on_conf.asr, FilterPolicy()) is None
    assert quality_gate(on_quality.quality, FilterPolicy()) is None
    fence_batch = [
        FilterCandidate(f"f:{i}", "f", dur, AsrResult("abcdefghij", "en", 0.9), QualityScore(4.0))
        for i, dur in enumerate([1.0, 2.0, 3.0, 4.0, 7.0])
    ]  # char rates 0.1..0.7 s/char; 0.7 sits exactly on the upper fence
    kept, drops = filter_stage(fence_batch)
    assert len(kept) == 5 and drops == []

    assert time.monotonic() - t0 < 60.0


def test_acceptance_golden_run_parallel_identical(tmp_path, corpus_dir):
    """The fixture corpus yields byte-identical manifest and stage table at
    parallelism 1 and 8, both equal to the frozen goldens. Under 60 s."""
    t0 = time.monotonic()
    golden_manifest = (GOLDEN_DIR / "manifest.jsonl").read_bytes()
    golden_table = (GOLDEN_DIR / "stage_table.txt").read_text(encoding="utf-8")
    outputs = {}
    for workers in (1, 8):
        out = tmp_path / f"p{workers}"
        report, _ = run_pipeline(
            build_config(
                {
                    "input_roots": [str(corpus_dir)],
                    "output_root": str(out),
                    "exchange_root": str(out / "exchange"),
                    "parallelism": workers,
                }
            )
        )
        assert (out / "manifest.jsonl").read_bytes() == golden_manifest
        assert render_stage_table(report.stages) == golden_table
        outputs[workers] = {
            p.relative_to(out): p.read_bytes() for p in sorted(out.glob("*/*/*.wav"))
        }
    assert outputs[1] == outputs[8]
    assert time.monotonic() - t0 < 60.0


def test_acceptance_fault_tolerance(tmp_path):
    """A corrupt source file plus a crashing scoring worker still exit 0;
    only the affected items are quarantined and the report names both.
    Under 60 s."""
    t0 = time.monotonic()
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    build_corpus_with_corrupt_file(corpus)
    out = tmp_path / "out"
    code = main(
        [
            "run",
            "--input", str(corpus),
            "--output", str(out),
            "--exchange_root", str(out / "exchange"),
            "--backend.scoring", f"subprocess:{WORKER_CMD} --stage scoring --crash-on /b/",
        ]
    )
    assert code == EXIT_OK

    import json

    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    failures = {f["item_id"]: f for f in report["failed_items"]}
    assert set(failures) == {"broken", "b"}
    assert failures["broken"]["kind"] == "CorruptContainer"
    assert failures["b"]["kind"] == "WorkerCrash"

    # Unaffected items still produce exactly their golden records.
    golden_lines = (GOLDEN_DIR / "manifest.jsonl").read_text(encoding="utf-8").splitlines()
    expected = [l for l in golden_lines if '"source_id":"b"' not in l]
    produced = (out / "manifest.jsonl").read_text(encoding="utf-8").splitlines()
    assert produced == expected
    assert time.monotonic() - t0 < 60.0


def _fuzz_case(rng: random.Random) -> None:
    """Build one guaranteed-malformed worker record and parse it."""
    kind = rng.randrange(10)
    if kind == 0:  # byte soup that can never be valid JSON
        protocol.decode_record(b"}" + bytes(rng.randrange(256) for _ in range(rng.randrange(40))))
    elif kind == 1:  # valid JSON, wrong shape
        protocol.decode_record(rng.choice(["1", '"x"', "[1,2]", "true", "null", "3.5"]))
    elif kind == 2:  # id echo mismatch
        expected = rng.randrange(1, 10**6)
        protocol.check_response({"id": expected + rng.randrange(1, 99), "status": "ok"}, expected)
    elif kind == 3:  # unknown / mistyped status
        status = rng.choice(["OK", "okay", "", "fail", 7, None, True, ["ok"]])
        protocol.check_response({"id": 5, "status": status}, 5)
    elif kind == 4:  # broken hello capabilities
        bad_batch = rng.choice([0, -3, "many", None, 1.5, True])
        protocol.parse_hello(
            {"stage": "vad", "version": 1, "capabilities": {"max_batch": bad_batch}}
        )
    elif kind == 5:  # turns outside the clip, inverted, or unsorted
        variant = rng.randrange(4)
        turns = {
            0: [{"start_s": 5.0, "end_s": 2.0, "speaker": "S0"}],
            1: [{"start_s": 0.0, "end_s": 10.0 + rng.random() + 1e-3, "speaker": "S0"}],
            2: [{"start_s": 0.0, "end_s": 1.0, "speaker": ""}],
            3: [
                {"start_s": 4.0, "end_s": 5.0, "speaker": "S0"},
                {"start_s": 1.0, "end_s": 2.0, "speaker": "S1"},
            ],
        }[variant]
        protocol.parse_turns({"turns": turns}, 10.0)
    elif kind == 6:  # overlapping or non-numeric chunks
        if rng.random() < 0.5:
            chunks = [
                {"start_s": 0.0, "end_s": 3.0},
                {"start_s": 3.0 - rng.uniform(0.1, 2.0), "end_s": 6.0},
            ]
        else:
            chunks = [{"start_s": "soon", "end_s": 1.0}]
        protocol.parse_chunks({"chunks": chunks}, 10.0)
    elif kind == 7:  # batch length or id misalignment
        if rng.random() < 0.5:
            record = {"results": [{"segment_id": "a", "score": 1.0}]}
            protocol.parse_batch_results(record, ["a", "b"], "score")
        else:
            record = {"results": [{"segment_id": "z", "score": 1.0}]}
            protocol.parse_batch_results(record, ["a"], "score")
    elif kind == 8:  # out-of-range or non-finite numerics
        if rng.random() < 0.5:
            record = {
                "results": [
                    {
                        "segment_id": "a",
                        "transcript": "x",
                        "language": "en",
                        "language_confidence": rng.choice([-0.5, 1.0001, 7.0]),
                    }
                ]
            }
            protocol.parse_batch_results(record, ["a"], "asr")
        else:
            record = {"results": [{"segment_id": "a", "score": rng.choice([math.nan, math.inf])}]}
            protocol.parse_batch_results(record, ["a"], "score")
    else:  # missing required fields
        victim = rng.choice(
            [
                lambda: protocol.check_response({"status": "ok"}, 1),
                lambda: protocol.check_response({"id": 1}, 1),
                lambda: protocol.check_response({"id": 1, "status": "error"}, 1),
                lambda: protocol.parse_hello({"version": 1, "capabilities": {"max_batch": 1}}),
                lambda: protocol.parse_turns({"turns": [{"start_s": 0.0}]}, 10.0),
                lambda: protocol.parse_batch_results({"results": [{}]}, ["a"], "score"),
                lambda: protocol.parse_audio_path({}),
            ]
        )
        victim()


def test_acceptance_protocol_fuzz_ten_thousand():
    """10000 malformed worker records: every one is rejected with
    ProtocolViolation and nothing else escapes. Under 60 s."""
    t0 = time.monotonic()
    rng = random.Random(20260818)
    rejected = 0
    for _ in range(10000):
        with pytest.raises(ProtocolViolation):
            _fuzz_case(rng)
        rejected += 1
    assert rejected == 10000
    assert time.monotonic() - t0 < 60.0
