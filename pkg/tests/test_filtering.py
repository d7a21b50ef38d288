"""Language, quality, and character-rate outlier gates."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from speechprep.errors import EmptyInput, EmptyTranscript
from speechprep.filtering import (
    AsrResult,
    FilterCandidate,
    FilterPolicy,
    QualityScore,
    avg_char_duration,
    filter_stage,
    iqr_outlier_gate,
    language_gate,
    non_whitespace_chars,
    quality_gate,
    quartiles,
)

POLICY = FilterPolicy()

finite_floats = st.floats(
    min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False
)


def make_candidate(
    segment_id="s:00000",
    source_id="s",
    duration_s=5.0,
    text="hello there general",
    language="en",
    confidence=0.95,
    quality=3.5,
) -> FilterCandidate:
    return FilterCandidate(
        segment_id=segment_id,
        source_id=source_id,
        duration_s=duration_s,
        asr=AsrResult(text, language, confidence),
        quality=QualityScore(quality),
    )


class TestQuartiles:
    def test_known_even_list(self):
        # [1,2,3,4]: Q1 at position 0.75 -> 1.75, Q3 at 2.25 -> 3.25.
        s = quartiles([4.0, 1.0, 3.0, 2.0])
        assert s.q1 == pytest.approx(1.75)
        assert s.q3 == pytest.approx(3.25)
        assert s.iqr == pytest.approx(1.5)
        assert s.lower_fence == pytest.approx(1.75 - 2.25)
        assert s.upper_fence == pytest.approx(3.25 + 2.25)

    def test_known_odd_list(self):
        s = quartiles([1.0, 2.0, 3.0, 4.0, 5.0])
        assert (s.q1, s.q3) == (2.0, 4.0)

    def test_single_value(self):
        s = quartiles([7.0])
        assert (s.q1, s.q3, s.iqr) == (7.0, 7.0, 0.0)
        assert (s.lower_fence, s.upper_fence) == (7.0, 7.0)

    def test_empty_rejected(self):
        with pytest.raises(EmptyInput):
            quartiles([])

    @settings(max_examples=300, deadline=None)
    @given(st.lists(finite_floats, min_size=1, max_size=50))
    def test_matches_percentile_oracle(self, values):
        s = quartiles(values)
        q1, q3 = np.percentile(values, [25, 75], method="linear")
        assert s.q1 == pytest.approx(q1, rel=1e-12, abs=1e-9)
        assert s.q3 == pytest.approx(q3, rel=1e-12, abs=1e-9)


class TestGates:
    def test_language_case_insensitive(self):
        assert language_gate(AsrResult("x", "EN", 0.9), POLICY) is None
        assert language_gate(AsrResult("x", "Zh", 0.9), POLICY) is None

    def test_language_disallowed(self):
        rej = language_gate(AsrResult("x", "xx", 0.99), POLICY)
        assert rej.reason == "language"
        assert rej.value == "xx"
        assert rej.threshold == "de,en,fr,ja,ko,zh"

    def test_confidence_boundary_inclusive(self):
        assert language_gate(AsrResult("x", "en", 0.80), POLICY) is None
        rej = language_gate(AsrResult("x", "en", 0.7999), POLICY)
        assert rej.reason == "confidence"
        assert rej.threshold == 0.80

    def test_quality_boundary_inclusive(self):
        assert quality_gate(QualityScore(3.0), POLICY) is None
        rej = quality_gate(QualityScore(2.9999), POLICY)
        assert rej.reason == "quality"
        assert rej.threshold == 3.0

    def test_policy_lowercases_and_validates(self):
        p = FilterPolicy(allowed_languages=frozenset({"EN", "Ja"}))
        assert p.allowed_languages == frozenset({"en", "ja"})
        with pytest.raises(ValueError):
            FilterPolicy(iqr_multiplier=0.0)

    def test_char_counting(self):
        assert non_whitespace_chars("a b\tc\n") == 3
        assert non_whitespace_chars(" \n\t") == 0
        assert avg_char_duration(6.0, "ab cd") == pytest.approx(1.5)
        with pytest.raises(EmptyTranscript):
            avg_char_duration(6.0, "   ")


class TestIqrGate:
    def test_small_samples_keep_everything(self):
        values = [0.01, 5.0, 100.0]  # wild spread, but only three values
        assert iqr_outlier_gate(values, POLICY) == [None, None, None]

    def test_outlier_flagged(self):
        # [0.139..1.57]: Q1=0.142, Q3=0.18, fences [0.085, 0.237].
        values = [0.142, 0.139, 0.146, 0.18, 1.57]
        flags = iqr_outlier_gate(values, POLICY)
        assert [f is None for f in flags] == [True, True, True, True, False]
        assert flags[4].reason == "char_duration_outlier"
        assert flags[4].threshold == pytest.approx(0.18 + 1.5 * (0.18 - 0.142))

    def test_fence_boundary_values_kept(self):
        # [1,2,3,4,7]: Q1=2, Q3=4, fences [-1, 7]; 7 sits ON the fence.
        flags = iqr_outlier_gate([1.0, 2.0, 3.0, 4.0, 7.0], POLICY)
        assert all(f is None for f in flags)

    def test_below_lower_fence(self):
        # [-2,2,3,4,7]: Q1=2, Q3=4 -> fences [-1, 7]; -2 falls below.
        flags = iqr_outlier_gate([-2.0, 2.0, 3.0, 4.0, 7.0], POLICY)
        assert flags[0] is not None and flags[0].reason == "char_duration_outlier"
        assert all(f is None for f in flags[1:])


class TestFilterStage:
    def test_reasons_and_order(self):
        segs = [
            make_candidate("s:00000"),
            make_candidate("s:00001", language="xx"),
            make_candidate("s:00002", confidence=0.5),
            make_candidate("s:00003", quality=2.5),
            make_candidate("s:00004", text="  "),
        ]
        kept, drops = filter_stage(segs, POLICY)
        assert [k.segment_id for k in kept] == ["s:00000"]
        assert {(d.segment_id, d.reason) for d in drops} == {
            ("s:00001", "language"),
            ("s:00002", "confidence"),
            ("s:00003", "quality"),
            ("s:00004", "empty_transcript"),
        }
        assert all(d.stage == "filter" for d in drops)

    def test_iqr_sees_only_survivors_per_source(self):
        # Source A: four tight values and a huge outlier (dropped); the
        # same huge value in source B (three segments) survives untouched.
        segs = [
            make_candidate("a:00000", "a", 2.0, "abcdefghij"),  # 0.2 s/char
            make_candidate("a:00001", "a", 2.1, "abcdefghij"),
            make_candidate("a:00002", "a", 2.2, "abcdefghij"),
            make_candidate("a:00003", "a", 2.3, "abcdefghij"),
            make_candidate("a:00004", "a", 9.0, "ab"),  # 4.5 s/char
            make_candidate("b:00000", "b", 9.0, "ab"),
            make_candidate("b:00001", "b", 2.0, "abcdefghij"),
            make_candidate("b:00002", "b", 2.1, "abcdefghij"),
        ]
        kept, drops = filter_stage(segs, POLICY)
        assert [d.segment_id for d in drops] == ["a:00004"]
        assert {k.segment_id for k in kept} == {
            "a:00000", "a:00001", "a:00002", "a:00003",
            "b:00000", "b:00001", "b:00002",
        }

    def test_low_quality_segment_never_reaches_iqr(self):
        # The outlier-duration segment fails quality first, so the IQR gate
        # sees a clean distribution and keeps the rest.
        segs = [
            make_candidate("a:00000", "a", 2.0, "abcdefghij"),
            make_candidate("a:00001", "a", 2.1, "abcdefghij"),
            make_candidate("a:00002", "a", 2.2, "abcdefghij"),
            make_candidate("a:00003", "a", 2.3, "abcdefghij"),
            make_candidate("a:00004", "a", 9.0, "ab", quality=1.0),
        ]
        kept, drops = filter_stage(segs, POLICY)
        assert [(d.segment_id, d.reason) for d in drops] == [("a:00004", "quality")]
        assert len(kept) == 4

    def test_empty_input(self):
        assert filter_stage([], POLICY) == ([], [])

    @settings(max_examples=200, deadline=None)
    @given(data=st.data())
    def test_conservation(self, data):
        n = data.draw(st.integers(0, 30))
        segs = []
        for i in range(n):
            segs.append(
                make_candidate(
                    segment_id=f"s:{i:05d}",
                    source_id=data.draw(st.sampled_from(["a", "b"])),
                    duration_s=data.draw(st.floats(0.5, 30.0)),
                    text=data.draw(st.sampled_from(["hello world", "hi", "x" * 40, " "])),
                    language=data.draw(st.sampled_from(["en", "zh", "xx"])),
                    confidence=data.draw(st.floats(0.0, 1.0)),
                    quality=data.draw(st.floats(1.0, 5.0)),
                )
            )
        kept, drops = filter_stage(segs, POLICY)
        assert len(kept) + len(drops) == len(segs)
        kept_ids = [k.segment_id for k in kept]
        drop_ids = [d.segment_id for d in drops]
        assert set(kept_ids) | set(drop_ids) == {s.segment_id for s in segs}
        assert not set(kept_ids) & set(drop_ids)
        # Kept segments stay in input order.
        assert kept_ids == [s.segment_id for s in segs if s.segment_id in set(kept_ids)]
