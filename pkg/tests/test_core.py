"""Label mapping and fixed-rate binning."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from affectpipe.core import (
    AffectLabel,
    CONFIDENCE_THRESHOLD,
    bin_frames,
    map_label,
)
from affectpipe.errors import MixedSessionError, NonMonotonicTimeError

from conftest import body_frame, face_frame


class TestMapLabel:
    def test_crying_merges_into_fussy(self):
        assert map_label("crying") is AffectLabel.FUSSY

    def test_alert_identity(self):
        assert map_label("alert") is AffectLabel.ALERT

    def test_fussy_identity(self):
        assert map_label("fussy") is AffectLabel.FUSSY

    @pytest.mark.parametrize("code", ["drowsy", "sleeping"])
    def test_low_arousal_codes_excluded(self, code):
        assert map_label(code) is AffectLabel.EXCLUDED

    def test_unknown_codes_degrade_to_excluded(self):
        assert map_label("asleep??") is AffectLabel.EXCLUDED
        assert map_label("") is AffectLabel.EXCLUDED

    def test_whitespace_and_case_tolerated(self):
        assert map_label(" Crying\n") is AffectLabel.FUSSY

    @given(st.text(max_size=12))
    def test_total_function(self, raw):
        assert map_label(raw) in AffectLabel


class TestBinFrames:
    def test_mean_of_equal_confidences(self):
        frames = [face_frame(t, confidence=0.9, raw_label="alert")
                  for t in (0.0, 0.10, 0.20)]
        bins = bin_frames(frames)
        assert len(bins) == 1
        assert bins[0].face_conf == pytest.approx(0.9)
        expected = np.mean([f.points for f in frames], axis=0)
        np.testing.assert_array_equal(bins[0].face_points, expected)
        assert bins[0].label is AffectLabel.ALERT

    def test_empty_bin_convention(self):
        # A single frame at 0.30 s: bin 0 exists but is zero-filled.
        bins = bin_frames([face_frame(0.30, confidence=0.8, raw_label="alert")])
        assert len(bins) == 2
        assert bins[0].face_conf == 0.0
        assert not bins[0].face_valid
        np.testing.assert_array_equal(bins[0].face_points, 0.0)
        assert bins[0].label is AffectLabel.EXCLUDED  # no annotated frames
        assert bins[1].face_conf == pytest.approx(0.8)
        assert bins[1].face_valid

    def test_variable_rate_means_match_bruteforce(self, rng):
        # 4 frames in bin 0, 9 frames in bin 1, arbitrary confidences.
        times = np.concatenate([np.sort(rng.uniform(0.0, 0.2499, 4)),
                                np.sort(rng.uniform(0.25, 0.4999, 9))])
        frames = [face_frame(t, confidence=float(rng.uniform(0.3, 1.0)),
                             points=rng.uniform(0, 500, (68, 2)),
                             aus=rng.uniform(0, 5, 17), raw_label="alert")
                  for t in times]
        bins = bin_frames(frames)
        assert len(bins) == 2
        for b, members in ((0, frames[:4]), (1, frames[4:])):
            np.testing.assert_allclose(
                bins[b].face_points, np.mean([f.points for f in members], axis=0),
                rtol=0, atol=0)
            np.testing.assert_allclose(
                bins[b].face_aus, np.mean([f.aus for f in members], axis=0))
            assert bins[b].face_conf == pytest.approx(
                np.mean([f.confidence for f in members]), abs=1e-15)
            assert bins[b].face_frame_count == len(members)

    def test_rebinning_regular_stream_is_identity(self, rng):
        frames = []
        for i in range(8):
            frames.append(face_frame(i * 0.25, confidence=float(rng.uniform(0.3, 1)),
                                     points=rng.uniform(0, 400, (68, 2)),
                                     aus=rng.uniform(0, 5, 17), raw_label="fussy"))
            frames.append(body_frame(i * 0.25, confidence=float(rng.uniform(0.3, 1)),
                                     points=rng.uniform(0, 400, (25, 2)),
                                     raw_label="fussy"))
        first = bin_frames(frames)
        again = bin_frames([
            face_frame(b.bin_index * 0.25, confidence=b.face_conf,
                       points=b.face_points, aus=b.face_aus, raw_label="fussy")
            for b in first
        ] + [
            body_frame(b.bin_index * 0.25, confidence=b.body_conf,
                       points=b.body_points, raw_label="fussy")
            for b in first
        ])
        assert len(again) == len(first)
        for a, b in zip(first, again):
            np.testing.assert_array_equal(a.face_points, b.face_points)
            np.testing.assert_array_equal(a.body_points, b.body_points)
            np.testing.assert_array_equal(a.face_aus, b.face_aus)
            assert a.face_conf == b.face_conf
            assert a.body_conf == b.body_conf
            assert a.label is b.label

    def test_validity_is_strict_at_threshold(self):
        at = bin_frames([face_frame(0.0, confidence=CONFIDENCE_THRESHOLD)])
        above = bin_frames([face_frame(0.0, confidence=CONFIDENCE_THRESHOLD + 1e-9)])
        assert not at[0].face_valid  # boundary confidence is invalid
        assert above[0].face_valid

    def test_no_frame_dropped_or_double_counted(self, rng):
        times = np.sort(rng.uniform(0, 5.0, 137))
        frames = [face_frame(t) for t in times]
        bins = bin_frames(frames)
        assert sum(b.face_frame_count for b in bins) == len(frames)

    def test_boundary_frame_goes_to_later_bin(self):
        bins = bin_frames([face_frame(0.25)])
        assert len(bins) == 2
        assert bins[1].face_frame_count == 1

    def test_majority_label_with_fussy_tiebreak(self):
        frames = [face_frame(0.0, raw_label="alert"),
                  face_frame(0.1, raw_label="fussy"),
                  body_frame(0.05, raw_label="alert"),
                  body_frame(0.15, raw_label="crying")]
        # 2 alert vs 2 fussy (crying maps to fussy): tie resolves to FUSSY.
        assert bin_frames(frames)[0].label is AffectLabel.FUSSY

    def test_majority_label_counts_both_modalities(self):
        frames = [face_frame(0.0, raw_label="fussy"),
                  body_frame(0.05, raw_label="alert"),
                  body_frame(0.1, raw_label="alert")]
        assert bin_frames(frames)[0].label is AffectLabel.ALERT

    def test_unlabeled_bin_is_excluded(self):
        assert bin_frames([face_frame(0.0)])[0].label is AffectLabel.EXCLUDED

    def test_mixed_session_rejected(self):
        with pytest.raises(MixedSessionError):
            bin_frames([face_frame(0.0, session_id="a"),
                        face_frame(0.1, session_id="b")])

    def test_nonmonotonic_time_rejected(self):
        with pytest.raises(NonMonotonicTimeError):
            bin_frames([face_frame(0.2), face_frame(0.1)])

    def test_modalities_have_independent_clocks(self):
        # Face at 0.3 after body at 0.4 is fine; order matters per modality only.
        bins = bin_frames([body_frame(0.4), face_frame(0.3)])
        assert len(bins) == 2
