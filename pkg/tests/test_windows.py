"""Dual-window aggregation, success criterion, and sample construction."""

import numpy as np
import pytest

from affectpipe.core import AffectLabel, Modality
from affectpipe.errors import EmptyWindowError, WindowOutOfRangeError
from affectpipe.preprocess import GROUP_SIZES, FeatureGroupId, compute_bin_features
from affectpipe.windows import (
    WindowConfig,
    aggregate_window,
    build_samples,
    partition,
    rolling_aggregates,
    session_sample_block,
    window_success,
)

from conftest import make_session


class TestAggregateWindow:
    def test_constant_series(self):
        mx, mean, std = aggregate_window(np.full((8, 3), 3.0))
        np.testing.assert_array_equal(mx, 3.0)
        np.testing.assert_array_equal(mean, 3.0)
        np.testing.assert_array_equal(std, 0.0)

    def test_forced_arithmetic(self):
        mx, mean, _ = aggregate_window(np.array([1.0, 2.0, 3.0]))
        assert mx == 3.0 and mean == 2.0

    def test_population_std_closed_form(self):
        # Population std of [1, 2, 3] is sqrt(2/3); cross-check the two-pass way.
        _, mean, std = aggregate_window(np.array([1.0, 2.0, 3.0]))
        assert std == pytest.approx(np.sqrt(2.0 / 3.0), abs=1e-15)
        two_pass = np.sqrt(np.mean((np.array([1.0, 2.0, 3.0]) - mean) ** 2))
        assert std == pytest.approx(two_pass, abs=1e-15)

    def test_empty_window(self):
        with pytest.raises(EmptyWindowError):
            aggregate_window(np.empty((0, 2)))

    def test_zeros_flow_through(self):
        mx, mean, std = aggregate_window(np.array([0.0, 0.0, 6.0]))
        assert mx == 6.0 and mean == 2.0


class TestRollingAggregates:
    @pytest.mark.parametrize("window", [1, 2, 3, 5, 17, 50])
    def test_matches_per_window_oracle(self, rng, window):
        x = rng.normal(0, 2, (50, 4))
        rmax, rmean, rstd = rolling_aggregates(x, window)
        assert rmax.shape == (50 - window + 1, 4)
        for i in range(0, 50 - window + 1, 7):
            mx, mean, std = aggregate_window(x[i: i + window])
            np.testing.assert_array_equal(rmax[i], mx)
            np.testing.assert_allclose(rmean[i], mean, atol=1e-12, rtol=0)
            np.testing.assert_allclose(rstd[i], std, atol=1e-10, rtol=0)

    def test_min_mean_max_ordering_and_std_nonneg(self, rng):
        x = rng.normal(0, 1, (40, 6))
        rmax, rmean, rstd = rolling_aggregates(x, 8)
        assert (rmean <= rmax + 1e-12).all()
        assert (rstd >= 0).all()

    def test_window_too_long(self):
        with pytest.raises(WindowOutOfRangeError):
            rolling_aggregates(np.zeros((4, 1)), 5)


class TestWindowConfig:
    def test_short_window_floor(self):
        with pytest.raises(ValueError):
            WindowConfig(short_s=0.25)

    def test_long_must_cover_short(self):
        with pytest.raises(ValueError):
            WindowConfig(short_s=1.0, long_face_s=0.5, long_body_s=1.0, max_long_s=1.0)

    def test_max_long_must_cover_longs(self):
        with pytest.raises(ValueError):
            WindowConfig(long_face_s=32.0, long_body_s=2.0, max_long_s=16.0)

    def test_non_bin_multiple_rejected(self):
        with pytest.raises(ValueError):
            WindowConfig(long_face_s=0.6, long_body_s=1.0, max_long_s=1.0)


class TestWindowSuccess:
    def test_fully_valid(self):
        session = make_session(8)
        assert window_success(session, 7, 2.0, Modality.FACE)

    def test_seven_of_eight_fails_at_90pct(self):
        session = make_session(8, face_valid=[True] * 7 + [False])
        assert not window_success(session, 7, 2.0, Modality.FACE)

    def test_exactly_90pct_succeeds(self):
        # 36 valid of 40: "at least 90%" admits the boundary.
        valid = [True] * 36 + [False] * 4
        session = make_session(40, face_valid=valid)
        assert window_success(session, 39, 10.0, Modality.FACE)

    def test_out_of_range(self):
        with pytest.raises(WindowOutOfRangeError):
            window_success(make_session(8), 5, 2.0, Modality.BODY)


def _session_config(max_long_s=2.0):
    return WindowConfig(short_s=0.5, long_face_s=1.0, long_body_s=1.0,
                        max_long_s=max_long_s)


class TestBuildSamples:
    def test_sample_count_index_arithmetic(self):
        # 600 s at 0.25 s bins = 2400 bins; 64 s max window = 256 bins;
        # one end-aligned sample per bin the window fits: 2400 - 256 + 1.
        n_bins, maxw = 2400, 256
        assert n_bins - maxw + 1 == 2145
        # Desk-scale check of the same arithmetic.
        session = make_session(40)
        samples = build_samples(session, config=_session_config(max_long_s=4.0))
        assert len(samples) == 40 - 16 + 1

    def test_fully_valid_session_all_confident(self):
        samples = build_samples(make_session(20), config=_session_config())
        assert all(s.face_confident and s.body_confident for s in samples)

    def test_occlusion_burst_confidence_matches_bruteforce(self, rng):
        n = 80
        face_valid = np.ones(n, dtype=bool)
        face_valid[30:42] = False  # a 3 s occlusion burst
        session = make_session(n, face_valid=face_valid)
        config = _session_config(max_long_s=8.0)
        samples = build_samples(session, config=config)
        maxw = 32
        for s in samples:
            window = face_valid[s.end_bin - maxw + 1: s.end_bin + 1]
            assert s.face_confident == (window.sum() / maxw >= 0.9), s.end_bin
        assert {s.face_confident for s in samples} == {True, False}

    def test_labels_come_from_end_bin_and_excluded_dropped(self):
        labels = [AffectLabel.ALERT] * 10 + [AffectLabel.EXCLUDED] * 3 \
            + [AffectLabel.FUSSY] * 7
        session = make_session(20, labels=labels)
        samples = build_samples(session, config=_session_config())
        by_end = {s.end_bin: s.label for s in samples}
        assert set(by_end) == set(range(7, 10)) | set(range(13, 20))
        assert by_end[9] is AffectLabel.ALERT
        assert by_end[13] is AffectLabel.FUSSY

    def test_aggregate_widths(self):
        samples = build_samples(make_session(12), config=_session_config())
        for g, size in GROUP_SIZES.items():
            assert samples[0].groups[g].shape == (6 * size,)

    def test_short_session_yields_no_samples(self):
        assert build_samples(make_session(5), config=_session_config()) == []

    def test_degenerate_short_equals_long(self):
        # With short_s == long_s the short and long aggregate halves coincide.
        config = WindowConfig(short_s=1.0, long_face_s=1.0, long_body_s=1.0,
                              max_long_s=1.0)
        samples = build_samples(make_session(10), config=config)
        for s in samples:
            for g, size in GROUP_SIZES.items():
                np.testing.assert_array_equal(s.groups[g][: 3 * size],
                                              s.groups[g][3 * size:])

    def test_precomputed_features_accepted(self):
        session = make_session(12)
        feats = compute_bin_features(session)
        a = build_samples(session, feats, _session_config())
        b = build_samples(session, config=_session_config())
        for x, y in zip(a, b):
            np.testing.assert_array_equal(
                x.groups[FeatureGroupId.FACE_DISTANCES],
                y.groups[FeatureGroupId.FACE_DISTANCES])

    def test_block_and_object_views_agree(self):
        session = make_session(15, labels=[AffectLabel.ALERT] * 10
                               + [AffectLabel.FUSSY] * 5)
        config = _session_config()
        block = session_sample_block(session, config)
        samples = build_samples(session, config=config)
        assert block.n_samples == len(samples)
        np.testing.assert_array_equal(block.end_bins, [s.end_bin for s in samples])
        np.testing.assert_array_equal(block.labels,
                                      [s.label.value for s in samples])
        for i, s in enumerate(samples):
            for g in FeatureGroupId:
                np.testing.assert_array_equal(block.group_aggregates[g][i],
                                              s.groups[g])


class TestPartition:
    def test_all_confident(self):
        samples = build_samples(make_session(12), config=_session_config())
        confident, total = partition(samples)
        assert confident == total

    def test_none_confident(self):
        session = make_session(12, face_valid=[False] * 12)
        confident, total = partition(build_samples(session, config=_session_config()))
        assert confident == [] and len(total) == 12 - 8 + 1

    def test_mixed_counts_match_oracle(self, rng):
        face_valid = rng.random(60) > 0.3
        session = make_session(60, face_valid=face_valid)
        config = _session_config(max_long_s=4.0)
        samples = build_samples(session, config=config)
        confident, total = partition(samples)
        expected = 0
        for e in range(15, 60):
            window = face_valid[e - 16 + 1: e + 1]
            expected += window.sum() / 16 >= 0.9
        assert len(confident) == expected
        assert len(total) == 45
        assert set(id(s) for s in confident) <= set(id(s) for s in total)
