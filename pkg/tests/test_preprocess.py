"""Landmark normalization and the four feature groups."""

import numpy as np
import pytest

from affectpipe.core import AffectLabel
from affectpipe.errors import DegenerateScaleError, LengthMismatchError
from affectpipe.preprocess import (
    GROUP_SIZES,
    RETAINED_BODY_INDICES,
    FeatureGroupId,
    center_landmarks,
    compute_bin_features,
    landmark_speeds,
    pairwise_distances,
    scale_landmarks,
    session_feature_matrices,
)

from conftest import default_body_points, make_session


class TestCenter:
    def test_self_subtraction(self):
        pts = np.full((4, 2), 5.0)
        np.testing.assert_array_equal(center_landmarks(pts, 0), 0.0)

    def test_direct_subtraction(self):
        out = center_landmarks(np.array([[1.0, 1.0], [4.0, 5.0]]), 0)
        np.testing.assert_array_equal(out, [[0.0, 0.0], [3.0, 4.0]])

    def test_centering_is_idempotent(self, rng):
        pts = rng.uniform(0, 500, (68, 2))
        once = center_landmarks(pts, 30)
        np.testing.assert_array_equal(center_landmarks(once, 30), once)

    def test_anchor_out_of_range(self):
        with pytest.raises(IndexError):
            center_landmarks(np.zeros((3, 2)), 3)


class TestScale:
    def test_identity(self):
        pts = np.array([[2.0, 4.0]])
        np.testing.assert_array_equal(scale_landmarks(pts, 1.0), pts)

    def test_direct_division(self):
        np.testing.assert_array_equal(
            scale_landmarks(np.array([[2.0, 4.0]]), 2.0), [[1.0, 2.0]])

    def test_zero_scale_is_degenerate(self):
        with pytest.raises(DegenerateScaleError):
            scale_landmarks(np.ones((2, 2)), 0.0)


class TestPairwiseDistances:
    def test_3_4_5_triangle(self):
        np.testing.assert_array_equal(
            pairwise_distances(np.array([[0.0, 0.0], [3.0, 4.0]])), [5.0])

    def test_identical_points(self):
        out = pairwise_distances(np.full((5, 2), 2.5))
        np.testing.assert_array_equal(out, np.zeros(10))

    def test_matches_double_loop_oracle(self, rng):
        pts = rng.uniform(-3, 3, (13, 2))
        got = pairwise_distances(pts)
        assert got.shape == (78,)
        expected = []
        for i in range(13):
            for j in range(i + 1, 13):
                expected.append(np.sqrt(((pts[i] - pts[j]) ** 2).sum()))
        np.testing.assert_allclose(got, expected, rtol=0, atol=1e-15)


class TestSpeeds:
    def test_stationary(self):
        pts = np.ones((5, 2))
        np.testing.assert_array_equal(landmark_speeds(pts, pts), 0.0)

    def test_pythagorean(self):
        out = landmark_speeds(np.array([[0.0, 0.0]]), np.array([[3.0, 4.0]]))
        np.testing.assert_array_equal(out, [5.0])

    def test_missing_previous_means_zero(self):
        np.testing.assert_array_equal(landmark_speeds(None, np.ones((4, 2))), 0.0)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            landmark_speeds(np.zeros((3, 2)), np.zeros((4, 2)))


class TestComputeBinFeatures:
    def test_group_shapes_fixed(self):
        feats = compute_bin_features(make_session(4))
        assert len(feats) == 4
        for bf in feats:
            for g, size in GROUP_SIZES.items():
                assert bf.groups[g].shape == (size,)

    def test_all_zero_face_bin_invalid_with_zero_features(self):
        session = make_session(2, face_valid=[True, False])
        feats = compute_bin_features(session)
        assert not feats[1].face_valid
        np.testing.assert_array_equal(feats[1].groups[FeatureGroupId.FACE_DISTANCES], 0.0)
        np.testing.assert_array_equal(feats[1].groups[FeatureGroupId.FACE_AUS], 0.0)
        assert feats[1].body_valid

    def test_first_bin_speeds_zero(self):
        feats = compute_bin_features(make_session(3))
        np.testing.assert_array_equal(feats[0].groups[FeatureGroupId.BODY_SPEEDS], 0.0)

    def test_rigid_translation_between_bins(self, rng):
        # The whole body translates 40 px between bins: neck-centering removes
        # it, so distances are unchanged and speeds are zero.
        base = default_body_points(rng)
        session = make_session(2)
        session.bins[0].body_points = base
        session.bins[1].body_points = base + np.array([40.0, -25.0])
        feats = compute_bin_features(session)
        d0 = feats[0].groups[FeatureGroupId.BODY_DISTANCES]
        d1 = feats[1].groups[FeatureGroupId.BODY_DISTANCES]
        np.testing.assert_allclose(d1, d0, rtol=0, atol=1e-12)
        np.testing.assert_allclose(
            feats[1].groups[FeatureGroupId.BODY_SPEEDS], 0.0, atol=1e-12)

    def test_scale_invariance_doubling_pixels(self, rng):
        session = make_session(3, seed=7)
        doubled = make_session(3, seed=7)
        for b in doubled.bins:
            b.face_points = b.face_points * 2.0
            b.body_points = b.body_points * 2.0
        f1 = compute_bin_features(session)
        f2 = compute_bin_features(doubled)
        for a, b in zip(f1, f2):
            for g in FeatureGroupId:
                np.testing.assert_allclose(b.groups[g], a.groups[g],
                                           rtol=1e-9, atol=1e-12)

    def test_translation_invariance_bitwise(self):
        # Integer-valued landmarks plus an integer offset: the arithmetic is
        # exact in float64, so features must be bit-identical.
        rng = np.random.default_rng(3)
        session = make_session(2)
        offset_session = make_session(2)
        for s in (session, offset_session):
            for b in s.bins:
                b.face_points = np.round(b.face_points)
                b.body_points = np.round(b.body_points)
        for b in offset_session.bins:
            b.face_points = b.face_points + np.array([64.0, 128.0])
        f1 = compute_bin_features(session)
        f2 = compute_bin_features(offset_session)
        for a, b in zip(f1, f2):
            np.testing.assert_array_equal(
                a.groups[FeatureGroupId.FACE_DISTANCES],
                b.groups[FeatureGroupId.FACE_DISTANCES])

    def test_retained_body_landmarks_exclude_legs(self):
        assert len(RETAINED_BODY_INDICES) == 13
        legs_and_feet = {9, 10, 11, 12, 13, 14, 19, 20, 21, 22, 23, 24}
        assert set(RETAINED_BODY_INDICES) & legs_and_feet == set()

    def test_leg_landmarks_do_not_affect_features(self, rng):
        session = make_session(2, seed=4)
        moved = make_session(2, seed=4)
        for b in moved.bins:
            pts = b.body_points.copy()
            pts[[10, 11, 13, 14, 20, 23]] += rng.uniform(-50, 50, (6, 2))
            b.body_points = pts
        f1 = compute_bin_features(session)
        f2 = compute_bin_features(moved)
        for a, b in zip(f1, f2):
            np.testing.assert_array_equal(
                a.groups[FeatureGroupId.BODY_DISTANCES],
                b.groups[FeatureGroupId.BODY_DISTANCES])

    def test_distances_and_speeds_nonnegative(self, rng):
        mats = session_feature_matrices(make_session(6, seed=9))
        for g in (FeatureGroupId.FACE_DISTANCES, FeatureGroupId.BODY_DISTANCES,
                  FeatureGroupId.BODY_SPEEDS):
            assert (mats.groups[g] >= 0).all()

    def test_labels_carried_through(self):
        labels = [AffectLabel.ALERT, AffectLabel.FUSSY, AffectLabel.EXCLUDED]
        feats = compute_bin_features(make_session(3, labels=labels))
        assert [bf.label for bf in feats] == labels
