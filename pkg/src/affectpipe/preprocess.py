"""Normalization of binned landmarks into the four feature groups.

Face bins are centered on the nose tip and scaled by face length (chin to
mid-brow, the 68-point convention's stand-in for top of head); features are
the 2278 pairwise landmark distances plus the 17 raw AUs. Body bins drop the
leg landmarks, center on the neck, and scale by torso length (neck to
mid-hip); features are the 78 pairwise distances over the 13 retained
landmarks plus 13 per-landmark speeds. Speeds are computed between the
normalized coordinates of consecutive bins so they are size-invariant, and
are zero at the first bin of a session.

A bin whose scale anchors coincide (fully occluded, zero-filled) cannot be
normalized; its features are zeroed and the bin is marked invalid for that
modality.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import AffectLabel, Session
from .errors import DegenerateScaleError, LengthMismatchError


class FeatureGroupId(Enum):
    FACE_DISTANCES = "face_distances"
    FACE_AUS = "face_aus"
    BODY_DISTANCES = "body_distances"
    BODY_SPEEDS = "body_speeds"


FACE_GROUPS = (FeatureGroupId.FACE_DISTANCES, FeatureGroupId.FACE_AUS)
BODY_GROUPS = (FeatureGroupId.BODY_DISTANCES, FeatureGroupId.BODY_SPEEDS)
ALL_GROUPS = FACE_GROUPS + BODY_GROUPS

FACE_ANCHOR_INDEX = 30          # nose tip
FACE_CHIN_INDEX = 8
FACE_BROW_INDICES = (19, 24)    # mid-brow pair, proxy for top of head
BODY_ANCHOR_INDEX = 1           # neck
BODY_MID_HIP_INDEX = 8          # pelvis proxy
# Head, neck, arms, and mid-hip of the 25-point convention; legs discarded.
RETAINED_BODY_INDICES = (0, 1, 2, 3, 4, 5, 6, 7, 8, 15, 16, 17, 18)

DEGENERATE_SCALE_EPS = 1e-6

GROUP_SIZES = {
    FeatureGroupId.FACE_DISTANCES: 68 * 67 // 2,                # 2278
    FeatureGroupId.FACE_AUS: 17,
    FeatureGroupId.BODY_DISTANCES: len(RETAINED_BODY_INDICES)
    * (len(RETAINED_BODY_INDICES) - 1) // 2,                    # 78
    FeatureGroupId.BODY_SPEEDS: len(RETAINED_BODY_INDICES),     # 13
}


def center_landmarks(points: np.ndarray, anchor_index: int) -> np.ndarray:
    """Subtract the anchor landmark's coordinates from every landmark."""
    if not 0 <= anchor_index < len(points):
        raise IndexError(f"anchor index {anchor_index} out of range for {len(points)} points")
    return points - points[anchor_index]


def scale_landmarks(points: np.ndarray, scale_length: float) -> np.ndarray:
    """Divide every coordinate by ``scale_length``.

    Raises:
        DegenerateScaleError: scale_length <= DEGENERATE_SCALE_EPS; callers
            invalidate the bin instead of producing infinities.
    """
    if scale_length <= DEGENERATE_SCALE_EPS:
        raise DegenerateScaleError(f"scale length {scale_length} is degenerate")
    return points / scale_length


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    """Euclidean distances for every landmark pair i < j, lexicographic order."""
    n = len(points)
    iu, ju = np.triu_indices(n, k=1)
    diff = points[iu] - points[ju]
    return np.hypot(diff[:, 0], diff[:, 1])


def landmark_speeds(prev_points: np.ndarray | None, curr_points: np.ndarray) -> np.ndarray:
    """Per-landmark distance traveled since the previous bin (zeros if none)."""
    if prev_points is None:
        return np.zeros(len(curr_points))
    if len(prev_points) != len(curr_points):
        raise LengthMismatchError(
            f"{len(prev_points)} previous vs {len(curr_points)} current landmarks")
    diff = curr_points - prev_points
    return np.hypot(diff[:, 0], diff[:, 1])


@dataclass
class BinFeatures:
    """Feature-group vectors for one bin, with validity carried along."""

    bin_index: int
    groups: dict[FeatureGroupId, np.ndarray]
    face_valid: bool
    body_valid: bool
    label: AffectLabel


@dataclass
class FeatureMatrices:
    """Per-session feature groups stacked over bins, used by the window stage."""

    groups: dict[FeatureGroupId, np.ndarray]  # each (n_bins, GROUP_SIZES[g])
    face_valid: np.ndarray                    # (n_bins,) bool
    body_valid: np.ndarray
    labels: np.ndarray                        # (n_bins,) AffectLabel values

    @property
    def n_bins(self) -> int:
        return len(self.face_valid)


def _normalize_stack(points: np.ndarray, anchor: int, len_a: int, len_b_mid,
                     valid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Center/scale a (n, p, 2) stack; returns (normalized, still_valid).

    ``len_b_mid`` is an index or an index pair whose mean forms the second
    scale anchor. Degenerate bins come back zeroed and invalid.
    """
    centered = points - points[:, anchor: anchor + 1, :]
    if isinstance(len_b_mid, tuple):
        top = (points[:, len_b_mid[0]] + points[:, len_b_mid[1]]) / 2.0
    else:
        top = points[:, len_b_mid]
    span = points[:, len_a] - top
    lengths = np.hypot(span[:, 0], span[:, 1])
    ok = lengths > DEGENERATE_SCALE_EPS
    safe = np.where(ok, lengths, 1.0)
    normalized = centered / safe[:, None, None]
    normalized[~ok] = 0.0
    return normalized, valid & ok


def session_feature_matrices(session: Session) -> FeatureMatrices:
    """Compute all four feature groups for every bin of a session."""
    n = session.n_bins
    face_pts = np.stack([b.face_points for b in session.bins]) if n else np.zeros((0, 68, 2))
    body_pts = np.stack([b.body_points for b in session.bins]) if n else np.zeros((0, 25, 2))
    aus = np.stack([b.face_aus for b in session.bins]) if n else np.zeros((0, 17))
    face_valid = np.array([b.face_valid for b in session.bins], dtype=bool)
    body_valid = np.array([b.body_valid for b in session.bins], dtype=bool)
    labels = np.array([b.label.value for b in session.bins], dtype=np.int64)

    face_norm, face_ok = _normalize_stack(
        face_pts, FACE_ANCHOR_INDEX, FACE_CHIN_INDEX, FACE_BROW_INDICES, face_valid)
    # Neck and mid-hip land at positions 1 and 8 of the retained ordering;
    # torso length runs between them.
    body_sub = body_pts[:, RETAINED_BODY_INDICES, :]
    body_norm, body_ok = _normalize_stack(body_sub, 1, 8, 1, body_valid)

    nf = len(RETAINED_BODY_INDICES)
    iu_f, ju_f = np.triu_indices(68, k=1)
    iu_b, ju_b = np.triu_indices(nf, k=1)
    face_diff = face_norm[:, iu_f, :] - face_norm[:, ju_f, :]
    face_dist = np.hypot(face_diff[..., 0], face_diff[..., 1])
    body_diff = body_norm[:, iu_b, :] - body_norm[:, ju_b, :]
    body_dist = np.hypot(body_diff[..., 0], body_diff[..., 1])

    speeds = np.zeros((n, nf))
    if n > 1:
        step = body_norm[1:] - body_norm[:-1]
        speeds[1:] = np.hypot(step[..., 0], step[..., 1])

    return FeatureMatrices(
        groups={
            FeatureGroupId.FACE_DISTANCES: face_dist,
            FeatureGroupId.FACE_AUS: aus.copy(),
            FeatureGroupId.BODY_DISTANCES: body_dist,
            FeatureGroupId.BODY_SPEEDS: speeds,
        },
        face_valid=face_ok,
        body_valid=body_ok,
        labels=labels,
    )


def compute_bin_features(session: Session) -> list[BinFeatures]:
    """Per-bin view of :func:`session_feature_matrices`."""
    mats = session_feature_matrices(session)
    out = []
    for i, b in enumerate(session.bins):
        out.append(BinFeatures(
            bin_index=b.bin_index,
            groups={g: mats.groups[g][i] for g in ALL_GROUPS},
            face_valid=bool(mats.face_valid[i]),
            body_valid=bool(mats.body_valid[i]),
            label=b.label,
        ))
    return out
