"""Shared builders for hand-made frames, bins, and sessions."""

import numpy as np
import pytest

from affectpipe.core import (
    AU_COUNT,
    BODY_POINT_COUNT,
    FACE_POINT_COUNT,
    AffectLabel,
    Bin,
    FrameRecord,
    Modality,
    Session,
)


def face_frame(time_s, confidence=0.9, points=None, aus=None, session_id="s0",
               raw_label=""):
    if points is None:
        points = default_face_points()
    if aus is None:
        aus = np.linspace(0.1, 1.7, AU_COUNT)
    return FrameRecord(session_id=session_id, time_s=time_s, modality=Modality.FACE,
                       confidence=confidence, points=np.asarray(points, dtype=float),
                       aus=np.asarray(aus, dtype=float), raw_label=raw_label)


def body_frame(time_s, confidence=0.9, points=None, session_id="s0", raw_label=""):
    if points is None:
        points = default_body_points()
    return FrameRecord(session_id=session_id, time_s=time_s, modality=Modality.BODY,
                       confidence=confidence, points=np.asarray(points, dtype=float),
                       raw_label=raw_label)


def default_face_points(rng=None, scale=100.0, offset=(300.0, 250.0)):
    """A non-degenerate 68-point layout (chin, brows, and nose separated)."""
    rng = rng or np.random.default_rng(0)
    pts = rng.uniform(-0.4, 0.4, (FACE_POINT_COUNT, 2))
    pts[30] = (0.0, 0.0)     # nose tip
    pts[8] = (0.0, 0.55)     # chin
    pts[19] = (-0.2, -0.45)  # brows
    pts[24] = (0.2, -0.45)
    return pts * scale + np.asarray(offset)


def default_body_points(rng=None, scale=150.0, offset=(250.0, 200.0)):
    """A non-degenerate 25-point layout (neck and mid-hip separated)."""
    rng = rng or np.random.default_rng(1)
    pts = rng.uniform(-0.3, 0.3, (BODY_POINT_COUNT, 2))
    pts[1] = (0.0, 0.0)      # neck
    pts[8] = (0.0, 1.0)      # mid-hip
    return pts * scale + np.asarray(offset)


def make_bin(bin_index, label=AffectLabel.ALERT, face_valid=True, body_valid=True,
             rng=None, face_conf=0.9, body_conf=0.9):
    rng = rng or np.random.default_rng(bin_index)
    face_pts = default_face_points(rng) if face_valid else np.zeros((FACE_POINT_COUNT, 2))
    body_pts = default_body_points(rng) if body_valid else np.zeros((BODY_POINT_COUNT, 2))
    return Bin(
        bin_index=bin_index,
        face_points=face_pts,
        face_aus=rng.uniform(0.0, 3.0, AU_COUNT) if face_valid else np.zeros(AU_COUNT),
        face_conf=face_conf if face_valid else 0.0,
        body_points=body_pts,
        body_conf=body_conf if body_valid else 0.0,
        label=label,
        face_valid=face_valid,
        body_valid=body_valid,
        face_frame_count=int(face_valid),
        body_frame_count=int(body_valid),
    )


def make_session(n_bins, labels=None, face_valid=None, body_valid=None,
                 session_id="s0", infant_id="i0", seed=0):
    """A session of hand-made bins; per-bin labels/validity are overridable."""
    rng = np.random.default_rng(seed)
    bins = []
    for i in range(n_bins):
        bins.append(make_bin(
            i,
            label=labels[i] if labels is not None else AffectLabel.ALERT,
            face_valid=bool(face_valid[i]) if face_valid is not None else True,
            body_valid=bool(body_valid[i]) if body_valid is not None else True,
            rng=rng,
        ))
    return Session(session_id=session_id, infant_id=infant_id, bins=bins)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
