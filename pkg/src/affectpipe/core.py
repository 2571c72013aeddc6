"""Shared domain types, affect label mapping, and fixed-rate binning.

Variable-frame-rate landmark streams are resampled onto a fixed 0.25 s grid:
bin k covers the half-open interval [0.25*k, 0.25*(k+1)). Per-modality values
in a bin are arithmetic means over the frames that fall in it; a bin with no
frames for a modality holds zeros with confidence 0. A bin is valid for a
modality only when its mean confidence strictly exceeds the extraction
confidence threshold (default 20%).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import MixedSessionError, NonMonotonicTimeError

BIN_WIDTH_S = 0.25
CONFIDENCE_THRESHOLD = 0.20
FACE_POINT_COUNT = 68
BODY_POINT_COUNT = 25
AU_COUNT = 17


class Modality(str, Enum):
    FACE = "face"
    BODY = "body"


class AffectLabel(Enum):
    ALERT = 0
    FUSSY = 1
    EXCLUDED = 2


# Raw annotation codes. Crying collapses into the fussy class; drowsy and
# sleeping never enter training or evaluation. Unknown codes degrade to
# EXCLUDED so the mapping is total.
_LABEL_MAP = {
    "alert": AffectLabel.ALERT,
    "fussy": AffectLabel.FUSSY,
    "crying": AffectLabel.FUSSY,
    "drowsy": AffectLabel.EXCLUDED,
    "sleeping": AffectLabel.EXCLUDED,
}


def map_label(raw_label: str) -> AffectLabel:
    """Map a raw annotation code to its binary-task label."""
    return _LABEL_MAP.get(raw_label.strip().lower(), AffectLabel.EXCLUDED)


@dataclass
class FrameRecord:
    """One extractor output frame for one modality.

    Undetected landmarks are encoded as (0, 0) coordinates. ``aus`` is present
    exactly for face frames. ``raw_label`` is filled in when label change
    points are joined onto the frame stream; an empty string means unlabeled.
    """

    session_id: str
    time_s: float
    modality: Modality
    confidence: float
    points: np.ndarray            # (n_points, 2) pixel coordinates
    aus: np.ndarray | None = None  # (17,) action-unit intensities, face only
    raw_label: str = ""

    def __post_init__(self):
        expected = FACE_POINT_COUNT if self.modality is Modality.FACE else BODY_POINT_COUNT
        if self.points.shape != (expected, 2):
            raise ValueError(
                f"{self.modality.value} frame needs {expected} (x, y) points, "
                f"got shape {self.points.shape}"
            )
        if (self.aus is not None) != (self.modality is Modality.FACE):
            raise ValueError("aus must be present iff modality is face")


@dataclass
class Bin:
    """One 0.25 s slice of a session.

    ``face_frame_count``/``body_frame_count`` record how many raw frames the
    per-modality means were taken over (0 for zero-filled gap bins).
    """

    bin_index: int
    face_points: np.ndarray   # (68, 2)
    face_aus: np.ndarray      # (17,)
    face_conf: float
    body_points: np.ndarray   # (25, 2)
    body_conf: float
    label: AffectLabel
    face_valid: bool
    body_valid: bool
    face_frame_count: int = 0
    body_frame_count: int = 0


@dataclass
class Session:
    """One infant interaction: contiguous bins plus identity metadata."""

    session_id: str
    infant_id: str
    bins: list[Bin] = field(default_factory=list)

    def __post_init__(self):
        for i, b in enumerate(self.bins):
            if b.bin_index != i:
                raise ValueError(
                    f"session {self.session_id}: bins must be contiguous from 0, "
                    f"position {i} holds bin_index {b.bin_index}")

    @property
    def n_bins(self) -> int:
        return len(self.bins)

    def labels(self) -> list[AffectLabel]:
        return [b.label for b in self.bins]


# Majority ties resolve in this order; the pipeline is minority-class
# sensitive, so FUSSY wins ties, and ALERT beats EXCLUDED to retain data.
_TIE_ORDER = (AffectLabel.FUSSY, AffectLabel.ALERT, AffectLabel.EXCLUDED)


def _majority_label(counts: np.ndarray) -> AffectLabel:
    # counts indexed by AffectLabel.value; all-zero means no annotated frames.
    if counts.sum() == 0:
        return AffectLabel.EXCLUDED
    best = max(counts[lab.value] for lab in _TIE_ORDER)
    for lab in _TIE_ORDER:
        if counts[lab.value] == best:
            return lab


def _modality_bin_means(frames: list[FrameRecord], n_bins: int, bin_width: float,
                        n_values: int):
    """Mean value matrix, mean confidence, and frame count per bin.

    ``frames`` must be time-sorted. Values are the flattened coordinates
    (plus AUs for face). Returns (values (n_bins, n_values), conf (n_bins,),
    counts (n_bins,)).
    """
    values = np.zeros((n_bins, n_values))
    conf = np.zeros(n_bins)
    counts = np.zeros(n_bins, dtype=np.int64)
    if not frames:
        return values, conf, counts

    times = np.array([f.time_s for f in frames])
    if np.any(np.diff(times) < 0):
        raise NonMonotonicTimeError(
            f"{frames[0].modality.value} timestamps decrease within the session"
        )
    bin_idx = np.floor_divide(times, bin_width).astype(np.int64)

    rows = np.empty((len(frames), n_values))
    for i, f in enumerate(frames):
        flat = f.points.reshape(-1)
        rows[i, : flat.size] = flat
        if f.aus is not None:
            rows[i, flat.size:] = f.aus
    conf_rows = np.array([f.confidence for f in frames])

    edges = np.arange(n_bins + 1)
    starts = np.searchsorted(bin_idx, edges[:-1], side="left")
    ends = np.searchsorted(bin_idx, edges[1:], side="left")
    for b in range(n_bins):
        s, e = starts[b], ends[b]
        if e > s:
            values[b] = rows[s:e].mean(axis=0)
            conf[b] = conf_rows[s:e].mean()
            counts[b] = e - s
    return values, conf, counts


def bin_frames(frames: Sequence[FrameRecord], bin_width: float = BIN_WIDTH_S,
               confidence_threshold: float = CONFIDENCE_THRESHOLD) -> list[Bin]:
    """Aggregate a time-sorted frame stream into fixed-width bins.

    Produces one bin per interval from bin 0 through the bin holding the
    latest frame. The bin label is the majority mapped label over all frames
    (both modalities) in the bin, with ties resolved toward FUSSY; bins whose
    frames carry no annotations are EXCLUDED.

    Raises:
        MixedSessionError: frames span more than one session_id.
        NonMonotonicTimeError: timestamps decrease within a modality.
    """
    frames = list(frames)
    if not frames:
        return []
    session_ids = {f.session_id for f in frames}
    if len(session_ids) > 1:
        raise MixedSessionError(f"multiple session ids: {sorted(session_ids)}")

    face = [f for f in frames if f.modality is Modality.FACE]
    body = [f for f in frames if f.modality is Modality.BODY]
    last_t = max(f.time_s for f in frames)
    n_bins = int(last_t // bin_width) + 1

    face_vals, face_conf, face_counts = _modality_bin_means(
        face, n_bins, bin_width, FACE_POINT_COUNT * 2 + AU_COUNT)
    body_vals, body_conf, body_counts = _modality_bin_means(
        body, n_bins, bin_width, BODY_POINT_COUNT * 2)

    # Majority vote over mapped labels of every annotated frame in the bin.
    label_counts = np.zeros((n_bins, 3), dtype=np.int64)
    for f in frames:
        if f.raw_label:
            b = int(f.time_s // bin_width)
            label_counts[b, map_label(f.raw_label).value] += 1

    bins = []
    for b in range(n_bins):
        bins.append(Bin(
            bin_index=b,
            face_points=face_vals[b, : FACE_POINT_COUNT * 2].reshape(FACE_POINT_COUNT, 2),
            face_aus=face_vals[b, FACE_POINT_COUNT * 2:],
            face_conf=float(face_conf[b]),
            body_points=body_vals[b].reshape(BODY_POINT_COUNT, 2),
            body_conf=float(body_conf[b]),
            label=_majority_label(label_counts[b]),
            face_valid=bool(face_conf[b] > confidence_threshold),
            body_valid=bool(body_conf[b] > confidence_threshold),
            face_frame_count=int(face_counts[b]),
            body_frame_count=int(body_counts[b]),
        ))
    return bins
