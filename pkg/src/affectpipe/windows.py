"""Dual short/long window aggregation and the window success criterion.

Every base feature yields six aggregates: max, mean, and population standard
deviation over the short window and over the long window. Aggregate vectors
use a block layout: ``[short_max | short_mean | short_std | long_max |
long_mean | long_std]``, each block as wide as the base group, so aggregate
column j refers to base feature ``j % G`` under statistic block ``j // G``.

Aggregation runs over every bin in the window, valid and zero-filled alike;
data quality is enforced only through membership in D_confident, which
requires the per-modality extraction confidence to hold on at least
``success_fraction`` of the *longest configured* window. Evaluating the flag
at ``max_long_s`` keeps D_confident identical across window configurations,
so models with different windows compare on the same dataset.

Samples are emitted at every bin (0.25 s stride), window end aligned, and
labeled by the end bin; samples whose end bin is EXCLUDED are dropped.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import BIN_WIDTH_S, AffectLabel, Modality, Session
from .errors import EmptyWindowError, WindowOutOfRangeError
from .preprocess import (
    ALL_GROUPS,
    FACE_GROUPS,
    FeatureGroupId,
    FeatureMatrices,
    session_feature_matrices,
)

logger = logging.getLogger(__name__)

AGGREGATES_PER_FEATURE = 6

LONG_WINDOW_SWEEP_S = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)


def _check_bin_multiple(name: str, value: float) -> None:
    if value <= 0 or abs(value / BIN_WIDTH_S - round(value / BIN_WIDTH_S)) > 1e-9:
        raise ValueError(f"{name} must be a positive multiple of {BIN_WIDTH_S} s, got {value}")


@dataclass
class WindowConfig:
    """Window lengths in seconds plus the success criterion.

    The short window needs at least two bins so speeds span a frame pair,
    hence the 0.5 s floor. Long windows may be any bin multiple >= short_s;
    the canonical sweep values are LONG_WINDOW_SWEEP_S.
    """

    short_s: float = 0.5
    long_face_s: float = 32.0
    long_body_s: float = 2.0
    success_fraction: float = 0.9
    max_long_s: float = 64.0

    def __post_init__(self):
        for name in ("short_s", "long_face_s", "long_body_s", "max_long_s"):
            _check_bin_multiple(name, getattr(self, name))
        if self.short_s < 0.5:
            raise ValueError(f"short_s must be >= 0.5 s, got {self.short_s}")
        if min(self.long_face_s, self.long_body_s) < self.short_s:
            raise ValueError("long windows must be at least as long as the short window")
        if self.max_long_s < max(self.long_face_s, self.long_body_s):
            raise ValueError("max_long_s must cover the configured long windows")
        if not 0.0 <= self.success_fraction <= 1.0:
            raise ValueError(f"success_fraction must lie in [0, 1], got {self.success_fraction}")

    @property
    def short_bins(self) -> int:
        return round(self.short_s / BIN_WIDTH_S)

    @property
    def long_face_bins(self) -> int:
        return round(self.long_face_s / BIN_WIDTH_S)

    @property
    def long_body_bins(self) -> int:
        return round(self.long_body_s / BIN_WIDTH_S)

    @property
    def max_long_bins(self) -> int:
        return round(self.max_long_s / BIN_WIDTH_S)


@dataclass
class WindowedSample:
    """One classification instance aligned to (and labeled by) its end bin."""

    infant_id: str
    session_id: str
    end_bin: int
    label: AffectLabel
    groups: dict[FeatureGroupId, np.ndarray]  # each (6 * GROUP_SIZES[g],)
    face_confident: bool
    body_confident: bool


def aggregate_window(series: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Elementwise (max, mean, population std) over one window.

    ``series`` is (n_bins, n_features) or (n_bins,); zeros from invalid bins
    flow through untouched.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.shape[0] == 0:
        raise EmptyWindowError("window contains no bins")
    return series.max(axis=0), series.mean(axis=0), series.std(axis=0)


def rolling_aggregates(matrix: np.ndarray, window: int
                       ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(max, mean, population std) for every length-``window`` slice.

    Output row i covers input rows [i, i + window); there are
    ``n - window + 1`` rows. The max uses block prefix/suffix scans and the
    mean/std use cumulative sums, so cost is O(n * features) regardless of
    window length.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    n, g = matrix.shape
    w = int(window)
    if not 1 <= w <= n:
        raise WindowOutOfRangeError(f"window of {w} bins over {n} bins")
    out_rows = n - w + 1

    if w == 1:
        zeros = np.zeros_like(matrix)
        return matrix.copy(), matrix.copy(), zeros
    if w == 2:
        a, b = matrix[:-1], matrix[1:]
        mean = (a + b) / 2.0
        return np.maximum(a, b), mean, np.abs(b - a) / 2.0

    # Sliding max: any window of width w straddles at most one boundary of
    # the w-sized blocks, so max(suffix_scan[start], prefix_scan[end]) covers it.
    m = ((n + w - 1) // w) * w
    padded = np.full((m, g), -np.inf)
    padded[:n] = matrix
    blocks = padded.reshape(-1, w, g)
    prefix = np.maximum.accumulate(blocks, axis=1).reshape(m, g)
    suffix = np.maximum.accumulate(blocks[:, ::-1, :], axis=1)[:, ::-1, :].reshape(m, g)
    roll_max = np.maximum(suffix[:out_rows], prefix[w - 1: w - 1 + out_rows])

    cs = np.empty((n + 1, g))
    cs[0] = 0.0
    np.cumsum(matrix, axis=0, out=cs[1:])
    roll_mean = (cs[w:] - cs[:-w]) / w

    cs2 = np.empty((n + 1, g))
    cs2[0] = 0.0
    np.cumsum(matrix * matrix, axis=0, out=cs2[1:])
    var = (cs2[w:] - cs2[:-w]) / w - roll_mean * roll_mean
    np.maximum(var, 0.0, out=var)  # cancellation can leave tiny negatives
    roll_std = np.sqrt(var)

    return roll_max, roll_mean, roll_std


def window_success(session: Session, end_bin: int, long_s: float,
                   modality: Modality, success_fraction: float = 0.9) -> bool:
    """Whether the long window ending at ``end_bin`` meets the success criterion.

    True iff at least ``success_fraction`` of the window's bins are valid for
    the modality (boundary fraction counts as success).
    """
    _check_bin_multiple("long_s", long_s)
    w = round(long_s / BIN_WIDTH_S)
    start = end_bin - w + 1
    if start < 0 or end_bin >= session.n_bins:
        raise WindowOutOfRangeError(
            f"window [{start}, {end_bin}] outside session of {session.n_bins} bins")
    bins = session.bins[start: end_bin + 1]
    if modality is Modality.FACE:
        n_valid = sum(b.face_valid for b in bins)
    else:
        n_valid = sum(b.body_valid for b in bins)
    return n_valid / w >= success_fraction


@dataclass
class SampleBlock:
    """Column-oriented windowed samples for one session.

    Row order follows end bins ascending; EXCLUDED end bins are dropped.
    ``group_aggregates`` may hold only the groups a caller asked for.
    """

    infant_id: str
    session_id: str
    end_bins: np.ndarray        # (n_samples,) int64
    labels: np.ndarray          # (n_samples,) 0 = alert, 1 = fussy
    face_confident: np.ndarray  # (n_samples,) bool
    body_confident: np.ndarray
    group_aggregates: dict[FeatureGroupId, np.ndarray] = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return len(self.end_bins)

    @property
    def confident(self) -> np.ndarray:
        return self.face_confident & self.body_confident


def _rolling_valid_fraction(valid: np.ndarray, window: int) -> np.ndarray:
    counts = np.concatenate([[0], np.cumsum(valid.astype(np.int64))])
    return (counts[window:] - counts[:-window]) / window


def long_bins_for(config: WindowConfig, group: FeatureGroupId) -> int:
    return config.long_face_bins if g_is_face(group) else config.long_body_bins


def g_is_face(group: FeatureGroupId) -> bool:
    return group in FACE_GROUPS


def iter_aggregate_blocks(matrix: np.ndarray, short_bins: int, long_bins: int,
                          max_long_bins: int):
    """Yield the six (n_end_rows, width) stat blocks in aggregate layout order.

    This is the aggregate layout's single source of truth: short max, short
    mean, short std, then the long-window trio, each aligned so row i is the
    window ending at bin ``max_long_bins - 1 + i``.
    """
    n = len(matrix)
    for w in (short_bins, long_bins):
        mx, mean, std = rolling_aggregates(matrix, w)
        sl = slice(max_long_bins - w, n - w + 1)
        yield mx[sl]
        yield mean[sl]
        yield std[sl]


@dataclass
class BlockMetadata:
    """End-bin labels and confidence flags before EXCLUDED filtering."""

    end_bins: np.ndarray
    labels_at_end: np.ndarray
    face_ok: np.ndarray
    body_ok: np.ndarray
    keep: np.ndarray  # rows whose end bin is not EXCLUDED

    @property
    def confident(self) -> np.ndarray:
        return self.face_ok & self.body_ok


def block_metadata(session: Session, config: WindowConfig,
                   mats: FeatureMatrices) -> BlockMetadata | None:
    """Per-end-bin metadata shared by every consumer of the aggregates.

    None when the session is shorter than the longest configured window.
    """
    n = mats.n_bins
    maxw = config.max_long_bins
    if n < maxw:
        return None
    # Labels come from the session itself so cached geometry stays reusable
    # when only the labeling changes (e.g. permutation nulls).
    bin_labels = (np.array([b.label.value for b in session.bins], dtype=np.int64)
                  if session.bins else mats.labels)
    end_bins = np.arange(maxw - 1, n, dtype=np.int64)
    labels_at_end = bin_labels[end_bins]
    return BlockMetadata(
        end_bins=end_bins,
        labels_at_end=labels_at_end,
        face_ok=_rolling_valid_fraction(mats.face_valid, maxw) >= config.success_fraction,
        body_ok=_rolling_valid_fraction(mats.body_valid, maxw) >= config.success_fraction,
        keep=labels_at_end != AffectLabel.EXCLUDED.value,
    )


def session_sample_block(session: Session, config: WindowConfig,
                         mats: FeatureMatrices | None = None,
                         groups: tuple[FeatureGroupId, ...] = ALL_GROUPS) -> SampleBlock:
    """Build the windowed samples of one session as column arrays.

    Returns an empty block (with a log line) when the session is shorter
    than the longest configured window.
    """
    if mats is None:
        mats = session_feature_matrices(session)
    meta = block_metadata(session, config, mats)
    if meta is None:
        logger.warning("session %s too short: %d bins < %d-bin window; no samples",
                       session.session_id, mats.n_bins, config.max_long_bins)
        return SampleBlock(
            session.infant_id, session.session_id,
            np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64),
            np.empty(0, dtype=bool), np.empty(0, dtype=bool),
            {g: np.empty((0, AGGREGATES_PER_FEATURE * mats.groups[g].shape[1]))
             for g in groups})

    keep = meta.keep
    all_kept = bool(keep.all())
    aggs: dict[FeatureGroupId, np.ndarray] = {}
    for g in groups:
        width = mats.groups[g].shape[1]
        out = np.empty((len(meta.end_bins), AGGREGATES_PER_FEATURE * width))
        for b, piece in enumerate(iter_aggregate_blocks(
                mats.groups[g], config.short_bins, long_bins_for(config, g),
                config.max_long_bins)):
            out[:, b * width: (b + 1) * width] = piece
        aggs[g] = out if all_kept else out[keep]

    return SampleBlock(
        infant_id=session.infant_id,
        session_id=session.session_id,
        end_bins=meta.end_bins[keep],
        labels=meta.labels_at_end[keep],
        face_confident=meta.face_ok[keep],
        body_confident=meta.body_ok[keep],
        group_aggregates=aggs,
    )


def build_samples(session: Session, features=None,
                  config: WindowConfig | None = None) -> list[WindowedSample]:
    """Object-level view of :func:`session_sample_block`.

    ``features`` may be a precomputed BinFeatures list (as produced by
    preprocess.compute_bin_features); when omitted the features are computed
    from the session.
    """
    if config is None:
        config = WindowConfig()
    mats = _matrices_from_bin_features(features) if features is not None else None
    block = session_sample_block(session, config, mats=mats)
    samples = []
    for i in range(block.n_samples):
        samples.append(WindowedSample(
            infant_id=block.infant_id,
            session_id=block.session_id,
            end_bin=int(block.end_bins[i]),
            label=AffectLabel(int(block.labels[i])),
            groups={g: block.group_aggregates[g][i] for g in block.group_aggregates},
            face_confident=bool(block.face_confident[i]),
            body_confident=bool(block.body_confident[i]),
        ))
    return samples


def _matrices_from_bin_features(features) -> FeatureMatrices:
    groups = {g: np.stack([bf.groups[g] for bf in features]) if features
              else np.zeros((0, 0)) for g in ALL_GROUPS}
    return FeatureMatrices(
        groups=groups,
        face_valid=np.array([bf.face_valid for bf in features], dtype=bool),
        body_valid=np.array([bf.body_valid for bf in features], dtype=bool),
        labels=np.array([bf.label.value for bf in features], dtype=np.int64),
    )


def partition(samples: list[WindowedSample]) -> tuple[list[WindowedSample], list[WindowedSample]]:
    """Split into (D_confident, D_total).

    D_confident holds the samples confident in both modalities; D_total is
    every sample. D_confident is a subset (not a copy) of D_total.
    """
    confident = [s for s in samples if s.face_confident and s.body_confident]
    return confident, samples
