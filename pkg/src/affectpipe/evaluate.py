"""Subject-disjoint stratified cross-validation, AUC, and temporal curves.

Cross-validation keeps every infant's data in exactly one fold and balances
fold-level fussy prevalence by snake assignment over infants sorted by their
fussy fraction. Per fold, models train on the training folds' D_confident
samples and predict every test-fold sample; AUC is reported both restricted
to the test fold's D_confident and on its D_total.

Memory: a full dataset's aggregate features would run to gigabytes, so the
run is organized in two streaming passes over sessions. Pass one reduces
each infant's aggregates to per-label sufficient statistics (enough for the
Welch tests and standardization); after per-fold selection, pass two
re-aggregates and keeps only the union of selected columns.

The temporal analyses bin samples by time since the most recent true state
change (TSAT) or predicted change (TSPT) at 0.25 s granularity, average
per-infant accuracies within each bin, and attach normal-approximation 95%
confidence intervals across infants. Bins with three or fewer samples are
suppressed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import BIN_WIDTH_S, AffectLabel, Session
from .errors import SingleClassError, SingleClassFoldError, TooFewInfantsError
from .model import (
    MODEL_SPEC_GROUPS,
    GroupedModel,
    TrainConfig,
    _forward_batch,
    fit_network,
    late_fuse,
)
from .preprocess import FeatureGroupId, FeatureMatrices, session_feature_matrices
from .select import (
    TOP_K_DEFAULT,
    FeatureSelection,
    GroupLabelStats,
    select_from_stats,
)
from .windows import (
    AGGREGATES_PER_FEATURE,
    SampleBlock,
    WindowConfig,
    block_metadata,
    iter_aggregate_blocks,
    long_bins_for,
)

logger = logging.getLogger(__name__)

MODEL_SPECS = ("face", "body", "joint", "late")
DECISION_THRESHOLD = 0.5
CURVE_MIN_SAMPLES = 3  # bins must hold strictly more samples than this


@dataclass
class FoldAssignment:
    """Partition of infants into k folds; every infant appears exactly once."""

    k: int
    fold_of: dict[str, int]

    def infants_in(self, fold: int) -> list[str]:
        return sorted(i for i, f in self.fold_of.items() if f == fold)


def stratified_subject_folds(infants, k: int = 5, seed: int = 0) -> FoldAssignment:
    """Assign (infant_id, fussy_fraction) pairs to k subject-disjoint folds.

    Infants are shuffled (seeded, to break exact ties), stably sorted by
    descending fussy fraction, and dealt snake-wise (1..k, k..1, ...), which
    balances prevalence and keeps fold sizes within one infant of each other.

    Raises:
        TooFewInfantsError: fewer infants than folds.
    """
    infants = list(infants)
    if len(infants) < k:
        raise TooFewInfantsError(f"{len(infants)} infants cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(infants))
    shuffled = [infants[i] for i in order]
    shuffled.sort(key=lambda item: -item[1])
    fold_of = {}
    for pos, (infant_id, _) in enumerate(shuffled):
        row, col = divmod(pos, k)
        fold_of[infant_id] = col if row % 2 == 0 else k - 1 - col
    return FoldAssignment(k=k, fold_of=fold_of)


def auc(scores, labels) -> float:
    """Area under the ROC curve by the Mann-Whitney rank formula.

    Tied scores take mid-ranks, equivalent to counting tied pairs as 1/2.

    Raises:
        SingleClassError: only one class present.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("AUC needs both classes")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i: j + 1]] = (i + j) / 2.0 + 1.0  # mid-rank, 1-based
        i = j + 1
    rank_sum = ranks[pos].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def accuracy(probs, labels, threshold: float = DECISION_THRESHOLD) -> float:
    preds = np.asarray(probs) >= threshold
    return float(np.mean(preds == (np.asarray(labels) == 1)))


def confidence_interval_95(values) -> tuple[float, float]:
    """Normal-approximation 95% CI of the mean, clamped to [0, 1].

    A single value collapses to a point interval.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("need at least one value")
    mean = float(v.mean())
    if v.size == 1:
        return mean, mean
    half = 1.96 * v.std(ddof=1) / np.sqrt(v.size)
    return max(mean - half, 0.0), min(mean + half, 1.0)


@dataclass
class PredictionTrace:
    """Per-sample predictions, ordered by session then end bin."""

    infant_ids: list[str]
    session_ids: list[str]
    end_bins: np.ndarray       # (n,) int64
    y_true: np.ndarray         # (n,) 0 alert / 1 fussy
    probs: np.ndarray          # (n,) fussy probability
    y_pred: np.ndarray         # (n,) thresholded at 0.5
    in_confident: np.ndarray   # (n,) bool

    def __len__(self) -> int:
        return len(self.end_bins)

    def session_slices(self):
        """Yield (session_id, infant_id, slice) per session, in trace order."""
        start = 0
        for i in range(1, len(self.session_ids) + 1):
            if i == len(self.session_ids) or self.session_ids[i] != self.session_ids[start]:
                yield self.session_ids[start], self.infant_ids[start], slice(start, i)
                start = i


@dataclass
class TemporalCurve:
    """Mean accuracy (with CI) per elapsed-time bin for one state."""

    kind: str                  # "tsat" or "tspt"
    state: AffectLabel
    bin_start_s: np.ndarray
    mean_accuracy: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    n_samples: np.ndarray
    n_infants: np.ndarray


@dataclass
class CvResult:
    """Per-fold AUCs and the concatenated test-fold prediction trace."""

    model_spec: str
    fold_auc_confident: np.ndarray
    fold_auc_total: np.ndarray
    fold_accuracy_confident: np.ndarray
    fold_accuracy_total: np.ndarray
    trace: PredictionTrace

    @property
    def mean_auc_confident(self) -> float:
        return float(np.nanmean(self.fold_auc_confident))

    @property
    def mean_auc_total(self) -> float:
        return float(np.nanmean(self.fold_auc_total))


# ---------------------------------------------------------------------------
# Cross-validation


def _spec_base_kinds(spec: str) -> tuple[str, ...]:
    return ("face", "body") if spec == "late" else (spec,)


def _standardization_from_stats(stats: GroupLabelStats, cols: np.ndarray):
    n = stats.n_alert + stats.n_fussy
    total = stats.sum_alert + stats.sum_fussy
    total_sq = stats.sumsq_alert + stats.sumsq_fussy
    mean = total[cols] / n
    var = np.maximum(total_sq[cols] / n - mean * mean, 0.0)
    std = np.sqrt(var)
    std = np.where(std < 1e-12, 1.0, std)
    return mean, std


def feature_cache(sessions: list[Session]) -> dict[str, FeatureMatrices]:
    """Precompute per-session feature geometry for repeated CV runs.

    The cache is label-independent, so it stays valid across runs that only
    relabel the same sessions. Costs roughly 50 MB per 10-minute session.
    """
    return {s.session_id: session_feature_matrices(s) for s in sessions}


def run_cv_multi(sessions: list[Session], model_specs, window_config: WindowConfig,
                 train_config: TrainConfig, k: int = 5, seed: int = 0,
                 cache: dict[str, FeatureMatrices] | None = None,
                 ) -> dict[str, CvResult]:
    """Cross-validate several model specs over one shared fold layout.

    Feature aggregation is shared across specs, so evaluating face, joint,
    and late models together costs one pipeline pass, not three. Passing the
    result of :func:`feature_cache` skips recomputing per-session geometry.

    Raises:
        TooFewInfantsError: fewer infants than folds.
        SingleClassFoldError: some training fold lacks a class (with fold
            diagnostics); the run aborts.
    """
    specs = [model_specs] if isinstance(model_specs, str) else list(model_specs)
    for s in specs:
        if s not in MODEL_SPECS:
            raise ValueError(f"unknown model spec {s!r}; choose from {MODEL_SPECS}")
    kinds = sorted({kind for s in specs for kind in _spec_base_kinds(s)},
                   key=("face", "body", "joint").index)
    groups_needed = tuple(dict.fromkeys(
        g for kind in kinds for g in MODEL_SPEC_GROUPS[kind]))
    cache = cache or {}

    # Pass one: per-session metadata blocks plus per-infant label stats over
    # D_confident, the selection/standardization training set. The stats are
    # masked sums accumulated block by block, so the full (samples x
    # aggregates) matrix is never materialized.
    blocks: list[SampleBlock] = []
    infant_stats: dict[str, dict[FeatureGroupId, GroupLabelStats]] = {}
    infant_counts: dict[str, np.ndarray] = {}  # [n_alert, n_fussy] over D_total
    for session in sessions:
        mats = cache.get(session.session_id)
        if mats is None:
            mats = session_feature_matrices(session)
        meta = block_metadata(session, window_config, mats)
        if meta is None:
            logger.warning("session %s too short for the %d-bin window; skipped",
                           session.session_id, window_config.max_long_bins)
            continue
        mask_a = (meta.keep & meta.confident
                  & (meta.labels_at_end == 0)).astype(np.float64)
        mask_f = (meta.keep & meta.confident
                  & (meta.labels_at_end == 1)).astype(np.float64)
        stats = infant_stats.setdefault(
            session.infant_id,
            {g: GroupLabelStats.zeros(
                AGGREGATES_PER_FEATURE * mats.groups[g].shape[1])
             for g in groups_needed})
        for g in groups_needed:
            width = mats.groups[g].shape[1]
            st = stats[g]
            for b, piece in enumerate(iter_aggregate_blocks(
                    mats.groups[g], window_config.short_bins,
                    long_bins_for(window_config, g), window_config.max_long_bins)):
                sq = piece * piece
                cols = slice(b * width, (b + 1) * width)
                st.sum_alert[cols] += mask_a @ piece
                st.sum_fussy[cols] += mask_f @ piece
                st.sumsq_alert[cols] += mask_a @ sq
                st.sumsq_fussy[cols] += mask_f @ sq
            st.n_alert += int(mask_a.sum())
            st.n_fussy += int(mask_f.sum())
        counts = infant_counts.setdefault(session.infant_id, np.zeros(2, dtype=np.int64))
        counts += np.bincount(meta.labels_at_end[meta.keep], minlength=2)
        blocks.append(SampleBlock(
            infant_id=session.infant_id,
            session_id=session.session_id,
            end_bins=meta.end_bins[meta.keep],
            labels=meta.labels_at_end[meta.keep],
            face_confident=meta.face_ok[meta.keep],
            body_confident=meta.body_ok[meta.keep],
        ))

    if not blocks:
        raise TooFewInfantsError("no session produced samples")
    infants = sorted(infant_counts)
    fractions = [(i, infant_counts[i][1] / infant_counts[i].sum()) for i in infants]
    folds = stratified_subject_folds(fractions, k=k, seed=seed)

    # Per-fold selection from summed training-infant stats.
    selections: list[FeatureSelection] = []
    standardizations = []  # fold -> {group: (mean, std)} on selected columns
    for fold in range(k):
        train_infants = [i for i in infants if folds.fold_of[i] != fold]
        fold_stats = {}
        for g in groups_needed:
            agg = GroupLabelStats.zeros(infant_stats[infants[0]][g].sum_alert.size)
            for i in train_infants:
                agg = agg.add(infant_stats[i][g])
            fold_stats[g] = agg
        try:
            sel = select_from_stats(fold_stats, k=TOP_K_DEFAULT, fold_id=fold)
        except SingleClassFoldError as exc:
            raise SingleClassFoldError(
                f"fold {fold} (training infants {train_infants}): {exc}") from exc
        selections.append(sel)
        standardizations.append({
            g: _standardization_from_stats(fold_stats[g], sel.indices[g])
            for g in groups_needed})

    # Pass two: re-aggregate only the base features behind the union of
    # selected aggregate columns (a few hundred instead of thousands).
    union_cols = {g: np.unique(np.concatenate([s.indices[g] for s in selections]))
                  for g in groups_needed}
    col_pos = {g: {int(c): j for j, c in enumerate(union_cols[g])}
               for g in groups_needed}
    session_by_id = {s.session_id: s for s in sessions}
    reduced: dict[str, dict[FeatureGroupId, np.ndarray]] = {}
    for block in blocks:
        session = session_by_id[block.session_id]
        mats = cache.get(block.session_id)
        if mats is None:
            mats = session_feature_matrices(session)
        meta = block_metadata(session, window_config, mats)
        per_group = {}
        for g in groups_needed:
            width = mats.groups[g].shape[1]
            stat_idx, base_idx = np.divmod(union_cols[g], width)
            base_cols = np.unique(base_idx)
            base_pos = {int(c): j for j, c in enumerate(base_cols)}
            pieces = list(iter_aggregate_blocks(
                mats.groups[g][:, base_cols], window_config.short_bins,
                long_bins_for(window_config, g), window_config.max_long_bins))
            out = np.empty((len(meta.end_bins), len(union_cols[g])))
            for j, (b, f) in enumerate(zip(stat_idx, base_idx)):
                out[:, j] = pieces[b][:, base_pos[int(f)]]
            per_group[g] = out[meta.keep]
        reduced[block.session_id] = per_group

    def fold_matrices(fold: int, kind: str, session_ids, row_mask_fn):
        """Stack (x_groups, labels) over the chosen sessions' masked rows."""
        sel = selections[fold]
        xs = {g: [] for g in MODEL_SPEC_GROUPS[kind]}
        ys = []
        for block in blocks:
            if block.session_id not in session_ids:
                continue
            mask = row_mask_fn(block)
            if not mask.any():
                continue
            for g in MODEL_SPEC_GROUPS[kind]:
                pos = [col_pos[g][int(c)] for c in sel.indices[g]]
                mean, std = standardizations[fold][g]
                xs[g].append((reduced[block.session_id][g][mask][:, pos] - mean) / std)
            ys.append(block.labels[mask])
        x_groups = {g: np.concatenate(v) if v else np.empty((0, TOP_K_DEFAULT))
                    for g, v in xs.items()}
        y = np.concatenate(ys) if ys else np.empty(0, dtype=np.int64)
        return x_groups, y

    results = {spec: [] for spec in specs}  # per-fold rows
    trace_rows = {spec: [] for spec in specs}
    kind_index = {"face": 0, "body": 1, "joint": 2}
    for fold in range(k):
        test_infants = set(folds.infants_in(fold))
        train_sessions = {b.session_id for b in blocks if b.infant_id not in test_infants}
        test_sessions = {b.session_id for b in blocks if b.infant_id in test_infants}

        nets: dict[str, GroupedModel] = {}
        for kind in kinds:
            x_groups, y = fold_matrices(fold, kind, train_sessions,
                                        lambda b: b.confident)
            if len(np.unique(y)) < 2:
                raise SingleClassFoldError(
                    f"fold {fold}: confident training samples hold a single class")
            sel = selections[fold]
            kind_sel = FeatureSelection(
                fold_id=fold, k=sel.k,
                indices={g: sel.indices[g] for g in MODEL_SPEC_GROUPS[kind]},
                t_stats={g: sel.t_stats[g] for g in MODEL_SPEC_GROUPS[kind]},
                dfs={g: sel.dfs[g] for g in MODEL_SPEC_GROUPS[kind]},
                p_values={g: sel.p_values[g] for g in MODEL_SPEC_GROUPS[kind]})
            std_mean = {g: standardizations[fold][g][0] for g in MODEL_SPEC_GROUPS[kind]}
            std_std = {g: standardizations[fold][g][1] for g in MODEL_SPEC_GROUPS[kind]}
            rng = np.random.default_rng(
                np.random.SeedSequence(train_config.seed,
                                       spawn_key=(fold, kind_index[kind])))
            nets[kind] = fit_network(x_groups, y, MODEL_SPEC_GROUPS[kind],
                                     train_config, kind_sel, std_mean, std_std, rng=rng)

        # Predict every test-fold sample, confident or not.
        kind_probs: dict[str, dict[str, np.ndarray]] = {kind: {} for kind in kinds}
        for block in blocks:
            if block.session_id not in test_sessions:
                continue
            for kind in kinds:
                x_groups, _ = fold_matrices(
                    fold, kind, {block.session_id},
                    lambda b: np.ones(b.n_samples, dtype=bool))
                probs, _, _ = _forward_batch(nets[kind], x_groups)
                kind_probs[kind][block.session_id] = probs

        for spec in specs:
            fold_probs, fold_labels, fold_conf = [], [], []
            for block in blocks:
                if block.session_id not in test_sessions:
                    continue
                if spec == "late":
                    probs = np.array([late_fuse(pf, pb) for pf, pb in zip(
                        kind_probs["face"][block.session_id],
                        kind_probs["body"][block.session_id])])
                else:
                    probs = kind_probs[spec][block.session_id]
                fold_probs.append(probs)
                fold_labels.append(block.labels)
                fold_conf.append(block.confident)
                trace_rows[spec].append((block, probs))
            probs = np.concatenate(fold_probs)
            labels = np.concatenate(fold_labels)
            conf = np.concatenate(fold_conf)
            results[spec].append((
                _safe_auc(probs[conf], labels[conf], fold, spec, "D_confident"),
                _safe_auc(probs, labels, fold, spec, "D_total"),
                accuracy(probs[conf], labels[conf]) if conf.any() else float("nan"),
                accuracy(probs, labels),
            ))

    out = {}
    session_order = {s.session_id: i for i, s in enumerate(sessions)}
    for spec in specs:
        rows = sorted(trace_rows[spec], key=lambda r: session_order[r[0].session_id])
        trace = PredictionTrace(
            infant_ids=sum(([b.infant_id] * b.n_samples for b, _ in rows), []),
            session_ids=sum(([b.session_id] * b.n_samples for b, _ in rows), []),
            end_bins=np.concatenate([b.end_bins for b, _ in rows]),
            y_true=np.concatenate([b.labels for b, _ in rows]),
            probs=np.concatenate([p for _, p in rows]),
            y_pred=(np.concatenate([p for _, p in rows]) >= DECISION_THRESHOLD
                    ).astype(np.int64),
            in_confident=np.concatenate([b.confident for b, _ in rows]),
        )
        per_fold = np.array(results[spec], dtype=np.float64)
        out[spec] = CvResult(
            model_spec=spec,
            fold_auc_confident=per_fold[:, 0],
            fold_auc_total=per_fold[:, 1],
            fold_accuracy_confident=per_fold[:, 2],
            fold_accuracy_total=per_fold[:, 3],
            trace=trace,
        )
    return out


def _safe_auc(probs, labels, fold, spec, which) -> float:
    try:
        return auc(probs, labels)
    except SingleClassError:
        logger.warning("fold %d %s %s: single class, AUC undefined", fold, spec, which)
        return float("nan")


def run_cv(sessions: list[Session], model_spec: str, window_config: WindowConfig,
           train_config: TrainConfig, k: int = 5, seed: int = 0,
           cache: dict[str, FeatureMatrices] | None = None) -> CvResult:
    """Cross-validate one model spec; see :func:`run_cv_multi`."""
    return run_cv_multi(sessions, [model_spec], window_config, train_config,
                        k=k, seed=seed, cache=cache)[model_spec]


def train_on_sessions(sessions: list[Session], model_spec: str,
                      window_config: WindowConfig, train_config: TrainConfig,
                      cache: dict[str, FeatureMatrices] | None = None) -> GroupedModel:
    """Fit one network on every session's D_confident samples.

    Streams sessions the same way run_cv_multi does (statistics first, then
    only the selected columns), so memory stays flat regardless of dataset
    size. ``model_spec`` must be a single network: face, body, or joint.

    Raises:
        SingleClassFoldError: the confident samples hold a single class.
    """
    if model_spec not in MODEL_SPEC_GROUPS:
        raise ValueError(f"model spec must be one of {tuple(MODEL_SPEC_GROUPS)}")
    groups = MODEL_SPEC_GROUPS[model_spec]
    cache = cache or {}

    stats = None
    usable = []
    metas = {}
    for session in sessions:
        mats = cache.get(session.session_id) or session_feature_matrices(session)
        meta = block_metadata(session, window_config, mats)
        if meta is None:
            logger.warning("session %s too short for the %d-bin window; skipped",
                           session.session_id, window_config.max_long_bins)
            continue
        if stats is None:
            stats = {g: GroupLabelStats.zeros(
                AGGREGATES_PER_FEATURE * mats.groups[g].shape[1]) for g in groups}
        mask_a = (meta.keep & meta.confident & (meta.labels_at_end == 0)).astype(np.float64)
        mask_f = (meta.keep & meta.confident & (meta.labels_at_end == 1)).astype(np.float64)
        for g in groups:
            width = mats.groups[g].shape[1]
            st = stats[g]
            for b, piece in enumerate(iter_aggregate_blocks(
                    mats.groups[g], window_config.short_bins,
                    long_bins_for(window_config, g), window_config.max_long_bins)):
                sq = piece * piece
                cols = slice(b * width, (b + 1) * width)
                st.sum_alert[cols] += mask_a @ piece
                st.sum_fussy[cols] += mask_f @ piece
                st.sumsq_alert[cols] += mask_a @ sq
                st.sumsq_fussy[cols] += mask_f @ sq
            st.n_alert += int(mask_a.sum())
            st.n_fussy += int(mask_f.sum())
        usable.append(session)
    if stats is None:
        raise SingleClassFoldError("no session produced samples")

    selection = select_from_stats(stats, k=TOP_K_DEFAULT, fold_id=0)
    std = {g: _standardization_from_stats(stats[g], selection.indices[g])
           for g in groups}

    xs = {g: [] for g in groups}
    ys = []
    for session in usable:
        mats = cache.get(session.session_id) or session_feature_matrices(session)
        meta = block_metadata(session, window_config, mats)
        rows = meta.keep & meta.confident
        if not rows.any():
            continue
        for g in groups:
            width = mats.groups[g].shape[1]
            stat_idx, base_idx = np.divmod(selection.indices[g], width)
            base_cols = np.unique(base_idx)
            base_pos = {int(c): j for j, c in enumerate(base_cols)}
            pieces = list(iter_aggregate_blocks(
                mats.groups[g][:, base_cols], window_config.short_bins,
                long_bins_for(window_config, g), window_config.max_long_bins))
            out = np.empty((int(rows.sum()), len(selection.indices[g])))
            for j, (b, f) in enumerate(zip(stat_idx, base_idx)):
                out[:, j] = pieces[b][rows, base_pos[int(f)]]
            mean, sd = std[g]
            xs[g].append((out - mean) / sd)
        ys.append(meta.labels_at_end[rows])
    x_groups = {g: np.concatenate(v) for g, v in xs.items()}
    y = np.concatenate(ys)
    if len(np.unique(y)) < 2:
        raise SingleClassFoldError("confident samples hold a single class")
    std_mean = {g: std[g][0] for g in groups}
    std_std = {g: std[g][1] for g in groups}
    return fit_network(x_groups, y, groups, train_config, selection,
                       std_mean, std_std)


# ---------------------------------------------------------------------------
# Temporal curves


def _curves_from_groups(kind: str, grouped: dict) -> tuple[TemporalCurve, TemporalCurve]:
    """Assemble per-state curves from {(state, bin): {infant: [correct...]}}."""
    curves = []
    for state in (AffectLabel.ALERT, AffectLabel.FUSSY):
        bins = sorted(b for s, b in grouped if s == state.value)
        rows = []
        for b in bins:
            per_infant = grouped[(state.value, b)]
            n_samples = sum(len(v) for v in per_infant.values())
            if n_samples <= CURVE_MIN_SAMPLES:
                continue
            accs = np.array([np.mean(v) for _, v in sorted(per_infant.items())])
            low, high = confidence_interval_95(accs)
            rows.append((b * BIN_WIDTH_S, accs.mean(), low, high,
                         n_samples, len(per_infant)))
        arr = np.array(rows, dtype=np.float64) if rows else np.empty((0, 6))
        curves.append(TemporalCurve(
            kind=kind, state=state,
            bin_start_s=arr[:, 0] if rows else np.empty(0),
            mean_accuracy=arr[:, 1] if rows else np.empty(0),
            ci_low=arr[:, 2] if rows else np.empty(0),
            ci_high=arr[:, 3] if rows else np.empty(0),
            n_samples=arr[:, 4].astype(np.int64) if rows else np.empty(0, dtype=np.int64),
            n_infants=arr[:, 5].astype(np.int64) if rows else np.empty(0, dtype=np.int64),
        ))
    return curves[0], curves[1]


def tsat_curve(trace: PredictionTrace, session_labels: dict[str, list[AffectLabel]]
               ) -> tuple[TemporalCurve, TemporalCurve]:
    """Accuracy vs. time since the true state last changed.

    ``session_labels`` maps session_id to its full per-bin label sequence;
    session start counts as a transition and EXCLUDED bins break runs.
    Samples group per infant by (true state, floor(TSAT / 0.25 s)); the curve
    averages per-infant accuracies within each bin.
    """
    grouped: dict = {}
    for session_id, infant_id, sl in trace.session_slices():
        labels = session_labels[session_id]
        codes = np.array([lab.value for lab in labels], dtype=np.int64)
        run_start = np.zeros(len(codes), dtype=np.int64)
        for b in range(1, len(codes)):
            run_start[b] = b if codes[b] != codes[b - 1] else run_start[b - 1]
        ends = trace.end_bins[sl]
        correct = trace.y_pred[sl] == trace.y_true[sl]
        tsat_bins = ends - run_start[ends]
        for i in range(len(ends)):
            key = (int(trace.y_true[sl][i]), int(tsat_bins[i]))
            grouped.setdefault(key, {}).setdefault(infant_id, []).append(
                float(correct[i]))
    return _curves_from_groups("tsat", grouped)


def tspt_curve(trace: PredictionTrace) -> tuple[TemporalCurve, TemporalCurve]:
    """Accuracy vs. time since the prediction last changed, keyed on the
    predicted state.

    A sample's TSPT is 0 iff it is the first of its session, its prediction
    differs from the previous sample's, or the trace is non-contiguous there.
    """
    grouped: dict = {}
    for _, infant_id, sl in trace.session_slices():
        ends = trace.end_bins[sl]
        preds = trace.y_pred[sl]
        correct = preds == trace.y_true[sl]
        run_start = ends[0]
        for i in range(len(ends)):
            if i > 0 and (preds[i] != preds[i - 1] or ends[i] != ends[i - 1] + 1):
                run_start = ends[i]
            key = (int(preds[i]), int(ends[i] - run_start))
            grouped.setdefault(key, {}).setdefault(infant_id, []).append(
                float(correct[i]))
    return _curves_from_groups("tspt", grouped)


# ---------------------------------------------------------------------------
# CSV rendering (17 significant digits so reruns diff byte-identically)


def _fmt(x) -> str:
    if isinstance(x, float) or isinstance(x, np.floating):
        return f"{x:.17g}"
    return str(x)


def render_metrics_csv(results: dict[str, CvResult]) -> str:
    lines = ["model,fold,dataset,auc,accuracy"]
    for spec in sorted(results):
        r = results[spec]
        for fold in range(len(r.fold_auc_confident)):
            lines.append(f"{spec},{fold},confident,"
                         f"{_fmt(r.fold_auc_confident[fold])},"
                         f"{_fmt(r.fold_accuracy_confident[fold])}")
            lines.append(f"{spec},{fold},total,"
                         f"{_fmt(r.fold_auc_total[fold])},"
                         f"{_fmt(r.fold_accuracy_total[fold])}")
    return "\n".join(lines) + "\n"


def render_trace_csv(results: dict[str, CvResult]) -> str:
    lines = ["model,infant_id,session_id,end_bin,true_label,prob,pred_label,in_confident"]
    for spec in sorted(results):
        t = results[spec].trace
        for i in range(len(t)):
            lines.append(
                f"{spec},{t.infant_ids[i]},{t.session_ids[i]},{t.end_bins[i]},"
                f"{int(t.y_true[i])},{_fmt(float(t.probs[i]))},{int(t.y_pred[i])},"
                f"{int(t.in_confident[i])}")
    return "\n".join(lines) + "\n"


def render_curves_csv(curves_by_model: dict[str, tuple[TemporalCurve, TemporalCurve]]) -> str:
    lines = ["model,state,bin_start_s,mean_acc,ci_low,ci_high,n_samples,n_infants"]
    for spec in sorted(curves_by_model):
        for curve in curves_by_model[spec]:
            for i in range(len(curve.bin_start_s)):
                lines.append(
                    f"{spec},{curve.state.name.lower()},{_fmt(float(curve.bin_start_s[i]))},"
                    f"{_fmt(float(curve.mean_accuracy[i]))},{_fmt(float(curve.ci_low[i]))},"
                    f"{_fmt(float(curve.ci_high[i]))},{int(curve.n_samples[i])},"
                    f"{int(curve.n_infants[i])}")
    return "\n".join(lines) + "\n"
