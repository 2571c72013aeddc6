"""Welch's unequal-variances t-test and top-k per-group feature selection.

Candidates are ranked by exact two-sided p-value rather than |t|: degrees of
freedom differ per feature under the Welch-Satterthwaite formula, so the two
orderings disagree. p-values come from the regularized incomplete beta
function I_x(df/2, 1/2) at x = df / (df + t^2), evaluated with a modified
Lentz continued fraction to absolute tolerance 1e-12.

Features where both label groups have zero variance carry no signal (the
common case is an occluded, constant-zero channel); by convention they get
t = 0, df = n_a + n_b - 2, p = 1 so they are never selected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, SingleClassFoldError
from .preprocess import FeatureGroupId

TOP_K_DEFAULT = 12

_lgamma = np.vectorize(math.lgamma, otypes=[np.float64])

_CF_TOL = 1e-15
_CF_MAX_ITER = 3000
_CF_TINY = 1e-300


def _beta_continued_fraction(a: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Modified Lentz evaluation of the incomplete-beta continued fraction.

    Elementwise over arrays; iterates until every element's multiplicative
    update is within _CF_TOL of 1.
    """
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    np.copyto(d, _CF_TINY, where=np.abs(d) < _CF_TINY)
    d = 1.0 / d
    h = d.copy()
    # Elements freeze once converged so each result is bit-identical to a
    # standalone scalar evaluation regardless of its neighbors.
    converged = np.zeros(x.shape, dtype=bool)
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2.0 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        np.copyto(d, _CF_TINY, where=np.abs(d) < _CF_TINY)
        c = 1.0 + aa / c
        np.copyto(c, _CF_TINY, where=np.abs(c) < _CF_TINY)
        d = 1.0 / d
        h = np.where(converged, h, h * d * c)
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        np.copyto(d, _CF_TINY, where=np.abs(d) < _CF_TINY)
        c = 1.0 + aa / c
        np.copyto(c, _CF_TINY, where=np.abs(c) < _CF_TINY)
        d = 1.0 / d
        delta = d * c
        h = np.where(converged, h, h * delta)
        converged |= np.abs(delta - 1.0) < _CF_TOL
        if converged.all():
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a, b, x) -> np.ndarray | float:
    """I_x(a, b), elementwise. Uses the symmetry I_x(a,b) = 1 - I_{1-x}(b,a)
    when the continued fraction would converge slowly."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    a, b, x = np.broadcast_arrays(a, b, x)
    out = np.empty(x.shape, dtype=np.float64)
    out[x <= 0.0] = 0.0
    out[x >= 1.0] = 1.0
    interior = (x > 0.0) & (x < 1.0)
    if interior.any():
        ai, bi, xi = a[interior], b[interior], x[interior]
        swap = xi >= (ai + 1.0) / (ai + bi + 2.0)
        aa = np.where(swap, bi, ai)
        bb = np.where(swap, ai, bi)
        xx = np.where(swap, 1.0 - xi, xi)
        ln_front = (aa * np.log(xx) + bb * np.log1p(-xx)
                    - (_lgamma(aa) + _lgamma(bb) - _lgamma(aa + bb)))
        val = np.exp(ln_front) * _beta_continued_fraction(aa, bb, xx) / aa
        out[interior] = np.where(swap, 1.0 - val, val)
    return out if out.ndim else float(out)


def t_sf_two_sided(t, df):
    """Two-sided p-value 2*P(T_df >= |t|); p(0, df) is exactly 1."""
    t = np.asarray(t, dtype=np.float64)
    df = np.asarray(df, dtype=np.float64)
    if np.any(df <= 0):
        raise ValueError("df must be positive")
    x = df / (df + t * t)
    p = np.asarray(regularized_incomplete_beta(df / 2.0, 0.5, x))
    p = np.where(t == 0.0, 1.0, p)
    return p if p.ndim else float(p)


def welch_t_from_stats(n_a, mean_a, var_a, n_b, mean_b, var_b
                       ) -> tuple[np.ndarray, np.ndarray]:
    """(t, df) from per-group counts, means, and sample variances.

    Vectorized over features. Applies the zero-variance convention
    elementwise. Variances use the n-1 denominator.
    """
    n_a = float(n_a)
    n_b = float(n_b)
    var_a = np.asarray(var_a, dtype=np.float64)
    var_b = np.asarray(var_b, dtype=np.float64)
    se_a = var_a / n_a
    se_b = var_b / n_b
    se2 = se_a + se_b
    flat = se2 == 0.0
    safe = np.where(flat, 1.0, se2)
    t = (np.asarray(mean_a, dtype=np.float64) - np.asarray(mean_b, dtype=np.float64)) / np.sqrt(safe)
    denom = se_a * se_a / (n_a - 1.0) + se_b * se_b / (n_b - 1.0)
    df = safe * safe / np.where(flat, 1.0, denom)  # denom = 0 only when flat
    t = np.where(flat, 0.0, t)
    df = np.where(flat, n_a + n_b - 2.0, df)
    return t, df


def welch_t(sample_a, sample_b) -> tuple[float, float]:
    """Welch's two-sample t statistic and Welch-Satterthwaite df.

    Raises:
        InsufficientDataError: either sample has fewer than 2 observations.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise InsufficientDataError(
            f"need at least 2 observations per sample, got {a.size} and {b.size}")
    t, df = welch_t_from_stats(a.size, a.mean(), a.var(ddof=1),
                               b.size, b.mean(), b.var(ddof=1))
    return float(t), float(df)


@dataclass
class GroupLabelStats:
    """Per-label first/second moments of one group's aggregate columns."""

    n_alert: int
    n_fussy: int
    sum_alert: np.ndarray
    sum_fussy: np.ndarray
    sumsq_alert: np.ndarray
    sumsq_fussy: np.ndarray

    @staticmethod
    def zeros(width: int) -> "GroupLabelStats":
        return GroupLabelStats(0, 0, np.zeros(width), np.zeros(width),
                               np.zeros(width), np.zeros(width))

    def add(self, other: "GroupLabelStats") -> "GroupLabelStats":
        return GroupLabelStats(
            self.n_alert + other.n_alert, self.n_fussy + other.n_fussy,
            self.sum_alert + other.sum_alert, self.sum_fussy + other.sum_fussy,
            self.sumsq_alert + other.sumsq_alert, self.sumsq_fussy + other.sumsq_fussy)

    @staticmethod
    def from_matrix(matrix: np.ndarray, labels: np.ndarray) -> "GroupLabelStats":
        fussy = labels == 1
        alert = ~fussy
        ma = matrix[alert]
        mf = matrix[fussy]
        return GroupLabelStats(
            n_alert=int(alert.sum()), n_fussy=int(fussy.sum()),
            sum_alert=ma.sum(axis=0), sum_fussy=mf.sum(axis=0),
            sumsq_alert=(ma * ma).sum(axis=0), sumsq_fussy=(mf * mf).sum(axis=0))

    def moments(self):
        """((mean_a, var_a), (mean_f, var_f)) with sample (n-1) variances."""
        mean_a = self.sum_alert / self.n_alert
        mean_f = self.sum_fussy / self.n_fussy
        var_a = np.maximum(self.sumsq_alert - self.n_alert * mean_a * mean_a, 0.0) \
            / (self.n_alert - 1)
        var_f = np.maximum(self.sumsq_fussy - self.n_fussy * mean_f * mean_f, 0.0) \
            / (self.n_fussy - 1)
        return (mean_a, var_a), (mean_f, var_f)


@dataclass
class FeatureSelection:
    """Chosen aggregate-feature indices per group, with the full test stats.

    ``indices[g]`` holds min(k, group width) column indices sorted by
    ascending p-value (ties by larger |t|, then smaller index); the t/df/p
    arrays cover every candidate column of the group.
    """

    fold_id: int
    k: int
    indices: dict[FeatureGroupId, np.ndarray]
    t_stats: dict[FeatureGroupId, np.ndarray]
    dfs: dict[FeatureGroupId, np.ndarray]
    p_values: dict[FeatureGroupId, np.ndarray]


def rank_columns(t: np.ndarray, p: np.ndarray, k: int) -> np.ndarray:
    """Top-k column indices by (p ascending, |t| descending, index ascending)."""
    order = np.lexsort((np.arange(len(p)), -np.abs(t), p))
    return order[: min(k, len(p))]


def select_from_stats(stats: dict[FeatureGroupId, GroupLabelStats],
                      k: int = TOP_K_DEFAULT, fold_id: int = 0) -> FeatureSelection:
    """Rank every group's aggregate columns from accumulated label stats."""
    any_stats = next(iter(stats.values()))
    if any_stats.n_alert < 2 or any_stats.n_fussy < 2:
        raise SingleClassFoldError(
            f"fold {fold_id}: need >= 2 samples per class, got "
            f"{any_stats.n_alert} alert / {any_stats.n_fussy} fussy")
    indices, t_stats, dfs, p_values = {}, {}, {}, {}
    for g, st in stats.items():
        (mean_a, var_a), (mean_f, var_f) = st.moments()
        t, df = welch_t_from_stats(st.n_alert, mean_a, var_a,
                                   st.n_fussy, mean_f, var_f)
        p = np.asarray(t_sf_two_sided(t, df))
        indices[g] = rank_columns(t, p, k)
        t_stats[g], dfs[g], p_values[g] = t, df, p
    return FeatureSelection(fold_id=fold_id, k=k, indices=indices,
                            t_stats=t_stats, dfs=dfs, p_values=p_values)


def select_top_k(samples, k: int = TOP_K_DEFAULT, fold_id: int = 0) -> FeatureSelection:
    """Fit feature selection on a training fold of WindowedSamples.

    Raises:
        SingleClassFoldError: fewer than 2 samples of either class.
    """
    if not samples:
        raise SingleClassFoldError("empty training fold")
    labels = np.array([s.label.value for s in samples], dtype=np.int64)
    groups = list(samples[0].groups)
    stats = {}
    for g in groups:
        matrix = np.stack([s.groups[g] for s in samples])
        stats[g] = GroupLabelStats.from_matrix(matrix, labels)
    return select_from_stats(stats, k=k, fold_id=fold_id)
