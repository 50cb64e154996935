"""Calibration and accuracy metrics.

The calibration error of a prediction is the absolute gap between the mean
prediction and the mean observed feedback; its expectation is estimated by
equal-count binning. Top-N variants restrict the samples to each user's
highest-ranked items, optionally discounting by reciprocal rank.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigError


@dataclass(frozen=True)
class Bin:
    indices: np.ndarray
    mean_prediction: float
    mean_label: float

    @property
    def count(self):
        return len(self.indices)


def equal_count_bins(predictions, labels, m: int) -> list[Bin]:
    """Sort by prediction (ties by label, then input index) and cut into m
    contiguous bins whose sizes differ by at most one."""
    yhat = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    n = len(yhat)
    if m < 1 or m > n:
        raise ConfigError(f"need 1 <= m <= {n}, got {m}")
    order = np.lexsort((np.arange(n), y, yhat))
    bounds = [n * b // m for b in range(m + 1)]
    bins = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        idx = order[a:b]
        bins.append(Bin(idx, float(yhat[idx].mean()), float(y[idx].mean())))
    return bins


def adaptive_bin_count(predictions, labels, m_max: int | None = None) -> int:
    """Largest bin count (up to m_max) for which the per-bin mean labels are
    non-decreasing across bins; 1 always qualifies."""
    yhat = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    n = len(yhat)
    if n < 1:
        raise ConfigError("no samples")
    if m_max is None:
        m_max = min(n // 10, 100)
    m_max = max(1, min(m_max, n))
    order = np.lexsort((np.arange(n), y, yhat))
    ys = y[order]
    for m in range(m_max, 0, -1):
        bounds = [n * b // m for b in range(m + 1)]
        means = [ys[a:b].mean() for a, b in zip(bounds[:-1], bounds[1:])]
        if all(means[i] <= means[i + 1] for i in range(len(means) - 1)):
            return m
    return 1


def ece(predictions, labels, m: int) -> float:
    """Binned expected calibration error: population-weighted mean absolute
    gap between per-bin mean label and mean prediction."""
    yhat = np.asarray(predictions, dtype=np.float64)
    if len(yhat) == 0:
        raise ConfigError("no samples")
    n = len(yhat)
    return float(sum(b.count / n * abs(b.mean_label - b.mean_prediction)
                     for b in equal_count_bins(predictions, labels, m)))


def _topn_mask(ranks, n_cutoff):
    r = np.asarray(ranks, dtype=np.int64)
    mask = (r >= 1) & (r <= n_cutoff)
    if not mask.any():
        raise ConfigError(f"no samples ranked within top-{n_cutoff}")
    return mask


def ece_at_n(predictions, labels, ranks, n_cutoff: int, m: int | None = None,
             m_max: int | None = None) -> float:
    """ECE restricted to samples ranked within the top-N; the bin count is
    adaptive on the restricted set unless overridden."""
    mask = _topn_mask(ranks, n_cutoff)
    yhat = np.asarray(predictions, dtype=np.float64)[mask]
    y = np.asarray(labels, dtype=np.float64)[mask]
    if m is None:
        m = adaptive_bin_count(yhat, y, m_max)
    return ece(yhat, y, m)


def rdece_at_n(predictions, labels, ranks, n_cutoff: int) -> float:
    """Rank-discounted ECE over the top-N: one bin per rank, gaps weighted by
    1/r; absent ranks drop out of the weight normalizer."""
    mask = _topn_mask(ranks, n_cutoff)
    yhat = np.asarray(predictions, dtype=np.float64)[mask]
    y = np.asarray(labels, dtype=np.float64)[mask]
    r = np.asarray(ranks, dtype=np.int64)[mask]
    n_prime = len(yhat)
    total = 0.0
    w_sum = 0.0
    for rank in np.unique(r):
        at = r == rank
        w = 1.0 / rank
        w_sum += w
        total += w * at.sum() / n_prime * abs(y[at].mean() - yhat[at].mean())
    return float(n_cutoff / w_sum * total)


# ---------------------------------------------------------------------------
# diagram data

def reliability_diagram(predictions, labels, m: int, scheme: str = "count"):
    """Per-bin (mean_prediction, mean_label, count) rows, ordered by mean
    prediction; scheme "width" uses equal-width bins over the prediction range
    instead of equal-count bins."""
    yhat = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if scheme == "count":
        bins = equal_count_bins(yhat, y, m)
        rows = [(b.mean_prediction, b.mean_label, b.count) for b in bins]
    elif scheme == "width":
        edges = np.linspace(yhat.min(), yhat.max(), m + 1)
        which = np.clip(np.searchsorted(edges, yhat, side="right") - 1, 0, m - 1)
        rows = []
        for b in range(m):
            at = which == b
            if at.any():
                rows.append((float(yhat[at].mean()), float(y[at].mean()), int(at.sum())))
    else:
        raise ConfigError(f"unknown binning scheme {scheme!r}")
    rows.sort(key=lambda t: t[0])
    return rows


def prediction_histogram(predictions, n_bins: int = 20, value_range=None):
    """Equal-width histogram of predictions for the frequency overlay."""
    yhat = np.asarray(predictions, dtype=np.float64)
    counts, edges = np.histogram(yhat, bins=n_bins, range=value_range)
    return counts, edges


def rank_calibration_plot(predictions, labels, ranks, group_size: int = 5,
                          max_rank: int | None = None):
    """Mean prediction and mean label per rank group [1..g], [g+1..2g], ..."""
    yhat = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    r = np.asarray(ranks, dtype=np.int64)
    if max_rank is None:
        max_rank = int(r.max()) if len(r) else 0
    rows = []
    lo = 1
    while lo <= max_rank:
        hi = min(lo + group_size - 1, max_rank)
        at = (r >= lo) & (r <= hi)
        if at.any():
            rows.append((lo, hi, float(yhat[at].mean()), float(y[at].mean()), int(at.sum())))
        lo = hi + 1
    return rows


# ---------------------------------------------------------------------------
# accuracy metrics (depend only on the recommender)

def rmse(predictions, labels) -> float:
    yhat = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if len(yhat) == 0:
        raise ConfigError("no samples")
    return float(np.sqrt(np.mean((yhat - y) ** 2)))


def auc(scores, labels) -> float:
    """Rank-sum (Mann-Whitney) AUC with midrank tie handling."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64) > 0.5
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ConfigError("AUC undefined with a single class")
    r = rankdata(s)
    return float((r[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def ndcg_at_n(ranked_label_lists, n_cutoff: int) -> float:
    """Mean NDCG@N over users with at least one positive; binary gains and
    log2 position discount. Each input list holds a user's labels in ranked
    order (best-scored first)."""
    discounts = 1.0 / np.log2(np.arange(2, n_cutoff + 2))
    vals = []
    for labels in ranked_label_lists:
        y = np.asarray(labels, dtype=np.float64)
        if y.sum() <= 0:
            continue
        top = y[:n_cutoff]
        dcg = float(top @ discounts[:len(top)])
        ideal = np.sort(y)[::-1][:n_cutoff]
        idcg = float(ideal @ discounts[:len(ideal)])
        vals.append(dcg / idcg)
    if not vals:
        raise ConfigError("NDCG undefined: no user has a positive label")
    return float(np.mean(vals))
