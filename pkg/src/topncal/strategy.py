"""Calibrator-training strategies: Original, TNF, VAD, and uncalibrated.

Every strategy yields an object with ``predict(scores, ranks)`` producing
calibrated predictions. TNF partitions ranks 1..N into contiguous groups,
fits one calibrator per group with weights (1/rank)^alpha, and routes each
query by its rank.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibrate import clamp_output, fit_calibrator, vanilla
from .data import InteractionTable
from .errors import ConfigError, FitError
from .recommend import rank_items


# ---------------------------------------------------------------------------
# calibration samples

@dataclass(frozen=True)
class SampleSet:
    """Per-item calibration triplets: label, raw score, rank (1-based)."""

    users: np.ndarray
    items: np.ndarray
    scores: np.ndarray
    labels: np.ndarray
    ranks: np.ndarray
    tag: str = "validation"

    def __len__(self):
        return len(self.scores)

    def top_n(self, n_cutoff: int) -> "SampleSet":
        mask = (self.ranks >= 1) & (self.ranks <= n_cutoff)
        return SampleSet(self.users[mask], self.items[mask], self.scores[mask],
                         self.labels[mask], self.ranks[mask], self.tag)


def _check_fit_samples(samples: "SampleSet"):
    if samples.tag == "test":
        raise FitError("refusing to fit a calibrator on test-tagged samples")


def build_calibration_samples(model, table: InteractionTable, indices,
                              n_cutoff: int | None = None,
                              tag: str = "validation") -> SampleSet:
    """Rank each user's items within the given split and attach labels.

    Candidates are the user's own records in the split, so every sample has
    an observed label. Users without records in the split are skipped.
    """
    sub = table.subset(indices, tag=tag)
    order = np.argsort(sub.users, kind="stable")
    bounds = np.searchsorted(sub.users[order], np.arange(table.n_users + 1))
    users, items, scores, labels, ranks = [], [], [], [], []
    for u in range(table.n_users):
        idx = order[bounds[u]:bounds[u + 1]]
        if len(idx) == 0:
            continue
        cand = sub.items[idx]
        label_by_item = dict(zip(cand.tolist(), sub.feedback[idx].tolist()))
        ranked = rank_items(model, u, cand, n=n_cutoff)
        users.append(np.full(len(ranked.items), u))
        items.append(ranked.items)
        scores.append(ranked.scores)
        labels.append(np.array([label_by_item[i] for i in ranked.items.tolist()]))
        ranks.append(ranked.ranks)
    if not users:
        raise ConfigError("no users with records in this split")
    arrays = [np.concatenate(a) for a in (users, items, scores, labels, ranks)]
    return SampleSet(*arrays, tag=tag)


# ---------------------------------------------------------------------------
# rank grouping

@dataclass(frozen=True)
class GroupScheme:
    n: int
    boundaries: tuple  # ((lo, hi), ...) partitioning 1..n

    def group_of(self, rank: int) -> int:
        for g, (lo, hi) in enumerate(self.boundaries):
            if lo <= rank <= hi:
                return g
        raise ConfigError(f"rank {rank} outside 1..{self.n}")

    @property
    def sizes(self):
        return [hi - lo + 1 for lo, hi in self.boundaries]


def make_group_scheme(n_cutoff: int, n_groups: int) -> GroupScheme:
    """Split ranks 1..N into n_groups contiguous groups of near-equal size,
    ceil-sized groups interleaved first (18, 4 -> sizes 5, 4, 5, 4)."""
    if not 1 <= n_groups <= n_cutoff:
        raise ConfigError(f"need 1 <= n_groups <= {n_cutoff}, got {n_groups}")
    cuts = [int(np.ceil(k * n_cutoff / n_groups)) for k in range(n_groups + 1)]
    boundaries = tuple((cuts[g] + 1, cuts[g + 1]) for g in range(n_groups))
    return GroupScheme(n_cutoff, boundaries)


def rank_weights(ranks, alpha: float):
    """Discounting weight (1/rank)^alpha for each sample."""
    r = np.asarray(ranks, dtype=np.float64)
    if np.any(r < 1):
        raise ConfigError("ranks must be >= 1")
    return r ** -alpha


# ---------------------------------------------------------------------------
# strategies

@dataclass(frozen=True)
class VanillaStrategy:
    score_range: str

    def predict(self, scores, ranks=None):
        return vanilla(self.score_range, scores)


@dataclass(frozen=True)
class OriginalStrategy:
    calibrator: object

    def predict(self, scores, ranks=None):
        return clamp_output(self.calibrator, self.calibrator.calibrate(scores))


@dataclass(frozen=True)
class TnfCalibrator:
    scheme: GroupScheme
    calibrators: tuple
    alpha: float
    base_kind: str

    def predict(self, scores, ranks):
        s = np.atleast_1d(np.asarray(scores, dtype=np.float64))
        r = np.atleast_1d(np.asarray(ranks, dtype=np.int64))
        out = np.empty(len(s))
        group = np.array([self.scheme.group_of(int(rk)) for rk in r])
        for g, cal in enumerate(self.calibrators):
            at = group == g
            if at.any():
                out[at] = clamp_output(cal, cal.calibrate(s[at]))
        return out


@dataclass(frozen=True)
class VadAdjuster:
    calibrator: object
    delta: np.ndarray  # per-rank subtraction, index r-1
    lam: float

    def predict(self, scores, ranks):
        r = np.atleast_1d(np.asarray(ranks, dtype=np.int64))
        if np.any((r < 1) | (r > len(self.delta))):
            raise ConfigError(f"VAD only defined for ranks 1..{len(self.delta)}")
        yhat = self.calibrator.calibrate(scores) - self.delta[r - 1]
        return clamp_output(self.calibrator, yhat)


def fit_original(samples: SampleSet, kind: str, *, score_range: str = "bounded01",
                 output_range=(0.0, 1.0), n_bins: int = 15) -> OriginalStrategy:
    """Unit-weight fit on all validation samples regardless of rank."""
    if len(samples) == 0:
        raise FitError("no validation samples")
    _check_fit_samples(samples)
    cal = fit_calibrator(kind, samples.scores, samples.labels, None,
                         score_range=score_range, output_range=output_range,
                         n_bins=n_bins)
    return OriginalStrategy(cal)


def default_n_groups(n_cutoff: int) -> int:
    return max(1, round(n_cutoff / 5))


def fit_tnf(samples: SampleSet, n_cutoff: int, n_groups: int | None = None,
            alpha: float = 1.0, kind: str = "isotonic", *,
            score_range: str = "bounded01", output_range=(0.0, 1.0),
            n_bins: int = 15) -> TnfCalibrator:
    """Fit one calibrator per rank group on top-N validation samples with
    weights (1/rank)^alpha."""
    _check_fit_samples(samples)
    if n_groups is None:
        n_groups = default_n_groups(n_cutoff)
    scheme = make_group_scheme(n_cutoff, n_groups)
    top = samples.top_n(n_cutoff)
    weights = rank_weights(top.ranks, alpha)
    cals = []
    for lo, hi in scheme.boundaries:
        at = (top.ranks >= lo) & (top.ranks <= hi)
        needed = n_bins if kind == "histogram" else 2
        if at.sum() < needed:
            raise FitError(
                f"rank group [{lo}, {hi}] has {int(at.sum())} samples, fewer than "
                f"{needed}; use a smaller number of groups")
        cals.append(fit_calibrator(kind, top.scores[at], top.labels[at], weights[at],
                                   score_range=score_range, output_range=output_range,
                                   n_bins=n_bins))
    return TnfCalibrator(scheme=scheme, calibrators=tuple(cals), alpha=alpha,
                         base_kind=kind)


def fit_vad(samples: SampleSet, n_cutoff: int, model_factory, ensemble_size: int = 5,
            lam: float = 1.0, kind: str = "isotonic", *,
            score_range: str = "bounded01", output_range=(0.0, 1.0),
            n_bins: int = 15) -> VadAdjuster:
    """Variance-adjusting baseline: fit the all-items calibrator, then subtract
    a per-rank correction derived from the spread of calibrated scores across
    an ensemble of retrained recommenders.

    ``model_factory(seed)`` must train a recommender on the training split.
    """
    if ensemble_size < 2:
        raise ConfigError("VAD needs an ensemble of at least 2 models")
    base = fit_original(samples, kind, score_range=score_range,
                        output_range=output_range, n_bins=n_bins)
    top = samples.top_n(n_cutoff)
    member_preds = np.empty((ensemble_size, len(top)))
    for k in range(ensemble_size):
        model = model_factory(k + 1)
        member_preds[k] = base.predict(model.score(top.users, top.items))
    spread = member_preds.std(axis=0)
    delta = np.zeros(n_cutoff)
    for r in range(1, n_cutoff + 1):
        at = top.ranks == r
        if at.any():
            delta[r - 1] = lam * float(spread[at].mean())
    return VadAdjuster(calibrator=base.calibrator, delta=delta, lam=lam)
