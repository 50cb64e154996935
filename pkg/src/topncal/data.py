"""Feedback tables: CSV ingestion, seeded splitting, synthetic generation.

Tables keep dense 0-based user/item ids internally; the original ids from a
CSV are preserved in sidecar maps so outputs can be translated back.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit

from .errors import DataError

EXPLICIT = "explicit"
IMPLICIT = "implicit"


@dataclass
class InteractionTable:
    """User-item feedback records with dense ids.

    ``feedback`` is a rating in [rating_min, rating_max] for explicit tables
    and a 0/1 label for implicit ones.  ``tag`` marks which split the rows
    came from ("all" for a full table); fitting code uses it to reject test
    data.
    """

    users: np.ndarray
    items: np.ndarray
    feedback: np.ndarray
    kind: str
    n_users: int
    n_items: int
    rating_min: float | None = None
    rating_max: float | None = None
    user_ids: np.ndarray | None = None  # dense id -> original id
    item_ids: np.ndarray | None = None
    tag: str = "all"

    def __post_init__(self):
        self.users = np.asarray(self.users, dtype=np.int64)
        self.items = np.asarray(self.items, dtype=np.int64)
        self.feedback = np.asarray(self.feedback, dtype=np.float64)
        if not (len(self.users) == len(self.items) == len(self.feedback)):
            raise DataError("column lengths differ")
        if len(self.users) and (self.users.max() >= self.n_users or self.items.max() >= self.n_items):
            raise DataError("id exceeds declared table dimensions")
        if self.kind == IMPLICIT and len(self.feedback):
            if not np.isin(self.feedback, (0.0, 1.0)).all():
                raise DataError("implicit feedback must be 0 or 1")

    def __len__(self):
        return len(self.users)

    @property
    def records(self):
        return list(zip(self.users.tolist(), self.items.tolist(), self.feedback.tolist()))

    def subset(self, indices, tag: str) -> "InteractionTable":
        idx = np.asarray(indices, dtype=np.int64)
        return InteractionTable(
            self.users[idx], self.items[idx], self.feedback[idx],
            kind=self.kind, n_users=self.n_users, n_items=self.n_items,
            rating_min=self.rating_min, rating_max=self.rating_max,
            user_ids=self.user_ids, item_ids=self.item_ids, tag=tag,
        )

    @property
    def label_range(self) -> tuple[float, float]:
        if self.kind == EXPLICIT:
            return (self.rating_min, self.rating_max)
        return (0.0, 1.0)


def _read_csv_rows(path, n_cols: int):
    """Read numeric rows, skipping a header row if the first row is non-numeric."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, raw in enumerate(reader, start=1):
            if not raw or all(not c.strip() for c in raw):
                continue
            if len(raw) < n_cols:
                raise DataError(f"line {lineno}: expected {n_cols} columns, got {len(raw)}")
            try:
                vals = [float(c) for c in raw[:n_cols]]
            except ValueError:
                if lineno == 1 and not rows:
                    continue  # header
                raise DataError(f"line {lineno}: non-numeric field in {raw[:n_cols]}")
            rows.append((lineno, vals))
    if not rows:
        raise DataError("no records")
    return rows


def _densify(users, items):
    user_ids, u = np.unique(users, return_inverse=True)
    item_ids, i = np.unique(items, return_inverse=True)
    pairs = u.astype(np.int64) * len(item_ids) + i
    if len(np.unique(pairs)) != len(pairs):
        raise DataError("duplicate (user, item) pairs")
    return u, i, user_ids, item_ids


def load_explicit_csv(path, rating_min: float = 1.0, rating_max: float = 5.0) -> InteractionTable:
    """Load user,item,rating[,...] rows into an explicit table with dense ids."""
    rows = _read_csv_rows(path, 3)
    for lineno, (_, _, r) in rows:
        if not (rating_min <= r <= rating_max):
            raise DataError(
                f"line {lineno}: rating {r} outside [{rating_min}, {rating_max}]")
    users = np.array([v[0] for _, v in rows], dtype=np.int64)
    items = np.array([v[1] for _, v in rows], dtype=np.int64)
    fb = np.array([v[2] for _, v in rows])
    u, i, uid, iid = _densify(users, items)
    return InteractionTable(u, i, fb, kind=EXPLICIT, n_users=len(uid), n_items=len(iid),
                            rating_min=rating_min, rating_max=rating_max,
                            user_ids=uid, item_ids=iid)


def load_implicit_csv(path) -> InteractionTable:
    """Load user,item,label rows with binary labels into an implicit table."""
    rows = _read_csv_rows(path, 3)
    for lineno, (_, _, y) in rows:
        if y not in (0.0, 1.0):
            raise DataError(f"line {lineno}: label {y} is not binary")
    users = np.array([v[0] for _, v in rows], dtype=np.int64)
    items = np.array([v[1] for _, v in rows], dtype=np.int64)
    fb = np.array([v[2] for _, v in rows])
    u, i, uid, iid = _densify(users, items)
    return InteractionTable(u, i, fb, kind=IMPLICIT, n_users=len(uid), n_items=len(iid),
                            user_ids=uid, item_ids=iid)


def write_table_csv(table: InteractionTable, path):
    """Write the table back out with dense ids (round-trips with the loaders)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for u, i, y in zip(table.users, table.items, table.feedback):
            writer.writerow([int(u), int(i), f"{y:.12g}"])


def write_id_maps(table: InteractionTable, out_dir):
    """Write dense->original id sidecars next to an ingested table."""
    for name, ids in (("user_id_map.csv", table.user_ids), ("item_id_map.csv", table.item_ids)):
        if ids is None:
            continue
        with open(os.path.join(out_dir, name), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["dense_id", "original_id"])
            for dense, orig in enumerate(ids):
                writer.writerow([dense, int(orig)])


# ---------------------------------------------------------------------------
# splitting

@dataclass(frozen=True)
class SplitAssignment:
    seed: int
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray


def _three_way(indices, rng):
    n = len(indices)
    perm = indices[rng.permutation(n)]
    n_tr = round(0.6 * n)
    n_va = round(0.2 * n)
    return perm[:n_tr], perm[n_tr:n_tr + n_va], perm[n_tr + n_va:]


def split(table: InteractionTable, seed: int, min_user_records: int = 5) -> SplitAssignment:
    """Seeded 60/20/20 split, stratified per user.

    Users with at least ``min_user_records`` records get their own 60/20/20
    shuffle so that every such user appears in validation and test; records
    of smaller users are pooled and split globally.
    """
    if len(table) == 0:
        raise DataError("cannot split an empty table")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5917]))
    order = np.argsort(table.users, kind="stable")
    train, val, test = [], [], []
    pooled = []
    boundaries = np.searchsorted(table.users[order], np.arange(table.n_users + 1))
    for u in range(table.n_users):
        idx = order[boundaries[u]:boundaries[u + 1]]
        if len(idx) >= min_user_records:
            tr, va, te = _three_way(idx, rng)
            train.append(tr); val.append(va); test.append(te)
        elif len(idx):
            pooled.append(idx)
    if pooled:
        tr, va, te = _three_way(np.concatenate(pooled), rng)
        train.append(tr); val.append(va); test.append(te)
    cat = lambda parts: np.sort(np.concatenate(parts)) if parts else np.empty(0, dtype=np.int64)
    return SplitAssignment(seed, cat(train), cat(val), cat(test))


# ---------------------------------------------------------------------------
# synthetic generation

@dataclass
class RankDistortion:
    """How raw scores deviate from the true log-odds.

    kind "identity": score = true logit.
    kind "popularity": score = logit + c1*q + c2*q^2 where q is the item's
    popularity percentile in [0, 1]; concentrates miscalibration on the
    popular items that dominate top ranks.
    kind "prob_shift": score = logit(clip(p + delta)), a uniform shift in
    probability space.

    ``user_shift`` additionally offsets every user's scores by a per-user
    draw from N(0, user_shift). Within-user rankings are unchanged, but a
    score-only calibrator cannot undo the offset, which makes its residual
    bias depend on rank (scores are no longer comparable across users, as
    with pairwise-ranking models).
    """

    kind: str = "identity"
    c1: float = 0.0
    c2: float = 0.0
    delta: float = 0.0
    user_shift: float = 0.0


@dataclass
class SyntheticSpec:
    n_users: int
    n_items: int
    latent_dim: int = 8
    noise_scale: float = 0.0
    mean_logit: float = -1.0
    bias_scale: float = 0.5
    distortion: RankDistortion = field(default_factory=RankDistortion)
    seed: int = 0


@dataclass
class SyntheticTruth:
    """Ground-truth preference probabilities and the distorted raw scores.

    Test-only oracle; must never feed a fitting path.
    """

    prob: np.ndarray   # (n_users, n_items)
    score: np.ndarray  # (n_users, n_items)


def generate_synthetic(spec: SyntheticSpec) -> tuple[InteractionTable, SyntheticTruth]:
    """Sample a fully-observed implicit table from a latent-factor truth model."""
    if spec.latent_dim < 1:
        raise DataError("latent_dim must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed), 0x51f7]))
    scale = spec.latent_dim ** -0.25
    u_vec = rng.normal(0.0, scale, (spec.n_users, spec.latent_dim))
    i_vec = rng.normal(0.0, scale, (spec.n_items, spec.latent_dim))
    b_u = rng.normal(0.0, spec.bias_scale, spec.n_users)
    b_i = rng.normal(0.0, spec.bias_scale, spec.n_items)
    true_logit = spec.mean_logit + u_vec @ i_vec.T + b_u[:, None] + b_i[None, :]
    prob = expit(true_logit)

    d = spec.distortion
    if d.kind == "identity":
        score = true_logit.copy()
    elif d.kind == "popularity":
        pop = prob.mean(axis=0)
        q = np.argsort(np.argsort(pop)) / max(spec.n_items - 1, 1)
        score = true_logit + d.c1 * q[None, :] + d.c2 * q[None, :] ** 2
    elif d.kind == "prob_shift":
        eps = 1e-9
        score = logit(np.clip(prob + d.delta, eps, 1.0 - eps))
    else:
        raise DataError(f"unknown distortion kind {d.kind!r}")
    if d.user_shift > 0:
        score = score + rng.normal(0.0, d.user_shift, spec.n_users)[:, None]
    if spec.noise_scale > 0:
        score = score + rng.normal(0.0, spec.noise_scale, score.shape)

    feedback = (rng.random(prob.shape) < prob).astype(np.float64)
    uu, ii = np.meshgrid(np.arange(spec.n_users), np.arange(spec.n_items), indexing="ij")
    table = InteractionTable(uu.ravel(), ii.ravel(), feedback.ravel(),
                             kind=IMPLICIT, n_users=spec.n_users, n_items=spec.n_items)
    return table, SyntheticTruth(prob, score)
