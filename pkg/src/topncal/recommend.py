"""Desk-scale recommender models: itemKNN, MF (SGD), BPR, plus ranking.

All models expose ``score(users, items)`` returning raw scores and declare
``score_range`` so downstream code knows whether a sigmoid is needed before
interpreting scores as probabilities.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import EXPLICIT, IMPLICIT, InteractionTable
from .errors import ConfigError, TrainingError

BOUNDED01 = "bounded01"
UNBOUNDED = "unbounded"
RATING_SCALE = "rating-scale"


def _check_fit_table(table: InteractionTable):
    if table.tag == "test":
        raise TrainingError("refusing to fit on test-tagged data")


# ---------------------------------------------------------------------------
# itemKNN

@dataclass
class ItemKnnModel:
    kind = "itemknn"
    score_range = RATING_SCALE
    k: int
    sim: np.ndarray        # (n_items, n_items), zero diagonal
    ratings: np.ndarray    # (n_users, n_items), nan where unobserved
    user_means: np.ndarray

    def score(self, users, items):
        users = np.atleast_1d(np.asarray(users, dtype=np.int64))
        items = np.atleast_1d(np.asarray(items, dtype=np.int64))
        out = np.empty(len(users))
        for n, (u, i) in enumerate(zip(users, items)):
            rated = np.flatnonzero(~np.isnan(self.ratings[u]))
            rated = rated[rated != i]
            sims = self.sim[i, rated]
            if len(rated) > self.k:
                top = np.argsort(-sims, kind="stable")[:self.k]
                rated, sims = rated[top], sims[top]
            denom = np.abs(sims).sum()
            if denom == 0:
                out[n] = self.user_means[u]
            else:
                centered = self.ratings[u, rated] - self.user_means[u]
                out[n] = self.user_means[u] + (sims @ centered) / denom
        return out


def fit_itemknn(train: InteractionTable, k: int = 50) -> ItemKnnModel:
    """Adjusted-cosine item-item KNN on mean-centered explicit ratings."""
    if k < 1:
        raise ConfigError("neighborhood size k must be >= 1")
    if train.kind != EXPLICIT:
        raise TrainingError("itemKNN requires explicit feedback")
    _check_fit_table(train)
    r = np.full((train.n_users, train.n_items), np.nan)
    r[train.users, train.items] = train.feedback
    mask = ~np.isnan(r)
    counts = mask.sum(axis=1)
    sums = np.where(mask, r, 0.0).sum(axis=1)
    global_mean = train.feedback.mean()
    user_means = np.where(counts > 0, sums / np.maximum(counts, 1), global_mean)
    centered = np.where(mask, r - user_means[:, None], 0.0)
    num = centered.T @ centered
    # sum of c_ui^2 over users that co-rated item j, for each pair (i, j)
    sq = (centered ** 2).T @ mask
    denom = np.sqrt(sq * sq.T)
    with np.errstate(invalid="ignore", divide="ignore"):
        sim = np.where(denom > 0, num / denom, 0.0)
    np.fill_diagonal(sim, 0.0)
    return ItemKnnModel(k=k, sim=sim, ratings=r, user_means=user_means)


# ---------------------------------------------------------------------------
# matrix factorization (explicit, SGD on squared error)

@dataclass
class MfModel:
    kind = "mf"
    score_range: str
    mu: float
    b_u: np.ndarray
    b_i: np.ndarray
    p: np.ndarray  # (n_users, d)
    q: np.ndarray  # (n_items, d)

    def score(self, users, items):
        users = np.atleast_1d(np.asarray(users, dtype=np.int64))
        items = np.atleast_1d(np.asarray(items, dtype=np.int64))
        return (self.mu + self.b_u[users] + self.b_i[items]
                + np.einsum("nd,nd->n", self.p[users], self.q[items]))


def fit_mf(train: InteractionTable, factors: int = 16, epochs: int = 30,
           lr: float = 0.01, reg: float = 0.02, seed: int = 0) -> MfModel:
    """Biased MF fit by SGD; item factors start at zero so epoch 0 predicts
    the global mean plus (zero) biases."""
    if factors < 1:
        raise ConfigError("factors must be >= 1")
    _check_fit_table(train)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x3f01]))
    mu = float(train.feedback.mean())
    b_u = np.zeros(train.n_users)
    b_i = np.zeros(train.n_items)
    p = rng.normal(0.0, 0.1, (train.n_users, factors))
    q = np.zeros((train.n_items, factors))
    us, its, ys = train.users, train.items, train.feedback
    for epoch in range(epochs):
        for idx in rng.permutation(len(ys)):
            u, i, y = us[idx], its[idx], ys[idx]
            e = y - (mu + b_u[u] + b_i[i] + p[u] @ q[i])
            b_u[u] += lr * (e - reg * b_u[u])
            b_i[i] += lr * (e - reg * b_i[i])
            pu = p[u].copy()
            p[u] += lr * (e * q[i] - reg * pu)
            q[i] += lr * (e * pu - reg * q[i])
        if not (np.isfinite(b_u).all() and np.isfinite(p).all() and np.isfinite(q).all()):
            raise TrainingError(f"MF training diverged at epoch {epoch}")
    score_range = RATING_SCALE if train.kind == EXPLICIT else UNBOUNDED
    return MfModel(score_range=score_range, mu=mu, b_u=b_u, b_i=b_i, p=p, q=q)


def mf_loss_grad(mu, b_u, b_i, p, q, users, items, labels, reg):
    """Full-batch squared-error + L2 loss and its analytic gradient.

    Used by gradient-check tests; the SGD above applies the same per-sample
    gradients stochastically.
    """
    pred = mu + b_u[users] + b_i[items] + np.einsum("nd,nd->n", p[users], q[items])
    err = pred - labels
    loss = 0.5 * np.sum(err ** 2) + 0.5 * reg * (
        np.sum(b_u ** 2) + np.sum(b_i ** 2) + np.sum(p ** 2) + np.sum(q ** 2))
    g_bu = np.bincount(users, weights=err, minlength=len(b_u)) + reg * b_u
    g_bi = np.bincount(items, weights=err, minlength=len(b_i)) + reg * b_i
    g_p = reg * p.copy()
    g_q = reg * q.copy()
    np.add.at(g_p, users, err[:, None] * q[items])
    np.add.at(g_q, items, err[:, None] * p[users])
    return loss, (g_bu, g_bi, g_p, g_q)


# ---------------------------------------------------------------------------
# BPR (implicit, pairwise logistic)

@dataclass
class BprModel:
    kind = "bpr"
    score_range = UNBOUNDED
    p: np.ndarray
    q: np.ndarray
    b_i: np.ndarray

    def score(self, users, items):
        users = np.atleast_1d(np.asarray(users, dtype=np.int64))
        items = np.atleast_1d(np.asarray(items, dtype=np.int64))
        return self.b_i[items] + np.einsum("nd,nd->n", self.p[users], self.q[items])


def _sigmoid(x):
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def fit_bpr(train: InteractionTable, factors: int = 16, epochs: int = 30,
            lr: float = 0.01, reg: float = 0.02, seed: int = 0) -> BprModel:
    """BPR-MF on observed positives vs the user's observed negatives."""
    if factors < 1:
        raise ConfigError("factors must be >= 1")
    if train.kind != IMPLICIT:
        raise TrainingError("BPR requires implicit feedback")
    _check_fit_table(train)
    pos_mask = train.feedback > 0.5
    if not pos_mask.any():
        raise TrainingError("no positive interactions to train on")
    pos_u = train.users[pos_mask]
    pos_i = train.items[pos_mask]
    neg_by_user = {}
    for u in np.unique(pos_u):
        negs = train.items[(train.users == u) & ~pos_mask]
        if len(negs):
            neg_by_user[u] = negs
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xb914]))
    p = rng.normal(0.0, 0.1, (train.n_users, factors))
    q = rng.normal(0.0, 0.1, (train.n_items, factors))
    b_i = np.zeros(train.n_items)
    for epoch in range(epochs):
        for idx in rng.permutation(len(pos_u)):
            u, i = pos_u[idx], pos_i[idx]
            negs = neg_by_user.get(u)
            if negs is None:
                continue
            j = negs[rng.integers(len(negs))]
            x = b_i[i] - b_i[j] + p[u] @ (q[i] - q[j])
            g = _sigmoid(-x)
            pu = p[u].copy()
            b_i[i] += lr * (g - reg * b_i[i])
            b_i[j] += lr * (-g - reg * b_i[j])
            p[u] += lr * (g * (q[i] - q[j]) - reg * pu)
            q[i] += lr * (g * pu - reg * q[i])
            q[j] += lr * (-g * pu - reg * q[j])
        if not (np.isfinite(p).all() and np.isfinite(q).all() and np.isfinite(b_i).all()):
            raise TrainingError(f"BPR training diverged at epoch {epoch}")
    return BprModel(p=p, q=q, b_i=b_i)


def bpr_loss_grad(p, q, b_i, triplets, reg):
    """Pairwise logistic loss over fixed (u, i_pos, i_neg) triplets with L2,
    and its analytic gradient; used by gradient-check tests."""
    u, i, j = triplets[:, 0], triplets[:, 1], triplets[:, 2]
    x = b_i[i] - b_i[j] + np.einsum("nd,nd->n", p[u], q[i] - q[j])
    loss = np.sum(np.logaddexp(0.0, -x)) + 0.5 * reg * (
        np.sum(p ** 2) + np.sum(q ** 2) + np.sum(b_i ** 2))
    g = -_sigmoid(-x)
    g_p = reg * p.copy()
    g_q = reg * q.copy()
    g_b = reg * b_i.copy()
    np.add.at(g_p, u, g[:, None] * (q[i] - q[j]))
    np.add.at(g_q, i, g[:, None] * p[u])
    np.add.at(g_q, j, -g[:, None] * p[u])
    np.add.at(g_b, i, g)
    np.add.at(g_b, j, -g)
    return loss, (g_p, g_q, g_b)


# ---------------------------------------------------------------------------
# fixed score matrix (synthetic oracle scorer)

@dataclass
class FixedScoreModel:
    """Scores read from a precomputed matrix (synthetic generator output)."""

    kind = "fixed"
    score_range = UNBOUNDED
    scores: np.ndarray

    def score(self, users, items):
        users = np.atleast_1d(np.asarray(users, dtype=np.int64))
        items = np.atleast_1d(np.asarray(items, dtype=np.int64))
        return self.scores[users, items]


# ---------------------------------------------------------------------------
# ranking

@dataclass(frozen=True)
class RankedList:
    user: int
    items: np.ndarray
    scores: np.ndarray
    ranks: np.ndarray  # 1-based, no gaps


def rank_items(model, user: int, candidates, n: int | None = None) -> RankedList:
    """Rank candidate items by descending score, ties broken by ascending id."""
    cand = np.sort(np.asarray(candidates, dtype=np.int64))
    if len(cand) == 0:
        return RankedList(user, cand, np.empty(0), np.empty(0, dtype=np.int64))
    scores = model.score(np.full(len(cand), user), cand)
    order = np.lexsort((cand, -scores))
    if n is not None:
        order = order[:n]
    return RankedList(user, cand[order], scores[order],
                      np.arange(1, len(order) + 1))


# ---------------------------------------------------------------------------
# save / load

_MODEL_FORMAT_VERSION = 1


def save_model(model, path):
    """Serialize a fitted model to a versioned .npz archive."""
    arrays = {"format_version": np.array(_MODEL_FORMAT_VERSION),
              "kind": np.array(model.kind),
              "score_range": np.array(model.score_range)}
    if isinstance(model, ItemKnnModel):
        arrays.update(k=np.array(model.k), sim=model.sim, ratings=model.ratings,
                      user_means=model.user_means)
    elif isinstance(model, MfModel):
        arrays.update(mu=np.array(model.mu), b_u=model.b_u, b_i=model.b_i,
                      p=model.p, q=model.q)
    elif isinstance(model, BprModel):
        arrays.update(p=model.p, q=model.q, b_i=model.b_i)
    elif isinstance(model, FixedScoreModel):
        arrays.update(scores=model.scores)
    else:
        raise ConfigError(f"cannot serialize model of type {type(model).__name__}")
    np.savez(path, **arrays)


def load_model(path):
    with np.load(path) as d:
        if int(d["format_version"]) != _MODEL_FORMAT_VERSION:
            raise ConfigError(f"unsupported model format version {int(d['format_version'])}")
        kind = str(d["kind"])
        if kind == "itemknn":
            return ItemKnnModel(k=int(d["k"]), sim=d["sim"], ratings=d["ratings"],
                                user_means=d["user_means"])
        if kind == "mf":
            return MfModel(score_range=str(d["score_range"]), mu=float(d["mu"]),
                           b_u=d["b_u"], b_i=d["b_i"], p=d["p"], q=d["q"])
        if kind == "bpr":
            return BprModel(p=d["p"], q=d["q"], b_i=d["b_i"])
        if kind == "fixed":
            return FixedScoreModel(scores=d["scores"])
    raise ConfigError(f"unknown model kind {kind!r}")
