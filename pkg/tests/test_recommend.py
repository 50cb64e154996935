import numpy as np
import pytest

from topncal.data import EXPLICIT, IMPLICIT, InteractionTable, SyntheticSpec, \
    generate_synthetic, split
from topncal.errors import ConfigError, TrainingError
from topncal.metrics import auc, rmse
from topncal.recommend import (BprModel, FixedScoreModel, MfModel, bpr_loss_grad,
                               fit_bpr, fit_itemknn, fit_mf, load_model,
                               mf_loss_grad, rank_items, save_model)


def explicit_table(ratings):
    """Build an explicit table from a dense matrix with nan for missing."""
    r = np.asarray(ratings, dtype=np.float64)
    u, i = np.nonzero(~np.isnan(r))
    return InteractionTable(u, i, r[u, i], kind=EXPLICIT,
                            n_users=r.shape[0], n_items=r.shape[1],
                            rating_min=1.0, rating_max=5.0)


def implicit_table(labels):
    y = np.asarray(labels, dtype=np.float64)
    u, i = np.nonzero(~np.isnan(y))
    return InteractionTable(u, i, y[u, i], kind=IMPLICIT,
                            n_users=y.shape[0], n_items=y.shape[1])


class TestItemKnn:
    def test_identical_columns_similarity_one(self):
        table = explicit_table([[4, 4, np.nan], [2, 2, 5], [5, 5, 1]])
        model = fit_itemknn(table, k=2)
        assert model.sim[0, 1] == pytest.approx(1.0)

    def test_perfect_neighbor_prediction(self):
        # items 0 and 1 perfectly similar; predicting item 1 for a user who
        # only rated item 0 returns that rating
        table = explicit_table([
            [4, 4, 1], [2, 2, 5], [5, 5, 2], [3, np.nan, np.nan]])
        model = fit_itemknn(table, k=1)
        assert model.sim[0, 1] == pytest.approx(1.0)
        pred = model.score([3], [1])[0]
        assert pred == pytest.approx(3.0)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(0)
        r = np.where(rng.random((5, 5)) < 0.8, rng.integers(1, 6, (5, 5)).astype(float),
                     np.nan)
        r[0, 0] = 4.0  # keep every user/item observed at least once
        table = explicit_table(r)
        k = 3
        model = fit_itemknn(table, k=k)
        means = np.array([np.nanmean(r[u]) for u in range(5)])
        centered = r - means[:, None]

        def sim_oracle(i, j):
            both = ~np.isnan(r[:, i]) & ~np.isnan(r[:, j])
            if not both.any():
                return 0.0
            a, b = centered[both, i], centered[both, j]
            den = np.sqrt((a ** 2).sum() * (b ** 2).sum())
            return 0.0 if den == 0 else float((a * b).sum() / den)

        for u in range(5):
            for i in range(5):
                rated = [j for j in range(5) if not np.isnan(r[u, j]) and j != i]
                sims = sorted(((sim_oracle(i, j), j) for j in rated), reverse=True)[:k]
                den = sum(abs(s) for s, _ in sims)
                if den == 0:
                    expect = means[u]
                else:
                    expect = means[u] + sum(s * centered[u, j] for s, j in sims) / den
                assert model.score([u], [i])[0] == pytest.approx(expect, abs=1e-9)

    def test_constant_shift_invariance(self):
        base = np.array([[4, 3, 1, 5], [2, 2, 5, 1], [5, 4, 2, 3.]])
        shifted = base.copy()
        shifted[0] = np.clip(base[0] + 1, None, None)
        m1 = fit_itemknn(explicit_table(base), k=2)
        m2 = fit_itemknn(explicit_table(shifted), k=2)
        # mean-centering: user 0's predictions shift by exactly the constant
        p1 = m1.score([0, 0], [1, 2])
        p2 = m2.score([0, 0], [1, 2])
        assert np.allclose(p2 - p1, 1.0, atol=1e-9)

    def test_bad_k(self):
        with pytest.raises(ConfigError):
            fit_itemknn(explicit_table([[4.0, 3.0]]), k=0)

    def test_requires_explicit(self):
        with pytest.raises(TrainingError):
            fit_itemknn(implicit_table([[1, 0], [0, 1.0]]), k=1)


class TestMf:
    def _rank1_table(self, n_users=30, n_items=40, seed=0):
        rng = np.random.default_rng(seed)
        u = rng.uniform(1, 2, n_users)
        v = rng.uniform(1, 2.4, n_items)
        r = np.clip(np.outer(u, v), 1, 5)
        return explicit_table(r)

    def test_rank1_noiseless_fit(self):
        table = self._rank1_table()
        model = fit_mf(table, factors=1, epochs=80, lr=0.02, reg=0.0, seed=1)
        pred = model.score(table.users, table.items)
        assert rmse(pred, table.feedback) < 0.05

    def test_lr_zero_leaves_parameters(self):
        table = self._rank1_table(10, 12)
        model = fit_mf(table, factors=2, epochs=5, lr=0.0, reg=0.1, seed=3)
        assert np.all(model.b_u == 0) and np.all(model.b_i == 0)
        assert np.all(model.q == 0)

    def test_zero_epochs_predicts_global_mean(self):
        table = self._rank1_table(10, 12)
        model = fit_mf(table, factors=4, epochs=0, seed=3)
        pred = model.score(table.users, table.items)
        assert np.allclose(pred, table.feedback.mean())

    def test_seed_determinism(self):
        table = self._rank1_table(12, 15)
        m1 = fit_mf(table, factors=3, epochs=3, seed=7)
        m2 = fit_mf(table, factors=3, epochs=3, seed=7)
        assert np.array_equal(m1.p, m2.p) and np.array_equal(m1.q, m2.q)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        n_u, n_i, d, n = 4, 5, 3, 12
        users = rng.integers(0, n_u, n)
        items = rng.integers(0, n_i, n)
        labels = rng.uniform(1, 5, n)
        b_u, b_i = rng.normal(0, 0.3, n_u), rng.normal(0, 0.3, n_i)
        p, q = rng.normal(0, 0.3, (n_u, d)), rng.normal(0, 0.3, (n_i, d))
        _, (g_bu, g_bi, g_p, g_q) = mf_loss_grad(3.0, b_u, b_i, p, q,
                                                 users, items, labels, reg=0.1)
        eps = 1e-6
        for arr, grad in ((b_u, g_bu), (b_i, g_bi), (p, g_p), (q, g_q)):
            flat, gflat = arr.ravel(), grad.ravel()
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + eps
                lp, _ = mf_loss_grad(3.0, b_u, b_i, p, q, users, items, labels, 0.1)
                flat[j] = orig - eps
                lm, _ = mf_loss_grad(3.0, b_u, b_i, p, q, users, items, labels, 0.1)
                flat[j] = orig
                fd = (lp - lm) / (2 * eps)
                assert fd == pytest.approx(gflat[j], rel=1e-4, abs=1e-8)


class TestBpr:
    def test_positive_scores_above_negative(self):
        table = implicit_table([[1, 0.0]])
        model = fit_bpr(table, factors=4, epochs=200, lr=0.05, reg=0.0, seed=0)
        assert model.score([0], [0])[0] > model.score([0], [1])[0]

    def test_seed_determinism(self):
        table = implicit_table(np.array([[1, 0, 1], [0, 1, 0], [1, 1, 0.0]]))
        m1 = fit_bpr(table, factors=2, epochs=4, seed=11)
        m2 = fit_bpr(table, factors=2, epochs=4, seed=11)
        assert np.array_equal(m1.p, m2.p) and np.array_equal(m1.q, m2.q)

    def test_heldout_auc_on_factorizable_data(self):
        table, _ = generate_synthetic(SyntheticSpec(
            n_users=150, n_items=150, latent_dim=2, bias_scale=2.0, seed=21))
        assign = split(table, 0)
        model = fit_bpr(table.subset(assign.train, "train"),
                        factors=4, epochs=20, lr=0.05, reg=0.05, seed=2)
        test = table.subset(assign.test, "test")
        scores = model.score(test.users, test.items)
        assert auc(scores, test.feedback) > 0.75

    def test_no_positives_errors(self):
        with pytest.raises(TrainingError):
            fit_bpr(implicit_table([[0, 0.0]]), epochs=1)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(9)
        n_u, n_i, d = 3, 5, 2
        p = rng.normal(0, 0.5, (n_u, d))
        q = rng.normal(0, 0.5, (n_i, d))
        b_i = rng.normal(0, 0.5, n_i)
        triplets = np.array([[0, 1, 2], [1, 0, 3], [2, 4, 1], [0, 2, 4]])
        _, (g_p, g_q, g_b) = bpr_loss_grad(p, q, b_i, triplets, reg=0.05)
        eps = 1e-6
        for arr, grad in ((p, g_p), (q, g_q), (b_i, g_b)):
            flat, gflat = arr.ravel(), grad.ravel()
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + eps
                lp, _ = bpr_loss_grad(p, q, b_i, triplets, 0.05)
                flat[j] = orig - eps
                lm, _ = bpr_loss_grad(p, q, b_i, triplets, 0.05)
                flat[j] = orig
                assert (lp - lm) / (2 * eps) == pytest.approx(gflat[j], rel=1e-4, abs=1e-8)


class TestRanking:
    def test_tie_break_by_item_id(self):
        model = FixedScoreModel(scores=np.array([[0.9, 0.9, 0.1]]))
        ranked = rank_items(model, 0, [2, 1, 0])
        assert ranked.items.tolist() == [0, 1, 2]
        assert ranked.ranks.tolist() == [1, 2, 3]

    def test_cutoff(self):
        model = FixedScoreModel(scores=np.array([[0.9, 0.9, 0.1]]))
        assert len(rank_items(model, 0, [0, 1, 2], n=2).items) == 2

    def test_candidate_order_irrelevant(self):
        rng = np.random.default_rng(1)
        model = FixedScoreModel(scores=rng.random((1, 30)))
        cand = np.arange(30)
        a = rank_items(model, 0, cand)
        b = rank_items(model, 0, rng.permutation(cand))
        assert np.array_equal(a.items, b.items)
        assert np.array_equal(a.scores, b.scores)

    def test_empty_candidates(self):
        model = FixedScoreModel(scores=np.zeros((1, 3)))
        assert len(rank_items(model, 0, []).items) == 0

    def test_output_is_permutation_with_monotone_scores(self):
        rng = np.random.default_rng(2)
        model = FixedScoreModel(scores=rng.random((1, 50)))
        ranked = rank_items(model, 0, np.arange(50))
        assert sorted(ranked.items.tolist()) == list(range(50))
        assert np.all(np.diff(ranked.scores) <= 0)


class TestSaveLoad:
    @pytest.mark.parametrize("make", [
        lambda: fit_mf(explicit_table([[4, 3, 1.0], [2, 5, 4.0], [1, 2, 3.0],
                                       [5, 4, 2.0]]), factors=2, epochs=2, seed=0),
        lambda: fit_bpr(implicit_table([[1, 0, 1], [0, 1, 0.0]]), factors=2,
                        epochs=2, seed=0),
        lambda: fit_itemknn(explicit_table([[4, 3.0], [2, 5.0], [1, 2.0]]), k=1),
        lambda: FixedScoreModel(scores=np.arange(6.0).reshape(2, 3)),
    ])
    def test_round_trip(self, tmp_path, make):
        model = make()
        path = tmp_path / "model.npz"
        save_model(model, path)
        loaded = load_model(path)
        u = np.zeros(2, dtype=int)
        i = np.array([0, 1])
        assert np.allclose(model.score(u, i), loaded.score(u, i))
