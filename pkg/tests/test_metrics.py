import numpy as np
import pytest

from topncal.errors import ConfigError
from topncal.metrics import (adaptive_bin_count, auc, ece, ece_at_n,
                             equal_count_bins, ndcg_at_n, prediction_histogram,
                             rank_calibration_plot, rdece_at_n,
                             reliability_diagram, rmse)


def brute_force_ece(yhat, y, m):
    yhat, y = np.asarray(yhat, float), np.asarray(y, float)
    n = len(yhat)
    order = sorted(range(n), key=lambda i: (yhat[i], y[i], i))
    total = 0.0
    for b in range(m):
        idx = order[n * b // m:n * (b + 1) // m]
        total += len(idx) / n * abs(np.mean(y[idx]) - np.mean(yhat[idx]))
    return total


class TestBins:
    def test_single_bin_means(self):
        bins = equal_count_bins([0.2, 0.8, 0.5], [0, 1, 1], 1)
        assert len(bins) == 1
        assert bins[0].mean_prediction == pytest.approx(0.5)
        assert bins[0].mean_label == pytest.approx(2 / 3)

    def test_populations_differ_by_at_most_one(self):
        rng = np.random.default_rng(0)
        bins = equal_count_bins(rng.random(47), rng.integers(0, 2, 47), 7)
        counts = [b.count for b in bins]
        assert max(counts) - min(counts) <= 1
        assert sum(counts) == 47

    def test_bins_partition_samples(self):
        rng = np.random.default_rng(1)
        bins = equal_count_bins(rng.random(30), rng.integers(0, 2, 30), 4)
        all_idx = np.concatenate([b.indices for b in bins])
        assert sorted(all_idx.tolist()) == list(range(30))

    def test_bins_sorted_by_prediction(self):
        rng = np.random.default_rng(2)
        bins = equal_count_bins(rng.random(40), rng.integers(0, 2, 40), 5)
        means = [b.mean_prediction for b in bins]
        assert means == sorted(means)

    def test_bad_m(self):
        with pytest.raises(ConfigError):
            equal_count_bins([0.1, 0.2], [0, 1], 3)
        with pytest.raises(ConfigError):
            equal_count_bins([0.1, 0.2], [0, 1], 0)


class TestAdaptiveBinCount:
    def test_perfectly_separable(self):
        # labels sorted with predictions: every count up to m_max qualifies
        yhat = np.linspace(0.1, 0.9, 20)
        y = (yhat > 0.5).astype(float)
        assert adaptive_bin_count(yhat, y, m_max=10) == 10

    def test_alternating_labels_reduce_to_two(self):
        yhat = [0.1, 0.2, 0.3, 0.4]
        y = [1, 0, 1, 0]
        # m=4 and m=3 break monotonicity; m=2 gives means (0.5, 0.5)
        assert adaptive_bin_count(yhat, y, m_max=4) == 2

    def test_reversed_labels_give_one(self):
        assert adaptive_bin_count([0.1, 0.9], [1, 0], m_max=2) == 1

    def test_default_cap(self):
        rng = np.random.default_rng(3)
        yhat = np.sort(rng.random(2000))
        assert adaptive_bin_count(yhat, yhat > 0.5) <= 100

    def test_nonstrict_ties_allowed(self):
        assert adaptive_bin_count([0.1, 0.2, 0.3, 0.4], [0, 0, 0, 0], m_max=4) == 4


class TestEce:
    def test_perfect_constant(self):
        assert ece([0.5, 0.5], [1, 0], 1) == pytest.approx(0.0)

    def test_two_bin_example(self):
        # bin 1: preds (0.1, 0.2) labels (0, 1) -> |0.5 - 0.15| = 0.35
        # bin 2: preds (0.8, 0.9) labels (1, 1) -> |1.0 - 0.85| = 0.15
        assert ece([0.1, 0.2, 0.8, 0.9], [0, 1, 1, 1], 2) == pytest.approx(0.25)

    def test_hand_computed_value(self):
        yhat = [0.2, 0.4, 0.6, 0.8]
        y = [0, 1, 0, 1]
        # bins (0.2,0.4)->|0.5-0.3| and (0.6,0.8)->|0.5-0.7|, each weight 1/2
        assert ece(yhat, y, 2) == pytest.approx(0.2)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            n = rng.integers(2, 60)
            m = rng.integers(1, n + 1)
            yhat = rng.random(n)
            y = rng.integers(0, 2, n).astype(float)
            assert ece(yhat, y, m) == pytest.approx(
                brute_force_ece(yhat, y, m), abs=1e-12)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(5)
        yhat, y = rng.random(50), rng.integers(0, 2, 50).astype(float)
        perm = rng.permutation(50)
        assert ece(yhat, y, 7) == pytest.approx(ece(yhat[perm], y[perm], 7),
                                                abs=1e-12)

    def test_bounded_by_one_for_probabilities(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            yhat = rng.random(30)
            y = rng.integers(0, 2, 30)
            v = ece(yhat, y, 5)
            assert 0.0 <= v <= 1.0


class TestEceAtN:
    def test_spec_value(self):
        yhat = [0.9, 0.7, 0.5, 0.3]
        y = [1, 0, 1, 0]
        ranks = [1, 2, 3, 4]
        # top-2 with adaptive binning collapses to one bin: |0.5 - 0.8| = 0.3
        assert ece_at_n(yhat, y, ranks, 2) == pytest.approx(0.3)

    def test_fixed_bin_override(self):
        yhat = [0.9, 0.7, 0.5, 0.3]
        y = [1, 0, 1, 0]
        ranks = [1, 2, 3, 4]
        # m=2 over the top-2: |0 - 0.7| and |1 - 0.9| each weighted 1/2
        assert ece_at_n(yhat, y, ranks, 2, m=2) == pytest.approx(0.4)

    def test_full_cutoff_matches_plain_ece(self):
        rng = np.random.default_rng(7)
        yhat, y = rng.random(40), rng.integers(0, 2, 40).astype(float)
        ranks = np.tile(np.arange(1, 11), 4)
        m = adaptive_bin_count(yhat, y)
        assert ece_at_n(yhat, y, ranks, 10) == pytest.approx(ece(yhat, y, m))

    def test_no_samples_in_cutoff(self):
        with pytest.raises(ConfigError, match="top-2"):
            ece_at_n([0.5], [1], [5], 2)


class TestRdeceAtN:
    def test_spec_value(self):
        # two users' top-2: rank 1 gap 0.3 (2 samples), rank 2 gap 0.5 (2)
        yhat = [0.8, 0.6, 0.9, 0.7]
        y = [1, 0, 1, 0]
        ranks = [1, 2, 1, 2]
        # w = (1, 1/2), normalizer 3/2; N=2
        # total = 1*(2/4)*|1-0.85| + 0.5*(2/4)*|0-0.65| = 0.075 + 0.1625
        expect = 2 / 1.5 * (0.075 + 0.1625)
        assert rdece_at_n(yhat, y, ranks, 2) == pytest.approx(expect)

    def test_single_rank_reduces_to_plain_gap(self):
        yhat = [0.9, 0.7]
        y = [1, 0]
        ranks = [1, 1]
        # one bin at rank 1: N/w_sum * w*1*|0.5-0.8| = 2/1 * 1 * 0.3
        assert rdece_at_n(yhat, y, ranks, 2) == pytest.approx(0.6)

    def test_absent_ranks_excluded_from_normalizer(self):
        yhat = [0.9, 0.5]
        y = [1, 0]
        # only ranks 1 and 3 present within top-3
        v = rdece_at_n(yhat, y, [1, 3], 3)
        w_sum = 1 + 1 / 3
        expect = 3 / w_sum * (1 * 0.5 * 0.1 + (1 / 3) * 0.5 * 0.5)
        assert v == pytest.approx(expect)

    def test_perfect_predictions_zero(self):
        rng = np.random.default_rng(8)
        yhat = rng.random(30)
        ranks = np.tile(np.arange(1, 6), 6)
        assert rdece_at_n(yhat, yhat, ranks, 5) == pytest.approx(0.0)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(9)
        yhat, y = rng.random(40), rng.integers(0, 2, 40).astype(float)
        ranks = np.tile(np.arange(1, 11), 4)
        perm = rng.permutation(40)
        assert rdece_at_n(yhat, y, ranks, 10) == pytest.approx(
            rdece_at_n(yhat[perm], y[perm], ranks[perm], 10), abs=1e-12)

    def test_clone_stability(self):
        # duplicating the entire sample leaves the value unchanged
        rng = np.random.default_rng(10)
        yhat, y = rng.random(20), rng.integers(0, 2, 20).astype(float)
        ranks = np.tile(np.arange(1, 5), 5)
        a = rdece_at_n(yhat, y, ranks, 4)
        b = rdece_at_n(np.tile(yhat, 2), np.tile(y, 2), np.tile(ranks, 2), 4)
        assert a == pytest.approx(b, abs=1e-12)


class TestDiagramData:
    def test_reliability_count_scheme(self):
        rows = reliability_diagram([0.1, 0.2, 0.8, 0.9], [0, 1, 0, 1], 2)
        assert rows == [(pytest.approx(0.15), pytest.approx(0.5), 2),
                        (pytest.approx(0.85), pytest.approx(0.5), 2)]

    def test_reliability_width_scheme_skips_empty(self):
        rows = reliability_diagram([0.0, 0.05, 1.0], [0, 0, 1], 4, scheme="width")
        assert len(rows) == 2  # middle bins empty
        assert rows[0][2] == 2 and rows[1][2] == 1

    def test_reliability_counts_sum(self):
        rng = np.random.default_rng(11)
        rows = reliability_diagram(rng.random(37), rng.integers(0, 2, 37), 5)
        assert sum(c for _, _, c in rows) == 37

    def test_prediction_histogram_counts(self):
        counts, edges = prediction_histogram([0.1, 0.1, 0.9], n_bins=2,
                                             value_range=(0, 1))
        assert counts.tolist() == [2, 1]
        assert edges[0] == 0 and edges[-1] == 1

    def test_rank_plot_groups(self):
        ranks = [1, 2, 3, 4, 5, 6, 7]
        yhat = [0.9] * 5 + [0.5] * 2
        y = [1] * 5 + [0] * 2
        rows = rank_calibration_plot(yhat, y, ranks, group_size=5)
        assert [(lo, hi) for lo, hi, *_ in rows] == [(1, 5), (6, 7)]
        assert rows[0][2] == pytest.approx(0.9)
        assert rows[1][3] == pytest.approx(0.0)
        assert rows[0][4] == 5 and rows[1][4] == 2


class TestAccuracy:
    def test_rmse_known(self):
        assert rmse([1.0, 2.0], [2.0, 4.0]) == pytest.approx(np.sqrt(2.5))

    def test_rmse_zero(self):
        assert rmse([3.0, 4.0], [3.0, 4.0]) == 0.0

    def test_auc_perfect(self):
        assert auc([0.1, 0.9], [0, 1]) == 1.0
        assert auc([0.9, 0.1], [0, 1]) == 0.0

    def test_auc_ties_midrank(self):
        assert auc([0.5, 0.5], [0, 1]) == pytest.approx(0.5)

    def test_auc_random_scores_near_half(self):
        rng = np.random.default_rng(12)
        s = rng.random(2 * 10 ** 5)
        y = rng.integers(0, 2, 2 * 10 ** 5)
        assert auc(s, y) == pytest.approx(0.5, abs=0.01)

    def test_auc_matches_pairwise_oracle(self):
        rng = np.random.default_rng(13)
        s = rng.choice([0.1, 0.3, 0.3, 0.7, 0.9], 60)
        y = rng.integers(0, 2, 60).astype(float)
        pos, neg = s[y == 1], s[y == 0]
        wins = sum((p > q) + 0.5 * (p == q) for p in pos for q in neg)
        assert auc(s, y) == pytest.approx(wins / (len(pos) * len(neg)))

    def test_auc_single_class_errors(self):
        with pytest.raises(ConfigError):
            auc([0.2, 0.8], [1, 1])

    def test_ndcg_perfect_ranking(self):
        assert ndcg_at_n([[1, 1, 0, 0]], 4) == pytest.approx(1.0)

    def test_ndcg_worst_ranking(self):
        # single positive at position 2 of 2: dcg = 1/log2(3), idcg = 1
        assert ndcg_at_n([[0, 1]], 2) == pytest.approx(1 / np.log2(3))

    def test_ndcg_skips_users_without_positives(self):
        assert ndcg_at_n([[0, 0], [1, 0]], 2) == pytest.approx(1.0)

    def test_ndcg_all_negative_errors(self):
        with pytest.raises(ConfigError):
            ndcg_at_n([[0, 0]], 2)

    def test_ndcg_cutoff_truncates(self):
        # positive beyond the cutoff contributes nothing to dcg but caps idcg
        v = ndcg_at_n([[0, 0, 1]], 2)
        assert v == pytest.approx(0.0)
