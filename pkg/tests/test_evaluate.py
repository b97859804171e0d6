"""Recovery scoring, per-user weight inference, held-out prediction."""

import math

import numpy as np
import pytest

from mallowmix import pairs
from mallowmix.evaluate import align_and_score, infer_weights, predict_loglik
from mallowmix.generator import (
    ComparisonCorpus,
    DirichletPrior,
    FixedWeights,
    MixedMembershipModel,
    generate,
)
from mallowmix.mallows import MallowsComponent, RankingMatrix, build_ranking_matrix
from mallowmix.permutations import Permutation
from mallowmix.post import postprocess


def model_of(rankings, phis, prior=None):
    comps = [MallowsComponent(Permutation.from_ranking(r), p)
             for r, p in zip(rankings, phis)]
    return MixedMembershipModel(comps, prior or DirichletPrior(0.5))


class TestAlignAndScore:
    def test_identical_models_score_zero(self):
        model = model_of([[1, 2, 3], [3, 2, 1]], [0.2, 0.4])
        report = align_and_score(model, model)
        assert report.normalized_error == 0.0
        assert report.per_component_kendall == [0, 0]
        assert report.dispersion_abs_errors == [0.0, 0.0]
        assert report.matching == [0, 1]

    def test_swapped_components_still_score_zero(self):
        truth = model_of([[1, 2, 3], [3, 2, 1]], [0.2, 0.4])
        swapped = model_of([[3, 2, 1], [1, 2, 3]], [0.4, 0.2])
        report = align_and_score(truth, swapped)
        assert report.normalized_error == 0.0
        assert report.matching == [1, 0]
        assert report.dispersion_abs_errors == [0.0, 0.0]

    def test_one_adjacent_swap(self):
        truth = model_of([[1, 2, 3]], [0.1])
        est = model_of([[2, 1, 3]], [0.1])
        report = align_and_score(truth, est)
        assert report.per_component_kendall == [1]
        # one of six ordered pairs is wrong
        assert report.normalized_error == pytest.approx(1 / 6)

    def test_reversal_scores_one_half(self):
        truth = model_of([[1, 2, 3, 4]], [0.0])
        est = model_of([[4, 3, 2, 1]], [0.3])
        report = align_and_score(truth, est)
        assert report.normalized_error == pytest.approx(0.5)
        assert report.dispersion_abs_errors == [pytest.approx(0.3)]

    def test_accepts_estimated_models(self):
        model = model_of([[2, 4, 1, 3], [4, 3, 2, 1]], [0.3, 0.3])
        est = postprocess(model.observation_matrix())
        report = align_and_score(model, est)
        assert report.normalized_error == 0.0
        assert max(report.dispersion_abs_errors) < 1e-9

    def test_shape_mismatches(self):
        with pytest.raises(ValueError, match="component count"):
            align_and_score(model_of([[1, 2]], [0.1]),
                            model_of([[1, 2], [2, 1]], [0.1, 0.1]))
        with pytest.raises(ValueError, match="item count"):
            align_and_score(model_of([[1, 2]], [0.1]),
                            model_of([[1, 2, 3]], [0.1]))

    def test_matching_minimizes_total_distance(self):
        # both truths are closest to the same estimate; the matching must
        # stay a bijection and minimize the total distance (here two
        # assignments tie at 2, so only the total is pinned down)
        truth = model_of([[1, 2, 3, 4], [2, 1, 3, 4]], [0.1, 0.1])
        est = model_of([[1, 2, 4, 3], [1, 2, 3, 4]], [0.1, 0.1])
        report = align_and_score(truth, est)
        assert sorted(report.matching) == [0, 1]
        assert sum(report.per_component_kendall) == 2
        assert report.normalized_error == pytest.approx(2 / 2 / 12)


class TestInferWeights:
    def test_single_component_is_degenerate(self):
        model = model_of([[1, 2, 3]], [0.4], prior=FixedWeights((1.0,)))
        corpus, _ = generate(model, M=8, N=6, seed=1)
        theta = infer_weights(corpus, model)
        assert theta.shape == (8, 1)
        assert np.all(theta == 1.0)

    def test_disjoint_supports_recover_label_fractions(self):
        # opposed references at dispersion zero: every record identifies
        # its component, so the weights are the per-user label fractions
        model = model_of([[1, 2, 3], [3, 2, 1]], [0.0, 0.0])
        corpus, _ = generate(model, M=50, N=20, seed=3, keep_labels=True)
        theta = infer_weights(corpus, model)
        for u in range(50):
            frac = np.bincount(corpus.labels[corpus.user == u], minlength=2) / 20
            assert np.allclose(theta[u], frac, atol=1e-9)

    def test_matches_grid_search_on_two_outcomes(self):
        # two items, one user: the likelihood is a 1-d function of the
        # weight on the first component, maximized by direct search
        B = np.array([[0.8, 0.2], [0.2, 0.8]])
        records = [(0, 1, 2)] * 3 + [(0, 2, 1)]
        u, w, l = (np.array(c) for c in zip(*records))
        corpus = ComparisonCorpus(Q=2, M=1, user=u, winner=w, loser=l)
        theta = infer_weights(corpus, B, tol=1e-12)

        grid = np.linspace(0.0, 1.0, 100_001)
        ll = 3 * np.log(0.8 * grid + 0.2 * (1 - grid)) + \
            np.log(0.2 * grid + 0.8 * (1 - grid))
        best = grid[np.argmax(ll)]
        assert best == pytest.approx(11 / 12, abs=1e-4)
        assert theta[0, 0] == pytest.approx(best, abs=1e-3)

    def test_balanced_outcomes_stay_at_barycenter(self):
        B = np.array([[0.8, 0.2], [0.2, 0.8]])
        records = [(0, 1, 2), (0, 2, 1)]
        u, w, l = (np.array(c) for c in zip(*records))
        corpus = ComparisonCorpus(Q=2, M=1, user=u, winner=w, loser=l)
        theta = infer_weights(corpus, B)
        assert np.allclose(theta, 0.5)

    def test_loglik_trace_never_decreases(self):
        model = model_of([[4, 2, 3, 1], [1, 3, 2, 4]], [0.3, 0.2])
        corpus, _ = generate(model, M=30, N=10, seed=5)
        theta, history = infer_weights(corpus, model, trace=True)
        assert np.all(np.diff(history) >= -1e-9)
        assert np.allclose(theta.sum(axis=1), 1.0)
        assert np.all(theta >= 0)

    def test_user_without_records_keeps_barycenter(self):
        B = np.array([[0.8, 0.2], [0.2, 0.8]])
        corpus = ComparisonCorpus(Q=2, M=3, user=np.array([0, 2]),
                                  winner=np.array([1, 1]), loser=np.array([2, 2]))
        theta = infer_weights(corpus, B)
        assert np.allclose(theta[1], 0.5)
        assert theta[0, 0] > 0.9

    def test_zero_probability_comparison_is_named(self):
        B = np.array([[1.0], [0.0]])
        corpus = ComparisonCorpus(Q=2, M=1, user=np.array([0, 0]),
                                  winner=np.array([1, 2]), loser=np.array([2, 1]))
        with pytest.raises(ValueError, match=r"comparison \(2, 1\)"):
            infer_weights(corpus, B)

    def test_bad_user_ids(self):
        B = np.array([[0.5, 0.5], [0.5, 0.5]])
        corpus = ComparisonCorpus(Q=2, M=1, user=np.array([1, 1]),
                                  winner=np.array([1, 1]), loser=np.array([2, 2]))
        with pytest.raises(ValueError, match="user ids"):
            infer_weights(corpus, B)


class TestPredictLoglik:
    def test_deterministic_corpus_scores_pair_probability(self):
        # dispersion zero, uniform pairs over three items: every record
        # has probability exactly one third
        model = model_of([[2, 1, 3]], [0.0], prior=FixedWeights((1.0,)))
        corpus, _ = generate(model, M=10, N=8, seed=2)
        report = predict_loglik(corpus, np.array([1.0]), model)
        assert report.avg_loglik == pytest.approx(math.log(1 / 3))
        assert report.zero_events == 0
        assert report.n == 80

    def test_contradiction_is_flagged(self):
        model = model_of([[1, 2, 3]], [0.0], prior=FixedWeights((1.0,)))
        corpus = ComparisonCorpus(Q=3, M=1, user=np.array([0, 0]),
                                  winner=np.array([1, 2]), loser=np.array([2, 1]))
        report = predict_loglik(corpus, np.array([1.0]), model)
        assert report.avg_loglik == -math.inf
        assert report.zero_events == 1

    def test_hand_computed_mixture(self):
        B = np.array([[0.8, 0.2], [0.2, 0.8]])
        corpus = ComparisonCorpus(Q=2, M=1, user=np.array([0, 0]),
                                  winner=np.array([1, 2]), loser=np.array([2, 1]))
        report = predict_loglik(corpus, np.array([0.3, 0.7]), B)
        want = (math.log(0.3 * 0.8 + 0.7 * 0.2) + math.log(0.3 * 0.2 + 0.7 * 0.8)) / 2
        assert report.avg_loglik == pytest.approx(want, abs=1e-12)

    def test_component_permutation_invariance(self):
        model = model_of([[3, 1, 2, 4], [1, 4, 2, 3]], [0.2, 0.5])
        corpus, _ = generate(model, M=40, N=12, seed=11)
        B = model.observation_matrix().entries
        theta = infer_weights(corpus, B)
        a = predict_loglik(corpus, theta, B)
        b = predict_loglik(corpus, theta[:, ::-1], B[:, ::-1])
        assert a.avg_loglik == pytest.approx(b.avg_loglik, abs=1e-12)

    def test_shared_vector_matches_tiled_matrix(self):
        model = model_of([[1, 3, 2], [2, 3, 1]], [0.4, 0.4])
        corpus, _ = generate(model, M=15, N=6, seed=7)
        B = model.observation_matrix().entries
        shared = np.array([0.25, 0.75])
        a = predict_loglik(corpus, shared, B)
        b = predict_loglik(corpus, np.tile(shared, (15, 1)), B)
        assert a.avg_loglik == b.avg_loglik

    def test_theta_shape_checked(self):
        model = model_of([[1, 2]], [0.3], prior=FixedWeights((1.0,)))
        corpus, _ = generate(model, M=4, N=4, seed=0)
        with pytest.raises(ValueError, match="theta must have shape"):
            predict_loglik(corpus, np.ones((3, 1)), model)

    def test_true_components_beat_mismatched_ones(self):
        # weights fitted under the true B must predict better than
        # weights fitted under a B with shuffled reference rankings
        truth = model_of([[5, 3, 1, 4, 2], [2, 4, 5, 1, 3]], [0.2, 0.2])
        wrong = model_of([[1, 2, 3, 4, 5], [5, 4, 3, 2, 1]], [0.2, 0.2])
        corpus, _ = generate(truth, M=200, N=40, seed=19)
        ll_true = predict_loglik(corpus, infer_weights(corpus, truth), truth)
        ll_wrong = predict_loglik(corpus, infer_weights(corpus, wrong), wrong)
        assert ll_true.avg_loglik > ll_wrong.avg_loglik
