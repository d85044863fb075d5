from __future__ import annotations

import numpy as np
import pytest

from annoaudit.errors import DegenerateDataError, UsageError
from annoaudit.evaluation import (
    SearchSpace,
    auc,
    classification_report,
    cross_application_matrix,
    evaluate_model,
    fit_final,
    predict_scores,
    random_search,
)
from annoaudit.features import build_feature_matrix
from annoaudit.gbdt import Hyperparams
from annoaudit.synth import GenConfig, generate_log, generate_population

from oracles import confusion_matrix, pairwise_auc


class TestAuc:
    def test_perfect_ranking(self):
        assert auc([0.9, 0.1], [1, 0]) == 1.0

    def test_tie_gets_half_credit(self):
        assert auc([0.8, 0.8], [1, 0]) == 0.5

    def test_matches_pair_counting_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            n = int(rng.integers(5, 30))
            scores = np.round(rng.random(n), 2)  # rounding forces ties
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            assert auc(scores, labels) == pytest.approx(pairwise_auc(scores, labels), abs=1e-12)

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(3)
        scores = rng.random(40)
        labels = rng.integers(0, 2, size=40)
        labels[0], labels[1] = 0, 1
        assert auc(scores, labels) == pytest.approx(auc(np.exp(3 * scores), labels))

    def test_single_class_rejected(self):
        with pytest.raises(DegenerateDataError):
            auc([0.1, 0.9], [1, 1])


class TestClassificationReport:
    def test_perfect_classifier(self):
        report = classification_report([0.9, 0.1, 0.8, 0.2], [1, 0, 1, 0])
        assert report.accuracy == 1.0
        assert report.macro_precision == 1.0
        assert report.macro_recall == 1.0

    def test_no_positive_predictions_uses_zero_convention(self):
        report = classification_report([0.4, 0.4, 0.4, 0.4], [1, 0, 1, 0])
        assert report.precision_by_class[1] == 0.0
        assert report.recall_by_class[1] == 0.0

    def test_hand_confusion_matrix(self):
        scores = [0.9, 0.6, 0.4, 0.2]
        labels = [1, 0, 1, 0]
        cm = confusion_matrix(scores, labels)
        assert cm == {"tp": 1, "fp": 1, "tn": 1, "fn": 1}
        report = classification_report(scores, labels)
        assert report.accuracy == pytest.approx((cm["tp"] + cm["tn"]) / 4) == 0.5

    def test_accuracy_matches_confusion_oracle_on_random_data(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            scores = rng.random(30)
            labels = rng.integers(0, 2, size=30)
            labels[0], labels[1] = 0, 1
            cm = confusion_matrix(scores, labels)
            report = classification_report(scores, labels)
            assert report.accuracy == pytest.approx((cm["tp"] + cm["tn"]) / 30)

    def test_threshold_is_inclusive(self):
        report = classification_report([0.5, 0.49], [1, 0])
        assert report.accuracy == 1.0


@pytest.fixture(scope="module")
def small_matrix():
    config = GenConfig(n_annotators=15, n_tasks=900, n_days=60, seed=31)
    profiles, templates = generate_population(config)
    log = generate_log((profiles, templates), config)
    return build_feature_matrix(log.events, profiles)


class TestRandomSearch:
    def test_single_iteration_returns_that_config(self, small_matrix):
        result = random_search(small_matrix, n_iter=1, seed=5)
        assert len(result.history) == 1
        assert result.best == result.history[0].params

    def test_same_seed_identical_history(self, small_matrix):
        a = random_search(small_matrix, n_iter=3, seed=8)
        b = random_search(small_matrix, n_iter=3, seed=8)
        assert a.history == b.history
        assert a.best == b.best

    def test_every_config_lies_on_the_grid(self, small_matrix):
        space = SearchSpace()
        result = random_search(small_matrix, space, n_iter=8, seed=9)
        assert len(result.history) == 8
        for record in result.history:
            assert space.contains(record.params)

    def test_best_is_argmax_with_earliest_tie(self, small_matrix):
        result = random_search(small_matrix, n_iter=6, seed=10)
        aucs = [r.validation_auc for r in result.history]
        best_index = aucs.index(max(aucs))
        assert result.best == result.history[best_index].params
        assert max(aucs) >= float(np.median(aucs))

    def test_search_reads_only_the_matrix_it_is_given(self, small_matrix):
        half = small_matrix.subset(np.arange(small_matrix.n_rows // 2))
        a = random_search(half, n_iter=2, seed=3)
        b = random_search(half, n_iter=2, seed=3)  # anything outside `half` is irrelevant
        assert a.history == b.history

    def test_degenerate_validation_raises(self, small_matrix):
        flat = small_matrix.subset(np.arange(30))
        flat.target[:] = False
        with pytest.raises(DegenerateDataError):
            random_search(flat, n_iter=1, seed=1)

    def test_n_iter_must_be_positive(self, small_matrix):
        with pytest.raises(UsageError):
            random_search(small_matrix, n_iter=0)


class TestFitFinal:
    def test_trains_on_all_rows(self, small_matrix):
        model = fit_final(small_matrix, Hyperparams(n_estimators=3, max_depth=3))
        assert model.preprocessor.n_fitted_rows == small_matrix.n_rows

    def test_round_trips_through_json(self, small_matrix):
        model = fit_final(small_matrix, Hyperparams(n_estimators=2, max_depth=3), name="m")
        restored = type(model).from_json(model.to_json())
        assert np.array_equal(predict_scores(restored, small_matrix), predict_scores(model, small_matrix))

    def test_reasonable_auc_on_training_data(self, small_matrix):
        model = fit_final(small_matrix, Hyperparams(n_estimators=40, max_depth=4, learning_rate=0.2))
        report = evaluate_model(model, small_matrix)
        assert report.auc > 0.7  # in-sample fit should comfortably beat chance
        assert report.n_test == small_matrix.n_rows


class TestCrossApplicationMatrix:
    def test_diagonal_matches_native_evaluation(self, small_matrix):
        apps = ["music_streaming", "mobile_applications"]
        models = {}
        tests = {}
        for app in apps:
            rows = small_matrix.rows_for_application(app)
            sub = small_matrix.subset(rows)
            half = sub.n_rows // 2
            models[app] = fit_final(sub.subset(np.arange(half)), Hyperparams(n_estimators=5, max_depth=3))
            tests[app] = sub.subset(np.arange(half, sub.n_rows))
        matrix = cross_application_matrix(models, tests)
        assert matrix.values.shape == (2, 2)
        for i, app in enumerate(apps):
            native = evaluate_model(models[app], tests[app])
            assert matrix.values[i, i] == pytest.approx(native.auc)

    def test_empty_inputs_rejected(self):
        with pytest.raises(UsageError):
            cross_application_matrix({}, {})


class TestParallelSearch:
    def test_parallel_history_equals_sequential(self, small_matrix):
        sequential = random_search(small_matrix, n_iter=3, seed=12, n_jobs=1)
        parallel = random_search(small_matrix, n_iter=3, seed=12, n_jobs=2)
        assert sequential.history == parallel.history
        assert sequential.best == parallel.best


class TestFitFinalComposition:
    def test_single_draw_search_then_final_equals_direct_training(self, small_matrix):
        """fit_final on the tuner's winner is exactly train() on the full matrix."""
        from annoaudit.gbdt import ensemble_to_json, train as train_gbdt
        from annoaudit.preprocess import fit as fit_pre, transform

        result = random_search(small_matrix, n_iter=1, seed=21)
        model = fit_final(small_matrix, result.best)
        state = fit_pre(small_matrix)
        X, names = transform(state, small_matrix)
        direct = train_gbdt(X, small_matrix.target.astype(int), result.best, feature_names=names)
        assert ensemble_to_json(model.ensemble) == ensemble_to_json(direct)
