import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from labelqc.metrics import (
    average_precision,
    classification_metrics,
    detection_metrics,
    roc_auc_score,
)

from oracles import detection_report_oracle


class TestClassificationMetrics:
    def test_perfect_predictions(self):
        labels = np.array([0, 1, 2, 0, 1, 2])
        probs = np.eye(3)[labels]
        rep = classification_metrics(probs, labels)
        assert rep.accuracy == 1.0
        assert rep.weighted_f1 == 1.0
        assert rep.weighted_precision == 1.0
        assert rep.weighted_recall == 1.0
        assert rep.roc_auc == 1.0
        assert rep.pr_auc == 1.0
        assert rep.error_rate == 0.0

    def test_binary_hand_fixture(self):
        # labels [1,1,0,0], preds [1,0,0,0]
        labels = np.array([1, 1, 0, 0])
        probs = np.array([[0.1, 0.9], [0.8, 0.2], [0.7, 0.3], [0.9, 0.1]])
        rep = classification_metrics(probs, labels)
        assert rep.accuracy == pytest.approx(0.75)
        assert rep.per_class[1]["f1"] == pytest.approx(2 / 3)
        assert rep.per_class[0]["f1"] == pytest.approx(0.8)
        assert rep.weighted_f1 == pytest.approx((2 / 3 + 0.8) / 2)

    def test_uniform_probs_auc_half(self):
        labels = np.array([0, 1] * 10)
        probs = np.full((20, 2), 0.5)
        rep = classification_metrics(probs, labels)
        assert rep.roc_auc == pytest.approx(0.5)

    def test_error_rate_complements_accuracy(self, rng):
        labels = rng.integers(0, 3, 50)
        probs = rng.random((50, 3))
        probs /= probs.sum(axis=1, keepdims=True)
        rep = classification_metrics(probs, labels)
        assert abs(rep.error_rate - (1.0 - rep.accuracy)) <= 1e-12

    def test_absent_class_warns_and_excludes(self):
        labels = np.array([0, 0, 1, 1])  # class 2 absent
        probs = np.array([[0.8, 0.1, 0.1]] * 4)
        rep = classification_metrics(probs, labels)
        assert any(w.startswith("classes_absent") for w in rep.warnings)
        assert 0.0 <= rep.weighted_f1 <= 1.0

    def test_weighted_f1_between_class_extremes(self, rng):
        labels = rng.integers(0, 4, 60)
        labels[:4] = np.arange(4)
        probs = rng.random((60, 4))
        probs /= probs.sum(axis=1, keepdims=True)
        rep = classification_metrics(probs, labels)
        f1s = [v["f1"] for v in rep.per_class.values() if v["support"] > 0]
        assert min(f1s) - 1e-12 <= rep.weighted_f1 <= max(f1s) + 1e-12

    @given(seed=st.integers(min_value=0, max_value=9999))
    @settings(max_examples=25, deadline=None)
    def test_permutation_symmetry(self, seed):
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, 3, 30)
        labels[:3] = [0, 1, 2]
        probs = rng.random((30, 3))
        probs /= probs.sum(axis=1, keepdims=True)
        perm = rng.permutation(30)
        a = classification_metrics(probs, labels)
        b = classification_metrics(probs[perm], labels[perm])
        assert a.weighted_f1 == pytest.approx(b.weighted_f1, abs=1e-12)
        assert a.roc_auc == pytest.approx(b.roc_auc, abs=1e-12)
        assert a.pr_auc == pytest.approx(b.pr_auc, abs=1e-12)


class TestRankingScores:
    def test_perfect_separation(self):
        scores = np.array([0.9, 0.8, 0.2, 0.1])
        positive = np.array([True, True, False, False])
        assert roc_auc_score(scores, positive) == 1.0
        assert roc_auc_score(-scores, positive) == 0.0

    def test_average_precision_known_value(self):
        # descending: pos, neg, pos -> AP = 1/2*1 + 1/2*(2/3)
        scores = np.array([0.9, 0.8, 0.7])
        positive = np.array([True, False, True])
        assert average_precision(scores, positive) == pytest.approx(0.5 + 0.5 * (2 / 3))


class TestDetectionMetrics:
    def test_exact_match(self):
        mask = np.array([True, False, True, False])
        rep = detection_metrics(mask, mask.astype(float), mask)
        assert rep.weighted_f1 == 1.0
        assert rep.extras["error_f1"] == 1.0

    def test_no_flags_degenerate_predictor(self):
        n = 100
        mask = np.zeros(n, dtype=bool)
        mask[:10] = True
        flags = np.zeros(n, dtype=bool)
        rep = detection_metrics(flags, np.zeros(n), mask)
        assert rep.extras["error_recall"] == 0.0
        f1_clean = rep.per_class[0]["f1"]
        assert rep.weighted_f1 == pytest.approx(0.9 * f1_clean)

    def test_all_clean_mask_roc_undefined(self):
        rep = detection_metrics(
            np.zeros(5, dtype=bool), np.arange(5, dtype=float), np.zeros(5, dtype=bool)
        )
        assert rep.roc_auc is None
        assert "roc_undefined" in rep.warnings

    @given(seed=st.integers(min_value=0, max_value=9999))
    @settings(max_examples=40, deadline=None)
    def test_matches_enumeration_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = 50
        flags = rng.random(n) < 0.3
        mask = rng.random(n) < 0.25
        scores = rng.random(n)
        rep = detection_metrics(flags, scores, mask)
        oracle = detection_report_oracle(flags, scores, mask)
        assert rep.accuracy == pytest.approx(oracle["accuracy"], abs=1e-12)
        assert rep.weighted_f1 == pytest.approx(oracle["weighted_f1"], abs=1e-12)
        assert rep.extras["error_precision"] == pytest.approx(oracle["error_precision"], abs=1e-12)
        assert rep.extras["error_recall"] == pytest.approx(oracle["error_recall"], abs=1e-12)
        assert rep.extras["error_f1"] == pytest.approx(oracle["error_f1"], abs=1e-12)
        if oracle["roc_auc"] is None:
            assert rep.roc_auc is None
        else:
            assert rep.roc_auc == pytest.approx(oracle["roc_auc"], abs=1e-12)

    def test_json_round_trip_is_flat(self):
        mask = np.array([True, False, False, True])
        rep = detection_metrics(mask, mask.astype(float), mask)
        flat = rep.to_json_dict()
        assert isinstance(flat["weighted_f1"], float)
        assert "error_f1" in flat
