import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from labelqc.data import Dataset, make_blobs
from labelqc.detectors import (
    DetectorConfig,
    aum_scores,
    aum_threshold_run,
    cincer_margin,
    compute_confident_joint,
    detect_aum,
    detect_cincer,
    detect_confident_learning,
    detect_simifeat,
    select_counterexample,
    top_k_flags,
)
from labelqc.errors import ConfigError, EstimationError
from labelqc.metrics import detection_metrics
from labelqc.models import (
    ClassifierSpec,
    TrainedModel,
    TrainingDynamics,
    cross_val_proba,
    predict_proba,
    train_classifier,
)
from labelqc.noise import apply_corruption, build_uniform_T

from oracles import brute_force_confident_joint, fisher_counterexample_oracle


def constant_dynamics(logits_row, epochs, n):
    logits = np.tile(np.asarray(logits_row, dtype=float), (epochs, n, 1))
    return TrainingDynamics(
        epochs=epochs,
        num_samples=n,
        num_classes=len(logits_row),
        mean_losses=np.zeros(epochs),
        logits=logits,
    )


@pytest.fixture(scope="module")
def noisy_blobs():
    ds = make_blobs(2000, 2, 4, 8.0, 42)
    labels, record = apply_corruption(ds.labels, build_uniform_T(4, 0.1), 0.1, 42)
    return ds.with_labels(labels), record


@pytest.fixture(scope="module")
def noisy_model(noisy_blobs):
    noisy, _ = noisy_blobs
    return train_classifier(noisy, ClassifierSpec())


class TestAum:
    def test_margin_formula_single_epoch(self):
        dyn = constant_dynamics([3.0, 1.0], epochs=1, n=2)
        assert aum_scores(dyn, np.array([0, 0]))[0] == pytest.approx(2.0)
        assert aum_scores(dyn, np.array([1, 1]))[0] == pytest.approx(-2.0)

    def test_alpha_quantile_flag_count(self):
        dyn = constant_dynamics([2.0, 0.0], epochs=3, n=100)
        report = detect_aum(dyn, np.zeros(100, dtype=int), DetectorConfig(method="aum", aum_alpha=0.01))
        assert report.n_flagged == 1  # ceil(0.01 * 100)

    def test_shift_invariance(self, rng):
        logits = rng.standard_normal((4, 30, 3))
        labels = rng.integers(0, 3, 30)
        dyn = TrainingDynamics(4, 30, 3, np.zeros(4), logits=logits)
        shifted = logits.copy()
        shifted[2] += 11.5  # constant added to every logit of one epoch
        dyn_shift = TrainingDynamics(4, 30, 3, np.zeros(4), logits=shifted)
        np.testing.assert_allclose(
            aum_scores(dyn, labels), aum_scores(dyn_shift, labels), rtol=1e-12
        )

    def test_threshold_strategy_needs_mask(self):
        dyn = constant_dynamics([1.0, 0.0], epochs=1, n=10)
        cfg = DetectorConfig(method="aum", aum_strategy="threshold_samples")
        with pytest.raises(ConfigError):
            detect_aum(dyn, np.zeros(10, dtype=int), cfg)

    def test_threshold_strategy_flags_below_cutoff(self, noisy_blobs):
        noisy, record = noisy_blobs
        dyn, relabeled = aum_threshold_run(noisy, ClassifierSpec(epochs=30))
        cfg = DetectorConfig(method="aum", aum_strategy="threshold_samples")
        report = detect_aum(dyn, relabeled, cfg)
        assert not report.flags[dyn.threshold_mask].any()
        det = detection_metrics(report.flags, report.scores, record.mask)
        assert det.extras["error_recall"] >= 0.7

    def test_precision_on_noisy_blobs(self, noisy_blobs, noisy_model):
        noisy, record = noisy_blobs
        _, dyn = noisy_model
        report = detect_aum(dyn, noisy.labels, DetectorConfig(method="aum", aum_alpha=0.1))
        flagged = report.flags
        precision = (flagged & record.mask).sum() / flagged.sum()
        assert precision >= 0.7


class TestConfidentJoint:
    def test_spec_fixture(self):
        probs = np.array([[0.9, 0.1], [0.8, 0.2], [0.4, 0.6], [0.1, 0.9]])
        labels = np.array([0, 0, 1, 1])
        joint = compute_confident_joint(probs, labels)
        np.testing.assert_allclose(joint.thresholds, [0.85, 0.75])
        assert joint.counts.tolist() == [[1, 0], [0, 1]]

    def test_one_hot_diagonal(self):
        labels = np.array([0, 1, 1, 2, 2, 2])
        probs = np.eye(3)[labels]
        joint = compute_confident_joint(probs, labels)
        assert np.array_equal(joint.counts, np.diag([1, 2, 3]))
        assert np.allclose(joint.thresholds, 1.0)

    def test_empty_class_rejected(self):
        with pytest.raises(EstimationError):
            compute_confident_joint(np.array([[0.9, 0.1]]), np.array([0]))

    @given(seed=st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=60, deadline=None)
    def test_matches_enumeration_oracle(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(2, 5))
        n = int(rng.integers(m * 2, 51))
        labels = np.concatenate([np.arange(m), rng.integers(0, m, n - m)])
        probs = rng.random((n, m))
        probs /= probs.sum(axis=1, keepdims=True)
        joint = compute_confident_joint(probs, labels)
        counts, thresholds = brute_force_confident_joint(probs, labels)
        assert np.array_equal(joint.counts, counts)
        np.testing.assert_allclose(joint.thresholds, thresholds, rtol=1e-12)
        assert joint.counts.sum() <= n


class TestConfidentLearning:
    def test_diagonal_joint_no_flags(self):
        labels = np.array([0, 0, 1, 1])
        probs = np.array([[0.9, 0.1], [0.8, 0.2], [0.4, 0.6], [0.1, 0.9]])
        report = detect_confident_learning(probs, labels)
        assert report.n_flagged == 0

    def test_flag_count_near_truth(self, noisy_blobs):
        noisy, record = noisy_blobs
        probs = cross_val_proba(noisy, ClassifierSpec(), folds=5, seed=42)
        report = detect_confident_learning(probs, noisy.labels)
        assert abs(report.n_flagged - record.count) <= 0.3 * record.count

    def test_flags_are_top_scores(self, rng):
        labels = rng.integers(0, 3, 40)
        probs = rng.random((40, 3))
        probs /= probs.sum(axis=1, keepdims=True)
        # ensure every class is present
        labels[:3] = [0, 1, 2]
        report = detect_confident_learning(probs, labels)
        assert np.array_equal(report.flags, top_k_flags(report.scores, report.n_flagged))


class TestSimiFeat:
    def test_one_dimensional_fixture(self):
        feats = np.array([[0.0], [0.1], [0.2], [5.0], [5.1], [5.2]])
        labels = np.array([0, 0, 1, 1, 1, 1])
        report = detect_simifeat(feats, labels, DetectorConfig(method="simifeat", k=2), 2)
        assert report.flags.tolist() == [False, False, True, False, False, False]
        assert report.scores[2] == pytest.approx(1.0)

    def test_clean_clusters_zero_flags(self, small_blobs):
        report = detect_simifeat(
            small_blobs.features, small_blobs.labels, DetectorConfig(method="simifeat"), 3
        )
        assert report.n_flagged == 0

    def test_deterministic_single_round(self, noisy_blobs):
        noisy, _ = noisy_blobs
        cfg = DetectorConfig(method="simifeat")
        a = detect_simifeat(noisy.features, noisy.labels, cfg, 4)
        b = detect_simifeat(noisy.features, noisy.labels, cfg, 4)
        assert np.array_equal(a.flags, b.flags)
        assert np.array_equal(a.scores, b.scores)

    def test_multi_round_majority_vote(self, noisy_blobs):
        noisy, record = noisy_blobs
        cfg = DetectorConfig(method="simifeat", rounds=5, seed=7)
        report = detect_simifeat(noisy.features, noisy.labels, cfg, 4)
        assert np.array_equal(report.flags, report.scores > 0.5)
        det = detection_metrics(report.flags, report.scores, record.mask)
        assert det.extras["error_f1"] >= 0.8

    def test_rank_mode_budgets(self, noisy_blobs):
        # the diagonal offset (default 2.5) deliberately shrinks the budgets,
        # so rank mode trades recall for precision
        noisy, record = noisy_blobs
        cfg = DetectorConfig(method="simifeat", simifeat_mode="rank")
        report = detect_simifeat(noisy.features, noisy.labels, cfg, 4)
        det = detection_metrics(report.flags, report.scores, record.mask)
        assert det.extras["error_precision"] >= 0.9
        assert 0 < report.n_flagged <= sum(report.metadata["budgets"].values())
        assert report.metadata["mode"] == "rank"

    def test_isolated_sample_unflagged(self):
        # one sample on its own side of the origin: every candidate neighbor
        # fails the similarity floor in one dimension
        feats = np.array([[0.0], [0.1], [0.2], [9.0]])
        labels = np.array([0, 0, 0, 1])
        report = detect_simifeat(
            feats, labels, DetectorConfig(method="simifeat", k=2, min_similarity=0.45), 2
        )
        assert not report.flags[3]
        assert report.scores[3] == 0.0
        assert report.metadata["isolated"] >= 1


class TestCincerMargin:
    def test_fixtures(self):
        assert cincer_margin([0.6, 0.4]) == pytest.approx(0.2)
        assert cincer_margin([0.9, 0.05, 0.05]) == pytest.approx(0.85)
        assert cincer_margin([0.25, 0.25, 0.25, 0.25]) == pytest.approx(0.0)


def two_cluster_dataset():
    return Dataset(
        ids=np.arange(8),
        features=np.array(
            [[0.0, 0.0], [0.2, 0.1], [0.1, 0.3], [0.3, 0.2],
             [5.0, 5.0], [5.2, 5.1], [5.1, 5.3], [0.2, 0.1]]
        ),
        labels=np.array([0, 0, 0, 0, 1, 1, 1, 1]),
        num_classes=2,
    )


class TestCounterexample:
    def test_pool_of_one(self):
        ds = Dataset(
            ids=np.array([10, 11]),
            features=np.array([[0.0, 0.0], [1.0, 1.0]]),
            labels=np.array([0, 1]),
            num_classes=2,
        )
        model, _ = train_classifier(ds, ClassifierSpec(epochs=50))
        pred = int(predict_proba(model, ds.features[0:1])[0].argmax())
        pool_ids = [int(i) for i, lbl in zip(ds.ids, ds.labels) if lbl == pred and i != 10]
        if len(pool_ids) == 1:
            for negotiator in ("random", "nearest", "fisher"):
                cfg = DetectorConfig(method="cincer", negotiator=negotiator)
                assert select_counterexample(model, ds, 0, negotiator, cfg) == pool_ids[0]

    def test_nearest_picks_duplicate(self):
        ds = two_cluster_dataset()
        model, _ = train_classifier(ds, ClassifierSpec(epochs=60))
        # sample 7 duplicates sample 1's features but wears label 1; the model
        # should predict 0 there, and the nearest pool-0 sample is sample 1
        pred = int(predict_proba(model, ds.features[7:8])[0].argmax())
        assert pred == 0
        cfg = DetectorConfig(method="cincer", negotiator="nearest")
        assert select_counterexample(model, ds, 7, "nearest", cfg) == 1

    def test_empty_pool_returns_none(self):
        ds = Dataset(
            ids=np.arange(2),
            features=np.array([[0.0], [0.2]]),
            labels=np.array([1, 1]),
            num_classes=2,
        )
        model = TrainedModel(
            kind="logreg",
            params={"W": np.array([[5.0, -5.0]]), "b": np.zeros(2)},
            num_classes=2,
            mean=np.zeros(1),
            std=np.ones(1),
        )
        # model predicts class 0 everywhere but no sample is labeled 0
        assert select_counterexample(model, ds, 0, "random", DetectorConfig(method="cincer")) is None

    def test_fisher_matches_enumeration(self):
        ds = two_cluster_dataset()
        model, _ = train_classifier(ds, ClassifierSpec(epochs=60))
        cfg = DetectorConfig(method="cincer", negotiator="fisher", fisher_damping=0.1)
        suspicious = 7
        chosen = select_counterexample(model, ds, suspicious, "fisher", cfg)

        from labelqc.detectors import _last_layer_gradient

        x_std = model.standardize(ds.features)
        pred = int(predict_proba(model, ds.features[suspicious:suspicious + 1])[0].argmax())
        pool = [i for i in range(ds.n) if ds.labels[i] == pred and i != suspicious]
        grads = [_last_layer_gradient(model, x_std[i], int(ds.labels[i])) for i in pool]
        g_s = _last_layer_gradient(model, x_std[suspicious], int(ds.labels[suspicious]))
        best, _ = fisher_counterexample_oracle(grads, g_s, 0.1)
        assert chosen == int(ds.ids[pool[best]])


class TestCincer:
    def test_no_flags_when_confident_and_agreeing(self):
        ds = make_blobs(200, 2, 2, 10.0, 3)
        model, _ = train_classifier(ds, ClassifierSpec())
        report = detect_cincer(model, ds, DetectorConfig(method="cincer"))
        margins = np.array(report.metadata["margins"])
        if report.n_flagged == 0:
            assert np.all(margins >= 0.25)

    def test_low_margin_flagged(self):
        # hand-built model: uniform-ish output near origin -> low margin
        model = TrainedModel(
            kind="logreg",
            params={"W": np.array([[0.4, -0.4]]), "b": np.zeros(2)},
            num_classes=2,
            mean=np.zeros(1),
            std=np.ones(1),
        )
        ds = Dataset(
            ids=np.arange(3),
            features=np.array([[0.1], [3.0], [-3.0]]),
            labels=np.array([0, 0, 1]),
            num_classes=2,
        )
        report = detect_cincer(model, ds, DetectorConfig(method="cincer", threshold=0.25))
        assert bool(report.flags[0])  # margin ~0.08 < 0.25
        assert not report.flags[1]

    def test_recall_on_noisy_blobs(self, noisy_blobs, noisy_model):
        noisy, record = noisy_blobs
        model, _ = noisy_model
        report = detect_cincer(model, noisy, DetectorConfig(method="cincer"))
        det = detection_metrics(report.flags, report.scores, record.mask)
        assert det.extras["error_recall"] >= 0.6
        assert np.array_equal(report.flags, report.scores > 0.0)

    def test_counterexamples_recorded(self, noisy_blobs, noisy_model):
        noisy, record = noisy_blobs
        model, _ = noisy_model
        report = detect_cincer(model, noisy, DetectorConfig(method="cincer"))
        ces = report.metadata["counterexamples"]
        assert len(ces) == report.n_flagged
        flagged_ids = set(noisy.ids[report.flags].tolist())
        assert set(ces) == flagged_ids


class TestReportInvariants:
    def test_score_flag_consistency(self, noisy_blobs, noisy_model):
        noisy, _ = noisy_blobs
        model, dyn = noisy_model
        probs = cross_val_proba(noisy, ClassifierSpec(), folds=5, seed=42)
        reports = [
            detect_aum(dyn, noisy.labels, DetectorConfig(method="aum", aum_alpha=0.1)),
            detect_confident_learning(probs, noisy.labels),
            detect_simifeat(noisy.features, noisy.labels, DetectorConfig(method="simifeat"), 4),
            detect_cincer(model, noisy, DetectorConfig(method="cincer")),
        ]
        for report in reports:
            k = report.n_flagged
            top = top_k_flags(report.scores, k)
            assert np.array_equal(report.flags, top), report.method

    def test_zero_noise_sanity(self, blobs4):
        model, dyn = train_classifier(blobs4, ClassifierSpec())
        probs = cross_val_proba(blobs4, ClassifierSpec(), folds=5, seed=42)
        n = blobs4.n
        rep = detect_simifeat(blobs4.features, blobs4.labels, DetectorConfig(method="simifeat"), 4)
        assert rep.n_flagged == 0
        rep = detect_aum(dyn, blobs4.labels, DetectorConfig(method="aum"))
        assert rep.n_flagged <= 0.05 * n
        rep = detect_confident_learning(probs, blobs4.labels)
        assert rep.n_flagged <= 0.05 * n
        rep = detect_cincer(model, blobs4, DetectorConfig(method="cincer"))
        assert rep.n_flagged <= 0.05 * n

    def test_permutation_equivariance(self, rng):
        ds = make_blobs(120, 2, 3, 7.0, 5)
        labels, _ = apply_corruption(ds.labels, build_uniform_T(3, 0.15), 0.15, 5)
        perm = rng.permutation(ds.n)
        cfg = DetectorConfig(method="simifeat")
        base = detect_simifeat(ds.features, labels, cfg, 3)
        permuted = detect_simifeat(ds.features[perm], labels[perm], cfg, 3)
        np.testing.assert_allclose(permuted.scores, base.scores[perm], rtol=1e-12)
        assert np.array_equal(permuted.flags, base.flags[perm])
