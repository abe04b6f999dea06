import json

import numpy as np
import pytest

from labelqc.data import make_blobs, read_data_card, train_test_split
from labelqc.detectors import DetectorConfig
from labelqc.errors import EvaluationError
from labelqc.harness import (
    DatasetSpec,
    ExperimentConfig,
    ExperimentResults,
    clean_and_retrain,
    config_from_json_dict,
    export_results,
    read_results_csv,
    run_grid,
)
from labelqc.metrics import classification_metrics
from labelqc.models import ClassifierSpec, predict_proba, train_classifier
from labelqc.noise import NoiseSpec, corrupt_dataset


def tiny_config(**overrides):
    base = dict(
        datasets=[DatasetSpec(name="blobs", synthetic={"n": 240, "d": 2, "m": 3, "separation": 8.0})],
        noise_kinds=["uniform"],
        rates=[0.1],
        detectors=["simifeat"],
        classifiers=[ClassifierSpec(epochs=20)],
        seeds=[42],
        detector_config=DetectorConfig(aum_alpha=0.1),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestCleanAndRetrain:
    def setup_method(self):
        ds = make_blobs(400, 2, 3, 8.0, 42)
        split = train_test_split(ds, 0.2, 42)
        self.train, self.test = split.train, split.test
        self.spec = ClassifierSpec(epochs=25)
        noisy, record = corrupt_dataset(
            self.train, NoiseSpec(kind="uniform", rate=0.1, seed=42)
        )
        self.noisy, self.record = noisy, record

    def test_zero_flags_equals_baseline(self):
        model, _ = train_classifier(self.noisy, self.spec)
        baseline = classification_metrics(predict_proba(model, self.test.features), self.test.labels)
        report, extras = clean_and_retrain(
            self.noisy, np.zeros(self.noisy.n, dtype=bool), self.spec, self.test
        )
        assert report.weighted_f1 == pytest.approx(baseline.weighted_f1, abs=1e-12)
        assert extras["removed_fraction"] == 0.0

    def test_oracle_flags_beat_baseline(self):
        model, _ = train_classifier(self.noisy, self.spec)
        baseline = classification_metrics(predict_proba(model, self.test.features), self.test.labels)
        report, _ = clean_and_retrain(self.noisy, self.record.mask, self.spec, self.test)
        assert report.weighted_f1 >= baseline.weighted_f1

    def test_all_flagged_errors(self):
        with pytest.raises(EvaluationError):
            clean_and_retrain(self.noisy, np.ones(self.noisy.n, dtype=bool), self.spec, self.test)

    def test_class_removal_warns(self):
        flags = self.noisy.labels == 0
        report, extras = clean_and_retrain(self.noisy, flags, self.spec, self.test)
        assert "class_0_nearly_removed" in extras["cleaning_warnings"]


class TestRunGrid:
    def test_cell_and_card_counting(self, tmp_path):
        config = tiny_config(rates=[0.02, 0.1], detectors=["simifeat", "cincer"])
        results = run_grid(config)
        # 2 cells x (NON + 2 detectors) rows
        assert len(results.rows) == 6
        assert len(results.cards) == 2
        paths = export_results(results, tmp_path)
        card = read_data_card(paths["cards"][0])
        assert card.methods == ["cincer", "simifeat"]

    def test_non_baseline_always_present(self):
        results = run_grid(tiny_config(rates=[0.0, 0.1]))
        non_rows = [r for r in results.rows if r["detector"] == "non"]
        assert len(non_rows) == 2
        assert all(r["detection_weighted_f1"] is None for r in non_rows)

    def test_rate_zero_degenerate_detection(self):
        results = run_grid(tiny_config(rates=[0.0]))
        det_rows = [r for r in results.rows if r["detector"] == "simifeat"]
        assert det_rows[0]["detection_roc_auc"] is None
        assert "roc_undefined" in det_rows[0]["warnings"]
        non = next(r for r in results.rows if r["detector"] == "non")
        # nothing was corrupted, so cleaning is a no-op up to the flags it removed
        assert abs(non["downstream_weighted_f1"] - det_rows[0]["downstream_weighted_f1"]) <= 0.05

    def test_annotator_kind_without_annotations_is_cell_error(self):
        results = run_grid(tiny_config(noise_kinds=["dissenting_label"]))
        assert any(r.get("error") for r in results.rows)

    def test_annotator_kinds_run_with_simulated_annotators(self):
        config = tiny_config(
            datasets=[
                DatasetSpec(
                    name="blobs",
                    synthetic={"n": 240, "d": 2, "m": 3, "separation": 8.0},
                    annotators={"count": 3, "flip_rate": 0.3},
                )
            ],
            noise_kinds=["crowd_majority"],
        )
        results = run_grid(config)
        assert not any(r.get("error") for r in results.rows)

    def test_rerun_byte_identical(self, tmp_path):
        config = tiny_config(rates=[0.1], detectors=["simifeat", "aum"])
        a = export_results(run_grid(config), tmp_path / "a")
        b = export_results(run_grid(config), tmp_path / "b")
        assert a["results"].read_bytes() == b["results"].read_bytes()
        assert a["aggregate"].read_bytes() == b["aggregate"].read_bytes()


class TestExport:
    def test_empty_results_header_only(self, tmp_path):
        paths = export_results(ExperimentResults(rows=[], cards=[]), tmp_path)
        lines = paths["results"].read_text().splitlines()
        assert len(lines) == 1 and lines[0].startswith("dataset,")

    def test_aggregate_mean(self, tmp_path):
        rows = []
        for rate, f1 in ((0.1, 0.7), (0.4, 0.9)):
            rows.append(
                {
                    "dataset": "d", "noise_kind": "uniform", "rate": rate, "seed": 42,
                    "classifier": "logreg", "detector": "simifeat",
                    "detection_weighted_f1": f1, "downstream_weighted_f1": f1,
                }
            )
        paths = export_results(ExperimentResults(rows=rows, cards=[]), tmp_path)
        content = [l for l in paths["aggregate"].read_text().splitlines() if not l.startswith("#")]
        assert content[1].split(",")[3] == repr(0.8)

    def test_round_trip_rows(self, tmp_path):
        config = tiny_config()
        paths = export_results(run_grid(config), tmp_path)
        rows = read_results_csv(paths["results"])
        assert rows[0]["dataset"] == "blobs"
        assert {r["detector"] for r in rows} == {"non", "simifeat"}


def test_config_json_round_trip():
    doc = {
        "datasets": [{"name": "b", "synthetic": {"n": 100, "d": 2, "m": 2, "separation": 6}}],
        "noise_kinds": ["uniform", "asymmetric"],
        "rates": [0.0, 0.1],
        "detectors": ["simifeat"],
        "classifiers": [{"kind": "logreg", "epochs": 10}],
        "seeds": [1, 2],
        "folds": 4,
        "test_fraction": 0.25,
        "detector": {"aum_alpha": 0.05},
        "output_dir": "somewhere",
    }
    config = config_from_json_dict(doc)
    assert config.noise_kinds == ["uniform", "asymmetric"]
    assert config.classifiers[0].epochs == 10
    assert config.detector_config.aum_alpha == 0.05
    assert config.folds == 4


def test_workers_env_parallel_matches_serial(tmp_path, monkeypatch):
    config = tiny_config(rates=[0.02, 0.1])
    serial = export_results(run_grid(config), tmp_path / "serial")
    monkeypatch.setenv("LABELQC_WORKERS", "2")
    parallel = export_results(run_grid(config), tmp_path / "parallel")
    assert serial["results"].read_bytes() == parallel["results"].read_bytes()
