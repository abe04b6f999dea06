"""Config-driven experiment grid: inject, detect, clean, retrain, evaluate.

Each grid cell is (dataset, noise kind, rate, seed, classifier). The NON
baseline (train on noisy labels, no cleaning) is always included; every
requested detector adds detection metrics against the injection ground truth
and downstream metrics after flag-and-drop retraining. One data card is
written per cell. Reruns of the same config are byte-identical.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .data import (
    CardMeta,
    DataCard,
    Dataset,
    load_dataset_csv,
    make_blobs,
    simulate_annotators,
    train_test_split,
    write_data_card,
)
from .detectors import (
    METHODS,
    DetectorConfig,
    detect_aum,
    detect_cincer,
    detect_confident_learning,
    detect_simifeat,
)
from .errors import ConfigError, EvaluationError, LabelQCError
from .metrics import MetricReport, classification_metrics, detection_metrics
from .models import ClassifierSpec, confusion_matrix, cross_val_proba, predict_proba, train_classifier
from .noise import MULTI_ANNOTATOR_KINDS, NOISE_KINDS, NoiseSpec, corrupt_dataset

NON_BASELINE = "non"

RESULT_COLUMNS = [
    "dataset", "noise_kind", "rate", "seed", "classifier", "detector",
    "detection_accuracy", "detection_weighted_f1", "detection_weighted_precision",
    "detection_weighted_recall", "detection_error_rate", "detection_roc_auc",
    "detection_pr_auc", "error_precision", "error_recall", "error_f1",
    "downstream_accuracy", "downstream_weighted_f1", "downstream_weighted_precision",
    "downstream_weighted_recall", "downstream_error_rate", "downstream_roc_auc",
    "downstream_pr_auc",
    "removed_fraction", "corrupted_count", "train_size", "warnings", "error",
]


@dataclass
class DatasetSpec:
    name: str
    path: Optional[str] = None
    synthetic: Optional[dict] = None  # {"n", "d", "m", "separation"}
    annotators: Optional[dict] = None  # {"count", "flip_rate"} simulated on synthetic data

    def materialize(self, seed: int) -> Dataset:
        if self.path is not None:
            ds = load_dataset_csv(self.path, name=self.name)
        elif self.synthetic is not None:
            s = self.synthetic
            ds = make_blobs(
                n=int(s["n"]),
                d=int(s.get("d", 2)),
                m=int(s.get("m", 2)),
                separation=float(s.get("separation", 8.0)),
                seed=seed,
            )
            ds = replace_name(ds, self.name)
        else:
            raise ConfigError(f"dataset {self.name!r} has neither path nor synthetic spec")
        if self.annotators is not None:
            ds = simulate_annotators(
                ds,
                annotators=int(self.annotators.get("count", 3)),
                flip_rate=float(self.annotators.get("flip_rate", 0.2)),
                seed=seed,
            )
        return ds


def replace_name(ds: Dataset, name: str) -> Dataset:
    return Dataset(
        ids=ds.ids,
        features=ds.features,
        labels=ds.labels,
        num_classes=ds.num_classes,
        true_labels=ds.true_labels,
        annotator_labels=ds.annotator_labels,
        name=name,
    )


@dataclass
class ExperimentConfig:
    datasets: list
    noise_kinds: list = field(default_factory=lambda: ["uniform"])
    rates: list = field(default_factory=lambda: [0.0, 0.02, 0.1, 0.4])
    detectors: list = field(default_factory=lambda: list(METHODS))
    classifiers: list = field(default_factory=lambda: [ClassifierSpec()])
    seeds: list = field(default_factory=lambda: [42])
    folds: int = 5
    test_fraction: float = 0.2
    detector_config: DetectorConfig = field(default_factory=DetectorConfig)
    output_dir: str = "out"

    def __post_init__(self):
        if not self.datasets or not self.noise_kinds or not self.rates or not self.seeds:
            raise ConfigError("datasets, noise_kinds, rates and seeds must be nonempty")
        for kind in self.noise_kinds:
            if kind not in NOISE_KINDS:
                raise ConfigError(f"unknown noise kind {kind!r}")
        for rate in self.rates:
            if not 0.0 <= rate <= 1.0:
                raise ConfigError("rates must lie in [0, 1]")
        for det in self.detectors:
            if det not in METHODS:
                raise ConfigError(f"unknown detector {det!r}")


def config_from_json_dict(doc: dict) -> ExperimentConfig:
    datasets = [
        DatasetSpec(
            name=d["name"],
            path=d.get("path"),
            synthetic=d.get("synthetic"),
            annotators=d.get("annotators"),
        )
        for d in doc.get("datasets", [])
    ]
    classifiers = [ClassifierSpec(**c) for c in doc.get("classifiers", [{}])]
    det_cfg = DetectorConfig(**doc.get("detector", {}))
    kwargs = {}
    for key in ("noise_kinds", "rates", "detectors", "seeds", "folds", "test_fraction", "output_dir"):
        if key in doc:
            kwargs[key] = doc[key]
    return ExperimentConfig(
        datasets=datasets,
        classifiers=classifiers,
        detector_config=det_cfg,
        **kwargs,
    )


def load_config(path) -> ExperimentConfig:
    return config_from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class ExperimentResults:
    rows: list
    cards: list  # (filename, DataCard)


def _metric_fields(prefix: str, report: Optional[MetricReport]) -> dict:
    keys = [
        "accuracy", "weighted_f1", "weighted_precision", "weighted_recall",
        "error_rate", "roc_auc", "pr_auc",
    ]
    if report is None:
        return {f"{prefix}_{k}": None for k in keys}
    flat = report.to_json_dict()
    return {f"{prefix}_{k}": flat[k] for k in keys}


def clean_and_retrain(
    train: Dataset,
    flags: np.ndarray,
    spec: ClassifierSpec,
    test: Dataset,
) -> tuple[MetricReport, dict]:
    """Drop flagged rows, retrain with the same spec and seed, evaluate on the
    untouched test split."""
    flags = np.asarray(flags, dtype=bool)
    if len(flags) != train.n:
        raise LabelQCError("flags length does not match the training set")
    keep = np.flatnonzero(~flags)
    if len(keep) == 0:
        raise EvaluationError("cleaning removed every training sample")
    warnings = []
    for c in range(train.num_classes):
        before = int((train.labels == c).sum())
        after = int((train.labels[keep] == c).sum())
        if before > 0 and after <= 0.05 * before:
            warnings.append(f"class_{c}_nearly_removed")
    cleaned = train.subset(keep)
    model, _ = train_classifier(cleaned, spec)
    report = classification_metrics(predict_proba(model, test.features), test.labels)
    extras = {
        "removed_fraction": float(flags.mean()),
        "cleaning_warnings": warnings,
    }
    return report, extras


def _class_dependent_confusion(train: Dataset, spec: ClassifierSpec) -> np.ndarray:
    """Confusion of a model trained and evaluated on the same training split."""
    model, _ = train_classifier(train, spec)
    return confusion_matrix(predict_proba(model, train.features), train.labels)


def _run_cell(config: ExperimentConfig, cell: tuple) -> tuple[list, list]:
    ds_idx, noise_kind, rate, seed, clf_idx = cell
    spec = config.datasets[ds_idx]
    clf = config.classifiers[clf_idx]
    clf = replace(clf, seed=seed)
    rows: list = []
    cards: list = []
    base = {
        "dataset": spec.name,
        "noise_kind": noise_kind,
        "rate": rate,
        "seed": seed,
        "classifier": f"{clf.kind}{clf_idx}" if len(config.classifiers) > 1 else clf.kind,
    }

    def error_row(detector: str, exc: Exception) -> dict:
        row = dict(base)
        row["detector"] = detector
        row["error"] = f"{type(exc).__name__}: {exc}"
        return row

    try:
        dataset = spec.materialize(seed)
        split = train_test_split(dataset, config.test_fraction, seed)
        train, test = split.train, split.test

        noise = NoiseSpec(kind=noise_kind, rate=rate, seed=seed)
        if noise_kind == "class_dependent":
            noise.confusion = _class_dependent_confusion(train, clf)
        noisy_train, record = corrupt_dataset(train, noise)

        model, dynamics = train_classifier(noisy_train, clf)
        non_report = classification_metrics(predict_proba(model, test.features), test.labels)
        row = dict(base)
        row["detector"] = NON_BASELINE
        row.update(_metric_fields("detection", None))
        row.update(_metric_fields("downstream", non_report))
        row["error_precision"] = row["error_recall"] = row["error_f1"] = None
        row["removed_fraction"] = 0.0
        row["corrupted_count"] = record.count
        row["train_size"] = train.n
        row["warnings"] = ";".join(non_report.warnings)
        rows.append(row)

        cv_probs = None
        card_flags: dict = {}
        card_scores: dict = {}
        for detector in config.detectors:
            cfg = replace(config.detector_config, method=detector, seed=seed)
            try:
                if detector == "aum":
                    report = detect_aum(dynamics, noisy_train.labels, cfg)
                elif detector == "confident":
                    if cv_probs is None:
                        cv_probs = cross_val_proba(noisy_train, clf, config.folds, seed)
                    report = detect_confident_learning(cv_probs, noisy_train.labels, cfg)
                elif detector == "simifeat":
                    report = detect_simifeat(
                        noisy_train.features, noisy_train.labels, cfg, noisy_train.num_classes
                    )
                elif detector == "cincer":
                    report = detect_cincer(model, noisy_train, cfg)
                else:
                    raise ConfigError(f"unknown detector {detector!r}")
                det_report = detection_metrics(report.flags, report.scores, record.mask)
                down_report, extras = clean_and_retrain(noisy_train, report.flags, clf, test)
                row = dict(base)
                row["detector"] = detector
                row.update(_metric_fields("detection", det_report))
                row.update(_metric_fields("downstream", down_report))
                row["error_precision"] = det_report.extras["error_precision"]
                row["error_recall"] = det_report.extras["error_recall"]
                row["error_f1"] = det_report.extras["error_f1"]
                row["removed_fraction"] = extras["removed_fraction"]
                row["corrupted_count"] = record.count
                row["train_size"] = train.n
                row["warnings"] = ";".join(
                    det_report.warnings + down_report.warnings + extras["cleaning_warnings"]
                )
                rows.append(row)
                card_flags[detector] = report.flags
                card_scores[detector] = report.scores
            except LabelQCError as exc:
                rows.append(error_row(detector, exc))

        if card_flags:
            card = DataCard(
                ids=noisy_train.ids,
                original_labels=train.labels,
                corrupted_labels=noisy_train.labels,
                flags=card_flags,
                scores=card_scores,
                meta=CardMeta(
                    dataset=spec.name,
                    noise_kind=noise_kind,
                    noise_rate=rate,
                    seed=seed,
                ),
            )
            fname = f"card__{spec.name}__{noise_kind}__r{rate}__s{seed}__{base['classifier']}.csv"
            cards.append((fname, card))
    except LabelQCError as exc:
        rows.append(error_row(NON_BASELINE, exc))
    return rows, cards


def _cells(config: ExperimentConfig) -> list:
    cells = []
    for ds_idx in range(len(config.datasets)):
        for noise_kind in config.noise_kinds:
            for rate in config.rates:
                for seed in config.seeds:
                    for clf_idx in range(len(config.classifiers)):
                        cells.append((ds_idx, noise_kind, rate, seed, clf_idx))
    return cells


def run_grid(config: ExperimentConfig) -> ExperimentResults:
    cells = _cells(config)
    workers = int(os.environ.get("LABELQC_WORKERS", "1"))
    results = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, [config] * len(cells), cells))
    else:
        results = [_run_cell(config, cell) for cell in cells]
    rows: list = []
    cards: list = []
    for cell_rows, cell_cards in results:
        rows.extend(cell_rows)
        cards.extend(cell_cards)
    rows.sort(key=_row_key)
    cards.sort(key=lambda c: c[0])
    return ExperimentResults(rows=rows, cards=cards)


def _row_key(row: dict) -> tuple:
    detector = row.get("detector", "")
    det_order = {NON_BASELINE: -1}
    return (
        row.get("dataset", ""),
        row.get("noise_kind", ""),
        float(row.get("rate", 0.0)),
        int(row.get("seed", 0)),
        row.get("classifier", ""),
        det_order.get(detector, list(METHODS).index(detector) if detector in METHODS else 99),
    )


def _format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def export_results(results: ExperimentResults, out_dir) -> dict:
    """Write results.csv, aggregate.csv and one data card per cell.

    Returns the paths written. Detection metrics are averaged over nonzero
    rates only (they are undefined at rate 0); downstream metrics average over
    every rate; both average over classifiers and seeds.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results_path = out_dir / "results.csv"
    with results_path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(RESULT_COLUMNS) + "\n")
        for row in results.rows:
            fh.write(",".join(_format_value(row.get(c)) for c in RESULT_COLUMNS) + "\n")

    agg: dict = {}
    for row in results.rows:
        if row.get("error") or row.get("detector") == NON_BASELINE:
            continue
        key = (row["dataset"], row["noise_kind"], row["detector"])
        bucket = agg.setdefault(key, {"det": [], "down": []})
        if float(row["rate"]) > 0 and row.get("detection_weighted_f1") is not None:
            bucket["det"].append(float(row["detection_weighted_f1"]))
        if row.get("downstream_weighted_f1") is not None:
            bucket["down"].append(float(row["downstream_weighted_f1"]))
    aggregate_path = out_dir / "aggregate.csv"
    with aggregate_path.open("w", newline="", encoding="utf-8") as fh:
        fh.write("# detection_weighted_f1 averaged over nonzero rates, classifiers, seeds\n")
        fh.write("# downstream_weighted_f1 averaged over all rates (incl. 0), classifiers, seeds\n")
        fh.write("dataset,noise_kind,detector,detection_weighted_f1,downstream_weighted_f1\n")
        for key in sorted(agg):
            det_vals, down_vals = agg[key]["det"], agg[key]["down"]
            det = repr(float(np.mean(det_vals))) if det_vals else ""
            down = repr(float(np.mean(down_vals))) if down_vals else ""
            fh.write(f"{key[0]},{key[1]},{key[2]},{det},{down}\n")

    cards_dir = out_dir / "cards"
    cards_dir.mkdir(exist_ok=True)
    card_paths = []
    for fname, card in results.cards:
        path = cards_dir / fname
        write_data_card(card, path)
        card_paths.append(path)
    return {"results": results_path, "aggregate": aggregate_path, "cards": card_paths}


def read_results_csv(path) -> list:
    """Rows of a results.csv as dicts (strings; empty string for missing)."""
    import csv as _csv

    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [dict(row) for row in _csv.DictReader(fh)]
