"""Command-line entry points.

Subcommands: synth, inject, detect, run, compare, serve. All paths are
explicit; randomized commands take --seed (default 42).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .data import load_dataset_csv, make_blobs, save_dataset_csv, simulate_annotators
from .detectors import (
    DetectorConfig,
    detect_aum,
    detect_cincer,
    detect_confident_learning,
    detect_simifeat,
)
from .errors import LabelQCError
from .figures import save_report_figures
from .harness import export_results, load_config, read_results_csv, run_grid
from .metrics import detection_metrics
from .models import (
    ClassifierSpec,
    confusion_matrix,
    cross_val_proba,
    predict_proba,
    train_classifier,
)
from .noise import NoiseSpec, corrupt_dataset
from .ranking import build_cliques, build_rank_table, friedman_test, render_cd_svg
from .server import serve


def _cmd_synth(args) -> int:
    ds = make_blobs(args.n, args.dims, args.classes, args.separation, args.seed)
    if args.annotators > 0:
        ds = simulate_annotators(ds, args.annotators, args.annotator_flip, args.seed)
    save_dataset_csv(ds, args.out)
    print(f"wrote {args.out} ({ds.n} rows, {ds.dim} dims, {ds.num_classes} classes)")
    return 0


def _cmd_inject(args) -> int:
    ds = load_dataset_csv(args.data)
    spec = NoiseSpec(kind=args.kind, rate=args.rate, seed=args.seed)
    if args.kind == "class_dependent":
        model, _ = train_classifier(ds, ClassifierSpec(seed=args.seed))
        spec.confusion = confusion_matrix(predict_proba(model, ds.features), ds.labels)
    corrupted, record = corrupt_dataset(ds, spec)
    save_dataset_csv(corrupted, args.out)
    record_path = args.record or (str(args.out) + ".record.csv")
    with open(record_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "original_label", "corrupted_label"])
        for i in record.corrupted_indices:
            writer.writerow([int(ds.ids[i]), int(ds.labels[i]), int(corrupted.labels[i])])
    print(f"corrupted {record.count}/{ds.n} labels -> {args.out} (record: {record_path})")
    return 0


def _detector_config(args) -> DetectorConfig:
    overrides = {}
    if args.config:
        overrides = json.loads(Path(args.config).read_text(encoding="utf-8"))
    overrides["method"] = args.method
    overrides.setdefault("seed", args.seed)
    return DetectorConfig(**overrides)


def _cmd_detect(args) -> int:
    ds = load_dataset_csv(args.data)
    cfg = _detector_config(args)
    clf = ClassifierSpec(seed=args.seed)
    if cfg.method == "aum":
        _, dynamics = train_classifier(ds, clf)
        report = detect_aum(dynamics, ds.labels, cfg)
    elif cfg.method == "confident":
        probs = cross_val_proba(ds, clf, folds=args.folds, seed=args.seed)
        report = detect_confident_learning(probs, ds.labels, cfg)
    elif cfg.method == "simifeat":
        report = detect_simifeat(ds.features, ds.labels, cfg, ds.num_classes)
    else:
        model, _ = train_classifier(ds, clf)
        report = detect_cincer(model, ds, cfg)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "score", "flag"])
        for i in range(ds.n):
            writer.writerow([int(ds.ids[i]), repr(float(report.scores[i])), int(report.flags[i])])
    print(f"{cfg.method}: flagged {report.n_flagged}/{ds.n} -> {args.out}")
    if ds.true_labels is not None:
        mask = ds.labels != ds.true_labels
        if mask.any():
            det = detection_metrics(report.flags, report.scores, mask)
            print(
                f"  vs true labels: error-class F1 {det.extras['error_f1']:.3f}, "
                f"precision {det.extras['error_precision']:.3f}, "
                f"recall {det.extras['error_recall']:.3f}"
            )
    return 0


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.out:
        config.output_dir = args.out
    results = run_grid(config)
    paths = export_results(results, config.output_dir)
    errors = sum(1 for row in results.rows if row.get("error"))
    print(f"wrote {paths['results']} ({len(results.rows)} rows, {errors} cell errors)")
    print(f"wrote {paths['aggregate']} and {len(paths['cards'])} data cards")
    return 0


def _cmd_compare(args) -> int:
    rows = read_results_csv(args.results)
    rows = [r for r in rows if not r.get("error") and r.get("detector") != "non"]
    metric = {
        "detection": "detection_weighted_f1",
        "downstream": "downstream_weighted_f1",
    }[args.metric]
    table = build_rank_table(rows, "dataset", "detector", metric)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "rank_table.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["dataset"] + [str(m) for m in table.methods])
        for i, d in enumerate(table.datasets):
            writer.writerow([d] + [repr(float(v)) for v in table.values[i]])
        writer.writerow(["mean_rank"] + [repr(float(r)) for r in table.mean_ranks])
    if table.n >= 2:
        stat, p = friedman_test(table)
        print(f"friedman chi2={stat:.4f} p={p:.6f}")
    diagram = build_cliques(table, alpha=args.alpha)
    (out_dir / "cd.svg").write_text(render_cd_svg(diagram), encoding="utf-8")
    figures = save_report_figures(rows, table, out_dir)
    print(f"cliques: {diagram.cliques}")
    print(f"wrote {out_dir / 'rank_table.csv'}, {out_dir / 'cd.svg'} and {len(figures)} figures")
    return 0


def _cmd_serve(args) -> int:
    config = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if args.seed is not None:
        config["seed"] = args.seed
    serve(config, args.port, static_dir=args.ui)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="labelqc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic blob dataset CSV")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--dims", type=int, default=2)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--separation", type=float, default=8.0)
    p.add_argument("--annotators", type=int, default=0)
    p.add_argument("--annotator-flip", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("inject", help="corrupt labels in a dataset CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--kind", required=True)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.add_argument("--record", default=None, help="corruption record CSV path")
    p.set_defaults(func=_cmd_inject)

    p = sub.add_parser("detect", help="run one detector over a dataset CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--method", required=True, choices=["aum", "confident", "simifeat", "cincer"])
    p.add_argument("--config", default=None, help="JSON file of DetectorConfig overrides")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("run", help="run a full experiment grid from a config JSON")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="override config output_dir")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("compare", help="rank detectors from a results CSV")
    p.add_argument("--results", required=True)
    p.add_argument("--metric", choices=["detection", "downstream"], default="detection")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("serve", help="start the interactive review server")
    p.add_argument("--config", required=True)
    p.add_argument("--port", type=int, default=8575)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--ui", default=None, help="directory of the built UI bundle")
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (LabelQCError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
