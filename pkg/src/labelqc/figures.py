"""Matplotlib report figures rendered next to the CSV outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .ranking import RankTable


def _mean_by(rows, metric: str, group_keys: tuple) -> dict:
    buckets: dict = {}
    for row in rows:
        v = row.get(metric)
        if v in (None, ""):
            continue
        key = tuple(str(row[k]) for k in group_keys)
        buckets.setdefault(key, []).append(float(v))
    return {k: float(np.mean(vs)) for k, vs in buckets.items()}


def fig_metric_by_rate(rows, metric: str = "detection_weighted_f1"):
    """One line per detector: metric averaged over everything else, by rate."""
    means = _mean_by(rows, metric, ("detector", "rate"))
    detectors = sorted({k[0] for k in means})
    fig, ax = plt.subplots(figsize=(6, 4))
    for det in detectors:
        if det == "non" and metric.startswith("detection"):
            continue
        pts = sorted(
            (float(rate), v) for (d, rate), v in means.items() if d == det
        )
        if not pts:
            continue
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=det)
    ax.set_xlabel("noise rate")
    ax.set_ylabel(metric)
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return fig


def fig_mean_ranks(table: RankTable):
    order = np.argsort(table.mean_ranks, kind="stable")
    fig, ax = plt.subplots(figsize=(6, 3))
    names = [str(table.methods[i]) for i in order]
    ax.barh(range(len(names)), table.mean_ranks[order], color="steelblue")
    ax.set_yticks(range(len(names)))
    ax.set_yticklabels(names, fontsize=9)
    ax.invert_yaxis()
    ax.set_xlabel("mean rank (lower is better)")
    fig.tight_layout()
    return fig


def save_report_figures(rows, table: RankTable, out_dir) -> list:
    """Render the standard report figures as PNGs; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, fig in (
        ("detection_f1_by_rate.png", fig_metric_by_rate(rows, "detection_weighted_f1")),
        ("downstream_f1_by_rate.png", fig_metric_by_rate(rows, "downstream_weighted_f1")),
        ("mean_ranks.png", fig_mean_ranks(table)),
    ):
        path = out_dir / name
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths
