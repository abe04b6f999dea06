"""Predictive-accuracy metrics for downstream models and detector quality.

Weighted metrics average the per-class one-vs-rest values with class-support
weights. Multi-class ROC-AUC / PR-AUC are support-weighted one-vs-rest; the
binary case reduces to the standard single-curve values. PR-AUC is step-wise
average precision, not a trapezoid, so golden values are stable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import LabelQCError


@dataclass
class MetricReport:
    accuracy: float
    weighted_f1: float
    weighted_precision: float
    weighted_recall: float
    error_rate: float
    roc_auc: Optional[float] = None
    pr_auc: Optional[float] = None
    per_class: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        flat = {
            "accuracy": self.accuracy,
            "weighted_f1": self.weighted_f1,
            "weighted_precision": self.weighted_precision,
            "weighted_recall": self.weighted_recall,
            "error_rate": self.error_rate,
            "roc_auc": self.roc_auc,
            "pr_auc": self.pr_auc,
        }
        flat.update(self.extras)
        if self.warnings:
            flat["warnings"] = ";".join(self.warnings)
        return flat


def average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x))
    xs = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def roc_auc_score(scores: np.ndarray, positive: np.ndarray) -> Optional[float]:
    """Rank-statistic ROC-AUC; None when a class is empty."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = len(positive) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = average_ranks(scores)
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def average_precision(scores: np.ndarray, positive: np.ndarray) -> Optional[float]:
    """Step-wise average precision over distinct score thresholds."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    if n_pos == 0 or n_pos == len(positive):
        return None
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = positive[order]
    tp = 0
    seen = 0
    ap = 0.0
    prev_recall = 0.0
    i = 0
    n = len(s)
    while i < n:
        j = i
        while j + 1 < n and s[j + 1] == s[i]:
            j += 1
        tp += int(y[i:j + 1].sum())
        seen += j - i + 1
        recall = tp / n_pos
        ap += (recall - prev_recall) * (tp / seen)
        prev_recall = recall
        i = j + 1
    return float(ap)


def _per_class_prf(labels: np.ndarray, preds: np.ndarray, m: int) -> dict:
    out = {}
    for c in range(m):
        tp = int(np.sum((labels == c) & (preds == c)))
        fp = int(np.sum((labels != c) & (preds == c)))
        fn = int(np.sum((labels == c) & (preds != c)))
        support = tp + fn
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / support if support > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        out[c] = {"precision": precision, "recall": recall, "f1": f1, "support": support}
    return out


def _weighted(per_class: dict, key: str) -> float:
    total = sum(v["support"] for v in per_class.values())
    if total == 0:
        return 0.0
    return sum(v[key] * v["support"] for v in per_class.values()) / total


def classification_metrics(probs: np.ndarray, labels: np.ndarray) -> MetricReport:
    """Metrics for argmax predictions of a probability matrix."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or probs.shape[0] != len(labels) or len(labels) == 0:
        raise LabelQCError("probs and labels shapes do not match or are empty")
    m = probs.shape[1]
    preds = probs.argmax(axis=1)
    accuracy = float((preds == labels).mean())
    per_class = _per_class_prf(labels, preds, m)
    warnings = []
    absent = [c for c in range(m) if per_class[c]["support"] == 0]
    if absent:
        warnings.append(f"classes_absent={','.join(map(str, absent))}")

    if m == 2:
        roc = roc_auc_score(probs[:, 1], labels == 1)
        pr = average_precision(probs[:, 1], labels == 1)
        if roc is None:
            warnings.append("roc_undefined")
    else:
        aucs, prs, weights = [], [], []
        for c in range(m):
            support = per_class[c]["support"]
            if support == 0:
                continue
            auc_c = roc_auc_score(probs[:, c], labels == c)
            pr_c = average_precision(probs[:, c], labels == c)
            if auc_c is None or pr_c is None:
                warnings.append(f"ovr_undefined_class_{c}")
                continue
            aucs.append(auc_c)
            prs.append(pr_c)
            weights.append(support)
        total = sum(weights)
        roc = sum(a * w for a, w in zip(aucs, weights)) / total if total else None
        pr = sum(a * w for a, w in zip(prs, weights)) / total if total else None
        if roc is None:
            warnings.append("roc_undefined")

    return MetricReport(
        accuracy=accuracy,
        weighted_f1=_weighted(per_class, "f1"),
        weighted_precision=_weighted(per_class, "precision"),
        weighted_recall=_weighted(per_class, "recall"),
        error_rate=1.0 - accuracy,
        roc_auc=roc,
        pr_auc=pr,
        per_class=per_class,
        warnings=warnings,
    )


def detection_metrics(
    flags: np.ndarray,
    scores: np.ndarray,
    corruption_mask: np.ndarray,
) -> MetricReport:
    """Detector quality as a binary task: corrupted samples are the positive
    (error) class, flags are the predictions, scores give the ranking."""
    flags = np.asarray(flags, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    mask = np.asarray(corruption_mask, dtype=bool)
    if not (len(flags) == len(scores) == len(mask)) or len(mask) == 0:
        raise LabelQCError("flags, scores and mask must have equal nonzero length")
    labels = mask.astype(np.int64)
    preds = flags.astype(np.int64)
    per_class = _per_class_prf(labels, preds, 2)
    accuracy = float((preds == labels).mean())
    warnings = []
    roc = roc_auc_score(scores, mask)
    pr = average_precision(scores, mask)
    if roc is None:
        warnings.append("roc_undefined")
    err = per_class[1]
    return MetricReport(
        accuracy=accuracy,
        weighted_f1=_weighted(per_class, "f1"),
        weighted_precision=_weighted(per_class, "precision"),
        weighted_recall=_weighted(per_class, "recall"),
        error_rate=1.0 - accuracy,
        roc_auc=roc,
        pr_auc=pr,
        per_class=per_class,
        warnings=warnings,
        extras={
            "error_precision": err["precision"],
            "error_recall": err["recall"],
            "error_f1": err["f1"],
        },
    )
