"""Four label-error detectors producing per-sample suspicion scores and flags.

* margin-trajectory ranking ("aum"): samples whose assigned-class logit keeps
  losing to the best other class during training;
* confident learning ("confident"): off-diagonal mass of the confident joint
  sets the flag count, low self-confidence ranks the samples;
* neighborhood voting ("simifeat"): k-NN label disagreement on standardized
  features, model-free;
* margin inspector with counter-examples ("cincer"): flags low-margin or
  misclassified samples and attaches an explanatory counter-example.

Every report obeys one discipline: the flag set equals the highest-scored
samples under the method's own thresholding rule, ties resolving to the lower
sample index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import Dataset
from .errors import ConfigError, EstimationError, LabelQCError
from .models import (
    ClassifierSpec,
    ProbMatrix,
    TrainedModel,
    TrainingDynamics,
    cosine_similarity_matrix,
    estimate_T_clusterability,
    forward_logits,
    knn_pseudo_labels,
    predict_proba,
    softmax,
    standardization_stats,
    train_classifier,
)
from .rng import substream

METHODS = ("aum", "confident", "simifeat", "cincer")


@dataclass
class DetectorConfig:
    method: str = "simifeat"
    # aum
    aum_alpha: float = 0.01
    aum_strategy: str = "alpha_quantile"  # alpha_quantile | threshold_samples
    # simifeat
    k: int = 10
    simifeat_mode: str = "vote"  # vote | rank
    min_similarity: float = 0.45
    tii_offset: float = 2.5
    rounds: int = 1
    # cincer (the inspector is always the top1-top2 margin)
    threshold: float = 0.25
    negotiator: str = "random"  # random | nearest | fisher
    fisher_damping: float = 0.1
    seed: int = 42

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown detector {self.method!r}")
        if not 0.0 <= self.aum_alpha <= 1.0 or not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("aum_alpha and threshold must lie in [0, 1]")
        if self.k < 1 or self.rounds < 1:
            raise ConfigError("k and rounds must be >= 1")
        if self.aum_strategy not in ("alpha_quantile", "threshold_samples"):
            raise ConfigError(f"unknown aum strategy {self.aum_strategy!r}")
        if self.simifeat_mode not in ("vote", "rank"):
            raise ConfigError(f"unknown simifeat mode {self.simifeat_mode!r}")
        if self.negotiator not in ("random", "nearest", "fisher"):
            raise ConfigError(f"unknown negotiator {self.negotiator!r}")


@dataclass
class DetectionReport:
    method: str
    scores: np.ndarray  # higher = more suspicious
    flags: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.flags = np.asarray(self.flags, dtype=bool)
        if self.scores.shape != self.flags.shape:
            raise LabelQCError("scores and flags must have the same length")

    @property
    def n_flagged(self) -> int:
        return int(self.flags.sum())


@dataclass
class ConfidentJoint:
    """counts[observed][latent] over confidently-assignable samples."""

    counts: np.ndarray
    thresholds: np.ndarray

    @property
    def off_diagonal_total(self) -> int:
        return int(self.counts.sum() - np.trace(self.counts))


def top_k_flags(scores: np.ndarray, k: int) -> np.ndarray:
    """Boolean mask of the k highest scores, ties toward the lower index."""
    flags = np.zeros(len(scores), dtype=bool)
    if k > 0:
        order = np.argsort(-scores, kind="stable")
        flags[order[:k]] = True
    return flags


def _margins_from_logits(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-epoch assigned-vs-best-other logit margins; logits is E x N x M."""
    e, n, _ = logits.shape
    idx = np.arange(n)
    assigned = logits[:, idx, labels]
    masked = logits.copy()
    masked[:, idx, labels] = -np.inf
    return assigned - masked.max(axis=2)


def aum_scores(dynamics: TrainingDynamics, labels: np.ndarray) -> np.ndarray:
    """Mean margin over epochs (the area under the margin), one per sample."""
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != dynamics.num_samples:
        raise LabelQCError("labels do not match training dynamics")
    if dynamics.logits is not None:
        return _margins_from_logits(dynamics.logits, labels).mean(axis=0)
    if dynamics.margin_sums is None:
        raise ConfigError("dynamics carry neither logits nor margin sums")
    if dynamics.margin_labels is None or not np.array_equal(dynamics.margin_labels, labels):
        raise ConfigError("streamed margins were recorded against different labels")
    return dynamics.margin_sums / dynamics.epochs


def detect_aum(dynamics: TrainingDynamics, labels: np.ndarray, cfg: DetectorConfig) -> DetectionReport:
    aum = aum_scores(dynamics, labels)
    n = len(aum)
    if cfg.aum_strategy == "alpha_quantile":
        scores = -aum
        k = int(math.ceil(cfg.aum_alpha * n))
        flags = top_k_flags(scores, k)
        meta = {"strategy": "alpha_quantile", "alpha": cfg.aum_alpha, "flag_count": int(flags.sum())}
    else:
        if dynamics.threshold_mask is None:
            raise ConfigError("threshold_samples strategy needs dynamics with a threshold mask")
        mask = np.asarray(dynamics.threshold_mask, dtype=bool)
        cutoff = float(np.percentile(aum[mask], 99))
        scores = -aum
        scores[mask] = -np.inf  # sacrificial samples are never flagged
        flags = (~mask) & (aum < cutoff)
        meta = {
            "strategy": "threshold_samples",
            "cutoff": cutoff,
            "threshold_samples": int(mask.sum()),
            "flag_count": int(flags.sum()),
        }
    return DetectionReport(method="aum", scores=scores, flags=flags, metadata=meta)


def aum_threshold_run(
    train: Dataset,
    spec: ClassifierSpec,
    seed: Optional[int] = None,
) -> tuple[TrainingDynamics, np.ndarray]:
    """Train with ceil(N/(M+1)) samples relabeled to an extra fake class.

    Returns the dynamics (threshold mask attached) and the relabeled label
    vector to score against.
    """
    n, m = train.n, train.num_classes
    k = int(math.ceil(n / (m + 1)))
    rng = substream(spec.seed if seed is None else seed, "aum-threshold")
    chosen = rng.choice(n, size=k, replace=False)
    relabeled = train.labels.copy()
    relabeled[chosen] = m  # the fake class
    fake = Dataset(
        ids=train.ids,
        features=train.features,
        labels=relabeled,
        num_classes=m + 1,
        name=train.name,
    )
    _, dynamics = train_classifier(fake, spec)
    mask = np.zeros(n, dtype=bool)
    mask[chosen] = True
    dynamics.threshold_mask = mask
    return dynamics, relabeled


def compute_confident_joint(probs: ProbMatrix, labels: np.ndarray) -> ConfidentJoint:
    """Count samples into (observed, latent) cells via per-class confidence
    thresholds: sample i lands in latent class j maximizing probs[i][j] among
    classes whose threshold it clears; below every threshold it is uncounted."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, m = probs.shape
    thresholds = np.empty(m)
    for j in range(m):
        members = labels == j
        if not members.any():
            raise EstimationError(f"class {j} has no samples")
        thresholds[j] = probs[members, j].mean()
    admissible = probs >= thresholds[None, :]
    masked = np.where(admissible, probs, -np.inf)
    latent = masked.argmax(axis=1)  # ties resolve to the lower class index
    counted = admissible.any(axis=1)
    counts = np.zeros((m, m), dtype=np.int64)
    np.add.at(counts, (labels[counted], latent[counted]), 1)
    return ConfidentJoint(counts=counts, thresholds=thresholds)


def detect_confident_learning(
    probs: ProbMatrix,
    labels: np.ndarray,
    cfg: Optional[DetectorConfig] = None,
) -> DetectionReport:
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    joint = compute_confident_joint(probs, labels)
    n_flag = joint.off_diagonal_total
    scores = 1.0 - probs[np.arange(len(labels)), labels]
    flags = top_k_flags(scores, n_flag)
    return DetectionReport(
        method="confident",
        scores=scores,
        flags=flags,
        metadata={
            "flag_count": n_flag,
            "thresholds": joint.thresholds.tolist(),
            "confident_joint": joint.counts.tolist(),
        },
    )


def _simifeat_neighbors(
    features: np.ndarray,
    k: int,
    min_similarity: float,
) -> list[np.ndarray]:
    mean, std = standardization_stats(features)
    sims = cosine_similarity_matrix((features - mean) / std)
    np.fill_diagonal(sims, -np.inf)
    order = np.argsort(-sims, axis=1, kind="stable")[:, :k]
    out = []
    for i in range(len(sims)):
        cand = order[i]
        out.append(cand[sims[i, cand] >= min_similarity])
    return out


def _vote_round(
    features: np.ndarray,
    labels: np.ndarray,
    m: int,
    cfg: DetectorConfig,
) -> tuple[np.ndarray, np.ndarray, int]:
    neighbors = _simifeat_neighbors(features, cfg.k, cfg.min_similarity)
    n = len(labels)
    scores = np.zeros(n)
    flags = np.zeros(n, dtype=bool)
    isolated = 0
    for i, nb in enumerate(neighbors):
        if len(nb) == 0:
            isolated += 1
            continue
        votes = np.bincount(labels[nb], minlength=m)
        majority = int(np.argmax(votes))
        agreement = votes[labels[i]] / len(nb)
        scores[i] = 1.0 - agreement
        flags[i] = majority != labels[i]
    return scores, flags, isolated


def detect_simifeat(
    features: np.ndarray,
    labels: np.ndarray,
    cfg: DetectorConfig,
    num_classes: Optional[int] = None,
) -> DetectionReport:
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, d = features.shape
    if n <= cfg.k:
        raise LabelQCError(f"need more than k={cfg.k} samples, got {n}")
    m = num_classes if num_classes is not None else int(labels.max()) + 1

    if cfg.simifeat_mode == "rank":
        return _simifeat_rank(features, labels, m, cfg)

    if cfg.rounds == 1:
        scores, flags, isolated = _vote_round(features, labels, m, cfg)
        meta = {"mode": "vote", "rounds": 1, "isolated": isolated, "flag_count": int(flags.sum())}
        return DetectionReport(method="simifeat", scores=scores, flags=flags, metadata=meta)

    keep = max(1, int(math.ceil(0.7 * d)))
    flag_counts = np.zeros(n)
    isolated_total = 0
    for r in range(cfg.rounds):
        dims = substream(cfg.seed, "simifeat-round", r).choice(d, size=keep, replace=False)
        _, flags_r, isolated = _vote_round(features[:, np.sort(dims)], labels, m, cfg)
        flag_counts += flags_r
        isolated_total += isolated
    scores = flag_counts / cfg.rounds
    flags = scores > 0.5
    meta = {
        "mode": "vote",
        "rounds": cfg.rounds,
        "isolated": isolated_total,
        "flag_count": int(flags.sum()),
    }
    return DetectionReport(method="simifeat", scores=scores, flags=flags, metadata=meta)


def _simifeat_rank(
    features: np.ndarray,
    labels: np.ndarray,
    m: int,
    cfg: DetectorConfig,
) -> DetectionReport:
    """Budgeted variant: the clusterability transition estimate (diagonal
    damped by tii_offset) sets how many samples to flag per observed class."""
    t_hat = estimate_T_clusterability(features, labels, m=m, k=cfg.k).rows
    damped = t_hat + cfg.tii_offset * np.eye(m)
    damped /= damped.sum(axis=1, keepdims=True)
    pseudo = knn_pseudo_labels(features, labels, m, cfg.k)
    pseudo_counts = np.bincount(pseudo, minlength=m).astype(np.float64)

    scores = np.zeros(len(labels))
    neighbors = _simifeat_neighbors(features, cfg.k, cfg.min_similarity)
    isolated = 0
    for i, nb in enumerate(neighbors):
        if len(nb) == 0:
            isolated += 1
            continue
        votes = np.bincount(labels[nb], minlength=m)
        scores[i] = 1.0 - votes[labels[i]] / len(nb)

    flags = np.zeros(len(labels), dtype=bool)
    budgets = {}
    for j in range(m):
        budget = int(round(sum(damped[i, j] * pseudo_counts[i] for i in range(m) if i != j)))
        budgets[j] = budget
        members = np.flatnonzero(labels == j)
        if budget > 0 and len(members):
            order = members[np.argsort(-scores[members], kind="stable")]
            flags[order[:budget]] = True
    meta = {"mode": "rank", "budgets": budgets, "isolated": isolated, "flag_count": int(flags.sum())}
    return DetectionReport(method="simifeat", scores=scores, flags=flags, metadata=meta)


def cincer_margin(probs_row: np.ndarray) -> float:
    """Top-1 minus top-2 predicted probability."""
    row = np.sort(np.asarray(probs_row, dtype=np.float64))[::-1]
    if len(row) < 2:
        raise LabelQCError("margin needs at least two classes")
    return float(row[0] - row[1])


def _last_layer_gradient(model: TrainedModel, x_std: np.ndarray, label: int) -> np.ndarray:
    """Flattened cross-entropy gradient of the final linear layer for one sample."""
    if model.kind == "logreg":
        h = x_std
    else:
        h = np.maximum(0.0, x_std @ model.params["W1"] + model.params["b1"])
    logits = forward_logits(model.kind, model.params, x_std[None, :])[0]
    delta = softmax(logits)
    delta[label] -= 1.0
    return np.concatenate([np.outer(h, delta).ravel(), delta])


def select_counterexample(
    model: TrainedModel,
    dataset: Dataset,
    suspicious_index: int,
    negotiator: str,
    cfg: DetectorConfig,
) -> Optional[int]:
    """Pick a training sample explaining the suspicion: one whose observed
    label matches the model's prediction for the suspicious sample. Returns
    the chosen sample's id, or None when the pool is empty."""
    if not 0 <= suspicious_index < dataset.n:
        raise LabelQCError(f"suspicious index {suspicious_index} out of range")
    probs = predict_proba(model, dataset.features[suspicious_index:suspicious_index + 1])[0]
    predicted = int(np.argmax(probs))
    pool = np.flatnonzero(dataset.labels == predicted)
    pool = pool[pool != suspicious_index]
    if len(pool) == 0:
        return None
    if negotiator == "random":
        rng = substream(cfg.seed, "cincer-negotiator", suspicious_index)
        return int(dataset.ids[int(rng.choice(pool))])
    x_std = model.standardize(dataset.features)
    if negotiator == "nearest":
        target = x_std[suspicious_index]
        tn = np.linalg.norm(target)
        target = target / tn if tn > 1e-12 else target
        norms = np.linalg.norm(x_std[pool], axis=1)
        norms = np.where(norms < 1e-12, 1.0, norms)
        sims = (x_std[pool] / norms[:, None]) @ target
        return int(dataset.ids[pool[int(np.argmax(sims))]])
    if negotiator == "fisher":
        g_susp = _last_layer_gradient(
            model, x_std[suspicious_index], int(dataset.labels[suspicious_index])
        )
        pool_grads = np.stack(
            [_last_layer_gradient(model, x_std[i], int(dataset.labels[i])) for i in pool]
        )
        fisher = (pool_grads ** 2).mean(axis=0) + cfg.fisher_damping
        influence = pool_grads @ (g_susp / fisher)
        return int(dataset.ids[pool[int(np.argmax(influence))]])
    raise ConfigError(f"unknown negotiator {negotiator!r}")


def detect_cincer(model: TrainedModel, train: Dataset, cfg: DetectorConfig) -> DetectionReport:
    """Flag samples the margin inspector distrusts: prediction disagrees with
    the observed label, or the top-1/top-2 margin falls below the threshold.

    Scores encode the same rule so the flag set is exactly the positive
    scores: threshold - margin for agreeing samples, threshold + margin for
    disagreeing ones (a confident disagreement is the most suspicious).
    """
    probs = predict_proba(model, train.features)
    sorted_probs = np.sort(probs, axis=1)
    margins = sorted_probs[:, -1] - sorted_probs[:, -2]
    preds = probs.argmax(axis=1)
    disagree = preds != train.labels
    flags = (margins < cfg.threshold) | disagree
    scores = np.where(disagree, cfg.threshold + margins, cfg.threshold - margins)
    counterexamples = {}
    for i in np.flatnonzero(flags):
        ce = select_counterexample(model, train, int(i), cfg.negotiator, cfg)
        counterexamples[int(train.ids[i])] = ce
    return DetectionReport(
        method="cincer",
        scores=scores,
        flags=flags,
        metadata={
            "threshold": cfg.threshold,
            "flag_count": int(flags.sum()),
            "counterexamples": counterexamples,
            "margins": margins.tolist(),
        },
    )
