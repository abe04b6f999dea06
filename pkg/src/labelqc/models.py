"""Built-in classifiers plus transition-matrix estimation and loss correction.

Two small trainable models (multinomial logistic regression and a one-hidden-
layer MLP) stand in for heavyweight architectures: every detector downstream
consumes only features, predicted probabilities, or per-epoch logits, so the
interfaces are architecture-agnostic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .data import Dataset
from .errors import EstimationError, LabelQCError, StratificationError, TrainingError
from .noise import TransitionMatrix
from .rng import substream

# Full logit recording is E x N x M floats; past this cap the trainer keeps
# only running margin sums (enough for margin-based detectors).
DEFAULT_LOGIT_CAP = 50_000_000

ProbMatrix = np.ndarray  # N x M rows summing to 1


@dataclass
class ClassifierSpec:
    kind: str = "logreg"  # "logreg" | "mlp"
    epochs: int = 50
    learning_rate: float = 0.1
    batch_size: int = 32
    hidden_units: int = 32
    l2: float = 1e-4
    seed: int = 42

    def __post_init__(self):
        if self.kind not in ("logreg", "mlp"):
            raise LabelQCError(f"unknown classifier kind {self.kind!r}")
        if self.epochs < 1 or self.learning_rate <= 0 or self.batch_size < 1:
            raise LabelQCError("epochs, learning_rate and batch_size must be positive")
        if self.hidden_units < 1 or self.l2 < 0:
            raise LabelQCError("hidden_units must be positive and l2 nonnegative")


@dataclass
class TrainedModel:
    kind: str
    params: dict
    num_classes: int
    mean: np.ndarray
    std: np.ndarray

    def standardize(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != len(self.mean):
            raise LabelQCError(
                f"feature dimension {features.shape} does not match model ({len(self.mean)} dims)"
            )
        return (features - self.mean) / self.std


@dataclass
class TrainingDynamics:
    """Per-epoch logits (or running margin sums) over the full training set."""

    epochs: int
    num_samples: int
    num_classes: int
    mean_losses: np.ndarray
    logits: Optional[np.ndarray] = None  # E x N x M when recorded in full
    margin_sums: Optional[np.ndarray] = None  # N, streaming fallback
    margin_labels: Optional[np.ndarray] = None  # labels the streamed margins used
    threshold_mask: Optional[np.ndarray] = None  # True for sacrificial fake-class samples


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def standardization_stats(features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    return mean, std


def _init_params(kind: str, d: int, m: int, hidden: int, rng: np.random.Generator) -> dict:
    if kind == "logreg":
        return {"W": np.zeros((d, m)), "b": np.zeros(m)}
    scale1 = 1.0 / math.sqrt(d)
    scale2 = 1.0 / math.sqrt(hidden)
    return {
        "W1": rng.standard_normal((d, hidden)) * scale1,
        "b1": np.zeros(hidden),
        "W2": rng.standard_normal((hidden, m)) * scale2,
        "b2": np.zeros(m),
    }


def forward_logits(kind: str, params: dict, x: np.ndarray) -> np.ndarray:
    if kind == "logreg":
        return x @ params["W"] + params["b"]
    h = np.maximum(0.0, x @ params["W1"] + params["b1"])
    return h @ params["W2"] + params["b2"]


def loss_and_grad(
    kind: str,
    params: dict,
    x: np.ndarray,
    labels: np.ndarray,
    l2: float,
) -> tuple[float, dict]:
    """Mean cross-entropy with L2 on weight matrices (not biases), plus its
    analytic gradient. Kept separate from the trainer so it can be checked
    against finite differences."""
    n = len(labels)
    if kind == "logreg":
        logits = x @ params["W"] + params["b"]
        p = softmax(logits)
        ce = -np.log(np.clip(p[np.arange(n), labels], 1e-300, None)).mean()
        loss = ce + 0.5 * l2 * float((params["W"] ** 2).sum())
        delta = p.copy()
        delta[np.arange(n), labels] -= 1.0
        delta /= n
        return loss, {
            "W": x.T @ delta + l2 * params["W"],
            "b": delta.sum(axis=0),
        }
    pre = x @ params["W1"] + params["b1"]
    h = np.maximum(0.0, pre)
    logits = h @ params["W2"] + params["b2"]
    p = softmax(logits)
    ce = -np.log(np.clip(p[np.arange(n), labels], 1e-300, None)).mean()
    loss = ce + 0.5 * l2 * float((params["W1"] ** 2).sum() + (params["W2"] ** 2).sum())
    delta = p.copy()
    delta[np.arange(n), labels] -= 1.0
    delta /= n
    dh = delta @ params["W2"].T
    dh[pre <= 0] = 0.0
    return loss, {
        "W1": x.T @ dh + l2 * params["W1"],
        "b1": dh.sum(axis=0),
        "W2": h.T @ delta + l2 * params["W2"],
        "b2": delta.sum(axis=0),
    }


def train_classifier(
    train: Dataset,
    spec: ClassifierSpec,
    logit_cap: int = DEFAULT_LOGIT_CAP,
) -> tuple[TrainedModel, TrainingDynamics]:
    """Minibatch SGD on cross-entropy; logits recorded after every epoch."""
    if train.n == 0:
        raise TrainingError("cannot train on an empty dataset")
    m = train.num_classes
    mean, std = standardization_stats(train.features)
    x = (train.features - mean) / std
    y = train.labels
    rng = substream(spec.seed, "train-init")
    params = _init_params(spec.kind, train.dim, m, spec.hidden_units, rng)

    full = spec.epochs * train.n * m <= logit_cap
    logits_rec = np.empty((spec.epochs, train.n, m)) if full else None
    margin_sums = None if full else np.zeros(train.n)
    mean_losses = np.empty(spec.epochs)

    for epoch in range(spec.epochs):
        order = substream(spec.seed, "train-shuffle", epoch).permutation(train.n)
        for start in range(0, train.n, spec.batch_size):
            batch = order[start:start + spec.batch_size]
            _, grads = loss_and_grad(spec.kind, params, x[batch], y[batch], spec.l2)
            for key, g in grads.items():
                params[key] -= spec.learning_rate * g
        logits = forward_logits(spec.kind, params, x)
        p = softmax(logits)
        mean_losses[epoch] = -np.log(
            np.clip(p[np.arange(train.n), y], 1e-300, None)
        ).mean()
        if full:
            logits_rec[epoch] = logits
        else:
            assigned = logits[np.arange(train.n), y]
            masked = logits.copy()
            masked[np.arange(train.n), y] = -np.inf
            margin_sums += assigned - masked.max(axis=1)

    model = TrainedModel(kind=spec.kind, params=params, num_classes=m, mean=mean, std=std)
    dynamics = TrainingDynamics(
        epochs=spec.epochs,
        num_samples=train.n,
        num_classes=m,
        mean_losses=mean_losses,
        logits=logits_rec,
        margin_sums=margin_sums,
        margin_labels=None if full else y.copy(),
    )
    return model, dynamics


def predict_proba(model: TrainedModel, features: np.ndarray) -> ProbMatrix:
    x = model.standardize(features)
    return softmax(forward_logits(model.kind, model.params, x))


def cross_val_proba(
    dataset: Dataset,
    spec: ClassifierSpec,
    folds: int = 5,
    seed: int = 42,
) -> ProbMatrix:
    """Out-of-fold predicted probabilities from a stratified K-fold.

    ``folds == N`` is leave-one-out; otherwise every class must have at least
    `folds` members so each fold sees every class.
    """
    n = dataset.n
    if folds < 2:
        raise LabelQCError("folds must be >= 2")
    if folds > n:
        raise StratificationError(f"cannot make {folds} folds from {n} samples")
    assignment = np.empty(n, dtype=np.int64)
    if folds == n:
        assignment[:] = np.arange(n)
    else:
        rng = substream(seed, "cv-folds")
        for c in range(dataset.num_classes):
            members = np.flatnonzero(dataset.labels == c)
            if len(members) == 0:
                continue
            if len(members) < folds:
                raise StratificationError(
                    f"class {c} has {len(members)} members, fewer than {folds} folds"
                )
            members = members[rng.permutation(len(members))]
            assignment[members] = np.arange(len(members)) % folds
    probs = np.full((n, dataset.num_classes), np.nan)
    for f in range(folds):
        held = assignment == f
        model, _ = train_classifier(dataset.subset(np.flatnonzero(~held)), spec)
        probs[held] = predict_proba(model, dataset.features[held])
    if not np.all(np.isfinite(probs)):
        raise LabelQCError("a sample received no out-of-fold prediction")
    return probs


def confusion_matrix(probs: ProbMatrix, labels: np.ndarray) -> np.ndarray:
    """counts[i][j] = number of samples with label i predicted as j."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or probs.shape[0] != len(labels):
        raise LabelQCError("probs and labels shapes do not match")
    m = probs.shape[1]
    preds = probs.argmax(axis=1)
    counts = np.zeros((m, m), dtype=np.int64)
    np.add.at(counts, (labels, preds), 1)
    return counts


def corrected_loss(
    logits: np.ndarray,
    label: int,
    t: TransitionMatrix,
    mode: str = "forward",
) -> float:
    """Noise-corrected cross-entropy for one sample.

    forward: -log((T' softmax(z))[label]); backward: (T^-1 l)[label] with
    l[c] = -log softmax(z)[c]. Backward requires an invertible T.
    """
    logits = np.asarray(logits, dtype=np.float64)
    p = softmax(logits)
    rows = t.rows
    if mode == "forward":
        u = rows.T @ p
        return float(-np.log(np.clip(u[label], 1e-300, None)))
    if mode == "backward":
        ell = -np.log(np.clip(p, 1e-300, None))
        inv = np.linalg.inv(rows)  # raises LinAlgError when singular
        return float((inv @ ell)[label])
    raise LabelQCError(f"unknown correction mode {mode!r}")


def corrected_loss_grad(
    logits: np.ndarray,
    label: int,
    t: TransitionMatrix,
    mode: str = "forward",
) -> np.ndarray:
    """Analytic gradient of corrected_loss with respect to the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    p = softmax(logits)
    rows = t.rows
    if mode == "forward":
        u = float((rows.T @ p)[label])
        return p - rows[:, label] * p / u
    if mode == "backward":
        inv = np.linalg.inv(rows)
        coeff = inv[label]  # weights on the per-class losses
        return p * coeff.sum() - coeff
    raise LabelQCError(f"unknown correction mode {mode!r}")


def estimate_T_anchor(probs: ProbMatrix, labels: np.ndarray) -> TransitionMatrix:
    """Read transition rows off the most confidently-class-i sample (anchor)."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    m = probs.shape[1]
    for c in range(m):
        if not np.any(labels == c):
            raise EstimationError(f"class {c} has no samples")
    anchors = probs.argmax(axis=0)  # anchors[i] maximizes p(class i | x)
    rows = probs[anchors].copy()
    rows /= rows.sum(axis=1, keepdims=True)
    return TransitionMatrix(rows)


def cosine_similarity_matrix(features: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(features, axis=1, keepdims=True)
    norms = np.where(norms < 1e-12, 1.0, norms)
    unit = features / norms
    return unit @ unit.T


def knn_pseudo_labels(
    features: np.ndarray,
    labels: np.ndarray,
    m: int,
    k: int,
) -> np.ndarray:
    """Majority label of the k nearest neighbors by cosine similarity on
    standardized features (self excluded, ties to the lower class index)."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    if n <= k:
        raise LabelQCError(f"need more than k={k} samples, got {n}")
    mean, std = standardization_stats(features)
    sims = cosine_similarity_matrix((features - mean) / std)
    np.fill_diagonal(sims, -np.inf)
    # argsort is stable, so equal similarities resolve to the lower index
    neighbor_idx = np.argsort(-sims, axis=1, kind="stable")[:, :k]
    pseudo = np.empty(n, dtype=np.int64)
    for i in range(n):
        votes = np.bincount(labels[neighbor_idx[i]], minlength=m)
        pseudo[i] = int(np.argmax(votes))
    return pseudo


def estimate_T_clusterability(
    features: np.ndarray,
    labels: np.ndarray,
    m: Optional[int] = None,
    k: int = 10,
) -> TransitionMatrix:
    """Transition estimate from k-NN pseudo-true labels: row i is the observed
    label distribution among samples whose neighborhood votes class i."""
    labels = np.asarray(labels, dtype=np.int64)
    if m is None:
        m = int(labels.max()) + 1
    pseudo = knn_pseudo_labels(features, labels, m, k)
    rows = np.zeros((m, m))
    for i in range(m):
        mask = pseudo == i
        if mask.sum() == 0:
            rows[i, i] = 1.0
        else:
            rows[i] = np.bincount(labels[mask], minlength=m) / mask.sum()
    return TransitionMatrix(rows)


def save_model(model: TrainedModel, path) -> None:
    doc = {
        "format": "labelqc-model",
        "version": 1,
        "kind": model.kind,
        "num_classes": model.num_classes,
        "mean": model.mean.tolist(),
        "std": model.std.tolist(),
        "params": {k: v.tolist() for k, v in model.params.items()},
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_model(path) -> TrainedModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != "labelqc-model" or doc.get("version") != 1:
        raise LabelQCError(f"{path}: not a version-1 labelqc model file")
    return TrainedModel(
        kind=doc["kind"],
        params={k: np.array(v, dtype=np.float64) for k, v in doc["params"].items()},
        num_classes=int(doc["num_classes"]),
        mean=np.array(doc["mean"], dtype=np.float64),
        std=np.array(doc["std"], dtype=np.float64),
    )
