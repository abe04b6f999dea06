"""Noise transition matrices and controlled label corruption.

Single-label corruption draws exactly ``floor(rate * N)`` distinct samples and
flips each to a class other than its current label, so the ground truth used
for detector evaluation is exact rather than Bernoulli-approximate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .data import MISSING_ANNOTATION, Dataset
from .errors import InjectionError, LabelQCError
from .rng import substream

SINGLE_LABEL_KINDS = ("uniform", "asymmetric", "class_dependent", "instance_dependent")
MULTI_ANNOTATOR_KINDS = ("dissenting_label", "dissenting_worker", "crowd_majority")
NOISE_KINDS = SINGLE_LABEL_KINDS + MULTI_ANNOTATOR_KINDS

_ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic M x M matrix; rows[i][j] = P(observed j | true i)."""

    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        object.__setattr__(self, "rows", rows)
        if rows.ndim != 2 or rows.shape[0] != rows.shape[1]:
            raise LabelQCError("transition matrix must be square")
        if rows.shape[0] < 2:
            raise LabelQCError("transition matrix needs at least 2 classes")
        if np.any(rows < 0):
            raise LabelQCError("transition matrix entries must be nonnegative")
        if np.any(np.abs(rows.sum(axis=1) - 1.0) > _ROW_SUM_TOL):
            raise LabelQCError("transition matrix rows must sum to 1")

    @property
    def m(self) -> int:
        return self.rows.shape[0]


@dataclass
class NoiseSpec:
    """Declarative description of one injection: kind, rate, seed, payload."""

    kind: str
    rate: float
    seed: int = 42
    confusion: Optional[np.ndarray] = None  # class_dependent only
    propensity_std: float = 0.1  # instance_dependent only

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise LabelQCError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise LabelQCError("noise rate must lie in [0, 1]")


@dataclass(frozen=True)
class CorruptionRecord:
    """Ground truth of one injection: which samples changed and from what."""

    corrupted_indices: np.ndarray
    original_labels: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.corrupted_indices, dtype=np.int64)
        object.__setattr__(self, "corrupted_indices", idx)
        object.__setattr__(self, "original_labels", np.asarray(self.original_labels, dtype=np.int64))
        object.__setattr__(self, "mask", np.asarray(self.mask, dtype=bool))
        if len(idx) != len(self.original_labels):
            raise LabelQCError("corrupted_indices/original_labels length mismatch")
        if len(idx) > 1 and np.any(np.diff(idx) <= 0):
            raise LabelQCError("corrupted_indices must be sorted and unique")
        if self.mask.sum() != len(idx):
            raise LabelQCError("mask does not match corrupted index count")

    @property
    def count(self) -> int:
        return len(self.corrupted_indices)


@dataclass(frozen=True)
class FlipDistribution:
    """Per-sample flip propensity and flip-target distribution.

    ``pi[i]`` sums to 1 with ``pi[i, labels[i]] == 1 - q[i]``; ``projection``
    is the d x M feature-to-class-score map that makes the noise depend on x.
    """

    q: np.ndarray
    pi: np.ndarray
    projection: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64)
        pi = np.asarray(self.pi, dtype=np.float64)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "pi", pi)
        if pi.ndim != 2 or pi.shape[0] != len(q):
            raise LabelQCError("pi must be N x M matching q")
        if np.any(np.abs(pi.sum(axis=1) - 1.0) > _ROW_SUM_TOL):
            raise LabelQCError("pi rows must sum to 1")

    @property
    def m(self) -> int:
        return self.pi.shape[1]


def build_uniform_T(m: int, p: float) -> TransitionMatrix:
    """Diagonal 1-p, all off-diagonal entries p/(m-1)."""
    if m < 2:
        raise LabelQCError(f"need at least 2 classes, got {m}")
    if not 0.0 <= p <= 1.0:
        raise LabelQCError("rate must lie in [0, 1]")
    rows = np.full((m, m), p / (m - 1))
    np.fill_diagonal(rows, 1.0 - p)
    return TransitionMatrix(rows)


def build_asymmetric_T(m: int, p: float) -> TransitionMatrix:
    """Pairwise flipping: class i goes to (i+1) mod m with probability p."""
    if m < 2:
        raise LabelQCError(f"need at least 2 classes, got {m}")
    if not 0.0 <= p <= 1.0:
        raise LabelQCError("rate must lie in [0, 1]")
    rows = np.zeros((m, m))
    for i in range(m):
        rows[i, i] = 1.0 - p
        rows[i, (i + 1) % m] += p
    return TransitionMatrix(rows)


def build_class_dependent_T(confusion: np.ndarray, p: float) -> TransitionMatrix:
    """T = (1-p) I + p E with E row i the renormalized off-diagonal of the
    confusion row; rows without off-diagonal mass fall back to uniform."""
    confusion = np.asarray(confusion, dtype=np.float64)
    if confusion.ndim != 2 or confusion.shape[0] != confusion.shape[1]:
        raise LabelQCError("confusion matrix must be square")
    m = confusion.shape[0]
    if m < 2:
        raise LabelQCError("need at least 2 classes")
    if np.any(confusion < 0):
        raise LabelQCError("confusion counts must be nonnegative")
    if np.any(confusion.sum(axis=1) <= 0):
        raise LabelQCError("every confusion row needs a positive sum")
    if not 0.0 <= p <= 1.0:
        raise LabelQCError("rate must lie in [0, 1]")
    e = confusion.copy()
    np.fill_diagonal(e, 0.0)
    rows = np.zeros((m, m))
    for i in range(m):
        mass = e[i].sum()
        if mass > 0:
            rows[i] = p * e[i] / mass
        else:
            rows[i] = p / (m - 1)
            rows[i, i] = 0.0
        rows[i, i] += 1.0 - p
    return TransitionMatrix(rows)


def _truncated_normal(rng: np.random.Generator, mean: float, std: float, size: int) -> np.ndarray:
    """Rejection-sample normal(mean, std) restricted to [0, 1]."""
    out = np.empty(size)
    filled = 0
    while filled < size:
        draw = rng.normal(mean, std, size=2 * (size - filled))
        keep = draw[(draw >= 0.0) & (draw <= 1.0)]
        take = min(len(keep), size - filled)
        out[filled:filled + take] = keep[:take]
        filled += take
    return out


def instance_flip_distribution(
    features: np.ndarray,
    labels: np.ndarray,
    m: int,
    p: float,
    propensity_std: float = 0.1,
    seed: int = 42,
) -> FlipDistribution:
    """Feature-dependent flip distribution: propensities from a truncated
    normal around the target rate, flip targets from a random projection of
    the features with the current class masked out."""
    if not 0.0 <= p <= 1.0:
        raise LabelQCError("rate must lie in [0, 1]")
    if propensity_std <= 0:
        raise LabelQCError("propensity_std must be positive")
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, d = features.shape
    rng = substream(seed, "instance-noise")
    if p == 0.0:
        q = np.zeros(n)
    else:
        q = _truncated_normal(rng, p, propensity_std, n)
    w = rng.standard_normal((d, m))
    scores = features @ w
    scores[np.arange(n), labels] = -np.inf
    shifted = scores - scores.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    soft = exp / exp.sum(axis=1, keepdims=True)
    pi = soft * q[:, None]
    pi[np.arange(n), labels] = 1.0 - q
    return FlipDistribution(q=q, pi=pi, projection=w)


def _draw_flip_target(row: np.ndarray, label: int, rng: np.random.Generator, index: int) -> int:
    off = row.copy()
    off[label] = 0.0
    total = off.sum()
    if total <= 0:
        raise InjectionError(f"sample {index}: no off-diagonal mass to flip to")
    return int(rng.choice(len(off), p=off / total))


def apply_corruption(
    labels: np.ndarray,
    source: Union[TransitionMatrix, FlipDistribution],
    p: float,
    seed: int,
) -> tuple[np.ndarray, CorruptionRecord]:
    """Corrupt exactly floor(p*N) labels according to `source`.

    Matrix sources select samples uniformly without replacement; an
    instance-dependent source selects proportionally to its propensities.
    The new label is drawn from the source's off-diagonal distribution for
    that sample, so it always differs from the original.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    if not 0.0 <= p <= 1.0:
        raise LabelQCError("rate must lie in [0, 1]")
    m = source.m
    if n and labels.max() >= m:
        raise LabelQCError("labels exceed source dimension")
    n_corrupt = int(np.floor(p * n))
    out = labels.copy()
    if n_corrupt == 0:
        record = CorruptionRecord(
            corrupted_indices=np.empty(0, dtype=np.int64),
            original_labels=np.empty(0, dtype=np.int64),
            mask=np.zeros(n, dtype=bool),
        )
        return out, record

    select_rng = substream(seed, "corrupt-select")
    flip_rng = substream(seed, "corrupt-flip")
    if isinstance(source, FlipDistribution):
        weights = source.q.astype(np.float64)
        positive = int((weights > 0).sum())
        if positive < n_corrupt:
            raise InjectionError(
                f"only {positive} samples have positive flip propensity, need {n_corrupt}"
            )
        chosen = select_rng.choice(n, size=n_corrupt, replace=False, p=weights / weights.sum())
    else:
        chosen = select_rng.choice(n, size=n_corrupt, replace=False)
    chosen = np.sort(chosen)

    for i in chosen:
        row = source.pi[i] if isinstance(source, FlipDistribution) else source.rows[labels[i]]
        out[i] = _draw_flip_target(row, int(labels[i]), flip_rng, int(i))
    mask = np.zeros(n, dtype=bool)
    mask[chosen] = True
    record = CorruptionRecord(
        corrupted_indices=chosen,
        original_labels=labels[chosen],
        mask=mask,
    )
    return out, record


def _majority_vote(values: np.ndarray, m: int) -> Optional[int]:
    present = values[values != MISSING_ANNOTATION]
    if present.size == 0:
        return None
    counts = np.bincount(present, minlength=m)
    return int(np.argmax(counts))  # ties resolve to the lowest class index


def inject_multi_annotator(
    dataset: Dataset,
    kind: str,
    p: float,
    seed: int,
) -> tuple[np.ndarray, CorruptionRecord]:
    """Corrupt labels using per-annotator disagreement.

    All three kinds replace at most floor(p*N) final labels with a
    disagreeing annotation; samples with no disagreeing annotation are
    skipped, and if fewer than floor(p*N) samples are eligible, every
    eligible sample is corrupted.
    """
    if kind not in MULTI_ANNOTATOR_KINDS:
        raise LabelQCError(f"unknown multi-annotator kind {kind!r}")
    if dataset.annotator_labels is None:
        raise LabelQCError("dataset has no annotator labels")
    if not 0.0 <= p <= 1.0:
        raise LabelQCError("rate must lie in [0, 1]")
    labels = dataset.labels
    annot = dataset.annotator_labels
    n, n_annot = annot.shape
    m = dataset.num_classes
    budget = int(np.floor(p * n))
    out = labels.copy()
    rng = substream(seed, f"annotator-{kind}")
    changed: list[int] = []

    if budget > 0 and kind == "dissenting_label":
        eligible = []
        for i in range(n):
            present = annot[i][annot[i] != MISSING_ANNOTATION]
            if np.any(present != labels[i]):
                eligible.append(i)
        take = min(budget, len(eligible))
        if take:
            chosen = rng.choice(len(eligible), size=take, replace=False)
            for j in chosen:
                i = eligible[j]
                options = annot[i][(annot[i] != MISSING_ANNOTATION) & (annot[i] != labels[i])]
                out[i] = int(rng.choice(options))
                changed.append(i)

    elif budget > 0 and kind == "dissenting_worker":
        order = rng.permutation(n_annot)
        done = np.zeros(n, dtype=bool)
        for a in order:
            if len(changed) >= budget:
                break
            col = annot[:, a]
            disagree = np.flatnonzero((col != MISSING_ANNOTATION) & (col != labels) & ~done)
            for i in disagree:
                if len(changed) >= budget:
                    break
                out[i] = int(col[i])
                done[i] = True
                changed.append(int(i))

    elif budget > 0 and kind == "crowd_majority":
        eligible = []
        majorities = {}
        for i in range(n):
            maj = _majority_vote(annot[i], m)
            if maj is not None and maj != labels[i]:
                eligible.append(i)
                majorities[i] = maj
        take = min(budget, len(eligible))
        if take:
            chosen = rng.choice(len(eligible), size=take, replace=False)
            for j in chosen:
                i = eligible[j]
                out[i] = majorities[i]
                changed.append(i)

    idx = np.sort(np.array(changed, dtype=np.int64))
    mask = np.zeros(n, dtype=bool)
    mask[idx] = True
    record = CorruptionRecord(
        corrupted_indices=idx,
        original_labels=labels[idx],
        mask=mask,
    )
    return out, record


def corrupt_dataset(dataset: Dataset, spec: NoiseSpec) -> tuple[Dataset, CorruptionRecord]:
    """Apply one NoiseSpec to a dataset's observed labels."""
    if spec.kind in MULTI_ANNOTATOR_KINDS:
        new_labels, record = inject_multi_annotator(dataset, spec.kind, spec.rate, spec.seed)
    elif spec.kind == "instance_dependent":
        dist = instance_flip_distribution(
            dataset.features,
            dataset.labels,
            dataset.num_classes,
            spec.rate,
            spec.propensity_std,
            spec.seed,
        )
        new_labels, record = apply_corruption(dataset.labels, dist, spec.rate, spec.seed)
    else:
        if spec.kind == "uniform":
            t = build_uniform_T(dataset.num_classes, spec.rate)
        elif spec.kind == "asymmetric":
            t = build_asymmetric_T(dataset.num_classes, spec.rate)
        else:
            if spec.confusion is None:
                raise LabelQCError("class_dependent noise needs a confusion matrix payload")
            t = build_class_dependent_T(spec.confusion, spec.rate)
        new_labels, record = apply_corruption(dataset.labels, t, spec.rate, spec.seed)
    return dataset.with_labels(new_labels), record
