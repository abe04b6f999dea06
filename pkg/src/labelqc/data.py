"""Datasets, CSV ingestion, synthetic blobs, stratified splitting, data cards.

The on-disk dataset format is a plain UTF-8 CSV with a header row:

    id,y[,y_true][,a0..a{A-1}],x0..x{d-1}

Data cards are CSVs with `# key=value` metadata lines before the header; see
:class:`DataCard`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import FormatError, LabelQCError, ParseError, SchemaError, StratificationError
from .rng import substream

MISSING_ANNOTATION = -1


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, order="C", copy=True)  # never freeze caller-owned memory
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Dataset:
    """An immutable classification dataset.

    Parameters
    ----------
    ids :
        Unique 64-bit integer identifiers, one per sample.
    features :
        N x d real matrix; must be finite.
    labels :
        Observed labels in [0, num_classes).
    num_classes :
        Number of classes M >= 2.
    true_labels :
        Optional latent labels (known for synthetic data).
    annotator_labels :
        Optional N x A integer matrix of per-annotator labels with
        ``MISSING_ANNOTATION`` (-1) marking absent annotations.
    name :
        Human-readable tag used in data cards and result rows.
    """

    ids: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    true_labels: Optional[np.ndarray] = None
    annotator_labels: Optional[np.ndarray] = None
    name: str = "dataset"

    def __post_init__(self):
        ids = _frozen(np.asarray(self.ids, dtype=np.int64))
        features = _frozen(np.asarray(self.features, dtype=np.float64))
        labels = _frozen(np.asarray(self.labels, dtype=np.int64))
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        n = len(ids)
        if features.ndim != 2 or features.shape[0] != n or labels.shape != (n,):
            raise LabelQCError("ids, features and labels have inconsistent shapes")
        if self.num_classes < 2:
            raise LabelQCError(f"num_classes must be >= 2, got {self.num_classes}")
        if len(np.unique(ids)) != n:
            raise LabelQCError("ids must be unique")
        if not np.all(np.isfinite(features)):
            raise LabelQCError("features must be finite (no NaN/Inf)")
        if n and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise LabelQCError(f"labels must lie in [0, {self.num_classes})")
        if self.true_labels is not None:
            tl = _frozen(np.asarray(self.true_labels, dtype=np.int64))
            object.__setattr__(self, "true_labels", tl)
            if tl.shape != (n,):
                raise LabelQCError("true_labels length mismatch")
            if n and (tl.min() < 0 or tl.max() >= self.num_classes):
                raise LabelQCError("true_labels out of range")
        if self.annotator_labels is not None:
            al = _frozen(np.asarray(self.annotator_labels, dtype=np.int64))
            object.__setattr__(self, "annotator_labels", al)
            if al.ndim != 2 or al.shape[0] != n or al.shape[1] < 1:
                raise LabelQCError("annotator_labels must be N x A with A >= 1")
            present = al[al != MISSING_ANNOTATION]
            if present.size and (present.min() < 0 or present.max() >= self.num_classes):
                raise LabelQCError("annotator labels out of range")

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def with_labels(self, labels: np.ndarray) -> "Dataset":
        """New dataset sharing everything but the observed labels."""
        return Dataset(
            ids=self.ids,
            features=self.features,
            labels=labels,
            num_classes=self.num_classes,
            true_labels=self.true_labels,
            annotator_labels=self.annotator_labels,
            name=self.name,
        )

    def subset(self, idx: np.ndarray, name: Optional[str] = None) -> "Dataset":
        return Dataset(
            ids=self.ids[idx],
            features=self.features[idx],
            labels=self.labels[idx],
            num_classes=self.num_classes,
            true_labels=None if self.true_labels is None else self.true_labels[idx],
            annotator_labels=None
            if self.annotator_labels is None
            else self.annotator_labels[idx],
            name=self.name if name is None else name,
        )


@dataclass(frozen=True)
class SplitPair:
    train: Dataset
    test: Dataset

    def __post_init__(self):
        train_ids = set(self.train.ids.tolist())
        test_ids = set(self.test.ids.tolist())
        if train_ids & test_ids:
            raise LabelQCError("train/test id sets overlap")


@dataclass
class CsvSchema:
    """Column mapping for dataset CSVs. Defaults match the canonical layout."""

    id_column: str = "id"
    label_column: str = "y"
    true_label_column: Optional[str] = "y_true"
    annotator_prefix: str = "a"
    feature_prefix: str = "x"
    num_classes: Optional[int] = None


def _ordered_prefixed(header: Sequence[str], prefix: str) -> list[str]:
    cols = []
    for name in header:
        if name.startswith(prefix) and name[len(prefix):].isdigit():
            cols.append(name)
    cols.sort(key=lambda c: int(c[len(prefix):]))
    return cols


def load_dataset_csv(path, schema: Optional[CsvSchema] = None, name: Optional[str] = None) -> Dataset:
    """Load a dataset from CSV, validating labels and features row by row."""
    schema = schema or CsvSchema()
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = list(reader)

    if schema.id_column not in header:
        raise SchemaError(f"{path}: missing id column {schema.id_column!r}")
    if schema.label_column not in header:
        raise SchemaError(f"{path}: missing label column {schema.label_column!r}")
    feature_cols = _ordered_prefixed(header, schema.feature_prefix)
    if not feature_cols:
        raise SchemaError(f"{path}: no feature columns with prefix {schema.feature_prefix!r}")
    annot_cols = _ordered_prefixed(header, schema.annotator_prefix)
    has_true = schema.true_label_column is not None and schema.true_label_column in header

    col_idx = {c: header.index(c) for c in header}
    id_i = col_idx[schema.id_column]
    y_i = col_idx[schema.label_column]
    yt_i = col_idx[schema.true_label_column] if has_true else None
    f_is = [col_idx[c] for c in feature_cols]
    a_is = [col_idx[c] for c in annot_cols]

    def parse_int(text: str, row: int, what: str) -> int:
        try:
            return int(text)
        except ValueError:
            raise ParseError(f"{path}: row {row}: non-integer {what} {text!r}") from None

    ids, labels, trues, annots, feats = [], [], [], [], []
    for r, row in enumerate(rows, start=2):  # header is line 1
        if len(row) != len(header):
            raise ParseError(f"{path}: row {r}: expected {len(header)} fields, got {len(row)}")
        ids.append(parse_int(row[id_i], r, "id"))
        labels.append(parse_int(row[y_i], r, "label"))
        if yt_i is not None:
            trues.append(parse_int(row[yt_i], r, "true label"))
        if a_is:
            annots.append([parse_int(row[i], r, "annotator label") for i in a_is])
        vec = []
        for i in f_is:
            try:
                v = float(row[i])
            except ValueError:
                raise ParseError(f"{path}: row {r}: bad feature value {row[i]!r}") from None
            if not math.isfinite(v):
                raise ParseError(f"{path}: row {r}: non-finite feature {row[i]!r}")
            vec.append(v)
        feats.append(vec)

    labels_arr = np.array(labels, dtype=np.int64)
    m = schema.num_classes
    if m is None:
        m = int(labels_arr.max()) + 1 if len(labels_arr) else 2
    for r, y in enumerate(labels, start=2):
        if not 0 <= y < m:
            raise ParseError(f"{path}: row {r}: label {y} outside [0, {m})")
    if trues:
        for r, y in enumerate(trues, start=2):
            if not 0 <= y < m:
                raise ParseError(f"{path}: row {r}: true label {y} outside [0, {m})")
    if annots:
        for r, row_a in enumerate(annots, start=2):
            for y in row_a:
                if y != MISSING_ANNOTATION and not 0 <= y < m:
                    raise ParseError(f"{path}: row {r}: annotator label {y} outside [0, {m})")

    return Dataset(
        ids=np.array(ids, dtype=np.int64),
        features=np.array(feats, dtype=np.float64).reshape(len(rows), len(feature_cols)),
        labels=labels_arr,
        num_classes=m,
        true_labels=np.array(trues, dtype=np.int64) if trues else None,
        annotator_labels=np.array(annots, dtype=np.int64) if annots else None,
        name=name or path.stem,
    )


def save_dataset_csv(dataset: Dataset, path) -> None:
    """Write a dataset in the canonical CSV layout (floats via repr: lossless)."""
    path = Path(path)
    header = ["id", "y"]
    if dataset.true_labels is not None:
        header.append("y_true")
    n_annot = dataset.annotator_labels.shape[1] if dataset.annotator_labels is not None else 0
    header += [f"a{j}" for j in range(n_annot)]
    header += [f"x{j}" for j in range(dataset.dim)]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(dataset.n):
            row = [int(dataset.ids[i]), int(dataset.labels[i])]
            if dataset.true_labels is not None:
                row.append(int(dataset.true_labels[i]))
            for j in range(n_annot):
                row.append(int(dataset.annotator_labels[i, j]))
            row += [repr(float(v)) for v in dataset.features[i]]
            writer.writerow(row)


def make_blobs(n: int, d: int, m: int, separation: float, seed: int) -> Dataset:
    """Isotropic Gaussian clusters with centers on a circle of radius `separation`.

    Class sizes differ by at most one; true labels equal observed labels.
    """
    if m < 2:
        raise LabelQCError(f"need at least 2 classes, got {m}")
    if n < m:
        raise LabelQCError(f"need n >= m, got n={n}, m={m}")
    if d < 1 or separation <= 0:
        raise LabelQCError("d must be >= 1 and separation > 0")
    rng = substream(seed, "blobs")
    counts = [n // m + (1 if c < n % m else 0) for c in range(m)]
    centers = np.zeros((m, d))
    for c in range(m):
        theta = 2.0 * math.pi * c / m
        centers[c, 0] = separation * math.cos(theta)
        if d > 1:
            centers[c, 1] = separation * math.sin(theta)
    labels = np.repeat(np.arange(m), counts)
    points = centers[labels] + rng.standard_normal((n, d))
    return Dataset(
        ids=np.arange(n, dtype=np.int64),
        features=points,
        labels=labels,
        num_classes=m,
        true_labels=labels.copy(),
        name=f"blobs{n}x{d}m{m}",
    )


def simulate_annotators(dataset: Dataset, annotators: int, flip_rate: float, seed: int) -> Dataset:
    """Attach synthetic annotator labels: each annotator reports the observed
    label, independently flipped to a uniform other class with `flip_rate`."""
    if annotators < 1:
        raise LabelQCError("need at least one annotator")
    if not 0.0 <= flip_rate <= 1.0:
        raise LabelQCError("flip_rate must lie in [0, 1]")
    rng = substream(seed, "annotators")
    m = dataset.num_classes
    cols = []
    for _ in range(annotators):
        col = dataset.labels.copy()
        flip = rng.random(dataset.n) < flip_rate
        offsets = rng.integers(1, m, size=dataset.n)
        col[flip] = (col[flip] + offsets[flip]) % m
        cols.append(col)
    return Dataset(
        ids=dataset.ids,
        features=dataset.features,
        labels=dataset.labels,
        num_classes=m,
        true_labels=dataset.true_labels,
        annotator_labels=np.stack(cols, axis=1),
        name=dataset.name,
    )


def train_test_split(dataset: Dataset, test_fraction: float, seed: int) -> SplitPair:
    """Stratified split on observed labels, deterministic per seed."""
    if not 0.0 < test_fraction < 1.0:
        raise LabelQCError("test_fraction must lie strictly between 0 and 1")
    rng = substream(seed, "split")
    test_idx = []
    for c in range(dataset.num_classes):
        members = np.flatnonzero(dataset.labels == c)
        if len(members) == 0:
            continue
        if len(members) < 2:
            raise StratificationError(f"class {c} has fewer than 2 members")
        k = int(round(test_fraction * len(members)))
        k = min(max(k, 0), len(members) - 1)
        order = rng.permutation(len(members))
        test_idx.extend(members[order[:k]].tolist())
    test_mask = np.zeros(dataset.n, dtype=bool)
    test_mask[test_idx] = True
    return SplitPair(
        train=dataset.subset(np.flatnonzero(~test_mask)),
        test=dataset.subset(np.flatnonzero(test_mask)),
    )


@dataclass
class CardMeta:
    dataset: str = ""
    noise_kind: str = ""
    noise_rate: float = 0.0
    seed: int = 0


@dataclass
class DataCard:
    """Per-run record of labels and every method's verdict on each train row.

    Serialized as CSV with `# key=value` metadata lines, then a header
    ``id,original_label,corrupted_label`` followed by ``flag_<m>,score_<m>``
    pairs in sorted method order.
    """

    ids: np.ndarray
    original_labels: np.ndarray
    corrupted_labels: np.ndarray
    flags: dict = field(default_factory=dict)
    scores: dict = field(default_factory=dict)
    meta: CardMeta = field(default_factory=CardMeta)

    def __post_init__(self):
        n = len(self.ids)
        if len(self.original_labels) != n or len(self.corrupted_labels) != n:
            raise FormatError("label column length mismatch")
        if set(self.flags) != set(self.scores):
            raise FormatError("flag/score method sets differ")
        for method in self.flags:
            if len(self.flags[method]) != n or len(self.scores[method]) != n:
                raise FormatError(f"method {method!r} column length mismatch")

    @property
    def methods(self) -> list[str]:
        return sorted(self.flags)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DataCard):
            return NotImplemented
        if self.methods != other.methods or self.meta != other.meta:
            return False
        if not (
            np.array_equal(self.ids, other.ids)
            and np.array_equal(self.original_labels, other.original_labels)
            and np.array_equal(self.corrupted_labels, other.corrupted_labels)
        ):
            return False
        for m in self.methods:
            if not np.array_equal(self.flags[m], other.flags[m]):
                return False
            if not np.array_equal(self.scores[m], other.scores[m]):
                return False
        return True


def write_data_card(card: DataCard, path) -> None:
    path = Path(path)
    methods = card.methods
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# dataset={card.meta.dataset}\n")
        fh.write(f"# noise_kind={card.meta.noise_kind}\n")
        fh.write(f"# noise_rate={repr(float(card.meta.noise_rate))}\n")
        fh.write(f"# seed={int(card.meta.seed)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        header = ["id", "original_label", "corrupted_label"]
        for m in methods:
            header += [f"flag_{m}", f"score_{m}"]
        writer.writerow(header)
        for i in range(len(card.ids)):
            row = [
                int(card.ids[i]),
                int(card.original_labels[i]),
                int(card.corrupted_labels[i]),
            ]
            for m in methods:
                row.append(int(bool(card.flags[m][i])))
                row.append(repr(float(card.scores[m][i])))
            writer.writerow(row)


def read_data_card(path) -> DataCard:
    path = Path(path)
    meta = CardMeta()
    with path.open(newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    body_start = 0
    for line in lines:
        if not line.startswith("#"):
            break
        body_start += 1
        key, _, value = line.lstrip("# ").partition("=")
        if key == "dataset":
            meta.dataset = value
        elif key == "noise_kind":
            meta.noise_kind = value
        elif key == "noise_rate":
            meta.noise_rate = float(value)
        elif key == "seed":
            meta.seed = int(value)
    rows = list(csv.reader(lines[body_start:]))
    if not rows:
        raise FormatError(f"{path}: no header row")
    header = rows[0]
    if header[:3] != ["id", "original_label", "corrupted_label"]:
        raise FormatError(f"{path}: unexpected leading columns {header[:3]}")
    flag_methods = {c[len("flag_"):] for c in header if c.startswith("flag_")}
    score_methods = {c[len("score_"):] for c in header if c.startswith("score_")}
    if flag_methods != score_methods:
        raise FormatError(
            f"{path}: flag columns {sorted(flag_methods)} do not match "
            f"score columns {sorted(score_methods)}"
        )
    col = {c: i for i, c in enumerate(header)}
    data = rows[1:]
    n = len(data)
    ids = np.empty(n, dtype=np.int64)
    orig = np.empty(n, dtype=np.int64)
    corr = np.empty(n, dtype=np.int64)
    flags = {m: np.empty(n, dtype=bool) for m in flag_methods}
    scores = {m: np.empty(n, dtype=np.float64) for m in flag_methods}
    for i, row in enumerate(data):
        if len(row) != len(header):
            raise FormatError(f"{path}: row {i + 1} has {len(row)} fields, expected {len(header)}")
        ids[i] = int(row[col["id"]])
        orig[i] = int(row[col["original_label"]])
        corr[i] = int(row[col["corrupted_label"]])
        for m in flag_methods:
            flags[m][i] = bool(int(row[col[f"flag_{m}"]]))
            scores[m][i] = float(row[col[f"score_{m}"]])
    return DataCard(
        ids=ids,
        original_labels=orig,
        corrupted_labels=corr,
        flags=flags,
        scores=scores,
        meta=meta,
    )
