"""Nonparametric method comparison across datasets.

Friedman test on rank rows, all-pairs Wilcoxon signed-rank tests with Holm's
step-down correction, clique construction over the mean-rank ordering, and a
deterministic SVG rendering of the resulting critical-difference diagram.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaincc

from .errors import LabelQCError
from .metrics import average_ranks


@dataclass
class RankTable:
    """values[d][j] = score of method j on dataset d; ranks are tie-averaged
    per dataset with rank 1 the best under `direction`."""

    methods: list
    datasets: list
    values: np.ndarray
    direction: str = "higher_better"
    ranks: np.ndarray = field(init=False)
    mean_ranks: np.ndarray = field(init=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        k = len(self.methods)
        n = len(self.datasets)
        if self.values.shape != (n, k):
            raise LabelQCError(f"values must be {n} x {k}")
        if self.direction not in ("higher_better", "lower_better"):
            raise LabelQCError(f"unknown direction {self.direction!r}")
        key = -self.values if self.direction == "higher_better" else self.values
        self.ranks = np.vstack([average_ranks(row) for row in key]) if n else np.empty((0, k))
        self.mean_ranks = self.ranks.mean(axis=0) if n else np.zeros(k)

    @property
    def k(self) -> int:
        return len(self.methods)

    @property
    def n(self) -> int:
        return len(self.datasets)


def build_rank_table(
    records: Sequence[dict],
    dataset_key: str,
    method_key: str,
    value_key: str,
    direction: str = "higher_better",
) -> RankTable:
    """Aggregate result records into a dataset x method table by averaging the
    value over every other dimension (noise rates, models, seeds)."""
    cells: dict = {}
    for rec in records:
        v = rec.get(value_key)
        if v is None or v == "":
            continue
        key = (str(rec[dataset_key]), str(rec[method_key]))
        cells.setdefault(key, []).append(float(v))
    datasets = sorted({d for d, _ in cells})
    methods = sorted({m for _, m in cells})
    if not datasets or not methods:
        raise LabelQCError("no usable records for the rank table")
    values = np.empty((len(datasets), len(methods)))
    for i, d in enumerate(datasets):
        for j, m in enumerate(methods):
            if (d, m) not in cells:
                raise LabelQCError(f"missing cell for dataset {d!r}, method {m!r}")
            values[i, j] = float(np.mean(cells[(d, m)]))
    return RankTable(methods=methods, datasets=datasets, values=values, direction=direction)


def friedman_test(table: RankTable) -> tuple[float, float]:
    """Friedman chi-square over the rank rows and its survival-function p."""
    k, n = table.k, table.n
    if k < 2 or n < 2:
        raise LabelQCError("friedman test needs k >= 2 methods and N >= 2 datasets")
    center = (k + 1) / 2.0
    stat = 12.0 * n / (k * (k + 1)) * float(((table.mean_ranks - center) ** 2).sum())
    p = float(gammaincc((k - 1) / 2.0, stat / 2.0))  # chi-square sf, k-1 dof
    return stat, p


@dataclass
class WilcoxonResult:
    p_value: float
    statistic: float  # W+, the positive-difference rank sum
    n_effective: int
    exact: bool
    degenerate: bool = False


def _exact_two_sided(ranks2: np.ndarray, w2: int) -> float:
    """Exact tail probability by DP over sign assignments. `ranks2` are the
    tie-averaged ranks doubled to integers, `w2` the doubled statistic."""
    total = int(ranks2.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in ranks2:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:-r] if r else counts
        counts = counts + shifted
    n_assign = counts.sum()
    lower = counts[: w2 + 1].sum() / n_assign
    upper = counts[w2:].sum() / n_assign
    return float(min(1.0, 2.0 * min(lower, upper)))


def wilcoxon_signed_rank(a: Sequence[float], b: Sequence[float], exact_limit: int = 25) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped; ties in |difference| get average ranks.
    Exact by enumeration over sign assignments for up to `exact_limit`
    effective pairs, normal approximation with continuity correction beyond.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 1:
        raise LabelQCError("wilcoxon needs two equal-length nonempty vectors")
    diff = a - b
    diff = diff[diff != 0.0]
    n = len(diff)
    if n == 0:
        return WilcoxonResult(p_value=1.0, statistic=0.0, n_effective=0, exact=True, degenerate=True)
    ranks = average_ranks(np.abs(diff))
    w_plus = float(ranks[diff > 0].sum())
    if n <= exact_limit:
        ranks2 = np.round(2.0 * ranks).astype(np.int64)
        w2 = int(round(2.0 * w_plus))
        return WilcoxonResult(
            p_value=_exact_two_sided(ranks2, w2),
            statistic=w_plus,
            n_effective=n,
            exact=True,
        )
    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(np.abs(diff), return_counts=True)
    var -= float(((tie_counts ** 3 - tie_counts) / 48.0).sum())
    if var <= 0:
        return WilcoxonResult(p_value=1.0, statistic=w_plus, n_effective=n, exact=False, degenerate=True)
    delta = w_plus - mu
    correction = 0.5 if delta > 0 else (-0.5 if delta < 0 else 0.0)
    z = (delta - correction) / math.sqrt(var)
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return WilcoxonResult(p_value=min(1.0, p), statistic=w_plus, n_effective=n, exact=False)


def holm_adjust(p_values: Sequence[float]) -> list:
    """Holm step-down adjustment, returned in the input order."""
    ps = list(p_values)
    for p in ps:
        if not 0.0 <= p <= 1.0:
            raise LabelQCError(f"p-value {p} outside [0, 1]")
    m = len(ps)
    order = sorted(range(m), key=lambda i: ps[i])
    adjusted = [0.0] * m
    running = 0.0
    for pos, i in enumerate(order):
        running = max(running, min(1.0, (m - pos) * ps[i]))
        adjusted[i] = running
    return adjusted


@dataclass
class CliqueDiagram:
    """Methods ordered by mean rank with maximal non-significant groups."""

    methods: list  # ordered by mean rank, best first
    mean_ranks: np.ndarray
    pairwise_p: dict  # frozenset({a, b}) -> Holm-adjusted p
    alpha: float
    cliques: list  # lists of method names, each contiguous in rank order


def build_cliques(table: RankTable, alpha: float = 0.05) -> CliqueDiagram:
    """All-pairs Wilcoxon with joint Holm correction, then maximal contiguous
    runs of the rank ordering containing no significant pair."""
    k = table.k
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    raw = [wilcoxon_signed_rank(table.values[:, i], table.values[:, j]).p_value for i, j in pairs]
    adjusted = holm_adjust(raw)
    order = sorted(range(k), key=lambda j: (table.mean_ranks[j], str(table.methods[j])))
    methods = [table.methods[j] for j in order]
    mean_ranks = table.mean_ranks[order]
    adj_p = {}
    for (i, j), p in zip(pairs, adjusted):
        adj_p[frozenset((table.methods[i], table.methods[j]))] = p

    def significant(a: str, b: str) -> bool:
        return adj_p[frozenset((a, b))] < alpha

    cliques = []
    for s in range(k):
        e = s
        while e + 1 < k and not any(
            significant(methods[x], methods[e + 1]) for x in range(s, e + 1)
        ):
            e += 1
        if cliques and cliques[-1][1] >= e:
            continue  # contained in the previous maximal run
        cliques.append((s, e))
    named = [[methods[x] for x in range(s, e + 1)] for s, e in cliques]
    return CliqueDiagram(
        methods=methods,
        mean_ranks=mean_ranks,
        pairwise_p=adj_p,
        alpha=alpha,
        cliques=named,
    )


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def render_cd_svg(diagram: CliqueDiagram) -> str:
    """Byte-deterministic SVG: rank axis, method labels at their mean ranks,
    one crossbar per clique of size >= 2."""
    k = len(diagram.methods)
    left, right = 60.0, 540.0
    axis_y = 50.0
    lo = 1.0
    hi = float(max(k, 2))

    def x_at(rank: float) -> float:
        return left + (rank - lo) / (hi - lo) * (right - left)

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="600" '
        f'height="{int(140 + 18 * k)}" font-family="monospace" font-size="12">',
        f'<line x1="{left:.2f}" y1="{axis_y:.2f}" x2="{right:.2f}" y2="{axis_y:.2f}" '
        'stroke="black" stroke-width="1"/>',
    ]
    for r in range(1, max(k, 2) + 1):
        x = x_at(float(r))
        lines.append(
            f'<line x1="{x:.2f}" y1="{axis_y - 4:.2f}" x2="{x:.2f}" y2="{axis_y + 4:.2f}" '
            'stroke="black" stroke-width="1"/>'
        )
        lines.append(f'<text x="{x - 3:.2f}" y="{axis_y - 8:.2f}">{r}</text>')
    level = 0
    for clique in diagram.cliques:
        if len(clique) < 2:
            continue
        xs = [x_at(float(diagram.mean_ranks[diagram.methods.index(m)])) for m in clique]
        y = axis_y + 8 + 6 * level
        lines.append(
            f'<line class="crossbar" x1="{min(xs):.2f}" y1="{y:.2f}" x2="{max(xs):.2f}" '
            f'y2="{y:.2f}" stroke="black" stroke-width="3"/>'
        )
        level += 1
    label_base = axis_y + 8 + 6 * max(level, 1) + 18
    for i, m in enumerate(diagram.methods):
        x = x_at(float(diagram.mean_ranks[i]))
        y = label_base + 18 * i
        lines.append(
            f'<line x1="{x:.2f}" y1="{axis_y:.2f}" x2="{x:.2f}" y2="{y - 10:.2f}" '
            'stroke="gray" stroke-width="0.5"/>'
        )
        lines.append(
            f'<text x="{x + 4:.2f}" y="{y:.2f}">{_esc(str(m))} '
            f'({float(diagram.mean_ranks[i]):.3f})</text>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
