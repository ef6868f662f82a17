"""Frequency tables and Zipf machinery: fits, splits, transforms, rank distance.

Program corpora here follow heavy-tailed rank/frequency laws, so evaluation
and tuning both work in rank space: tables are ranked by descending weight
(ties broken lexicographically by program text for determinism).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import EmptyTable, NonPositiveWeight, TooFewEntries
from .programs import Program

HEAD_SIZE = 20
TAIL_MAX_WEIGHT = 3.0


class FrequencyTable:
    """Immutable program-text -> weight mapping with a derived rank order."""

    __slots__ = ("_weights", "_ordered", "_ranks")

    def __init__(self, entries: Mapping[str, float]):
        weights = {}
        for text, w in entries.items():
            w = float(w)
            if w < 0 or math.isnan(w):
                raise NonPositiveWeight(f"weight {w} for {text!r} must be >= 0")
            weights[str(text)] = w
        self._weights = weights
        self._ordered = tuple(sorted(weights, key=lambda t: (-weights[t], t)))
        self._ranks = {t: i + 1 for i, t in enumerate(self._ordered)}

    @property
    def entries(self) -> Mapping[str, float]:
        return dict(self._weights)

    @property
    def ordered_programs(self) -> tuple[str, ...]:
        """Programs in rank order (rank 1 first)."""
        return self._ordered

    @property
    def total(self) -> float:
        return float(sum(self._weights.values()))

    def weight(self, text: str) -> float:
        return self._weights[text]

    def rank(self, text: str) -> int:
        return self._ranks[text]

    def __contains__(self, text: str) -> bool:
        return text in self._weights

    def __len__(self) -> int:
        return len(self._weights)

    def __eq__(self, other) -> bool:
        return isinstance(other, FrequencyTable) and self._weights == other._weights

    def __repr__(self) -> str:
        return f"FrequencyTable({len(self)} entries, total={self.total:g})"


@dataclass(frozen=True)
class ZipfSplit:
    """Partition of a table into head (top ranks), tail (rare), and body."""

    head: frozenset[str]
    body: frozenset[str]
    tail: frozenset[str]


@dataclass(frozen=True)
class ZipfFit:
    """Least-squares line over (ln rank, ln probability)."""

    slope: float
    intercept: float
    r2: float


def build_frequency(programs: Iterable[str | Program]) -> FrequencyTable:
    """Count occurrences by exact program text."""
    counts: dict[str, int] = {}
    for p in programs:
        text = p.text if isinstance(p, Program) else str(p)
        counts[text] = counts.get(text, 0) + 1
    return FrequencyTable(counts)


def split_zipf(t: FrequencyTable) -> ZipfSplit:
    """Head = top 20 ranks; tail = weight <= 3 outside the head; body = rest."""
    ordered = t.ordered_programs
    head = frozenset(ordered[:HEAD_SIZE])
    tail = frozenset(p for p in ordered[HEAD_SIZE:] if t.weight(p) <= TAIL_MAX_WEIGHT)
    body = frozenset(p for p in ordered[HEAD_SIZE:] if p not in tail)
    return ZipfSplit(head, body, tail)


def fit_zipf(t: FrequencyTable) -> ZipfFit:
    """Fit ln(weight/total) against ln(rank) by least squares.

    Zero-weight entries carry no probability and are excluded from the fit.
    Requires at least 3 distinct positive-weight entries.
    """
    texts = [p for p in t.ordered_programs if t.weight(p) > 0]
    if len(texts) < 3:
        raise TooFewEntries(f"need >= 3 positive entries, have {len(texts)}")
    total = sum(t.weight(p) for p in texts)
    x = np.log(np.array([t.rank(p) for p in texts], dtype=float))
    y = np.log(np.array([t.weight(p) / total for p in texts]))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    return ZipfFit(float(slope), float(intercept), r2)


def log_zipf(t: FrequencyTable) -> FrequencyTable:
    """Temper a count table: weight -> max(1, ln weight).

    Keeps singletons at weight 1 so rare programs survive the transform.
    Requires all weights >= 1.
    """
    out = {}
    for text, w in t.entries.items():
        if w < 1.0:
            raise NonPositiveWeight(f"log transform requires weights >= 1, got {w} for {text!r}")
        out[text] = max(1.0, math.log(w))
    return FrequencyTable(out)


def exp_zipf(t: FrequencyTable) -> FrequencyTable:
    """Invert the log transform: weight -> exp(weight).

    Exact inverse for original weights >= e; weights that were floored to 1
    come back as e (a documented loss for singletons).
    """
    out = {}
    for text, w in t.entries.items():
        try:
            out[text] = math.exp(w)
        except OverflowError:
            out[text] = math.inf
    return FrequencyTable(out)


def rank_order_distance(a: FrequencyTable, b: FrequencyTable) -> float:
    """Root-mean-square log-rank difference over the union of both tables.

    A program absent from one table is treated as ranked just past that
    table's end (size + 1), which keeps the metric finite and monotone in
    table size. Symmetric, non-negative, zero iff rank orders coincide, and
    invariant to uniform weight scaling.
    """
    if len(a) == 0 or len(b) == 0:
        raise EmptyTable("rank distance requires non-empty tables")
    union = set(a.entries) | set(b.entries)
    missing_a = len(a) + 1
    missing_b = len(b) + 1
    total = 0.0
    for text in union:
        ra = a.rank(text) if text in a else missing_a
        rb = b.rank(text) if text in b else missing_b
        diff = math.log(ra) - math.log(rb)
        total += diff * diff
    return math.sqrt(total / len(union))
