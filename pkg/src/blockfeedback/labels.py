"""Feedback label schemas and per-program label vectors."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

GROUPS = ("loop", "geometry", "other")


@dataclass(frozen=True)
class LabelDef:
    id: int
    name: str
    group: str  # "loop" | "geometry" | "other"


@dataclass(frozen=True)
class LabelSchema:
    """Ordered set of binary feedback labels.

    Ids must be dense 0..l-1 and names unique; the loop/geometry groups feed
    the knowledge-tracing report.
    """

    labels: tuple[LabelDef, ...]

    def __post_init__(self):
        ids = [d.id for d in self.labels]
        if ids != list(range(len(self.labels))):
            raise ValueError(f"label ids must be dense 0..{len(self.labels) - 1}, got {ids}")
        names = [d.name for d in self.labels]
        if len(set(names)) != len(names):
            raise ValueError("label names must be unique")
        for d in self.labels:
            if d.group not in GROUPS:
                raise ValueError(f"unknown label group {d.group!r} for {d.name!r}")

    @classmethod
    def from_names(cls, names: Sequence[str], groups: Sequence[str] | None = None) -> "LabelSchema":
        groups = groups or ["other"] * len(names)
        return cls(tuple(LabelDef(i, n, g) for i, (n, g) in enumerate(zip(names, groups))))

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.labels)

    def id_of(self, name: str) -> int:
        for d in self.labels:
            if d.name == name:
                return d.id
        raise KeyError(name)

    def group_ids(self, group: str) -> tuple[int, ...]:
        return tuple(d.id for d in self.labels if d.group == group)


@dataclass(frozen=True)
class LabelVector:
    """Per-label values: 0/1 bits for ground truth, probabilities for predictions."""

    values: tuple[float, ...]

    def __post_init__(self):
        for v in self.values:
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"label value {v} outside [0, 1]")

    @classmethod
    def zeros(cls, size: int) -> "LabelVector":
        return cls((0.0,) * size)

    @classmethod
    def from_ids(cls, ids: Iterable[int], size: int) -> "LabelVector":
        present = set(ids)
        return cls(tuple(1.0 if i in present else 0.0 for i in range(size)))

    @classmethod
    def from_array(cls, values: Iterable[float]) -> "LabelVector":
        return cls(tuple(float(v) for v in values))

    def __len__(self) -> int:
        return len(self.values)

    def to_numpy(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def ids(self, threshold: float = 0.5) -> frozenset[int]:
        """Label ids whose value exceeds the threshold."""
        return frozenset(i for i, v in enumerate(self.values) if v > threshold)
