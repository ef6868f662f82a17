"""Corpus loading and the synthetic/unlabeled training mix.

Reads the line-delimited corpus records the feedback engine produces
(`{"program": ..., "labels": [...], "weight": ...}` with an optional header
line). Programs are whitespace-tokenized with parens as their own tokens;
duplicate draws aggregate into weights, which are log-tempered so the
handful of dominant programs cannot monopolize training.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, VocabularyMiss

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIALS = ("<pad>", "<bos>", "<eos>", "<unk>")


def split_tokens(text: str) -> list[str]:
    return text.replace("(", " ( ").replace(")", " ) ").split()


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]  # non-special tokens, stable order

    @classmethod
    def build(cls, corpora: Iterable[Sequence["Example"]]) -> "Vocabulary":
        seen: dict[str, None] = {}
        for corpus in corpora:
            for ex in corpus:
                for t in ex.tokens:
                    seen.setdefault(t, None)
        return cls(tuple(seen))

    def __len__(self) -> int:
        return len(self.tokens) + len(SPECIALS)

    @property
    def index(self) -> dict[str, int]:
        return {t: i + len(SPECIALS) for i, t in enumerate(self.tokens)}

    def encode(self, tokens: Sequence[str], strict: bool = True) -> list[int]:
        index = self.index
        out = []
        for t in tokens:
            i = index.get(t)
            if i is None:
                if strict:
                    raise VocabularyMiss(f"token {t!r} not in vocabulary")
                i = UNK
            out.append(i)
        return out

    def decode(self, ids: Iterable[int]) -> list[str]:
        table = SPECIALS + self.tokens
        return [table[i] for i in ids if i not in (PAD, BOS, EOS)]


@dataclass(frozen=True)
class Example:
    tokens: tuple[str, ...]
    labels: tuple[str, ...] | None = None  # None = unlabeled
    mask_bits: tuple[int, ...] | None = None  # per-token highlight indicator
    weight: float = 1.0

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


def read_corpus(path: str | Path, aggregate: bool = True) -> list[Example]:
    """Load records; by default duplicates aggregate into weights.

    The first occurrence's labels/mask win for duplicates, mirroring the
    engine's unique-corpus convention. ``aggregate=False`` keeps one Example
    per record in file order (for prediction outputs that must align with
    their input line for line).
    """
    if not aggregate:
        return _read_records(path)
    merged: dict[str, Example] = {}
    order: list[str] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{lineno}: invalid JSON ({e})") from None
            if "schema" in d and "program" not in d:
                continue  # header record
            if "program" not in d:
                raise DataError(f"{path}:{lineno}: record without 'program'")
            tokens = tuple(split_tokens(str(d["program"])))
            if not tokens:
                raise DataError(f"{path}:{lineno}: empty program")
            weight = float(d.get("weight", 1.0))
            text = " ".join(tokens)
            if text in merged:
                prev = merged[text]
                merged[text] = Example(prev.tokens, prev.labels, prev.mask_bits,
                                       prev.weight + weight)
                continue
            labels = d.get("labels")
            mask_bits = None
            if d.get("mask") is not None:
                bits = [0] * len(tokens)
                for s, e, _name in d["mask"]:
                    for i in range(int(s), min(int(e), len(tokens))):
                        bits[i] = 1
                mask_bits = tuple(bits)
            merged[text] = Example(
                tokens,
                tuple(str(x) for x in labels) if labels is not None else None,
                mask_bits,
                weight,
            )
            order.append(text)
    return [merged[t] for t in order]


def _read_records(path: str | Path) -> list[Example]:
    out: list[Example] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{lineno}: invalid JSON ({e})") from None
            if "schema" in d and "program" not in d:
                continue
            if "program" not in d:
                raise DataError(f"{path}:{lineno}: record without 'program'")
            tokens = tuple(split_tokens(str(d["program"])))
            if not tokens:
                raise DataError(f"{path}:{lineno}: empty program")
            labels = d.get("labels")
            out.append(Example(
                tokens,
                tuple(str(x) for x in labels) if labels is not None else None,
                None,
                float(d.get("weight", 1.0)),
            ))
    return out


def label_universe(corpus: Sequence[Example], schema_path: str | Path | None = None) -> tuple[str, ...]:
    """Label names in a stable order; a schema file pins the order explicitly."""
    if schema_path is not None:
        try:
            d = json.loads(Path(schema_path).read_text(encoding="utf-8"))
            return tuple(str(x["name"]) for x in sorted(d["labels"], key=lambda x: int(x["id"])))
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise DataError(f"{schema_path}: bad label schema ({e})") from None
    names: set[str] = set()
    for ex in corpus:
        names.update(ex.labels or ())
    return tuple(sorted(names))


def tempered_weights(corpus: Sequence[Example]) -> np.ndarray:
    """Log-tempered sampling weights: max(1, ln w), so singletons survive."""
    return np.array([max(1.0, math.log(w)) if w >= 1.0 else w for w in
                     (ex.weight for ex in corpus)])


@dataclass
class TrainingMix:
    """Labeled synthetic examples plus (possibly empty) unlabeled ones."""

    synthetic: list[Example]
    unlabeled: list[Example] = field(default_factory=list)
    label_names: tuple[str, ...] = ()

    def __post_init__(self):
        for ex in self.synthetic:
            if ex.labels is None:
                raise DataError(f"synthetic example without labels: {ex.text!r}")
        known = set(self.label_names)
        for ex in self.synthetic:
            missing = set(ex.labels) - known
            if missing:
                raise DataError(f"labels {sorted(missing)} not in the label universe")

    @classmethod
    def load(cls, synthetic_path: str | Path, unlabeled_path: str | Path | None = None,
             schema_path: str | Path | None = None) -> "TrainingMix":
        synthetic = read_corpus(synthetic_path)
        unlabeled = read_corpus(unlabeled_path) if unlabeled_path else []
        return cls(synthetic, unlabeled, label_universe(synthetic, schema_path))

    def label_bits(self, ex: Example) -> np.ndarray:
        bits = np.zeros(len(self.label_names))
        for name in ex.labels or ():
            bits[self.label_names.index(name)] = 1.0
        return bits

    def max_program_length(self) -> int:
        lengths = [len(ex.tokens) for ex in self.synthetic + self.unlabeled]
        return max(lengths) if lengths else 0
