"""Reference rubrics shipped with the package."""

from __future__ import annotations

from importlib import resources

from ..grammar import RubricGrammar, parse_rubric
from ..labels import LabelDef, LabelSchema

import json

NAMES = ("p1", "p8")


def rubric_text(name: str) -> str:
    return resources.files(__package__).joinpath(f"{name}.rubric").read_text(encoding="utf-8")


def schema(name: str) -> LabelSchema:
    raw = resources.files(__package__).joinpath(f"{name}.labels.json").read_text(encoding="utf-8")
    d = json.loads(raw)
    return LabelSchema(tuple(
        LabelDef(int(x["id"]), str(x["name"]), str(x["group"]))
        for x in sorted(d["labels"], key=lambda x: int(x["id"]))
    ))


def load(name: str) -> tuple[RubricGrammar, LabelSchema]:
    """Load a shipped rubric ("p1" or "p8") and its label schema."""
    if name not in NAMES:
        raise KeyError(f"unknown reference rubric {name!r}; have {NAMES}")
    s = schema(name)
    return parse_rubric(rubric_text(name), s), s
