"""File formats: corpora, frequency tables, label schemas, models, reports.

One line-delimited record format serves labeled corpora, unlabeled corpora,
and frequency tables (labels, mask, and weight are all optional), so
million-example files stream line by line. Every file written here starts
with a self-describing header record carrying a schema name and version;
readers accept headerless files for interoperability.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DataFormatError
from .grammar import HighlightMask, RubricGrammar, SynExample, parse_rubric
from .labels import LabelDef, LabelSchema, LabelVector
from .models import MultiLabelModel
from .programs import Program, Trajectory, tokenize
from .zipf import FrequencyTable

FORMAT_VERSION = 1
CORPUS_SCHEMA = "blockfeedback/corpus"
TRAJECTORY_SCHEMA = "blockfeedback/trajectories"
LABEL_SCHEMA = "blockfeedback/label-schema"
MODEL_SCHEMA = "blockfeedback/model"


@dataclass(frozen=True)
class CorpusRecord:
    """One serialized program with optional labels, mask, weight, predictions."""

    program: str
    labels: tuple[str, ...] | None = None
    mask: tuple[tuple[int, int, str], ...] | None = None
    weight: float | None = None
    probs: tuple[float, ...] | None = None
    source: str | None = None

    def to_json(self) -> str:
        out: dict = {"program": self.program}
        if self.labels is not None:
            out["labels"] = list(self.labels)
        if self.mask is not None:
            out["mask"] = [[s, e, name] for s, e, name in self.mask]
        if self.weight is not None:
            out["weight"] = self.weight
        if self.probs is not None:
            out["probs"] = list(self.probs)
        if self.source is not None:
            out["source"] = self.source
        return json.dumps(out)

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusRecord":
        try:
            program = d["program"]
        except KeyError:
            raise DataFormatError("corpus record missing 'program'") from None
        mask = d.get("mask")
        if mask is not None:
            mask = tuple((int(s), int(e), str(name)) for s, e, name in mask)
        labels = d.get("labels")
        probs = d.get("probs")
        return cls(
            program=str(program),
            labels=tuple(str(x) for x in labels) if labels is not None else None,
            mask=mask,
            weight=float(d["weight"]) if d.get("weight") is not None else None,
            probs=tuple(float(x) for x in probs) if probs is not None else None,
            source=d.get("source"),
        )


def _header(schema: str) -> str:
    return json.dumps({"schema": schema, "version": FORMAT_VERSION})


def _read_jsonl(path: str | Path, expect_schema: str) -> Iterator[dict]:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        first = True
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataFormatError(f"{path}:{lineno}: invalid JSON ({e})") from None
            if first:
                first = False
                if isinstance(d, dict) and "schema" in d and "program" not in d:
                    if d["schema"] != expect_schema:
                        raise DataFormatError(
                            f"{path}: expected schema {expect_schema!r}, found {d['schema']!r}")
                    if int(d.get("version", 0)) > FORMAT_VERSION:
                        raise DataFormatError(f"{path}: unsupported version {d['version']}")
                    continue
            yield d


def write_corpus(path: str | Path, records: Iterable[CorpusRecord]):
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(_header(CORPUS_SCHEMA) + "\n")
        for rec in records:
            fh.write(rec.to_json() + "\n")


def read_corpus(path: str | Path) -> list[CorpusRecord]:
    return [CorpusRecord.from_dict(d) for d in _read_jsonl(path, CORPUS_SCHEMA)]


def iter_corpus(path: str | Path) -> Iterator[CorpusRecord]:
    for d in _read_jsonl(path, CORPUS_SCHEMA):
        yield CorpusRecord.from_dict(d)


def example_to_record(ex: SynExample, schema: LabelSchema) -> CorpusRecord:
    names = tuple(schema.labels[i].name for i in sorted(ex.labels.ids()))
    mask = tuple((s, e, schema.labels[lid].name) for s, e, lid in ex.mask.spans)
    return CorpusRecord(ex.program.text, names, mask)


def record_to_example(rec: CorpusRecord, schema: LabelSchema) -> tuple[Program, LabelVector, HighlightMask | None]:
    """Parse a record against a schema; validates program, labels, and spans."""
    program = tokenize(rec.program)
    ids = []
    for name in rec.labels or ():
        try:
            ids.append(schema.id_of(name))
        except KeyError:
            raise DataFormatError(f"label {name!r} not in schema") from None
    labels = LabelVector.from_ids(ids, len(schema))
    mask = None
    if rec.mask is not None:
        spans = []
        for s, e, name in rec.mask:
            if not (0 <= s < e <= len(program)):
                raise DataFormatError(f"span ({s}, {e}) out of bounds for {rec.program!r}")
            try:
                spans.append((s, e, schema.id_of(name)))
            except KeyError:
                raise DataFormatError(f"label {name!r} not in schema") from None
        mask = HighlightMask(tuple(spans))
    return program, labels, mask


def records_to_table(records: Iterable[CorpusRecord]) -> FrequencyTable:
    """Build a frequency table; unweighted records count once per occurrence."""
    weights: dict[str, float] = {}
    for rec in records:
        weights[rec.program] = weights.get(rec.program, 0.0) + (rec.weight if rec.weight is not None else 1.0)
    return FrequencyTable(weights)

def table_to_records(table: FrequencyTable) -> list[CorpusRecord]:
    return [CorpusRecord(text, weight=table.weight(text)) for text in table.ordered_programs]


def read_frequency_table(path: str | Path) -> FrequencyTable:
    return records_to_table(iter_corpus(path))


def write_frequency_table(path: str | Path, table: FrequencyTable):
    write_corpus(path, table_to_records(table))


# --- trajectories ---

def write_trajectories(path: str | Path, trajectories: Iterable[Trajectory]):
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(_header(TRAJECTORY_SCHEMA) + "\n")
        for t in trajectories:
            fh.write(json.dumps({"student": t.student_id,
                                 "programs": [p.text for p in t.submissions]}) + "\n")


def read_trajectories(path: str | Path) -> list[Trajectory]:
    out = []
    for d in _read_jsonl(path, TRAJECTORY_SCHEMA):
        try:
            student = str(d["student"])
            programs = tuple(tokenize(str(p)) for p in d["programs"])
        except KeyError as e:
            raise DataFormatError(f"trajectory record missing {e}") from None
        out.append(Trajectory(student, programs))
    return out


# --- label schemas ---

def schema_to_dict(schema: LabelSchema) -> dict:
    return {
        "schema": LABEL_SCHEMA,
        "version": FORMAT_VERSION,
        "labels": [{"id": d.id, "name": d.name, "group": d.group} for d in schema.labels],
    }


def write_schema(path: str | Path, schema: LabelSchema):
    Path(path).write_text(json.dumps(schema_to_dict(schema), indent=2) + "\n", encoding="utf-8")


def read_schema(path: str | Path) -> LabelSchema:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        labels = tuple(LabelDef(int(x["id"]), str(x["name"]), str(x["group"]))
                       for x in sorted(d["labels"], key=lambda x: int(x["id"])))
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise DataFormatError(f"{path}: bad label schema ({e})") from None
    return LabelSchema(labels)


def schema_hash(schema: LabelSchema) -> str:
    canonical = json.dumps([[d.id, d.name, d.group] for d in schema.labels], sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_rubric(rubric_path: str | Path, schema_path: str | Path | None = None,
                ) -> tuple[RubricGrammar, LabelSchema]:
    """Load a rubric file plus its label schema (default: sidecar .labels.json)."""
    rubric_path = Path(rubric_path)
    if schema_path is None:
        schema_path = rubric_path.with_suffix(".labels.json")
    schema = read_schema(schema_path)
    grammar = parse_rubric(rubric_path.read_text(encoding="utf-8"), schema)
    return grammar, schema


# --- models ---

def save_model(path: str | Path, model: MultiLabelModel, schema: LabelSchema | None = None):
    d = {
        "schema": MODEL_SCHEMA,
        "version": FORMAT_VERSION,
        "feature_kind": model.feature_kind,
        "dim": model.dim,
        "label_names": list(model.label_names) if model.label_names else None,
        "label_schema_hash": schema_hash(schema) if schema is not None else None,
        "weights": model.weights.tolist(),
        "bias": model.bias.tolist(),
        "meta": model.meta,
    }
    Path(path).write_text(json.dumps(d) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> MultiLabelModel:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        if d.get("schema") != MODEL_SCHEMA:
            raise DataFormatError(f"{path}: not a model file")
        model = MultiLabelModel(
            np.asarray(d["weights"], dtype=float),
            np.asarray(d["bias"], dtype=float),
            d.get("feature_kind", "tokens"),
            tuple(d["label_names"]) if d.get("label_names") else None,
            d.get("meta", {}),
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise DataFormatError(f"{path}: bad model file ({e})") from None
    return model


# --- reports ---

def write_report(path: str | Path, name: str, payload: dict):
    d = {"schema": f"blockfeedback/{name}", "version": FORMAT_VERSION}
    d.update(payload)
    Path(path).write_text(json.dumps(d, indent=2) + "\n", encoding="utf-8")


def read_report(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataFormatError(f"{path}: invalid report ({e})") from None
