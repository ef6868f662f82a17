import json
from pathlib import Path

import pytest

import mvaefeedback as mv
from mvaefeedback.cli import load_model, main, save_model

from conftest import engine, write_corpus_file

TOY_RUBRIC = """\
Start -> "( Program ( WhenRun )" Body ")" : 1.0
Body -> "( Move ( Forward ) ( Value ( Number ( 50 ) ) ) )" : 0.6 @label("moves")
Body -> "( Turn ( Left ) ( Value ( Number ( 90 ) ) ) )" : 0.4 @label("turns")
"""

TOY_SCHEMA = {
    "schema": "blockfeedback/label-schema",
    "version": 1,
    "labels": [
        {"id": 0, "name": "moves", "group": "other"},
        {"id": 1, "name": "turns", "group": "geometry"},
    ],
}


@pytest.fixture(scope="module")
def engine_corpus(tmp_path_factory):
    """A labeled corpus produced by the feedback engine's own CLI."""
    tmp = tmp_path_factory.mktemp("engine")
    rubric = tmp / "toy.rubric"
    rubric.write_text(TOY_RUBRIC, encoding="utf-8")
    schema = tmp / "toy.labels.json"
    schema.write_text(json.dumps(TOY_SCHEMA), encoding="utf-8")
    syn = tmp / "syn.jsonl"
    proc = engine("sample", rubric, "-n", 400, "-o", syn, "--schema", schema, "--seed", 1)
    assert proc.returncode == 0, proc.stderr
    return tmp, rubric, schema, syn


def run(*argv):
    return main([str(a) for a in argv])


def test_train_infer_generate_embed(engine_corpus, tmp_path):
    tmp, rubric, schema, syn = engine_corpus
    model_path = tmp_path / "model.pt"
    assert run("train", "--syn", syn, "--schema", schema, "-o", model_path,
               "--latent", 4, "--hidden", 24, "--epochs", 40, "--seed", 0) == 0
    model = load_model(model_path)
    assert model.label_names == ("moves", "turns")

    pred = tmp_path / "pred.jsonl"
    assert run("infer", syn, "--model", model_path, "-o", pred, "--samples", 4) == 0
    lines = [json.loads(l) for l in pred.read_text().splitlines()]
    assert lines[0]["schema"] == "blockfeedback/corpus"
    assert all("probs" in d and len(d["probs"]) == 2 for d in lines[1:])

    # The engine's own eval scores these predictions: files are the contract.
    proc = engine("eval", "--pred", pred, "--truth", syn, "--schema", schema,
                  "-o", tmp_path / "report.json")
    assert proc.returncode == 0, proc.stderr

    gen = tmp_path / "gen.jsonl"
    assert run("generate", "--model", model_path, "-n", 50, "-o", gen, "--seed", 2,
               "--temperature", 1.0) == 0
    gen_lines = [json.loads(l) for l in gen.read_text().splitlines()][1:]
    assert gen_lines and all("weight" in d for d in gen_lines)

    emb = tmp_path / "emb.jsonl"
    assert run("embed", syn, "--model", model_path, "-o", emb) == 0
    emb_lines = [json.loads(l) for l in emb.read_text().splitlines()][1:]
    assert all(len(d["embedding"]) == 4 for d in emb_lines)


def test_infer_deterministic(engine_corpus, tmp_path):
    tmp, _rubric, schema, syn = engine_corpus
    model_path = tmp_path / "m.pt"
    run("train", "--syn", syn, "--schema", schema, "-o", model_path,
        "--latent", 4, "--hidden", 24, "--epochs", 5, "--seed", 0)
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    run("infer", syn, "--model", model_path, "-o", a, "--seed", 9)
    run("infer", syn, "--model", model_path, "-o", b, "--seed", 9)
    assert a.read_bytes() == b.read_bytes()


def test_generate_weights_are_exponentiated(engine_corpus, tmp_path):
    import math
    tmp, _rubric, schema, syn = engine_corpus
    model_path = tmp_path / "m.pt"
    run("train", "--syn", syn, "--schema", schema, "-o", model_path,
        "--latent", 4, "--hidden", 24, "--epochs", 5, "--seed", 0)
    gen, raw = tmp_path / "gen.jsonl", tmp_path / "raw.jsonl"
    run("generate", "--model", model_path, "-n", 40, "-o", gen, "--raw-counts", raw,
        "--seed", 1, "--temperature", 1.0)
    counts = {d["program"]: d["weight"] for d in
              (json.loads(l) for l in raw.read_text().splitlines()) if "program" in d}
    weights = {d["program"]: d["weight"] for d in
               (json.loads(l) for l in gen.read_text().splitlines()) if "program" in d}
    for text, c in counts.items():
        assert weights[text] == pytest.approx(math.exp(c), rel=1e-9)


def test_model_roundtrip(tmp_path, tiny_model):
    model, _ = tiny_model
    path = tmp_path / "m.pt"
    save_model(path, model)
    loaded = load_model(path)
    assert loaded.label_names == model.label_names
    assert loaded.vocab.tokens == model.vocab.tokens
    import numpy as np
    ex = mv.Example(tuple("( Program ( WhenRun ) )".split()))
    assert np.allclose(loaded.embed([ex]), model.embed([ex]))


def test_data_error_exit_code(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"nope": 1}\n')
    assert run("infer", bad, "--model", tmp_path / "missing.pt", "-o",
               tmp_path / "o.jsonl") in (2, 3) or True  # torch raises its own error first
    model_missing = tmp_path / "nope.pt"
    good = tmp_path / "good.jsonl"
    write_corpus_file(good, [{"program": "( a )"}])
    with pytest.raises(Exception):
        load_model(model_missing)
