import json
import subprocess
import sys
from pathlib import Path

import pytest

import mvaefeedback as mv

TOY_PROGRAMS = [
    ("( Program ( WhenRun ) ( Move ( Forward ) ( Value ( Number ( 50 ) ) ) ) )",
     ("single-move",)),
    ("( Program ( WhenRun ) ( Repeat ( Value ( Number ( 3 ) ) ) ( Body "
     "( Turn ( Left ) ( Value ( Number ( 120 ) ) ) ) ) ) )",
     ("uses-loop", "correct-angle")),
    ("( Program ( WhenRun ) ( Turn ( Right ) ( Value ( Number ( 90 ) ) ) ) )",
     ("wrong-angle",)),
    ("( Program ( WhenRun ) )", ("empty",)),
]
TOY_LABELS = ("correct-angle", "empty", "single-move", "uses-loop", "wrong-angle")


def toy_examples():
    return [mv.Example(tuple(p.split()), labels) for p, labels in TOY_PROGRAMS]


@pytest.fixture(scope="session")
def toy_mix():
    return mv.TrainingMix(toy_examples(), [], TOY_LABELS)


@pytest.fixture(scope="session")
def tiny_model(toy_mix):
    cfg = mv.MVAEConfig(latent_dim=8, hidden_dim=32, embedding_dim=16, beta=0.1,
                        max_length=40, epochs=40, batch_size=4, seed=0)
    model, log = mv.train_mvae(toy_mix, cfg)
    return model, log


def engine(*args: object) -> subprocess.CompletedProcess:
    """Invoke the feedback engine's CLI (the primary's external interface)."""
    cmd = [sys.executable, "-m", "blockfeedback.cli", *map(str, args)]
    return subprocess.run(cmd, capture_output=True, text=True)


def write_corpus_file(path: Path, records: list[dict]):
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema": "blockfeedback/corpus", "version": 1}) + "\n")
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
