"""CLI: train on the engine's corpus files, then infer / generate / embed.

All inputs and outputs use the same line-delimited record format as the
feedback engine, so its `eval` subcommand can score the predictions written
here without any code coupling.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np
import torch

from .data import Example, TrainingMix, Vocabulary, read_corpus, split_tokens
from .errors import MvaeError
from .model import MVAEConfig, MVAEModel
from .train import train_mvae


def save_model(path: str | Path, model: MVAEModel):
    torch.save({
        "config": vars(model.cfg) | {},
        "vocab": list(model.vocab.tokens),
        "label_names": list(model.label_names),
        "state": model.state_dict(),
    }, path)


def load_model(path: str | Path) -> MVAEModel:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    cfg = MVAEConfig(**payload["config"])
    model = MVAEModel(cfg, Vocabulary(tuple(payload["vocab"])), payload["label_names"])
    model.load_state_dict(payload["state"])
    model.eval()
    return model


def _write_records(path: str | Path, records):
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema": "blockfeedback/corpus", "version": 1}) + "\n")
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def _cmd_train(args) -> int:
    mix = TrainingMix.load(args.syn, args.unlabeled, args.schema)
    max_len = max(args.max_length, mix.max_program_length())
    cfg = MVAEConfig(
        latent_dim=args.latent, hidden_dim=args.hidden, beta=args.beta,
        use_mask_modality=args.mask_modality, max_length=max_len,
        epochs=args.epochs, batch_size=args.batch_size,
        learning_rate=args.learning_rate, seed=args.seed,
    )
    model, log = train_mvae(mix, cfg)
    save_model(args.output, model)
    losses = log.epoch_losses()
    print(f"trained {cfg.epochs} epochs on {len(mix.synthetic)} labeled / "
          f"{len(mix.unlabeled)} unlabeled programs; "
          f"loss {losses[0]:.1f} -> {losses[-1]:.1f}; wrote {args.output}")
    return 0


def _cmd_infer(args) -> int:
    model = load_model(args.model)
    corpus = read_corpus(args.corpus, aggregate=False)
    records = []
    for lo in range(0, len(corpus), 256):
        chunk = corpus[lo:lo + 256]
        probs = model.infer_label_probs(chunk, samples=args.samples, seed=args.seed)
        for ex, p in zip(chunk, probs):
            names = [model.label_names[j] for j in range(len(p)) if p[j] > args.threshold]
            records.append({"program": ex.text, "labels": names,
                            "probs": [float(x) for x in p], "source": "mvae"})
    _write_records(args.output, records)
    print(f"wrote {len(records)} predictions to {args.output}")
    return 0


def _cmd_generate(args) -> int:
    import dataclasses

    model = load_model(args.model)
    if args.temperature is not None:
        model.cfg = dataclasses.replace(model.cfg, temperature=args.temperature)
    counts: dict[str, int] = {}
    for tokens in model.generate_programs(args.n, seed=args.seed):
        text = " ".join(tokens)
        counts[text] = counts.get(text, 0) + 1
    # Counts were learned on log-tempered data; exponentiation restores
    # real-world proportions for export.
    records = [{"program": text, "weight": math.exp(min(c, 700))}
               for text, c in sorted(counts.items(), key=lambda kv: -kv[1])]
    _write_records(args.output, records)
    if args.raw_counts:
        _write_records(args.raw_counts,
                       [{"program": t, "weight": c} for t, c in counts.items()])
    print(f"generated {args.n} programs ({len(counts)} unique) to {args.output}")
    return 0


def _cmd_embed(args) -> int:
    model = load_model(args.model)
    corpus = read_corpus(args.corpus, aggregate=False)
    with Path(args.output).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema": "blockfeedback/embeddings", "version": 1}) + "\n")
        for lo in range(0, len(corpus), 512):
            chunk = corpus[lo:lo + 512]
            vecs = model.embed(chunk)
            for ex, v in zip(chunk, vecs):
                fh.write(json.dumps({"program": ex.text,
                                     "embedding": [float(x) for x in v]}) + "\n")
    print(f"wrote {len(corpus)} embeddings to {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvaefeedback")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit the model on synthetic + unlabeled corpora")
    p.add_argument("--syn", required=True, help="labeled corpus from the feedback engine")
    p.add_argument("--unlabeled", help="unlabeled corpus (optional)")
    p.add_argument("--schema", help="label schema file pinning the label order")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--latent", type=int, default=32)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--max-length", type=int, default=96)
    p.add_argument("--mask-modality", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("infer", help="predict label probabilities for a corpus")
    p.add_argument("corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--samples", type=int, default=16)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("generate", help="sample programs from the prior")
    p.add_argument("--model", required=True)
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--temperature", type=float, default=None,
                   help="override the model's decoding temperature (0 = greedy)")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--raw-counts", help="also write the untransformed count table")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("embed", help="export posterior-mean embeddings")
    p.add_argument("corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_embed)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MvaeError as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return 3
    except OSError as e:
        print(json.dumps({"error": "IOError", "message": str(e)}), file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
