"""Command-line surface for the feedback pipeline.

Subcommands: sample, tune, infer, highlight, train, eval, stats, exec,
trace. Every subcommand accepts --seed and is deterministic given one; all
file outputs are self-describing records that the CLI can re-ingest.
Module errors exit nonzero with a machine-readable JSON record on stderr
(exit 2 usage, 3 data, 4 numerical), never a stack dump on stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import rubrics
from .errors import BlockFeedbackError, DataFormatError, NonFiniteFitness, OutOfSupport
from .grammar import RubricGrammar, render_rubric, sample_corpus
from .labels import LabelSchema
from .models import (
    MultiLabelModel,
    TrainConfig,
    evaluate,
    featurize,
    knowledge_trace,
    majority_baseline,
    predict,
    score_predictions,
    train_multilabel,
)
from .programs import execute, tokenize
from .tuner import ESConfig, logits_from_theta, random_logits, theta_from_logits, tune
from .viterbi import viterbi_parse
from .zipf import fit_zipf, log_zipf, split_zipf
from . import corpus_io as io
from .errors import TooFewEntries

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _load_rubric(rubric: str, schema_path: str | None) -> tuple[RubricGrammar, LabelSchema]:
    path = Path(rubric)
    if path.exists():
        return io.load_rubric(path, schema_path)
    if rubric in rubrics.NAMES:
        if schema_path is not None:
            return io.load_rubric(Path(rubric), schema_path)
        return rubrics.load(rubric)
    raise DataFormatError(f"rubric {rubric!r} is neither a file nor a shipped rubric {rubrics.NAMES}")


def _read_program_file(path: str):
    text = Path(path).read_text(encoding="utf-8").strip()
    return tokenize(text)


def _cmd_sample(args) -> int:
    grammar, schema = _load_rubric(args.rubric, args.schema)
    corpus = sample_corpus(grammar, args.n, unique_only=args.unique, seed=args.seed)
    io.write_corpus(args.output, (io.example_to_record(ex, schema) for ex in corpus))
    print(f"wrote {len(corpus)} examples to {args.output}")
    return EXIT_OK


def _cmd_tune(args) -> int:
    grammar, schema = _load_rubric(args.rubric, args.schema)
    unlabeled = io.read_frequency_table(args.unlabeled)
    if args.init == "random":
        grammar = grammar.with_theta(
            theta_from_logits(grammar, random_logits(grammar, seed=args.seed)))
    cfg = ESConfig(
        iterations=args.iterations,
        population=args.population,
        sigma=args.sigma,
        elite_k=args.elite_k,
        fitness_sample_size=args.sample_size,
        seed=args.seed,
        update=args.update,
    )
    tuned, report = tune(grammar, unlabeled, cfg)
    header = f"# blockfeedback/rubric v{io.FORMAT_VERSION}\n"
    Path(args.output).write_text(header + render_rubric(tuned), encoding="utf-8")
    if args.report:
        io.write_report(args.report, "tune-report", report.to_dict())
    print(f"fitness {report.initial_fitness:.6f} -> {report.final_fitness:.6f}; wrote {args.output}")
    return EXIT_OK


def _cmd_infer(args) -> int:
    grammar, schema = _load_rubric(args.rubric, args.schema)
    model = io.load_model(args.model) if args.model else None
    records = []
    for rec in io.iter_corpus(args.corpus):
        program = tokenize(rec.program)
        try:
            result = viterbi_parse(grammar, program)
            names = tuple(schema.labels[i].name for i in sorted(result.labels.ids()))
            mask = tuple((s, e, schema.labels[lid].name) for s, e, lid in result.mask.spans)
            records.append(io.CorpusRecord(rec.program, names, mask,
                                           probs=result.labels.values, source="grammar"))
        except OutOfSupport:
            if model is None:
                records.append(io.CorpusRecord(rec.program, source="out-of-support"))
                continue
            probs = predict(model, model.featurizer()(program))
            names = tuple(schema.labels[i].name for i in sorted(probs.ids(args.threshold)))
            records.append(io.CorpusRecord(rec.program, names,
                                           probs=probs.values, source="classifier"))
    io.write_corpus(args.output, records)
    fallbacks = sum(1 for r in records if r.source != "grammar")
    print(f"wrote {len(records)} predictions to {args.output} ({fallbacks} off-grammar)")
    return EXIT_OK


def _render_highlight(program, mask, schema: LabelSchema) -> str:
    opens: dict[int, list[str]] = {}
    closes: dict[int, int] = {}
    for s, e, lid in mask.spans:  # canonical order: outer spans first
        opens.setdefault(s, []).append(schema.labels[lid].name)
        closes[e] = closes.get(e, 0) + 1
    out = []
    for i, tok in enumerate(program.tokens):
        out.extend("]" * closes.get(i, 0))
        for name in opens.get(i, ()):
            out.append(f"[{name}:")
        out.append(str(tok))
    out.extend("]" * closes.get(len(program.tokens), 0))
    return " ".join(out)


def _cmd_highlight(args) -> int:
    grammar, schema = _load_rubric(args.rubric, args.schema)
    program = _read_program_file(args.program_file)
    result = viterbi_parse(grammar, program)
    print(_render_highlight(program, result.mask, schema))
    return EXIT_OK


def _cmd_train(args) -> int:
    schema = io.read_schema(args.schema)
    pairs = []
    for rec in io.iter_corpus(args.corpus):
        if rec.labels is None:
            raise DataFormatError(f"training corpus record without labels: {rec.program!r}")
        program, labels, _mask = io.record_to_example(rec, schema)
        if args.features == "trace":
            from .models import featurize_program_trace
            feats = featurize_program_trace(program)
        else:
            feats = featurize(program, args.dim)
        pairs.append((feats, labels))
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                      learning_rate=args.learning_rate, seed=args.seed)
    if args.baseline == "majority":
        model = majority_baseline([y for _, y in pairs], dim=args.dim,
                                  feature_kind=args.features, label_names=schema.names)
    else:
        model = train_multilabel(pairs, cfg, feature_kind=args.features,
                                 label_names=schema.names)
    io.save_model(args.output, model, schema)
    print(f"trained on {len(pairs)} examples; wrote {args.output}")
    return EXIT_OK


def _split_metrics_dict(m) -> dict | None:
    if m is None:
        return None
    return {
        "count": m.count,
        "micro_precision": m.micro_precision,
        "micro_recall": m.micro_recall,
        "micro_f1": m.micro_f1,
        "macro_f1": m.macro_f1,
        "per_label": [
            {"precision": x.precision, "recall": x.recall, "f1": x.f1, "support": x.support}
            for x in m.per_label
        ],
    }


def _cmd_eval(args) -> int:
    schema = io.read_schema(args.schema)
    preds = io.read_corpus(args.pred)
    truths = io.read_corpus(args.truth)
    if len(preds) != len(truths):
        raise DataFormatError(f"{len(preds)} predictions vs {len(truths)} truth records")
    programs, probs, bits = [], [], []
    for pred, truth in zip(preds, truths):
        if pred.program != truth.program:
            raise DataFormatError(f"prediction/truth mismatch at program {truth.program!r}")
        if pred.probs is not None:
            p = list(pred.probs)
        elif pred.labels is not None:
            _, vec, _ = io.record_to_example(pred, schema)
            p = list(vec.values)
        else:
            raise DataFormatError(f"prediction without labels or probs: {pred.program!r}")
        _, tvec, _ = io.record_to_example(truth, schema)
        programs.append(truth.program)
        probs.append(p)
        bits.append(list(tvec.values))
    table = (io.read_frequency_table(args.freq) if args.freq
             else io.records_to_table(truths))
    report = score_predictions(programs, np.array(probs), np.array(bits), table,
                               threshold=args.threshold)
    payload = {
        "head_count": report.head_count,
        "body_count": report.body_count,
        "tail_count": report.tail_count,
        "labels": list(schema.names),
        "body": _split_metrics_dict(report.body),
        "tail": _split_metrics_dict(report.tail),
    }
    if args.output:
        io.write_report(args.output, "eval-report", payload)
    body = payload["body"]["micro_f1"] if payload["body"] else None
    tail = payload["tail"]["micro_f1"] if payload["tail"] else None
    print(f"body micro-F1: {body}  tail micro-F1: {tail}")
    return EXIT_OK


def _cmd_stats(args) -> int:
    table = io.read_frequency_table(args.corpus)
    split = split_zipf(table)
    try:
        fit = fit_zipf(table)
        fit_dict = {"slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2}
    except TooFewEntries:
        fit_dict = None
    payload = {
        "entries": len(table),
        "total_weight": table.total,
        "fit": fit_dict,
        "head": len(split.head),
        "body": len(split.body),
        "tail": len(split.tail),
    }
    if args.log_zipf_out:
        io.write_frequency_table(args.log_zipf_out, log_zipf(table))
        payload["log_zipf_out"] = args.log_zipf_out
    if args.output:
        io.write_report(args.output, "stats-report", payload)
    print(json.dumps(payload, indent=2))
    return EXIT_OK


def _cmd_exec(args) -> int:
    program = _read_program_file(args.program_file)
    trace = execute(program)
    payload = {
        "schema": "blockfeedback/trace",
        "version": io.FORMAT_VERSION,
        "compiled": trace.compiled,
        "final_heading": trace.final_heading,
        "segments": [list(s) for s in trace.segments],
    }
    text = json.dumps(payload, indent=2)
    if args.output:
        Path(args.output).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def _cmd_trace(args) -> int:
    schema = io.read_schema(args.schema)
    model = io.load_model(args.model)
    trajectories = io.read_trajectories(args.trajectories)
    report = knowledge_trace(model, trajectories, schema, max_index=args.max_index)
    payload = {
        "per_index": [
            {"index": d.index, "no_errors": d.no_errors, "loop_errors": d.loop_errors,
             "geometry_errors": d.geometry_errors, "count": d.count}
            for d in report.per_index
        ],
        "per_student": {k: list(v) for k, v in report.per_student.items()},
    }
    if args.output:
        io.write_report(args.output, "trace-report", payload)
    for d in report.per_index:
        print(f"submission {d.index}: no-errors {d.no_errors:.2f}  "
              f"loop {d.loop_errors:.2f}  geometry {d.geometry_errors:.2f}  (n={d.count})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blockfeedback",
                                     description="Rubric-driven feedback for block programs")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_seed(p):
        p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")

    p = sub.add_parser("sample", help="sample a synthetic labeled corpus from a rubric")
    p.add_argument("rubric", help="rubric file or shipped name (p1, p8)")
    p.add_argument("-n", type=int, required=True, help="number of draws")
    p.add_argument("--unique", action="store_true", help="deduplicate by program text")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--schema", help="label schema file (default: rubric sidecar)")
    add_seed(p)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("tune", help="tune rubric probabilities against unlabeled programs")
    p.add_argument("rubric")
    p.add_argument("--unlabeled", required=True, help="unlabeled corpus / frequency table")
    p.add_argument("-o", "--output", required=True, help="tuned rubric file")
    p.add_argument("--report", help="optional tuning report file")
    p.add_argument("--schema")
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--population", type=int, default=50)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--elite-k", type=int, default=10)
    p.add_argument("--sample-size", type=int, default=20_000)
    p.add_argument("--update", choices=["elite_mean", "weighted"], default="elite_mean")
    p.add_argument("--init", choices=["rubric", "random"], default="rubric",
                   help="start from the rubric's probabilities or from random logits")
    add_seed(p)
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("infer", help="predict labels (grammar parse, classifier fallback)")
    p.add_argument("rubric")
    p.add_argument("corpus")
    p.add_argument("--model", help="classifier fallback for off-grammar programs")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--schema")
    add_seed(p)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("highlight", help="print a bracketed label annotation of a program")
    p.add_argument("rubric")
    p.add_argument("program_file")
    p.add_argument("--schema")
    add_seed(p)
    p.set_defaults(func=_cmd_highlight)

    p = sub.add_parser("train", help="train a multi-label classifier on a labeled corpus")
    p.add_argument("corpus")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--features", choices=["tokens", "trace"], default="tokens")
    p.add_argument("--dim", type=int, default=4096)
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--learning-rate", type=float, default=0.3)
    p.add_argument("--baseline", choices=["none", "majority"], default="none")
    add_seed(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="score predictions against truth with body/tail F1")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--freq", help="reference frequency table (default: from truth corpus)")
    p.add_argument("--schema", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("-o", "--output")
    add_seed(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("stats", help="Zipf fit and head/body/tail split of a corpus")
    p.add_argument("corpus")
    p.add_argument("-o", "--output")
    p.add_argument("--log-zipf-out", help="write the log-tempered table here")
    add_seed(p)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("exec", help="run a program and dump its drawing trace")
    p.add_argument("program_file")
    p.add_argument("-o", "--output")
    add_seed(p)
    p.set_defaults(func=_cmd_exec)

    p = sub.add_parser("trace", help="knowledge tracing over student trajectories")
    p.add_argument("trajectories")
    p.add_argument("--model", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--max-index", type=int, default=10)
    p.add_argument("-o", "--output")
    add_seed(p)
    p.set_defaults(func=_cmd_trace)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NonFiniteFitness as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return EXIT_NUMERIC
    except BlockFeedbackError as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(json.dumps({"error": "IOError", "message": str(e)}), file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
