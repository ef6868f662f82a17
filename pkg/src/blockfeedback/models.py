"""Multi-label feedback classifiers, baselines, and evaluation.

Programs are featurized as hashed token unigram+bigram counts (or as
geometric features of an execution trace), and each label gets an
independent logistic regressor trained by mini-batch descent on binary
cross entropy. Evaluation reports precision/recall/F1 separately over the
body and tail of the corpus's Zipf split; the head is excluded because
very common programs can be labeled by hand.
"""

from __future__ import annotations

import math
import warnings
import zlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import DegenerateLabels, DimensionMismatch
from .labels import LabelSchema, LabelVector
from .programs import ExecutionTrace, Program, Trajectory, execute
from .zipf import FrequencyTable, split_zipf

DEFAULT_DIM = 4096
TRACE_DIM = 7

_HASH_CACHE: dict[tuple[str, int], int] = {}


def _hash_index(key: str, dim: int) -> int:
    cached = _HASH_CACHE.get((key, dim))
    if cached is None:
        cached = _HASH_CACHE[(key, dim)] = zlib.crc32(key.encode("utf-8")) % dim
    return cached


def featurize(p: Program, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Hashed counts of token unigrams and adjacent bigrams; deterministic."""
    v = np.zeros(dim)
    toks = p.tokens
    for t in toks:
        v[_hash_index("u\x00" + t, dim)] += 1.0
    for a, b in zip(toks, toks[1:]):
        v[_hash_index("b\x00" + a + "\x00" + b, dim)] += 1.0
    return v


def featurize_trace(t: ExecutionTrace) -> np.ndarray:
    """Fixed geometric features of a drawing trace (works on partial traces)."""
    segs = t.segments
    if not segs:
        return np.array([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, float(t.compiled)])
    arr = np.asarray(segs, dtype=float)
    lengths = np.hypot(arr[:, 2] - arr[:, 0], arr[:, 3] - arr[:, 1])
    angles = np.degrees(np.arctan2(arr[:, 3] - arr[:, 1], arr[:, 2] - arr[:, 0]))
    turning = 0.0
    for a, b in zip(angles, angles[1:]):
        d = (b - a + 180.0) % 360.0 - 180.0
        turning += abs(d)
    closure = math.hypot(arr[-1, 2] - arr[0, 0], arr[-1, 3] - arr[0, 1])
    xs = np.concatenate([arr[:, 0], arr[:, 2]])
    ys = np.concatenate([arr[:, 1], arr[:, 3]])
    return np.array([
        float(len(segs)),
        float(lengths.sum()),
        turning,
        closure,
        float(xs.max() - xs.min()),
        float(ys.max() - ys.min()),
        float(t.compiled),
    ])


def featurize_program_trace(p: Program) -> np.ndarray:
    return featurize_trace(execute(p))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 150
    batch_size: int = 64
    learning_rate: float = 0.3
    seed: int = 0


@dataclass(eq=False)
class MultiLabelModel:
    """Per-label affine scores squashed through a sigmoid."""

    weights: np.ndarray  # (labels, dim)
    bias: np.ndarray  # (labels,)
    feature_kind: str = "tokens"  # "tokens" | "trace"
    label_names: tuple[str, ...] | None = None
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    @property
    def n_labels(self) -> int:
        return self.weights.shape[0]

    def featurizer(self) -> Callable[[Program], np.ndarray]:
        if self.feature_kind == "trace":
            return featurize_program_trace
        return lambda p: featurize(p, self.dim)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def bce_loss(m: MultiLabelModel, X: np.ndarray, Y: np.ndarray) -> float:
    """Binary cross entropy, summed over labels and averaged over examples.

    Computed from logits for numerical stability; non-negative, and zero only
    at perfectly confident correct predictions.
    """
    z = X @ m.weights.T + m.bias
    per = np.maximum(z, 0.0) - z * Y + np.log1p(np.exp(-np.abs(z)))
    return float(per.sum(axis=1).mean())


def bce_gradients(m: MultiLabelModel, X: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of bce_loss w.r.t. (weights, bias)."""
    n = X.shape[0]
    err = (_sigmoid(X @ m.weights.T + m.bias) - Y) / n
    return err.T @ X, err.sum(axis=0)


def _stack_corpus(corpus: Iterable[tuple[np.ndarray, LabelVector]]) -> tuple[np.ndarray, np.ndarray]:
    feats, labs = [], []
    for f, y in corpus:
        feats.append(np.asarray(f, dtype=float))
        labs.append(y.to_numpy() if isinstance(y, LabelVector) else np.asarray(y, dtype=float))
    if not feats:
        raise ValueError("training corpus is empty")
    return np.stack(feats), np.stack(labs)


def train_multilabel(
    corpus: Iterable[tuple[np.ndarray, LabelVector]],
    cfg: TrainConfig = TrainConfig(),
    feature_kind: str = "tokens",
    label_names: Sequence[str] | None = None,
) -> MultiLabelModel:
    """Train per-label logistic regressors by mini-batch gradient descent.

    Weights start at zero (an untrained model predicts 0.5 everywhere).
    Labels that are constant across the corpus trigger a DegenerateLabels
    warning and keep their initial weights.
    """
    X, Y = _stack_corpus(corpus)
    n, d = X.shape
    l = Y.shape[1]
    model = MultiLabelModel(
        np.zeros((l, d)), np.zeros(l), feature_kind,
        tuple(label_names) if label_names is not None else None,
        {"epochs": cfg.epochs, "learning_rate": cfg.learning_rate,
         "batch_size": cfg.batch_size, "seed": cfg.seed},
    )
    active = np.array([len(np.unique(Y[:, j])) > 1 for j in range(l)])
    if not active.all():
        frozen = [j for j in range(l) if not active[j]]
        warnings.warn(f"labels {frozen} are constant in the corpus; leaving them at init",
                      DegenerateLabels)
    rng = np.random.default_rng(cfg.seed)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            gw, gb = bce_gradients(model, X[idx], Y[idx])
            gw[~active] = 0.0
            gb[~active] = 0.0
            model.weights -= cfg.learning_rate * gw
            model.bias -= cfg.learning_rate * gb
    return model


def predict(m: MultiLabelModel, f: np.ndarray) -> LabelVector:
    """Per-label probabilities for one feature vector."""
    f = np.asarray(f, dtype=float)
    if f.shape != (m.dim,):
        raise DimensionMismatch(f"expected feature dim {m.dim}, got {f.shape}")
    probs = _sigmoid(m.weights @ f + m.bias)
    return LabelVector.from_array(np.clip(probs, 1e-12, 1.0 - 1e-12))


def predict_matrix(m: MultiLabelModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != m.dim:
        raise DimensionMismatch(f"expected (n, {m.dim}) features, got {X.shape}")
    return np.clip(_sigmoid(X @ m.weights.T + m.bias), 1e-12, 1.0 - 1e-12)


def majority_baseline(
    labels: Iterable[LabelVector],
    dim: int = DEFAULT_DIM,
    feature_kind: str = "tokens",
    label_names: Sequence[str] | None = None,
) -> MultiLabelModel:
    """Constant predictor voting the per-label majority bit (ties go negative)."""
    Y = np.stack([y.to_numpy() for y in labels])
    if Y.size == 0:
        raise ValueError("majority baseline needs a non-empty corpus")
    majority = Y.mean(axis=0) > 0.5
    eps = 1e-6
    probs = np.where(majority, 1.0 - eps, eps)
    bias = np.log(probs / (1.0 - probs))
    return MultiLabelModel(
        np.zeros((Y.shape[1], dim)), bias, feature_kind,
        tuple(label_names) if label_names is not None else None,
        {"baseline": "majority"},
    )


# --- evaluation ---

@dataclass(frozen=True)
class LabelMetrics:
    precision: float | None
    recall: float | None
    f1: float | None
    support: int  # positive ground-truth count


@dataclass(frozen=True)
class SplitMetrics:
    count: int  # evaluated examples in this split
    micro_precision: float | None
    micro_recall: float | None
    micro_f1: float | None
    macro_f1: float | None
    per_label: tuple[LabelMetrics, ...]


@dataclass(frozen=True)
class EvalReport:
    """Body/tail metrics; an empty split is reported as None, never as zero."""

    body: SplitMetrics | None
    tail: SplitMetrics | None
    head_count: int
    body_count: int
    tail_count: int


def _prf(tp: int, fp: int, fn: int) -> tuple[float | None, float | None, float | None]:
    precision = tp / (tp + fp) if (tp + fp) > 0 else None
    recall = tp / (tp + fn) if (tp + fn) > 0 else None
    if precision is None or recall is None:
        f1 = None
    elif precision + recall == 0:
        f1 = 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def _split_metrics(pred: np.ndarray, truth: np.ndarray) -> SplitMetrics:
    l = truth.shape[1]
    per_label = []
    tp_all = fp_all = fn_all = 0
    f1s = []
    for j in range(l):
        tp = int(np.sum(pred[:, j] & truth[:, j]))
        fp = int(np.sum(pred[:, j] & ~truth[:, j]))
        fn = int(np.sum(~pred[:, j] & truth[:, j]))
        tp_all, fp_all, fn_all = tp_all + tp, fp_all + fp, fn_all + fn
        p, r, f1 = _prf(tp, fp, fn)
        if f1 is not None:
            f1s.append(f1)
        per_label.append(LabelMetrics(p, r, f1, tp + fn))
    mp, mr, mf1 = _prf(tp_all, fp_all, fn_all)
    macro = float(np.mean(f1s)) if f1s else None
    return SplitMetrics(truth.shape[0], mp, mr, mf1, macro, tuple(per_label))


def score_predictions(
    programs: Sequence[str],
    pred_probs: np.ndarray,
    truth_bits: np.ndarray,
    table: FrequencyTable,
    threshold: float = 0.5,
) -> EvalReport:
    """Body/tail F1 of prediction probabilities against ground truth.

    Split membership comes from the frequency table; programs absent from it
    count as frequency 1, i.e. tail. Head programs are excluded.
    """
    split = split_zipf(table)
    pred = np.asarray(pred_probs, dtype=float) > threshold
    truth = np.asarray(truth_bits, dtype=float) > 0.5
    body_idx, tail_idx, head = [], [], 0
    for i, text in enumerate(programs):
        if text in split.head:
            head += 1
        elif text in split.body:
            body_idx.append(i)
        else:  # tail member or unseen (frequency 1)
            tail_idx.append(i)
    body = _split_metrics(pred[body_idx], truth[body_idx]) if body_idx else None
    tail = _split_metrics(pred[tail_idx], truth[tail_idx]) if tail_idx else None
    return EvalReport(body, tail, head, len(body_idx), len(tail_idx))


def evaluate(
    m: MultiLabelModel,
    corpus: Sequence[tuple[Program, LabelVector]],
    table: FrequencyTable,
    threshold: float = 0.5,
) -> EvalReport:
    """Run the model over a labeled corpus and score it (order-invariant)."""
    feats = m.featurizer()
    X = np.stack([feats(p) for p, _ in corpus])
    probs = predict_matrix(m, X)
    truth = np.stack([y.to_numpy() for _, y in corpus])
    texts = [p.text for p, _ in corpus]
    return score_predictions(texts, probs, truth, table, threshold)


# --- knowledge tracing ---

CATEGORY_NO_ERRORS = "no-errors"
CATEGORY_LOOP = "loop-errors"
CATEGORY_GEOMETRY = "geometry-errors"


@dataclass(frozen=True)
class IndexDistribution:
    index: int  # 1-based submission index
    no_errors: float
    loop_errors: float
    geometry_errors: float
    count: int


@dataclass(frozen=True)
class TraceReport:
    per_index: tuple[IndexDistribution, ...]
    per_student: Mapping[str, tuple[str, ...]]


def categorize_submission(probs: LabelVector, schema: LabelSchema) -> str:
    """Bucket one prediction: sum loop-label and geometry-label probabilities.

    Both sums below 1 means no errors; otherwise the larger sum wins, with
    ties going to loops.
    """
    arr = probs.to_numpy()
    loop_sum = float(arr[list(schema.group_ids("loop"))].sum())
    geom_sum = float(arr[list(schema.group_ids("geometry"))].sum())
    if loop_sum < 1.0 and geom_sum < 1.0:
        return CATEGORY_NO_ERRORS
    return CATEGORY_LOOP if loop_sum >= geom_sum else CATEGORY_GEOMETRY


def knowledge_trace(
    m: MultiLabelModel,
    trajectories: Sequence[Trajectory],
    schema: LabelSchema,
    max_index: int = 10,
) -> TraceReport:
    """Aggregate per-submission error categories across students."""
    feats = m.featurizer()
    per_student: dict[str, tuple[str, ...]] = {}
    tallies: dict[int, dict[str, int]] = {}
    for traj in trajectories:
        cats = []
        for i, sub in enumerate(traj.submissions[:max_index], start=1):
            cat = categorize_submission(predict(m, feats(sub)), schema)
            cats.append(cat)
            bucket = tallies.setdefault(i, {CATEGORY_NO_ERRORS: 0, CATEGORY_LOOP: 0, CATEGORY_GEOMETRY: 0})
            bucket[cat] += 1
        per_student[traj.student_id] = tuple(cats)
    per_index = []
    for i in sorted(tallies):
        bucket = tallies[i]
        total = sum(bucket.values())
        per_index.append(IndexDistribution(
            i,
            bucket[CATEGORY_NO_ERRORS] / total,
            bucket[CATEGORY_LOOP] / total,
            bucket[CATEGORY_GEOMETRY] / total,
            total,
        ))
    return TraceReport(tuple(per_index), per_student)
