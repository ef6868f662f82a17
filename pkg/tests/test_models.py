import math

import numpy as np
import pytest

import blockfeedback as bf
from blockfeedback.models import (
    MultiLabelModel,
    bce_gradients,
    bce_loss,
    categorize_submission,
    featurize_program_trace,
)
from blockfeedback.zipf import FrequencyTable

from conftest import TRIANGLE_TEXT


def numerical_gradients(model, X, Y, h=1e-6):
    """Central finite differences of bce_loss over every parameter."""
    gw = np.zeros_like(model.weights)
    gb = np.zeros_like(model.bias)
    for idx in np.ndindex(*model.weights.shape):
        orig = model.weights[idx]
        model.weights[idx] = orig + h
        up = bce_loss(model, X, Y)
        model.weights[idx] = orig - h
        down = bce_loss(model, X, Y)
        model.weights[idx] = orig
        gw[idx] = (up - down) / (2 * h)
    for j in range(model.bias.shape[0]):
        orig = model.bias[j]
        model.bias[j] = orig + h
        up = bce_loss(model, X, Y)
        model.bias[j] = orig - h
        down = bce_loss(model, X, Y)
        model.bias[j] = orig
        gb[j] = (up - down) / (2 * h)
    return gw, gb


def test_featurize_counts_for_minimal_program():
    p = bf.tokenize("( Program ( WhenRun ) )")
    v = bf.featurize(p)
    assert v.sum() == 6 + 5  # 6 unigrams + 5 bigrams
    assert (v >= 0).all()


def test_featurize_order_sensitive():
    a = bf.featurize(bf.tokenize("Move Move Turn"))
    b = bf.featurize(bf.tokenize("Move Turn Move"))
    assert not np.array_equal(a, b)  # bigrams break bag-of-words ties


def test_featurize_deterministic():
    p = bf.tokenize(TRIANGLE_TEXT)
    assert np.array_equal(bf.featurize(p), bf.featurize(p))


def test_featurize_trace_triangle():
    trace = bf.execute(bf.tokenize(TRIANGLE_TEXT))
    v = bf.featurize_trace(trace)
    assert v[0] == 3  # segments
    assert v[1] == pytest.approx(150.0)  # path length
    assert v[3] < 1e-6  # closure distance
    assert v[6] == 1.0  # compiled


def test_featurize_trace_empty():
    trace = bf.execute(bf.tokenize("( Program ( WhenRun ) )"))
    v = bf.featurize_trace(trace)
    assert v.tolist() == [0, 0, 0, 0, 0, 0, 1.0]


def test_featurize_trace_partial():
    trace = bf.execute(bf.tokenize("( Program ( WhenRun ) ( Boom ) )"))
    v = bf.featurize_trace(trace)
    assert np.isfinite(v).all()
    assert v[6] == 0.0


def _separable_corpus():
    # Label 0 fires with feature 0, label 1 with feature 1; clean margins.
    rng = np.random.default_rng(0)
    pairs = []
    for _ in range(80):
        a, b = rng.integers(0, 2), rng.integers(0, 2)
        x = np.zeros(6)
        x[0] = 3.0 * a + rng.integers(0, 2) * 0.2
        x[1] = 2.0 * b
        x[5] = 1.0
        pairs.append((x, bf.LabelVector.from_array([float(a), float(b)])))
    return pairs


def test_train_separable_reaches_full_f1():
    pairs = _separable_corpus()
    model = bf.train_multilabel(pairs, bf.TrainConfig(epochs=200, seed=1))
    X = np.stack([x for x, _ in pairs])
    Y = np.stack([y.to_numpy() for _, y in pairs])
    pred = bf.predict_matrix(model, X) > 0.5
    assert (pred == (Y > 0.5)).all()


def test_training_reduces_loss():
    pairs = _separable_corpus()
    X = np.stack([x for x, _ in pairs])
    Y = np.stack([y.to_numpy() for _, y in pairs])
    before = bce_loss(MultiLabelModel(np.zeros((2, 6)), np.zeros(2)), X, Y)
    model = bf.train_multilabel(pairs, bf.TrainConfig(epochs=50, seed=1))
    assert bce_loss(model, X, Y) < before


def test_zero_epochs_predicts_half():
    pairs = _separable_corpus()
    model = bf.train_multilabel(pairs, bf.TrainConfig(epochs=0, seed=0))
    probs = bf.predict(model, pairs[0][0])
    assert probs.values == (0.5, 0.5)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(42)
    for _ in range(20):
        n, d, l = rng.integers(3, 9), rng.integers(2, 7), rng.integers(1, 4)
        X = rng.integers(0, 4, size=(n, d)).astype(float)
        Y = rng.integers(0, 2, size=(n, l)).astype(float)
        model = MultiLabelModel(0.5 * rng.standard_normal((l, d)),
                                0.5 * rng.standard_normal(l))
        gw, gb = bce_gradients(model, X, Y)
        nw, nb = numerical_gradients(model, X, Y)
        scale = max(1.0, np.abs(gw).max(), np.abs(gb).max())
        assert np.abs(gw - nw).max() / scale < 1e-5
        assert np.abs(gb - nb).max() / scale < 1e-5


def test_loss_nonnegative_zero_only_when_confident():
    X = np.array([[1.0], [0.0]])
    Y = np.array([[1.0], [0.0]])
    confident = MultiLabelModel(np.array([[60.0]]), np.array([-30.0]))
    assert bce_loss(confident, X, Y) == pytest.approx(0.0, abs=1e-10)
    assert bce_loss(MultiLabelModel(np.zeros((1, 1)), np.zeros(1)), X, Y) > 0.5


def test_predict_monotone_in_positive_feature():
    model = MultiLabelModel(np.array([[1.5, -0.5]]), np.array([0.0]))
    lo = bf.predict(model, np.array([1.0, 1.0])).values[0]
    hi = bf.predict(model, np.array([2.0, 1.0])).values[0]
    assert hi > lo


def test_predict_dimension_mismatch():
    model = MultiLabelModel(np.zeros((1, 4)), np.zeros(1))
    with pytest.raises(bf.DimensionMismatch):
        bf.predict(model, np.zeros(5))
    with pytest.raises(bf.DimensionMismatch):
        bf.predict_matrix(model, np.zeros((3, 5)))


def test_degenerate_label_warns_and_freezes():
    rng = np.random.default_rng(3)
    pairs = []
    for i in range(40):
        x = rng.integers(0, 3, size=4).astype(float)
        pairs.append((x, bf.LabelVector.from_array([1.0, float(i % 2)])))
    with pytest.warns(bf.DegenerateLabels):
        model = bf.train_multilabel(pairs, bf.TrainConfig(epochs=5, seed=0))
    assert np.array_equal(model.weights[0], np.zeros(4))
    assert model.bias[0] == 0.0
    assert not np.array_equal(model.weights[1], np.zeros(4))


def test_majority_baseline():
    labels = [bf.LabelVector.from_array([1.0, 0.0, 1.0]) for _ in range(7)]
    labels += [bf.LabelVector.from_array([0.0, 0.0, 0.0]) for _ in range(3)]
    model = bf.majority_baseline(labels, dim=8)
    probs = bf.predict(model, np.zeros(8)).values
    assert probs[0] > 0.99  # 70% positive
    assert probs[1] < 0.01
    assert probs[2] > 0.99
    # Constant across inputs.
    assert bf.predict(model, np.arange(8.0)).values == probs


def test_majority_tie_predicts_negative():
    labels = [bf.LabelVector.from_array([1.0]), bf.LabelVector.from_array([0.0])]
    model = bf.majority_baseline(labels, dim=4)
    assert bf.predict(model, np.zeros(4)).values[0] < 0.5


def test_evaluate_hand_confusion():
    # Twenty filler programs occupy the head; p0..p5 land in the body. One label.
    # Truth:      1 1 1 0 0 0
    # Predicted:  1 0 1 1 0 0  -> tp=2 fp=1 fn=1 -> P=2/3 R=2/3 F1=2/3
    programs = [f"p{i}" for i in range(6)]
    weights = {f"head{i:02d}": 100.0 - i for i in range(20)}
    weights.update({p: 5.0 for p in programs})
    table = FrequencyTable(weights)
    truth = np.array([[1], [1], [1], [0], [0], [0]], dtype=float)
    pred = np.array([[0.9], [0.2], [0.8], [0.7], [0.1], [0.3]])
    report = bf.score_predictions(programs, pred, truth, table)
    assert report.tail is None
    assert report.body.count == 6
    assert report.body.micro_precision == pytest.approx(2 / 3)
    assert report.body.micro_recall == pytest.approx(2 / 3)
    assert report.body.micro_f1 == pytest.approx(2 / 3)
    lm = report.body.per_label[0]
    assert (lm.precision, lm.recall, lm.f1) == (pytest.approx(2 / 3),) * 3


def test_evaluate_f1_is_harmonic_mean():
    programs = [f"p{i}" for i in range(8)]
    weights = {f"head{i:02d}": 100.0 - i for i in range(20)}
    weights.update({p: 10.0 for p in programs})
    table = FrequencyTable(weights)
    rng = np.random.default_rng(1)
    truth = rng.integers(0, 2, size=(8, 3)).astype(float)
    pred = rng.random((8, 3))
    report = bf.score_predictions(programs, pred, truth, table)
    m = report.body
    if m.micro_precision and m.micro_recall:
        expected = 2 * m.micro_precision * m.micro_recall / (m.micro_precision + m.micro_recall)
        assert m.micro_f1 == pytest.approx(expected)


def test_evaluate_head_excluded_and_unseen_is_tail():
    # 20 head programs, one body program, one program missing from the table.
    weights = {f"h{i:02d}": 100.0 - i for i in range(20)}
    weights["b"] = 50.0  # rank 21 with weight > 3: body
    table = FrequencyTable(weights)
    programs = ["h00", "b", "unseen"]
    truth = np.array([[1], [1], [1]], dtype=float)
    pred = np.array([[0.9], [0.9], [0.1]])
    report = bf.score_predictions(programs, pred, truth, table)
    assert report.head_count == 1
    assert report.body_count == 1
    assert report.tail_count == 1
    assert report.body.micro_recall == 1.0
    assert report.tail.micro_recall == 0.0


def test_evaluate_empty_split_is_none():
    table = FrequencyTable({"a": 5.0})
    report = bf.score_predictions(["a"], np.array([[0.9]]), np.array([[1.0]]), table)
    assert report.body is None and report.tail is None  # "a" is in the head
    assert report.head_count == 1


def test_all_positive_predictor_recall_one():
    programs = [f"p{i}" for i in range(30)]
    table = FrequencyTable({p: 4.0 + i for i, p in enumerate(programs)})
    rng = np.random.default_rng(2)
    truth = rng.integers(0, 2, size=(30, 2)).astype(float)
    pred = np.full((30, 2), 0.99)
    report = bf.score_predictions(programs, pred, truth, table)
    body = report.body
    assert body.micro_recall == 1.0
    tp_rate = truth[[programs.index(p) for p in programs if p not in
                     bf.split_zipf(table).head]].mean()
    assert body.micro_precision == pytest.approx(tp_rate)


def test_evaluate_order_invariant(p1):
    grammar, schema = p1
    corpus = [(ex.program, ex.labels) for ex in bf.sample_corpus(grammar, 400, seed=6)]
    table = bf.build_frequency(p for p, _ in corpus)
    model = bf.majority_baseline([y for _, y in corpus], label_names=schema.names)
    a = bf.evaluate(model, corpus, table)
    b = bf.evaluate(model, list(reversed(corpus)), table)
    assert a == b


def test_evaluate_model_on_own_corpus(p1):
    grammar, schema = p1
    train = bf.sample_corpus(grammar, 4000, unique_only=True, seed=8)
    pairs = [(bf.featurize(ex.program), ex.labels) for ex in train]
    model = bf.train_multilabel(pairs, bf.TrainConfig(epochs=60, seed=0),
                                label_names=schema.names)
    held = bf.sample_corpus(grammar, 1500, seed=9)
    table = bf.build_frequency(ex.program for ex in held)
    report = bf.evaluate(model, [(ex.program, ex.labels) for ex in held], table)
    assert report.body.micro_f1 > 0.9
    assert report.tail.micro_f1 > 0.8


# --- knowledge tracing ---

def _trace_schema():
    return bf.LabelSchema(tuple(
        bf.LabelDef(i, n, g) for i, (n, g) in enumerate([
            ("l1", "loop"), ("l2", "loop"), ("g1", "geometry"), ("ok", "other"),
        ])
    ))


def test_categorize_thresholds():
    schema = _trace_schema()
    assert categorize_submission(
        bf.LabelVector.from_array([0.4, 0.4, 0.3, 0.9]), schema) == "no-errors"
    assert categorize_submission(
        bf.LabelVector.from_array([0.7, 0.7, 0.3, 0.0]), schema) == "loop-errors"
    assert categorize_submission(
        bf.LabelVector.from_array([0.1, 0.2, 0.99, 0.0]), schema) == "no-errors"
    assert categorize_submission(
        bf.LabelVector.from_array([0.2, 0.3, 1.0, 0.0]), schema) == "geometry-errors"


def test_categorize_tie_goes_to_loop():
    schema = _trace_schema()
    assert categorize_submission(
        bf.LabelVector.from_array([0.6, 0.6, 1.0, 0.0]), schema) == "loop-errors"


def test_knowledge_trace_all_quiet(p1):
    grammar, schema = p1
    negatives = [bf.LabelVector.zeros(len(schema)) for _ in range(10)]
    model = bf.majority_baseline(negatives, label_names=schema.names)
    subs = tuple(ex.program for ex in bf.sample_corpus(grammar, 5, seed=3))
    report = bf.knowledge_trace(model, [bf.Trajectory("s1", subs)], schema)
    assert all(d.no_errors == 1.0 for d in report.per_index)


def test_knowledge_trace_fractions_sum_to_one(p1):
    grammar, schema = p1
    train = bf.sample_corpus(grammar, 3000, unique_only=True, seed=14)
    pairs = [(bf.featurize(ex.program), ex.labels) for ex in train]
    model = bf.train_multilabel(pairs, bf.TrainConfig(epochs=30, seed=0),
                                label_names=schema.names)
    rng = np.random.default_rng(15)
    trajectories = []
    for s in range(30):
        k = int(rng.integers(1, 13))
        subs = tuple(bf.sample(grammar, int(rng.integers(0, 1 << 30))).program
                     for _ in range(k))
        trajectories.append(bf.Trajectory(f"s{s}", subs))
    report = bf.knowledge_trace(model, trajectories, schema)
    assert report.per_index  # at least index 1 present
    for d in report.per_index:
        assert d.index <= 10  # capped at the first ten submissions
        assert d.no_errors + d.loop_errors + d.geometry_errors == pytest.approx(1.0)
    assert len(report.per_student) == 30
