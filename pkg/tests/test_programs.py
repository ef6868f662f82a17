import math

import pytest
from hypothesis import given, strategies as st

import blockfeedback as bf
from blockfeedback.programs import split_tokens

from conftest import LISTING_TEXT, TRIANGLE_TEXT


def test_tokenize_listing_has_51_tokens():
    p = bf.tokenize(LISTING_TEXT)
    assert len(p) == 51
    assert p.tokens[0].kind == "open"
    assert p.tokens[1] == "Program"


def test_tokenize_minimal_program():
    p = bf.tokenize("( Program ( WhenRun ) )")
    assert len(p) == 6
    assert bf.is_block_program(p)


def test_tokenize_unbalanced():
    with pytest.raises(bf.UnbalancedParens):
        bf.tokenize("( Program ( WhenRun )")
    with pytest.raises(bf.UnbalancedParens):
        bf.tokenize(") Program (")


def test_tokenize_empty():
    with pytest.raises(bf.EmptyInput):
        bf.tokenize("")
    with pytest.raises(bf.EmptyInput):
        bf.tokenize("   \n\t ")


def test_tokenize_splits_glued_parens():
    p = bf.tokenize("(Program (WhenRun))")
    assert p.text == "( Program ( WhenRun ) )"


def test_render_normalizes_whitespace():
    messy = "(  Program\n ( WhenRun )   )"
    assert bf.render(bf.tokenize(messy)) == "( Program ( WhenRun ) )"


def test_tokenize_render_roundtrip_listing():
    p = bf.tokenize(LISTING_TEXT)
    assert bf.render(p) == LISTING_TEXT
    assert bf.tokenize(bf.render(p)) == p


@given(st.lists(
    st.one_of(
        st.just("("), st.just(")"),
        st.text(alphabet="abcXYZ019", min_size=1, max_size=4),
    ),
    min_size=1, max_size=40,
))
def test_tokenize_render_roundtrip_random(parts):
    depth = 0
    for t in parts:
        depth += {"(": 1, ")": -1}.get(t, 0)
        if depth < 0:
            parts = [t for t in parts if t not in "()"] or ["x"]
            break
    else:
        parts = parts + [")"] * depth
    text = " ".join(parts)
    p = bf.tokenize(text)
    assert bf.render(p) == text
    assert bf.tokenize(bf.render(p)) == p


def test_roundtrip_over_sampled_corpora(p1_sample_2k, p8_sample_2k):
    for ex in p1_sample_2k + p8_sample_2k:
        assert bf.tokenize(bf.render(ex.program)) == ex.program


def test_execute_triangle_closes():
    trace = bf.execute(bf.tokenize(TRIANGLE_TEXT))
    assert trace.compiled
    assert len(trace.segments) == 3
    end = trace.segments[-1][2:]
    assert math.hypot(end[0], end[1]) < 1e-6


def test_execute_listing_one_segment():
    trace = bf.execute(bf.tokenize(LISTING_TEXT))
    assert trace.compiled
    assert len(trace.segments) == 1
    x0, y0, x1, y1 = trace.segments[0]
    assert abs(math.hypot(x1 - x0, y1 - y0) - 50.0) < 1e-9
    assert trace.final_heading % 360.0 == pytest.approx(90.0, abs=1e-9)


def test_execute_empty_program():
    trace = bf.execute(bf.tokenize("( Program ( WhenRun ) )"))
    assert trace.compiled
    assert trace.segments == ()
    assert trace.final_heading == 90.0


def test_execute_deterministic():
    a = bf.execute(bf.tokenize(TRIANGLE_TEXT))
    b = bf.execute(bf.tokenize(TRIANGLE_TEXT))
    assert a == b


@pytest.mark.parametrize("n", [3, 4, 5, 6, 8, 12])
def test_closure_property_regular_polygons(n):
    angle = 360.0 / n
    text = (
        f"( Program ( WhenRun ) ( Repeat ( Value ( Number ( {n} ) ) ) ( Body "
        f"( Move ( Forward ) ( Value ( Number ( 40 ) ) ) ) "
        f"( Turn ( Right ) ( Value ( Number ( {angle} ) ) ) ) ) ) )"
    )
    trace = bf.execute(bf.tokenize(text))
    assert trace.compiled
    assert len(trace.segments) == n
    end = trace.segments[-1][2:]
    assert math.hypot(end[0], end[1]) < 1e-6


def test_trace_connectivity(p1_sample_2k, p8_sample_2k):
    for ex in p1_sample_2k + p8_sample_2k:
        trace = bf.execute(ex.program)
        for a, b in zip(trace.segments, trace.segments[1:]):
            assert a[2:] == b[:2]


def test_counter_scales_moves():
    text = (
        "( Program ( WhenRun ) ( Repeat ( Value ( Number ( 3 ) ) ) ( Body "
        "( Move ( Forward ) ( Value ( Mult ( Value ( Counter ) ) "
        "( Value ( Number ( 10 ) ) ) ) ) ) ) ) )"
    )
    trace = bf.execute(bf.tokenize(text))
    assert trace.compiled
    lengths = [math.hypot(x1 - x0, y1 - y0) for x0, y0, x1, y1 in trace.segments]
    assert lengths == pytest.approx([10.0, 20.0, 30.0])


def test_nested_repeat_counter_shadowing():
    # Inner loop sees its own counter; after it ends the outer one is back.
    text = (
        "( Program ( WhenRun ) ( Repeat ( Value ( Number ( 2 ) ) ) ( Body "
        "( Repeat ( Value ( Number ( 2 ) ) ) ( Body "
        "( Move ( Forward ) ( Value ( Counter ) ) ) ) ) "
        "( Move ( Forward ) ( Value ( Mult ( Value ( Counter ) ) "
        "( Value ( Number ( 100 ) ) ) ) ) ) ) ) )"
    )
    trace = bf.execute(bf.tokenize(text))
    assert trace.compiled
    lengths = [round(math.hypot(x1 - x0, y1 - y0), 6) for x0, y0, x1, y1 in trace.segments]
    assert lengths == [1.0, 2.0, 100.0, 1.0, 2.0, 200.0]


def test_add_expression():
    text = (
        "( Program ( WhenRun ) ( Move ( Forward ) ( Value ( Add "
        "( Value ( Number ( 30 ) ) ) ( Value ( Number ( 12 ) ) ) ) ) ) )"
    )
    trace = bf.execute(bf.tokenize(text))
    assert trace.compiled
    x0, y0, x1, y1 = trace.segments[0]
    assert math.hypot(x1 - x0, y1 - y0) == pytest.approx(42.0)


def test_unknown_block_partial_trace():
    text = (
        "( Program ( WhenRun ) ( Move ( Forward ) ( Value ( Number ( 10 ) ) ) ) "
        "( Sparkle ( Magic ) ) "
        "( Move ( Forward ) ( Value ( Number ( 10 ) ) ) ) )"
    )
    trace = bf.execute(bf.tokenize(text))
    assert not trace.compiled
    assert len(trace.segments) == 1  # progress up to the failure point


def test_counter_outside_loop_fails_to_compile():
    text = "( Program ( WhenRun ) ( Move ( Forward ) ( Value ( Counter ) ) ) )"
    trace = bf.execute(bf.tokenize(text))
    assert not trace.compiled
    assert trace.segments == ()


def test_non_block_text_fails_to_compile():
    trace = bf.execute(bf.tokenize("a a"))
    assert not trace.compiled


def test_backward_move():
    text = "( Program ( WhenRun ) ( Move ( Backward ) ( Value ( Number ( 10 ) ) ) ) )"
    trace = bf.execute(bf.tokenize(text))
    assert trace.compiled
    assert trace.segments[0][2:] == pytest.approx((0.0, -10.0), abs=1e-9)


def test_is_block_program():
    assert bf.is_block_program(bf.tokenize(LISTING_TEXT))
    assert not bf.is_block_program(bf.tokenize("a a"))
    assert not bf.is_block_program(bf.tokenize("( WhenRun ( Program ) )"))


def test_split_tokens_no_balance_check():
    assert split_tokens("( Repeat ( Value") == ["(", "Repeat", "(", "Value"]


def test_trajectory_requires_submissions():
    with pytest.raises(ValueError):
        bf.Trajectory("s1", ())
