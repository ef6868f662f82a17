import pytest

import blockfeedback as bf

TOY_DSL = """\
S -> A A : 1.0
A -> "a" : 0.9
A -> "b" : 0.1
"""

# "a a" has two derivations with different probabilities and labels.
AMBIGUOUS_DSL = """\
S -> "a" A : 0.6
S -> B "a" : 0.4
A -> "a" : 0.7 @label("x")
A -> "b" : 0.3
B -> "a" : 1.0 @label("y")
"""

# "a" has two derivations with exactly equal probability; the parser must
# prefer the lexicographically smaller rule sequence.
TIE_DSL = """\
S -> X : 0.5
S -> Y : 0.5
X -> "a" : 1.0
Y -> "a" : 1.0
"""

LISTING_TEXT = (
    "( Program ( WhenRun ) ( Move ( Forward ) ( Value ( Number ( 50 ) ) ) ) "
    "( Repeat ( Value ( Number ( 3 ) ) ) ( Body ( Turn ( Left ) "
    "( Value ( Number ( 120 ) ) ) ) ) ) )"
)

TRIANGLE_TEXT = (
    "( Program ( WhenRun ) ( Repeat ( Value ( Number ( 3 ) ) ) ( Body "
    "( Move ( Forward ) ( Value ( Number ( 50 ) ) ) ) ( Turn ( Left ) "
    "( Value ( Number ( 120 ) ) ) ) ) ) )"
)


@pytest.fixture(scope="session")
def empty_schema():
    return bf.LabelSchema(())


@pytest.fixture(scope="session")
def xy_schema():
    return bf.LabelSchema.from_names(["x", "y"])


@pytest.fixture(scope="session")
def toy_grammar(empty_schema):
    return bf.parse_rubric(TOY_DSL, empty_schema)


@pytest.fixture(scope="session")
def ambiguous_grammar(xy_schema):
    return bf.parse_rubric(AMBIGUOUS_DSL, xy_schema)


@pytest.fixture(scope="session")
def tie_grammar(empty_schema):
    return bf.parse_rubric(TIE_DSL, empty_schema)


@pytest.fixture(scope="session")
def p1():
    return bf.rubrics.load("p1")


@pytest.fixture(scope="session")
def p8():
    return bf.rubrics.load("p8")


@pytest.fixture(scope="session")
def p1_sample_2k(p1):
    grammar, _ = p1
    return bf.sample_corpus(grammar, 2000, seed=77)


@pytest.fixture(scope="session")
def p8_sample_2k(p8):
    grammar, _ = p8
    return bf.sample_corpus(grammar, 2000, seed=78)
