"""The block-program language: tokens, (de)serialization, and a drawing interpreter.

Programs are Lisp-like token sequences such as::

    ( Program ( WhenRun ) ( Move ( Forward ) ( Value ( Number ( 50 ) ) ) ) )

The interpreter executes Move/Turn/Repeat blocks on an unbounded 2D canvas
and never raises: programs that fail to compile yield a partial trace with
``compiled=False`` so every downstream consumer can handle every submission.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

from .errors import EmptyInput, UnbalancedParens

OPEN = "("
CLOSE = ")"


class Token(str):
    """A single program token; a str carrying its syntactic kind."""

    __slots__ = ()

    @property
    def text(self) -> str:
        return str(self)

    @property
    def kind(self) -> str:
        if self == OPEN:
            return "open"
        if self == CLOSE:
            return "close"
        return "symbol"


# Vocabulary is tiny, so equal tokens share one object.
_TOKEN_CACHE: dict[str, Token] = {}


def make_token(text: str) -> Token:
    tok = _TOKEN_CACHE.get(text)
    if tok is None:
        tok = _TOKEN_CACHE[text] = Token(text)
    return tok


def split_tokens(text: str) -> list[str]:
    """Split on whitespace with each paren as its own token. No balance check."""
    return text.replace("(", " ( ").replace(")", " ) ").split()


@dataclass(frozen=True)
class Program:
    """An immutable tokenized program."""

    tokens: tuple[Token, ...]

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def __str__(self) -> str:
        return self.text


def tokenize(text: str) -> Program:
    """Tokenize program text, enforcing balanced parentheses."""
    parts = split_tokens(text)
    if not parts:
        raise EmptyInput("program text is empty")
    depth = 0
    for i, p in enumerate(parts):
        if p == OPEN:
            depth += 1
        elif p == CLOSE:
            depth -= 1
            if depth < 0:
                raise UnbalancedParens(f"unexpected ')' at token {i}")
    if depth != 0:
        raise UnbalancedParens(f"{depth} unclosed '('")
    return Program(tuple(make_token(p) for p in parts))


def program_from_tokens(tokens: Sequence[str]) -> Program:
    """Build a Program from already-split token texts (balance is checked)."""
    return tokenize(" ".join(tokens))


def render(p: Program) -> str:
    """Serialize to the canonical single-space-joined form; inverse of tokenize."""
    return p.text


def is_block_program(p: Program) -> bool:
    """True when the program follows the ( Program ( WhenRun ) ... ) convention."""
    symbols = [t for t in p.tokens if t.kind == "symbol"]
    return len(p.tokens) >= 4 and len(symbols) >= 2 and symbols[0] == "Program" and symbols[1] == "WhenRun"


@dataclass(frozen=True)
class ExecutionTrace:
    """Drawing output: line segments, final heading in degrees, compile status.

    ``compiled=False`` means execution stopped at the first structural error;
    segments reflect progress up to that point. The heading is accumulated
    (not normalized), so total turning stays recoverable.
    """

    segments: tuple[tuple[float, float, float, float], ...]
    final_heading: float
    compiled: bool


@dataclass(frozen=True)
class Trajectory:
    """One student's ordered submissions."""

    student_id: str
    submissions: tuple[Program, ...]

    def __post_init__(self):
        if not self.submissions:
            raise ValueError("trajectory must contain at least one submission")


class _CompileFailure(Exception):
    pass


def _parse_sexpr(tokens: Sequence[str]) -> list:
    """Parse balanced tokens into nested lists of symbols."""
    pos = 0

    def parse_one():
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        if tok != OPEN:
            return tok
        items = []
        while pos < len(tokens) and tokens[pos] != CLOSE:
            items.append(parse_one())
        if pos >= len(tokens):
            raise _CompileFailure("unterminated list")
        pos += 1  # consume ")"
        return items

    nodes = []
    while pos < len(tokens):
        nodes.append(parse_one())
    return nodes


class _Turtle:
    def __init__(self):
        self.x = 0.0
        self.y = 0.0
        self.heading = 90.0  # degrees, up
        self.segments: list[tuple[float, float, float, float]] = []
        self.counters: list[int] = []  # Repeat counter stack, innermost last

    def move(self, distance: float):
        rad = math.radians(self.heading)
        nx = self.x + distance * math.cos(rad)
        ny = self.y + distance * math.sin(rad)
        self.segments.append((self.x, self.y, nx, ny))
        self.x, self.y = nx, ny

    def eval_value(self, node) -> float:
        if not (isinstance(node, list) and len(node) == 2 and node[0] == "Value"):
            raise _CompileFailure("malformed value expression")
        inner = node[1]
        if not isinstance(inner, list) or not inner:
            raise _CompileFailure("malformed value expression")
        head = inner[0]
        if head == "Number" and len(inner) == 2 and isinstance(inner[1], list) and len(inner[1]) == 1:
            try:
                return float(inner[1][0])
            except (TypeError, ValueError):
                raise _CompileFailure("non-numeric literal")
        if head == "Counter" and len(inner) == 1:
            if not self.counters:
                raise _CompileFailure("Counter used outside a Repeat")
            return float(self.counters[-1])
        if head in ("Mult", "Add") and len(inner) == 3:
            a = self.eval_value(inner[1])
            b = self.eval_value(inner[2])
            return a * b if head == "Mult" else a + b
        raise _CompileFailure(f"unknown value form {head!r}")

    def run_statement(self, node):
        if not isinstance(node, list) or not node:
            raise _CompileFailure("malformed statement")
        head = node[0]
        if head == "Move" and len(node) == 3:
            direction = node[1]
            if direction == ["Forward"]:
                sign = 1.0
            elif direction == ["Backward"]:
                sign = -1.0
            else:
                raise _CompileFailure("bad Move direction")
            self.move(sign * self.eval_value(node[2]))
        elif head == "Turn" and len(node) == 3:
            direction = node[1]
            angle = self.eval_value(node[2])
            if direction == ["Left"]:
                self.heading += angle
            elif direction == ["Right"]:
                self.heading -= angle
            else:
                raise _CompileFailure("bad Turn direction")
        elif head == "Repeat" and len(node) == 3:
            count = int(self.eval_value(node[1]))
            body = node[2]
            if not (isinstance(body, list) and body and body[0] == "Body"):
                raise _CompileFailure("Repeat without Body")
            for i in range(1, count + 1):
                self.counters.append(i)
                try:
                    for stmt in body[1:]:
                        self.run_statement(stmt)
                finally:
                    self.counters.pop()
        else:
            raise _CompileFailure(f"unknown block {head!r}")


def execute(p: Program) -> ExecutionTrace:
    """Run the program's drawing blocks.

    Never raises: any structural problem (unknown block, malformed value,
    unbound Counter, missing Program/WhenRun header) ends execution early and
    the trace reports ``compiled=False``.
    """
    turtle = _Turtle()
    compiled = True
    try:
        nodes = _parse_sexpr(p.tokens)
        if len(nodes) != 1:
            raise _CompileFailure("program must be a single top-level list")
        root = nodes[0]
        if not (isinstance(root, list) and len(root) >= 2 and root[0] == "Program" and root[1] == ["WhenRun"]):
            raise _CompileFailure("missing ( Program ( WhenRun ) ... ) header")
        for stmt in root[2:]:
            turtle.run_statement(stmt)
    except _CompileFailure:
        compiled = False
    return ExecutionTrace(tuple(turtle.segments), turtle.heading, compiled)
