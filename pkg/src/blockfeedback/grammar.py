"""Label-annotated probabilistic grammars ("rubrics") and corpus sampling.

A rubric is an acyclic PCFG whose rules may carry feedback labels. Sampling
walks the grammar top-down and emits a program together with the labels and
token spans of every labeled rule used, so one grammar yields unlimited
synthetic training data with fine-grained attribution.

The rubric DSL is line oriented::

    # first rule's lhs is the start symbol
    Solution -> "( Repeat" Count Body ")" : 0.8 @label("uses loop")
    Count    -> "( Value ( Number ( 3 ) ) )" : ~3   # ~ marks unnormalized weights

Bare identifiers are nonterminals, quoted strings are runs of literal tokens
(parens inside are split into their own tokens), and each nonterminal's rule
probabilities must sum to 1 unless every alternative uses the ``~`` marker,
in which case the weights are normalized at parse time.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    CycleDetected,
    ForeignDerivation,
    ProbSumMismatch,
    RubricSyntaxError,
    SupportTooLarge,
    UnknownLabel,
    UnknownSymbol,
)
from .labels import LabelSchema, LabelVector
from .programs import Program, make_token, split_tokens

PROB_TOLERANCE = 1e-6


@dataclass(frozen=True)
class Terminal:
    """A run of literal tokens emitted verbatim."""

    tokens: tuple[str, ...]


@dataclass(frozen=True)
class NonterminalRef:
    name: str


RhsItem = Terminal | NonterminalRef


@dataclass(frozen=True)
class ProductionRule:
    lhs: str
    rhs: tuple[RhsItem, ...]
    prob: float
    label: int | None = None


@dataclass(frozen=True)
class RubricGrammar:
    """Validated acyclic PCFG; immutable, so sharing across threads is safe."""

    rules: tuple[ProductionRule, ...]
    start: str
    schema: LabelSchema

    def __post_init__(self):
        if not self.rules:
            raise RubricSyntaxError(0, "grammar has no rules")
        defined = {r.lhs for r in self.rules}
        if self.start not in defined:
            raise UnknownSymbol(f"start symbol {self.start!r} has no rules")
        for r in self.rules:
            if not r.rhs:
                raise RubricSyntaxError(0, f"rule for {r.lhs!r} has empty rhs")
            if not (0.0 < r.prob <= 1.0 + PROB_TOLERANCE):
                raise RubricSyntaxError(0, f"rule for {r.lhs!r} has probability {r.prob} outside (0, 1]")
            if r.label is not None and not (0 <= r.label < len(self.schema)):
                raise UnknownLabel(f"label id {r.label} not in schema")
            for item in r.rhs:
                if isinstance(item, NonterminalRef) and item.name not in defined:
                    raise UnknownSymbol(f"{item.name!r} referenced by {r.lhs!r} is never defined")
        sums: dict[str, float] = {}
        for r in self.rules:
            sums[r.lhs] = sums.get(r.lhs, 0.0) + r.prob
        for lhs, total in sums.items():
            if abs(total - 1.0) > PROB_TOLERANCE:
                raise ProbSumMismatch(lhs, total)
        self._check_acyclic()

    def _check_acyclic(self):
        edges: dict[str, list[str]] = {}
        for r in self.rules:
            targets = edges.setdefault(r.lhs, [])
            for item in r.rhs:
                if isinstance(item, NonterminalRef):
                    targets.append(item.name)
        state: dict[str, int] = {}  # 1 = on stack, 2 = done
        path: list[str] = []

        def visit(nt: str):
            state[nt] = 1
            path.append(nt)
            for child in edges.get(nt, ()):
                mark = state.get(child)
                if mark == 1:
                    cycle = path[path.index(child):] + [child]
                    raise CycleDetected(cycle)
                if mark is None:
                    visit(child)
            path.pop()
            state[nt] = 2

        for nt in edges:
            if nt not in state:
                visit(nt)

    @cached_property
    def nonterminals(self) -> frozenset[str]:
        return frozenset(r.lhs for r in self.rules)

    @cached_property
    def rules_by_lhs(self) -> dict[str, tuple[int, ...]]:
        by_lhs: dict[str, list[int]] = {}
        for i, r in enumerate(self.rules):
            by_lhs.setdefault(r.lhs, []).append(i)
        return {k: tuple(v) for k, v in by_lhs.items()}

    @cached_property
    def theta(self) -> np.ndarray:
        """Per-rule probability vector, in rule order."""
        return np.array([r.prob for r in self.rules], dtype=float)

    @cached_property
    def log_theta(self) -> np.ndarray:
        return np.log(self.theta)

    @cached_property
    def _cum_by_lhs(self) -> dict[str, np.ndarray]:
        return {
            lhs: np.cumsum([self.rules[i].prob for i in idx])
            for lhs, idx in self.rules_by_lhs.items()
        }

    def with_theta(self, probs: Sequence[float]) -> "RubricGrammar":
        """Same structure with new rule probabilities (revalidated)."""
        probs = list(probs)
        if len(probs) != len(self.rules):
            raise ValueError(f"expected {len(self.rules)} probabilities, got {len(probs)}")
        new_rules = tuple(
            ProductionRule(r.lhs, r.rhs, float(p), r.label) for r, p in zip(self.rules, probs)
        )
        return RubricGrammar(new_rules, self.start, self.schema)


@dataclass(frozen=True)
class Derivation:
    """A rule-application tree; children follow the rule's nonterminal refs in order.

    ``start``/``end`` are global token positions of the subtree's emission.
    """

    rule_index: int
    children: tuple["Derivation", ...]
    start: int
    end: int


@dataclass(frozen=True)
class HighlightMask:
    """Token spans (start, end exclusive, label id) attributing labels to code."""

    spans: tuple[tuple[int, int, int], ...]


@dataclass(frozen=True)
class SynExample:
    """One synthetically labeled program."""

    program: Program
    labels: LabelVector
    mask: HighlightMask
    logprob: float


# --- DSL parsing ---

_LINE_TOKEN = re.compile(
    r"""\s*(?:
      (?P<string>"[^"]*")
    | (?P<arrow>->)
    | (?P<label>@label\(\s*"(?P<labelname>[^"]*)"\s*\))
    | (?P<colon>:)
    | (?P<tilde>~)
    | (?P<number>(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?)
    | (?P<ident>[A-Za-z_][A-Za-z0-9_\-]*)
    )""",
    re.VERBOSE,
)


def _strip_comment(line: str) -> str:
    in_string = False
    for i, ch in enumerate(line):
        if ch == '"':
            in_string = not in_string
        elif ch == "#" and not in_string:
            return line[:i]
    return line


def _lex_line(lineno: int, line: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    while pos < len(line):
        if line[pos:].strip() == "":
            break
        m = _LINE_TOKEN.match(line, pos)
        if not m or m.end() == pos:
            raise RubricSyntaxError(lineno, f"unexpected character {line[pos:].lstrip()[:1]!r}")
        pos = m.end()
        for k in ("string", "arrow", "label", "colon", "tilde", "number", "ident"):
            if m.group(k) is not None:
                value = m.group("labelname") if k == "label" else m.group(k)
                tokens.append((k, value))
                break
    return tokens


@dataclass
class _RawRule:
    lineno: int
    lhs: str
    rhs: tuple[RhsItem, ...]
    weight: float
    normalized: bool  # False when the ~ marker was used
    label: int | None


def parse_rubric(text: str, schema: LabelSchema) -> RubricGrammar:
    """Parse rubric DSL text into a validated grammar.

    The first rule's lhs becomes the start symbol. Raises RubricSyntaxError,
    UnknownSymbol, UnknownLabel, ProbSumMismatch, or CycleDetected.
    """
    raw: list[_RawRule] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = _strip_comment(line)
        if not line.strip():
            continue
        toks = _lex_line(lineno, line)
        if len(toks) < 5 or toks[0][0] != "ident" or toks[1][0] != "arrow":
            raise RubricSyntaxError(lineno, "expected 'Name -> items : prob'")
        lhs = toks[0][1]
        i = 2
        rhs: list[RhsItem] = []
        while i < len(toks) and toks[i][0] in ("ident", "string"):
            kind, value = toks[i]
            if kind == "ident":
                rhs.append(NonterminalRef(value))
            else:
                run = tuple(split_tokens(value[1:-1]))
                if not run:
                    raise RubricSyntaxError(lineno, "empty terminal string; spell out alternatives instead")
                rhs.append(Terminal(run))
            i += 1
        if not rhs:
            raise RubricSyntaxError(lineno, "rule has no rhs items")
        if i >= len(toks) or toks[i][0] != "colon":
            raise RubricSyntaxError(lineno, "missing ': prob'")
        i += 1
        normalized = True
        if i < len(toks) and toks[i][0] == "tilde":
            normalized = False
            i += 1
        if i >= len(toks) or toks[i][0] != "number":
            raise RubricSyntaxError(lineno, "missing probability")
        weight = float(toks[i][1])
        if weight <= 0:
            raise RubricSyntaxError(lineno, f"probability must be positive, got {weight}")
        i += 1
        label: int | None = None
        if i < len(toks) and toks[i][0] == "label":
            name = toks[i][1]
            try:
                label = schema.id_of(name)
            except KeyError:
                raise UnknownLabel(f"line {lineno}: label {name!r} not in schema") from None
            i += 1
        if i != len(toks):
            raise RubricSyntaxError(lineno, f"trailing input {toks[i][1]!r}")
        raw.append(_RawRule(lineno, lhs, tuple(rhs), weight, normalized, label))

    if not raw:
        raise RubricSyntaxError(0, "rubric has no rules")

    # ~ is all-or-none per nonterminal; normalize those groups.
    by_lhs: dict[str, list[_RawRule]] = {}
    for r in raw:
        by_lhs.setdefault(r.lhs, []).append(r)
    for lhs, group in by_lhs.items():
        flags = {r.normalized for r in group}
        if flags == {True, False}:
            bad = next(r for r in group if not r.normalized)
            raise RubricSyntaxError(bad.lineno, f"{lhs!r} mixes '~' weights with plain probabilities")
        if flags == {False}:
            total = sum(r.weight for r in group)
            for r in group:
                r.weight = r.weight / total

    rules = tuple(ProductionRule(r.lhs, r.rhs, r.weight, r.label) for r in raw)
    return RubricGrammar(rules, raw[0].lhs, schema)


def render_rubric(g: RubricGrammar) -> str:
    """Serialize a grammar back to DSL text; parse_rubric inverts it exactly."""
    lines = []
    for r in g.rules:
        items = []
        for item in r.rhs:
            if isinstance(item, NonterminalRef):
                items.append(item.name)
            else:
                items.append('"' + " ".join(item.tokens) + '"')
        line = f"{r.lhs} -> {' '.join(items)} : {r.prob!r}"
        if r.label is not None:
            line += f' @label("{g.schema.labels[r.label].name}")'
        lines.append(line)
    return "\n".join(lines) + "\n"


# --- sampling ---

def _as_rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def sample_derivation(g: RubricGrammar, seed) -> tuple[Derivation, list[str]]:
    """Draw one derivation top-down; returns the tree and its emitted tokens."""
    rng = _as_rng(seed)
    tokens: list[str] = []

    def expand(nt: str) -> Derivation:
        indices = g.rules_by_lhs[nt]
        if len(indices) == 1:
            ridx = indices[0]
        else:
            cum = g._cum_by_lhs[nt]
            ridx = indices[min(int(np.searchsorted(cum, rng.random(), side="right")), len(indices) - 1)]
        rule = g.rules[ridx]
        start = len(tokens)
        children = []
        for item in rule.rhs:
            if isinstance(item, Terminal):
                tokens.extend(item.tokens)
            else:
                children.append(expand(item.name))
        return Derivation(ridx, tuple(children), start, len(tokens))

    root = expand(g.start)
    return root, tokens


def derivation_rule_indices(d: Derivation) -> list[int]:
    """Applied rules in leftmost (preorder) order."""
    out: list[int] = []
    stack = [d]
    while stack:
        node = stack.pop()
        out.append(node.rule_index)
        stack.extend(reversed(node.children))
    return out


def _walk_preorder(d: Derivation) -> Iterator[Derivation]:
    stack = [d]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children))


def derivation_labels(g: RubricGrammar, d: Derivation) -> frozenset[int]:
    """Union of label ids over applied rules."""
    return frozenset(
        g.rules[n.rule_index].label
        for n in _walk_preorder(d)
        if g.rules[n.rule_index].label is not None
    )


def _canonical_spans(spans) -> tuple[tuple[int, int, int], ...]:
    # Outer spans before the spans they contain; position order otherwise.
    return tuple(sorted(spans, key=lambda s: (s[0], -s[1], s[2])))


def derivation_mask(g: RubricGrammar, d: Derivation) -> HighlightMask:
    """One span per labeled rule applied, covering its subtree's emission."""
    return HighlightMask(_canonical_spans(
        (n.start, n.end, g.rules[n.rule_index].label)
        for n in _walk_preorder(d)
        if g.rules[n.rule_index].label is not None
    ))


def _validate_derivation(g: RubricGrammar, d: Derivation, expect_lhs: str | None = None):
    if not (0 <= d.rule_index < len(g.rules)):
        raise ForeignDerivation(f"rule index {d.rule_index} out of range")
    rule = g.rules[d.rule_index]
    if expect_lhs is not None and rule.lhs != expect_lhs:
        raise ForeignDerivation(f"expected a {expect_lhs!r} rule, got {rule.lhs!r}")
    refs = [item for item in rule.rhs if isinstance(item, NonterminalRef)]
    if len(refs) != len(d.children):
        raise ForeignDerivation(
            f"rule {d.rule_index} expects {len(refs)} children, derivation has {len(d.children)}"
        )
    for ref, child in zip(refs, d.children):
        _validate_derivation(g, child, ref.name)


def derivation_logprob(g: RubricGrammar, d: Derivation) -> float:
    """Sum of log rule probabilities over the derivation (preorder, always <= 0)."""
    _validate_derivation(g, d)
    log_theta = g.log_theta
    total = 0.0
    for node in _walk_preorder(d):
        total += log_theta[node.rule_index]
    return total


def derivation_tokens(g: RubricGrammar, d: Derivation) -> list[str]:
    tokens: list[str] = []

    def emit(node: Derivation):
        rule = g.rules[node.rule_index]
        child_iter = iter(node.children)
        for item in rule.rhs:
            if isinstance(item, Terminal):
                tokens.extend(item.tokens)
            else:
                emit(next(child_iter))

    emit(d)
    return tokens


def example_from_derivation(g: RubricGrammar, d: Derivation, tokens: Sequence[str] | None = None) -> SynExample:
    if tokens is None:
        tokens = derivation_tokens(g, d)
    program = Program(tuple(make_token(t) for t in tokens))
    labels = LabelVector.from_ids(derivation_labels(g, d), len(g.schema))
    return SynExample(program, labels, derivation_mask(g, d), derivation_logprob(g, d))


def sample(g: RubricGrammar, seed) -> SynExample:
    """Draw one labeled example; deterministic given the seed.

    Single-pass equivalent of sample_derivation + example_from_derivation,
    kept lean because corpus generation dominates several pipelines.
    """
    rng = _as_rng(seed)
    rules = g.rules
    by_lhs = g.rules_by_lhs
    cums = g._cum_by_lhs
    log_theta = g.log_theta
    tokens: list[Token] = []
    label_ids: set[int] = set()
    spans: list[tuple[int, int, int]] = []
    logprob = 0.0
    random = rng.random

    def expand(nt: str):
        nonlocal logprob
        indices = by_lhs[nt]
        if len(indices) == 1:
            ridx = indices[0]
        else:
            cum = cums[nt]
            u = random()
            k = 0
            while cum[k] <= u and k < len(indices) - 1:
                k += 1
            ridx = indices[k]
        rule = rules[ridx]
        logprob += log_theta[ridx]
        start = len(tokens)
        for item in rule.rhs:
            if type(item) is Terminal:
                for t in item.tokens:
                    tokens.append(make_token(t))
            else:
                expand(item.name)
        if rule.label is not None:
            label_ids.add(rule.label)
            spans.append((start, len(tokens), rule.label))

    expand(g.start)
    return SynExample(
        Program(tuple(tokens)),
        LabelVector.from_ids(label_ids, len(g.schema)),
        HighlightMask(_canonical_spans(spans)),
        float(logprob),
    )


def sample_corpus(g: RubricGrammar, n: int, unique_only: bool = False, seed=0) -> list[SynExample]:
    """Draw n examples.

    With unique_only, examples are deduplicated by program text and the
    first-drawn labels win (training-set mode); otherwise all draws are kept
    (density-estimation mode).
    """
    if n < 1:
        raise ValueError(f"corpus size must be >= 1, got {n}")
    rng = _as_rng(seed)
    if not unique_only:
        return [sample(g, rng) for _ in range(n)]
    seen: dict[str, SynExample] = {}
    for _ in range(n):
        ex = sample(g, rng)
        seen.setdefault(ex.program.text, ex)
    return list(seen.values())


# --- exhaustive enumeration (oracle for the sampler and parser) ---

def count_derivations(g: RubricGrammar) -> dict[str, int]:
    """Exact derivation counts per nonterminal (finite because acyclic)."""
    counts: dict[str, int] = {}

    def count(nt: str) -> int:
        if nt in counts:
            return counts[nt]
        total = 0
        for ridx in g.rules_by_lhs[nt]:
            prod = 1
            for item in g.rules[ridx].rhs:
                if isinstance(item, NonterminalRef):
                    prod *= count(item.name)
            total += prod
        counts[nt] = total
        return total

    for nt in g.rules_by_lhs:
        count(nt)
    return counts


def enumerate_derivations(
    g: RubricGrammar, max_derivations: int = 1_000_000
) -> list[tuple[tuple[str, ...], tuple[int, ...], float]]:
    """All derivations from the start symbol as (tokens, rule sequence, probability).

    Rule sequences are in leftmost/preorder order, matching the sampler and
    the parser. Raises SupportTooLarge when the count exceeds the budget.
    """
    total = count_derivations(g)[g.start]
    if total > max_derivations:
        raise SupportTooLarge(f"{total} derivations exceed budget {max_derivations}")
    memo: dict[str, list[tuple[tuple[str, ...], tuple[int, ...], float]]] = {}

    def expand(nt: str):
        if nt in memo:
            return memo[nt]
        out = []
        for ridx in g.rules_by_lhs[nt]:
            rule = g.rules[ridx]
            partials = [((), (ridx,), rule.prob)]
            for item in rule.rhs:
                if isinstance(item, Terminal):
                    partials = [(toks + item.tokens, seq, pr) for toks, seq, pr in partials]
                else:
                    children = expand(item.name)
                    partials = [
                        (toks + ctoks, seq + cseq, pr * cpr)
                        for toks, seq, pr in partials
                        for ctoks, cseq, cpr in children
                    ]
            out.extend(partials)
        memo[nt] = out
        return out

    return expand(g.start)


def enumerate_support(g: RubricGrammar, max_items: int) -> dict[str, float]:
    """Exact program distribution {text: probability}; sums to 1 within 1e-9.

    Raises SupportTooLarge when the support exceeds max_items (never silently
    truncates).
    """
    derivs = enumerate_derivations(g, max_derivations=max(max_items * 64, 1_000_000))
    support: dict[str, float] = {}
    for tokens, _seq, prob in derivs:
        text = " ".join(tokens)
        support[text] = support.get(text, 0.0) + prob
    if len(support) > max_items:
        raise SupportTooLarge(f"support has {len(support)} programs, budget {max_items}")
    return support
