"""Max-probability parsing of programs under a rubric grammar.

Finds the most likely derivation of a given token sequence by best-first
search over partial leftmost derivations. The priority combines accumulated
log-probability with an admissible per-nonterminal completion bound, so the
first complete parse popped is optimal; ties are broken toward the
lexicographically smallest rule-index sequence. Programs outside the
grammar's support raise OutOfSupport so callers can fall back to a trained
classifier.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from functools import lru_cache

from .errors import OutOfSupport
from .grammar import (
    Derivation,
    HighlightMask,
    NonterminalRef,
    RubricGrammar,
    Terminal,
    derivation_labels,
    derivation_mask,
)
from .labels import LabelVector
from .programs import Program


@dataclass(frozen=True)
class ParseResult:
    derivation: Derivation
    logprob: float
    labels: LabelVector
    mask: HighlightMask


@dataclass
class SearchStats:
    expansions: int = 0
    pushes: int = 0


def build_heuristic(g: RubricGrammar) -> dict[str, float]:
    """Admissible completion bounds: best achievable log-probability per nonterminal.

    Computed bottom-up over the acyclic rule graph; every bound is <= 0 and
    upper-bounds the log-probability of any derivation from that symbol.
    """
    bounds: dict[str, float] = {}

    def bound(nt: str) -> float:
        if nt in bounds:
            return bounds[nt]
        best = -float("inf")
        for ridx in g.rules_by_lhs[nt]:
            rule = g.rules[ridx]
            total = float(g.log_theta[ridx])
            for item in rule.rhs:
                if isinstance(item, NonterminalRef):
                    total += bound(item.name)
            best = max(best, total)
        bounds[nt] = best
        return best

    for nt in g.rules_by_lhs:
        bound(nt)
    return bounds


@lru_cache(maxsize=8)
def _parser_tables(g: RubricGrammar):
    """Per-grammar search tables: heuristic, emission-length bounds, vocabulary."""
    bounds = build_heuristic(g)
    lo: dict[str, int] = {}
    hi: dict[str, int] = {}

    def lengths(nt: str) -> tuple[int, int]:
        if nt in lo:
            return lo[nt], hi[nt]
        lo_best, hi_best = None, None
        for ridx in g.rules_by_lhs[nt]:
            l_sum = h_sum = 0
            for item in g.rules[ridx].rhs:
                if isinstance(item, Terminal):
                    l_sum += len(item.tokens)
                    h_sum += len(item.tokens)
                else:
                    cl, ch = lengths(item.name)
                    l_sum += cl
                    h_sum += ch
            lo_best = l_sum if lo_best is None else min(lo_best, l_sum)
            hi_best = h_sum if hi_best is None else max(hi_best, h_sum)
        lo[nt], hi[nt] = lo_best, hi_best
        return lo_best, hi_best

    for nt in g.rules_by_lhs:
        lengths(nt)

    # Per-rule emission-length increments applied when the rule replaces its
    # lhs on the stack (integers, so incremental updates stay exact).
    rule_lo = []
    rule_hi = []
    for rule in g.rules:
        l_sum = h_sum = 0
        for item in rule.rhs:
            if isinstance(item, Terminal):
                l_sum += len(item.tokens)
                h_sum += len(item.tokens)
            else:
                l_sum += lo[item.name]
                h_sum += hi[item.name]
        rule_lo.append(l_sum)
        rule_hi.append(h_sum)

    vocab = frozenset(t for rule in g.rules for item in rule.rhs
                      if isinstance(item, Terminal) for t in item.tokens)
    return bounds, lo, hi, rule_lo, rule_hi, vocab


def _replay(g: RubricGrammar, seq: tuple[int, ...]) -> Derivation:
    """Rebuild the derivation tree (with token spans) from a preorder rule sequence."""
    it = iter(seq)
    pos = 0

    def build() -> Derivation:
        nonlocal pos
        ridx = next(it)
        start = pos
        children = []
        for item in g.rules[ridx].rhs:
            if isinstance(item, Terminal):
                pos += len(item.tokens)
            else:
                children.append(build())
        return Derivation(ridx, tuple(children), start, pos)

    return build()


def viterbi_parse(
    g: RubricGrammar,
    p: Program,
    use_heuristic: bool = True,
    debug: bool = False,
    stats: SearchStats | None = None,
) -> ParseResult:
    """Parse a program to its maximum-probability derivation.

    ``use_heuristic=False`` degrades to uniform-cost search (used to verify
    that the heuristic only ever prunes). ``debug`` asserts search-order
    consistency. Raises OutOfSupport when the program has no derivation.
    """
    bounds, lo, hi, rule_lo, rule_hi, vocab = _parser_tables(g)
    tokens = tuple(str(t) for t in p.tokens)
    n = len(tokens)
    if any(t not in vocab for t in tokens):
        raise OutOfSupport(f"token outside grammar vocabulary in {p.text!r}")

    log_theta = g.log_theta

    def stack_bound(stack: tuple) -> float:
        # Fresh left-to-right sum keeps goal states at exactly h = 0, so
        # equal-probability parses really do tie and fall through to the
        # rule-sequence ordering.
        if not use_heuristic:
            return 0.0
        total = 0.0
        for item in stack:
            if isinstance(item, NonterminalRef):
                total += bounds[item.name]
        return total

    start_item = NonterminalRef(g.start)
    counter = 0
    # Heap entries: (-f, rule_seq, counter, g_acc, lo, hi, pos, stack).
    # seq is unique per push, so the counter is never reached in comparisons;
    # it only guards against comparing stacks.
    heap = [(-stack_bound((start_item,)), (), 0, 0.0, lo[g.start], hi[g.start], 0, (start_item,))]
    closed: set[tuple[int, tuple]] = set()
    last_f = float("inf")

    while heap:
        neg_f, seq, _, g_acc, s_lo, s_hi, pos, stack = heapq.heappop(heap)
        if stats is not None:
            stats.expansions += 1
        if debug:
            assert -neg_f <= last_f + 1e-9, "pop order must be non-increasing in f"
            last_f = -neg_f
        if not stack:
            derivation = _replay(g, seq)
            labels = LabelVector.from_ids(derivation_labels(g, derivation), len(g.schema))
            return ParseResult(derivation, g_acc, labels, derivation_mask(g, derivation))
        key = (pos, stack)
        if key in closed:
            continue
        closed.add(key)

        top = stack[0]
        rest = stack[1:]
        assert isinstance(top, NonterminalRef)  # terminals are consumed eagerly below
        for ridx in g.rules_by_lhs[top.name]:
            rule = g.rules[ridx]
            new_g = g_acc + log_theta[ridx]
            new_lo = s_lo - lo[top.name] + rule_lo[ridx]
            new_hi = s_hi - hi[top.name] + rule_hi[ridx]
            new_pos = pos
            new_stack = rule.rhs + rest
            # Consume leading terminal runs immediately; they change neither
            # the score nor the heuristic.
            ok = True
            while new_stack and isinstance(new_stack[0], Terminal):
                run = new_stack[0].tokens
                k = len(run)
                if tokens[new_pos:new_pos + k] != run:
                    ok = False
                    break
                new_pos += k
                new_lo -= k
                new_hi -= k
                new_stack = new_stack[1:]
            if not ok:
                continue
            if new_pos + new_lo > n or new_pos + new_hi < n:
                continue
            if not new_stack and new_pos != n:
                continue
            counter += 1
            heapq.heappush(
                heap,
                (-(new_g + stack_bound(new_stack)), seq + (ridx,), counter, new_g,
                 new_lo, new_hi, new_pos, new_stack),
            )
            if stats is not None:
                stats.pushes += 1

    raise OutOfSupport(f"no derivation for {p.text!r}")


def highlight(g: RubricGrammar, p: Program) -> HighlightMask:
    """Highlight mask of the max-probability parse (raises OutOfSupport)."""
    return viterbi_parse(g, p).mask


def predict_labels_grammar(g: RubricGrammar, p: Program) -> LabelVector:
    """Zero-shot labels: the labels of the max-probability parse."""
    return viterbi_parse(g, p).labels
