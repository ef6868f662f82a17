"""Exception hierarchy for the blockfeedback package.

Every engine error derives from BlockFeedbackError so callers (notably the
CLI) can map failures to exit codes without enumerating modules.
"""

from __future__ import annotations


class BlockFeedbackError(Exception):
    """Base class for all errors raised by this package."""


# --- program text ---

class EmptyInput(BlockFeedbackError):
    """Program text is empty or whitespace-only."""


class UnbalancedParens(BlockFeedbackError):
    """Program text has unmatched parentheses."""


# --- rubric DSL / grammar ---

class RubricSyntaxError(BlockFeedbackError):
    """A rubric line could not be parsed."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class UnknownSymbol(BlockFeedbackError):
    """A rule references a nonterminal that is never defined."""


class UnknownLabel(BlockFeedbackError):
    """A rule is annotated with a label name absent from the schema."""


class ProbSumMismatch(BlockFeedbackError):
    """A nonterminal's outgoing rule probabilities do not sum to 1."""

    def __init__(self, nonterminal: str, total: float):
        super().__init__(f"probabilities for {nonterminal!r} sum to {total:.6g}, expected 1")
        self.nonterminal = nonterminal
        self.total = total


class CycleDetected(BlockFeedbackError):
    """The rule graph contains a cycle; rubric grammars must be acyclic."""

    def __init__(self, path: list[str]):
        super().__init__("cycle through " + " -> ".join(path))
        self.path = list(path)


class SupportTooLarge(BlockFeedbackError):
    """Exhaustive enumeration would exceed the requested item budget."""


class ForeignDerivation(BlockFeedbackError):
    """A derivation does not belong to the given grammar."""


# --- frequency tables ---

class NonPositiveWeight(BlockFeedbackError):
    """A table weight is outside the range an operation requires."""


class TooFewEntries(BlockFeedbackError):
    """Not enough distinct entries for the requested statistic."""


class EmptyTable(BlockFeedbackError):
    """Operation requires a non-empty frequency table."""


# --- tuning ---

class NonFiniteFitness(BlockFeedbackError):
    """A candidate evaluation produced NaN or infinity."""


# --- parsing / inference ---

class OutOfSupport(BlockFeedbackError):
    """The program has no derivation under the grammar.

    Callers are expected to fall back to a trained classifier; this is an
    explicit signal, never a silent low-probability guess.
    """


# --- models ---

class DimensionMismatch(BlockFeedbackError):
    """Feature vector dimension differs from the model's."""


class DegenerateLabels(UserWarning):
    """A label is constant in the training corpus; its weights stay at init."""


# --- serialization ---

class DataFormatError(BlockFeedbackError):
    """A corpus, table, schema, or model file is malformed."""
