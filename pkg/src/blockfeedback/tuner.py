"""Evolution-strategies tuning of rubric probabilities against unlabeled data.

The search runs in logit space: one unconstrained real per rule, converted
to probabilities by a softmax within each nonterminal's rule group, so the
per-nonterminal simplex constraint holds by construction. Fitness is the
negated rank-order distance between a freshly sampled synthetic frequency
table (all draws, not just unique programs) and the unlabeled table.

For grammars whose derivations are enumerable the sampler is replaced by an
exact multinomial draw over the enumerated program distribution, which is
the same distribution at a fraction of the cost; larger grammars fall back
to per-sample generation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyTable, NonFiniteFitness, SupportTooLarge
from .grammar import RubricGrammar, enumerate_derivations, sample_derivation
from .zipf import FrequencyTable, rank_order_distance

FAST_PATH_DERIVATION_CAP = 500_000


@dataclass(frozen=True)
class ESConfig:
    iterations: int
    population: int = 50
    sigma: float = 0.1
    elite_k: int = 10
    fitness_sample_size: int = 20_000
    seed: int = 0
    update: str = "elite_mean"  # or "weighted"
    step_size: float = 1.0  # scale of the weighted update
    fresh_eval_seed: bool = False  # True reseeds evaluations per iteration

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.population < 1 or self.elite_k < 1 or self.fitness_sample_size < 1:
            raise ValueError("population, elite_k, and fitness_sample_size must be >= 1")
        if self.elite_k > self.population:
            raise ValueError("elite_k must not exceed population")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.update not in ("elite_mean", "weighted"):
            raise ValueError(f"unknown update rule {self.update!r}")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    best_fitness: float
    mean_fitness: float
    best_so_far: float


@dataclass(frozen=True)
class TuneReport:
    iterations: tuple[IterationRecord, ...]
    initial_fitness: float
    final_fitness: float
    final_logits: np.ndarray

    def to_dict(self) -> dict:
        return {
            "initial_fitness": self.initial_fitness,
            "final_fitness": self.final_fitness,
            "iterations": [
                {"iteration": r.iteration, "best_fitness": r.best_fitness,
                 "mean_fitness": r.mean_fitness, "best_so_far": r.best_so_far}
                for r in self.iterations
            ],
            "final_logits": [float(x) for x in self.final_logits],
        }


def logits_from_theta(g: RubricGrammar) -> np.ndarray:
    """Logits whose per-group softmax reproduces the grammar's probabilities."""
    return np.log(g.theta)


def theta_from_logits(g: RubricGrammar, logits: Sequence[float]) -> np.ndarray:
    """Per-nonterminal softmax of the logits; always a valid simplex per group."""
    logits = np.asarray(logits, dtype=float)
    if logits.shape != (len(g.rules),):
        raise ValueError(f"expected {len(g.rules)} logits, got {logits.shape}")
    theta = np.empty_like(logits)
    for indices in g.rules_by_lhs.values():
        idx = list(indices)
        z = logits[idx]
        z = np.exp(z - z.max())
        theta[idx] = z / z.sum()
    return theta


def random_logits(g: RubricGrammar, seed, scale: float = 1.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return scale * rng.standard_normal(len(g.rules))


class FitnessEvaluator:
    """Evaluates candidate logits against a fixed unlabeled table.

    Construction precomputes the enumerated program distribution when small
    enough; evaluations then share that structure, so calling this object is
    cheap enough for thousands of candidates.
    """

    def __init__(self, g: RubricGrammar, unlabeled: FrequencyTable, sample_size: int,
                 derivation_cap: int = FAST_PATH_DERIVATION_CAP):
        if len(unlabeled) == 0:
            raise EmptyTable("unlabeled table is empty")
        self.grammar = g
        self.unlabeled = unlabeled
        self.sample_size = int(sample_size)
        if self.sample_size < 1:
            raise ValueError("sample size must be >= 1")
        self._fast = None
        try:
            derivs = enumerate_derivations(g, max_derivations=derivation_cap)
        except SupportTooLarge:
            return
        texts: list[str] = []
        text_index: dict[str, int] = {}
        deriv_prog = np.empty(len(derivs), dtype=np.int64)
        counts = np.zeros((len(derivs), len(g.rules)))
        for i, (tokens, seq, _prob) in enumerate(derivs):
            text = " ".join(tokens)
            j = text_index.get(text)
            if j is None:
                j = text_index[text] = len(texts)
                texts.append(text)
            deriv_prog[i] = j
            for r in seq:
                counts[i, r] += 1.0
        n_prog = len(texts)
        order = sorted(range(n_prog), key=lambda i: texts[i])
        lex_rank = np.empty(n_prog, dtype=np.int64)
        lex_rank[order] = np.arange(n_prog)
        in_unl = np.array([t in unlabeled for t in texts])
        unl_rank = np.array([unlabeled.rank(t) if t in unlabeled else len(unlabeled) + 1
                             for t in texts], dtype=float)
        extra = [t for t in unlabeled.entries if t not in text_index]
        extra_unl_ranks = np.array([unlabeled.rank(t) for t in extra], dtype=float)
        self._fast = {
            "texts": texts,
            "counts": counts,
            "deriv_prog": deriv_prog,
            "n_prog": n_prog,
            "lex_rank": lex_rank,
            "in_unl": in_unl,
            "log_unl_rank": np.log(unl_rank),
            "log_extra_unl_ranks": np.log(extra_unl_ranks) if len(extra) else np.empty(0),
        }

    @property
    def uses_fast_path(self) -> bool:
        return self._fast is not None

    def program_probs(self, logits: np.ndarray) -> np.ndarray:
        """Exact program distribution induced by the logits (fast path only)."""
        f = self._fast
        theta = theta_from_logits(self.grammar, logits)
        deriv_p = np.exp(f["counts"] @ np.log(theta))
        return np.bincount(f["deriv_prog"], weights=deriv_p, minlength=f["n_prog"])

    def sample_counts(self, logits: np.ndarray, seed) -> np.ndarray:
        rng = np.random.default_rng(seed)
        probs = self.program_probs(logits)
        return rng.multinomial(self.sample_size, probs / probs.sum())

    def synthetic_table(self, logits: np.ndarray, seed) -> FrequencyTable:
        """Frequency table of sample_size draws under the candidate logits."""
        if self._fast is not None:
            counts = self.sample_counts(logits, seed)
            texts = self._fast["texts"]
            return FrequencyTable({texts[i]: int(counts[i]) for i in np.flatnonzero(counts > 0)})
        return self._sampled_table(logits, seed)

    def _sampled_table(self, logits: np.ndarray, seed) -> FrequencyTable:
        g = self.grammar.with_theta(theta_from_logits(self.grammar, logits))
        rng = np.random.default_rng(seed)
        counts: dict[str, int] = {}
        for _ in range(self.sample_size):
            _, tokens = sample_derivation(g, rng)
            text = " ".join(tokens)
            counts[text] = counts.get(text, 0) + 1
        return FrequencyTable(counts)

    def _fast_distance(self, counts: np.ndarray) -> float:
        f = self._fast
        nz = counts > 0
        k = int(nz.sum())
        # Rank synthetic programs by descending count, lexicographic ties.
        order = np.lexsort((f["lex_rank"][nz], -counts[nz]))
        ranks_nz = np.empty(k)
        ranks_nz[order] = np.arange(1, k + 1)
        log_syn = np.full(counts.shape, math.log(k + 1))
        log_syn[nz] = np.log(ranks_nz)
        union = nz | f["in_unl"]
        diff = log_syn[union] - f["log_unl_rank"][union]
        total = float(diff @ diff)
        extras = f["log_extra_unl_ranks"]
        if extras.size:
            d = math.log(k + 1) - extras
            total += float(d @ d)
        n_union = int(union.sum()) + extras.size
        return math.sqrt(total / n_union)

    def __call__(self, logits: np.ndarray, seed) -> float:
        """Negated rank-order distance; higher is better."""
        if self._fast is not None:
            value = -self._fast_distance(self.sample_counts(logits, seed))
        else:
            value = -rank_order_distance(self._sampled_table(logits, seed), self.unlabeled)
        if not math.isfinite(value):
            raise NonFiniteFitness(f"fitness {value} for logits {logits!r}")
        return value


def fitness(g: RubricGrammar, logits: Sequence[float], unlabeled: FrequencyTable,
            sample_size: int, seed) -> float:
    """One-off fitness evaluation (see FitnessEvaluator for repeated use)."""
    return FitnessEvaluator(g, unlabeled, sample_size)(np.asarray(logits, dtype=float), seed)


def tune(g: RubricGrammar, unlabeled: FrequencyTable, cfg: ESConfig) -> tuple[RubricGrammar, TuneReport]:
    """Tune grammar probabilities toward the unlabeled distribution.

    Each iteration draws Gaussian perturbations of the current logits,
    evaluates them all on a common random-number substream (reduces
    comparison variance), and averages the elite_k best. Deterministic for a
    fixed config.
    """
    evaluator = FitnessEvaluator(g, unlabeled, cfg.fitness_sample_size)
    root = np.random.SeedSequence(cfg.seed)
    perturb_rng = np.random.default_rng(root.spawn(1)[0])
    eval_seeds = np.random.SeedSequence(root.entropy, spawn_key=(1,))

    def eval_seed(iteration: int) -> np.random.SeedSequence:
        if cfg.fresh_eval_seed:
            return np.random.SeedSequence(root.entropy, spawn_key=(1, iteration))
        return eval_seeds

    logits = logits_from_theta(g)
    initial_fitness = evaluator(logits, eval_seed(0))
    records = []
    best_so_far = initial_fitness
    for it in range(cfg.iterations):
        eps = perturb_rng.standard_normal((cfg.population, len(logits)))
        candidates = logits + cfg.sigma * eps
        seed_it = eval_seed(it)
        fits = np.array([evaluator(c, seed_it) for c in candidates])
        if not np.all(np.isfinite(fits)):
            raise NonFiniteFitness(f"non-finite fitness at iteration {it}")
        order = np.argsort(-fits, kind="stable")
        if cfg.update == "elite_mean":
            logits = candidates[order[:cfg.elite_k]].mean(axis=0)
        else:
            z = (fits - fits.mean())
            std = z.std()
            if std > 0:
                z = z / std
            logits = logits + cfg.step_size * (z @ eps) / cfg.population
        best = float(fits[order[0]])
        best_so_far = max(best_so_far, best)
        records.append(IterationRecord(it, best, float(fits.mean()), best_so_far))
    if cfg.iterations == 0:
        return g, TuneReport((), float(initial_fitness), float(initial_fitness), logits.copy())
    final_fitness = evaluator(logits, eval_seed(cfg.iterations))
    tuned = g.with_theta(theta_from_logits(g, logits))
    report = TuneReport(tuple(records), float(initial_fitness), float(final_fitness), logits.copy())
    return tuned, report
