#!/usr/bin/env python3
"""Learn rule probabilities from unlabeled programs by evolution strategies.

Writing down what mistakes students make is easy; guessing how often they
make each one is not. Given a pile of unlabeled submissions, the tuner
searches probability space so the rubric's sampled distribution matches the
real one under a rank-order metric.
"""

import numpy as np

import blockfeedback as bf
from blockfeedback.tuner import logits_from_theta, random_logits, theta_from_logits

grammar, _ = bf.rubrics.load("p1")

# Pretend the authored probabilities are unknown: generate "student data"
# from a hidden theta*, then recover it starting from random probabilities.
rng = np.random.default_rng(7)
hidden = grammar.with_theta(theta_from_logits(
    grammar, logits_from_theta(grammar) + 0.8 * rng.standard_normal(len(grammar.rules))))
unlabeled = bf.build_frequency(
    ex.program for ex in bf.sample_corpus(hidden, 30_000, seed=11))
print(f"unlabeled corpus: 30k submissions, {len(unlabeled)} distinct programs")

start = grammar.with_theta(theta_from_logits(grammar, random_logits(grammar, seed=99)))
cfg = bf.ESConfig(iterations=60, population=40, elite_k=8,
                  fitness_sample_size=10_000, seed=5)
tuned, report = bf.tune(start, unlabeled, cfg)

print(f"rank-order distance: {-report.initial_fitness:.3f} -> {-report.final_fitness:.3f}")
print("iteration  best      mean")
for rec in report.iterations[::10]:
    print(f"{rec.iteration:9d}  {rec.best_fitness:8.4f}  {rec.mean_fitness:8.4f}")

print("\nhidden vs recovered probabilities (first rules per nonterminal):")
seen = set()
for i, rule in enumerate(grammar.rules):
    if rule.lhs in seen:
        continue
    seen.add(rule.lhs)
    print(f"  {rule.lhs:10s} hidden {hidden.theta[i]:.3f}  recovered {tuned.theta[i]:.3f}")
