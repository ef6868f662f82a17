#!/usr/bin/env python3
"""Sample synthetic labeled programs from a rubric and run them.

A rubric is a probabilistic grammar over student programs whose rules carry
feedback labels. Drawing from it yields programs together with the labels
and the token spans that triggered them, i.e. free training data.
"""

import blockfeedback as bf

grammar, schema = bf.rubrics.load("p1")
print(f"p1 rubric: {len(grammar.rules)} rules, {len(schema)} labels, "
      f"{bf.count_derivations(grammar)[grammar.start]} derivable programs\n")

print("--- five draws ---")
for seed in range(5):
    ex = bf.sample(grammar, seed)
    names = sorted(schema.labels[i].name for i in ex.labels.ids())
    print(f"seed {seed}: logprob {ex.logprob:6.2f}  labels {names}")
    print(f"  {ex.program.text}")
    for s, e, label in ex.mask.spans:
        snippet = " ".join(ex.program.tokens[s:e])
        print(f"  [{schema.labels[label].name}] tokens {s}..{e}: {snippet}")

print("\n--- executing a correct solution ---")
triangle = bf.tokenize(
    "( Program ( WhenRun ) ( Repeat ( Value ( Number ( 3 ) ) ) ( Body "
    "( Move ( Forward ) ( Value ( Number ( 50 ) ) ) ) ( Turn ( Left ) "
    "( Value ( Number ( 120 ) ) ) ) ) ) )")
trace = bf.execute(triangle)
print(f"compiled={trace.compiled}, {len(trace.segments)} segments, "
      f"final heading {trace.final_heading}")
for seg in trace.segments:
    print(f"  ({seg[0]:7.2f}, {seg[1]:7.2f}) -> ({seg[2]:7.2f}, {seg[3]:7.2f})")

print("\n--- a program that does not compile still yields a partial trace ---")
broken = bf.tokenize("( Program ( WhenRun ) ( Move ( Forward ) ( Value ( Counter ) ) ) )")
trace = bf.execute(broken)
print(f"compiled={trace.compiled}, segments={len(trace.segments)} "
      "(Counter is unbound outside a Repeat)")
