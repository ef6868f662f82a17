#!/usr/bin/env python3
"""Zero-shot label inference and code highlighting by max-probability parsing.

Parsing a program back through the rubric recovers the most likely way a
student could have produced it; the labels on the applied rules become
feedback, and each labeled rule's token span becomes a highlight.
"""

import blockfeedback as bf

grammar, schema = bf.rubrics.load("p1")


def show(text: str):
    program = bf.tokenize(text)
    try:
        result = bf.viterbi_parse(grammar, program)
    except bf.OutOfSupport:
        print(f"  off-grammar (classifier territory): {text[:60]}...\n")
        return
    names = sorted(schema.labels[i].name for i in result.labels.ids())
    print(f"  logprob {result.logprob:.3f}  labels {names}")
    rendered = list(str(t) for t in program.tokens)
    for s, e, label in reversed(result.mask.spans):
        rendered.insert(e, "]")
        rendered.insert(s, f"[{schema.labels[label].name}:")
    print("  " + " ".join(rendered) + "\n")


print("a correct loop solution:")
show("( Program ( WhenRun ) ( Repeat ( Value ( Number ( 3 ) ) ) ( Body "
     "( Move ( Forward ) ( Value ( Number ( 50 ) ) ) ) ( Turn ( Left ) "
     "( Value ( Number ( 120 ) ) ) ) ) ) )")

print("a wrong angle (interior/exterior confusion):")
show("( Program ( WhenRun ) ( Repeat ( Value ( Number ( 3 ) ) ) ( Body "
     "( Move ( Forward ) ( Value ( Number ( 50 ) ) ) ) ( Turn ( Left ) "
     "( Value ( Number ( 60 ) ) ) ) ) ) )")

print("loop written out by hand:")
show("( Program ( WhenRun ) "
     "( Move ( Forward ) ( Value ( Number ( 50 ) ) ) ) ( Turn ( Left ) ( Value ( Number ( 120 ) ) ) ) "
     "( Move ( Forward ) ( Value ( Number ( 50 ) ) ) ) ( Turn ( Left ) ( Value ( Number ( 120 ) ) ) ) "
     "( Move ( Forward ) ( Value ( Number ( 50 ) ) ) ) ( Turn ( Left ) ( Value ( Number ( 120 ) ) ) ) )")

print("something the rubric never anticipated:")
show("( Program ( WhenRun ) ( Move ( Forward ) ( Value ( Number ( 9999 ) ) ) ) )")

print("parses agree with sampling end to end:")
ok = 0
for seed in range(500):
    ex = bf.sample(grammar, seed)
    result = bf.viterbi_parse(grammar, ex.program)
    ok += (result.labels == ex.labels and result.mask == ex.mask)
print(f"  {ok}/500 sampled programs round-trip to their own labels and masks")
