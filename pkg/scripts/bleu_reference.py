#!/usr/bin/env python3
"""Reference BLEU used to freeze oracle values for the test suite.

Standalone on purpose: exact Fraction arithmetic, no imports from the
package, so the frozen fixture is an independent check on the native
implementation rather than a mirror of it.

Usage:
    python scripts/bleu_reference.py tests/fixtures/bleu_oracle.json
"""

import json
import math
import random
import sys
from collections import Counter
from fractions import Fraction


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def reference_bleu(hypothesis: str, reference: str) -> float:
    """Sentence BLEU, orders 1..4, uniform weights.

    Unigram precision is left unsmoothed (no overlap means score 0);
    higher orders get add-one smoothing, with the empty 0/0 case
    counting as 1 so short identical strings still score 1.0. Brevity
    penalty is exp(1 - r/c) for c <= r, else 1.
    """
    hyp = hypothesis.split()
    ref = reference.split()
    if not hyp or not ref:
        return 0.0

    precisions = []
    for n in range(1, 5):
        hyp_counts = _ngrams(hyp, n)
        ref_counts = _ngrams(ref, n)
        matches = sum(min(count, ref_counts[gram]) for gram, count in hyp_counts.items())
        total = sum(hyp_counts.values())
        if n == 1:
            if matches == 0:
                return 0.0
            precisions.append(Fraction(matches, total))
        else:
            precisions.append(Fraction(matches + 1, total + 1))

    if len(hyp) > len(ref):
        brevity = 1.0
    else:
        brevity = math.exp(1 - Fraction(len(ref), len(hyp)))
    return brevity * math.exp(sum(0.25 * math.log(p) for p in precisions))


VOCAB = [
    "the", "a", "an", "of", "in", "on", "at", "for", "and", "or",
    "city", "team", "club", "river", "party", "album", "season", "match",
    "national", "football", "german", "french", "northern", "southern",
    "capital", "district", "league", "cup", "player", "singer", "village",
]


def _random_sentence(rng, lo, hi):
    return " ".join(rng.choice(VOCAB) for _ in range(rng.randint(lo, hi)))


def _mutate(rng, text):
    # partial overlap: keep a prefix, swap or drop the rest
    tokens = text.split()
    keep = rng.randint(1, len(tokens))
    tail = [rng.choice(VOCAB) for _ in range(rng.randint(0, 5))]
    return " ".join(tokens[:keep] + tail)


def build_cases():
    rng = random.Random(20260815)
    cases = [
        # pinned anchors, checked by hand
        ("the cat sat", "the cat sat on the mat"),
        ("Japan national football team", "Japan national football team"),
    ]
    for i in range(20):
        if i % 5 == 0:
            ref = _random_sentence(rng, 1, 4)  # short refs exercise smoothing
        else:
            ref = _random_sentence(rng, 4, 12)
        if i % 4 == 0:
            hyp = ref  # identity must stay exactly 1.0
        elif i % 4 == 1:
            hyp = _random_sentence(rng, 1, 10)
        else:
            hyp = _mutate(rng, ref)
        cases.append((hyp, ref))
    return cases


def main(argv):
    if len(argv) != 2:
        print(__doc__, file=sys.stderr)
        return 1
    out = []
    for hyp, ref in build_cases():
        out.append(
            {
                "hypothesis": hyp,
                "reference": ref,
                "score": reference_bleu(hyp, ref),
            }
        )
    with open(argv[1], "w", encoding="utf-8") as handle:
        json.dump(out, handle, indent=2)
        handle.write("\n")
    print(f"wrote {len(out)} cases to {argv[1]}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
