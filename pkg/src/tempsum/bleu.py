"""Corpus-level BLEU-4 with clipped n-gram counts and add-one smoothing.

Conventions (recorded in every report as ``BLEU_VARIANT``):

* n-gram counts are clipped by the single reference and pooled over the corpus;
* an order with candidate n-grams but no matches gets (0 + 1) / (total + 1);
* an order for which no candidate in the corpus has any n-grams (every
  candidate shorter than n) is dropped and the remaining weights are
  renormalised, so identical short sentences still score 1;
* brevity penalty exp(1 - r/c) when the pooled candidate length c is at most r.
"""

from __future__ import annotations

import math
from collections import Counter
from fractions import Fraction
from typing import Sequence

BLEU_VARIANT = "corpus-bleu-4/add-one-on-zero/single-ref"
MAX_ORDER = 4


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def clipped_counts(candidate: Sequence[str], reference: Sequence[str], n: int) -> tuple[int, int]:
    """(clipped matches, candidate n-gram total) for one pair."""
    cand = ngrams(candidate, n)
    ref = ngrams(reference, n)
    matches = sum(min(c, ref[g]) for g, c in cand.items())
    return matches, sum(cand.values())


def modified_precision(candidate: Sequence[str], reference: Sequence[str], n: int = 1) -> Fraction:
    matches, total = clipped_counts(candidate, reference, n)
    if total == 0:
        raise ValueError(f"candidate has no {n}-grams")
    return Fraction(matches, total)


def brevity_penalty(cand_len: int, ref_len: int) -> float:
    if cand_len == 0:
        return 0.0
    if cand_len > ref_len:
        return 1.0
    return math.exp(1.0 - ref_len / cand_len)


def bleu_score(candidates: Sequence[Sequence[str]], references: Sequence[Sequence[str]],
               max_order: int = MAX_ORDER) -> float:
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates but {len(references)} references")
    if not candidates:
        raise ValueError("BLEU of an empty corpus is undefined")
    matches = [0] * max_order
    totals = [0] * max_order
    c_len = r_len = 0
    for cand, ref in zip(candidates, references):
        c_len += len(cand)
        r_len += len(ref)
        for n in range(1, max_order + 1):
            m, t = clipped_counts(cand, ref, n)
            matches[n - 1] += m
            totals[n - 1] += t
    logs = []
    for m, t in zip(matches, totals):
        if t == 0:
            continue
        logs.append(math.log(m / t) if m else math.log(1.0 / (t + 1)))
    if not logs:
        return 0.0
    return brevity_penalty(c_len, r_len) * math.exp(sum(logs) / len(logs))
