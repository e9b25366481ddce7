"""
Lumen — Sentence-level BLEU-2 used as the redundancy term of MMR.

No smoothing: a zero n-gram precision gives a zero score, so sentences
with nothing in common count as fully diverse.
"""

from __future__ import annotations

import math
from collections import Counter


def _tokens(sentence: str) -> list[str]:
    return sentence.lower().split()


def _ngrams(tokens: list[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) + 1 - n)]


def _modified_precision(candidate: list[str], reference: list[str], n: int) -> float:
    counts = Counter(_ngrams(candidate, n))
    if not counts:
        return 0.0
    reference_counts = Counter(_ngrams(reference, n))
    clipped = sum(min(count, reference_counts[gram]) for gram, count in counts.items())
    return clipped / sum(counts.values())


def _brevity_penalty(c: int, r: int) -> float:
    if c > r:
        return 1.0
    return math.exp(1 - r / c)


def bleu2(candidate: str, reference: str) -> float:
    """
    Geometric mean of clipped 1- and 2-gram precisions times the brevity
    penalty. A one-token candidate has no bigrams and is scored on
    unigrams alone.
    """
    cand = _tokens(candidate)
    ref = _tokens(reference)
    if not cand:
        return 0.0
    orders = (1, 2) if len(cand) >= 2 else (1,)
    precisions = [_modified_precision(cand, ref, n) for n in orders]
    if any(p == 0.0 for p in precisions):
        return 0.0
    log_mean = math.fsum(math.log(p) for p in precisions) / len(precisions)
    return min(1.0, _brevity_penalty(len(cand), len(ref)) * math.exp(log_mean))
