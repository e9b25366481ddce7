"""
Lumen — Greedy maximal marginal relevance with BLEU-2 redundancy.

    MMR(d_i) = λ·sim(d_i) − (1 − λ)·max_{d_j ∈ S} BLEU-2(d_i, d_j)
"""

from __future__ import annotations

from typing import Sequence

from retrieval.bleu import bleu2


def mmr_select(
    candidates: Sequence[str],
    sim_scores: Sequence[float],
    lam: float,
    k: int,
) -> list[tuple[int, float]]:
    """
    Pick up to k candidates; returns (candidate index, MMR score) in pick order.

    The first pick is the sim argmax. Ties always go to the lower index.
    """
    if len(candidates) != len(sim_scores):
        raise ValueError(f"{len(candidates)} candidates but {len(sim_scores)} scores.")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}.")
    if k < 1:
        raise ValueError("k must be at least 1.")
    if not candidates:
        return []

    first = 0
    for i in range(1, len(candidates)):
        if sim_scores[i] > sim_scores[first]:
            first = i
    selected: list[tuple[int, float]] = [(first, lam * float(sim_scores[first]))]
    remaining = [i for i in range(len(candidates)) if i != first]
    # max BLEU-2 of each remaining candidate against the selection so far
    redundancy = {i: bleu2(candidates[i], candidates[first]) for i in remaining}

    while remaining and len(selected) < k:
        best_index = remaining[0]
        best_score = lam * float(sim_scores[best_index]) - (1.0 - lam) * redundancy[best_index]
        for i in remaining[1:]:
            score = lam * float(sim_scores[i]) - (1.0 - lam) * redundancy[i]
            if score > best_score:
                best_index, best_score = i, score
        selected.append((best_index, best_score))
        remaining.remove(best_index)
        for i in remaining:
            redundancy[i] = max(redundancy[i], bleu2(candidates[i], candidates[best_index]))

    return selected
