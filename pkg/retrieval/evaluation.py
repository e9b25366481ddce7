"""
Lumen — Retrieval precision: organ-level Jaccard@k and its label-oracle upper bound.

Modalities rank distinct studies:
  img2img  query image vs. image index
  img2txt  query image vs. sentence index (study score = best sentence)
  txt2txt  mean of the query's organ sentence embeddings vs. sentence index
  upper    pooled studies ranked by Jaccard with the query's own labels
Only studies with a label row are eligible neighbours.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from core.findings import INDEXED_ORGANS, normalize_organ, organ_findings
from core.matrix import LabelTable, normalize_vector
from db.index import FlatIndex
from db.operations import IMAGE, TEXT, SentenceDB

logger = logging.getLogger(__name__)

DEFAULT_K = max(1, int(os.environ.get("JACCARD_K", "10")))

IMG2IMG = "img2img"
IMG2TXT = "img2txt"
TXT2TXT = "txt2txt"
UPPER = "upper"
MODALITIES = (IMG2IMG, IMG2TXT, TXT2TXT)
ALL_MODALITIES = (*MODALITIES, UPPER)

_COLUMN_TITLES = {IMG2IMG: "Img2Img", IMG2TXT: "Img2Txt", TXT2TXT: "Txt2Txt", UPPER: "Upper Bound"}


class MissingQueryError(ValueError):
    """The query study lacks labels or the embedding a modality needs."""


def jaccard(a: Iterable[str], b: Iterable[str]) -> float:
    left, right = set(a), set(b)
    union = left | right
    if not union:
        return 1.0
    return len(left & right) / len(union)


# ── Neighbour ranking ────────────────────────────────────────────────────────

def _rank_studies(
    index: FlatIndex,
    query: np.ndarray,
    eligible: set[str],
    exclude_study: Optional[str],
) -> list[str]:
    """Distinct studies by best row score, descending; ties by study id."""
    if len(index) == 0:
        return []
    scores = index.scores(query)
    best: dict[str, float] = {}
    for group, score in zip(index.groups, scores):
        if group == exclude_study or group not in eligible:
            continue
        if group not in best or score > best[group]:
            best[group] = float(score)
    return sorted(best, key=lambda study: (-best[study], study))


def _text_query(db: SentenceDB, study_id: str, organ: str) -> np.ndarray:
    ids = db.organ_sentences(study_id, organ)
    if not ids:
        raise MissingQueryError(f"Study '{study_id}' has no embedded {organ} sentences.")
    index = db.index(organ, TEXT)
    return normalize_vector(np.mean([index.vector(i) for i in ids], axis=0))


def _image_query(db: SentenceDB, study_id: str, organ: str) -> np.ndarray:
    matrix = db.image_embeddings.get(organ)
    if matrix is None or study_id not in matrix:
        raise MissingQueryError(f"Study '{study_id}' has no {organ} image embedding.")
    return matrix.row(study_id)


def modality_pool(db: SentenceDB, organ: str, modality: str) -> frozenset[str]:
    """Labelled studies a modality can return as neighbours for this organ."""
    organ = normalize_organ(organ, indexed_only=True)
    if modality == IMG2IMG:
        space = IMAGE
    elif modality in (IMG2TXT, TXT2TXT):
        space = TEXT
    else:
        raise ValueError(f"Unknown modality '{modality}'. Allowed values: {', '.join(MODALITIES)}.")
    return frozenset(db.index(organ, space).groups) & frozenset(db.labels.ids)


def ranked_neighbours(
    db: SentenceDB,
    query_id: str,
    organ: str,
    modality: str,
    *,
    exclude_self: bool = True,
) -> list[str]:
    """Every eligible study, best first, in the modality's cosine space."""
    organ = normalize_organ(organ, indexed_only=True)
    eligible = set(db.labels.ids)
    exclude = query_id if exclude_self else None
    if modality == IMG2IMG:
        query = _image_query(db, query_id, organ)
        return _rank_studies(db.index(organ, IMAGE), query, eligible, exclude)
    if modality == IMG2TXT:
        query = _image_query(db, query_id, organ)
        return _rank_studies(db.index(organ, TEXT), query, eligible, exclude)
    if modality == TXT2TXT:
        query = _text_query(db, query_id, organ)
        return _rank_studies(db.index(organ, TEXT), query, eligible, exclude)
    raise ValueError(f"Unknown modality '{modality}'. Allowed values: {', '.join(MODALITIES)}.")


def _query_labels(labels: LabelTable, query_id: str, organ: str) -> frozenset[str]:
    if query_id not in labels:
        raise MissingQueryError(f"Study '{query_id}' has no label row.")
    return labels.positives(query_id, organ_findings(organ))


def _mean_jaccard(labels: LabelTable, query: frozenset[str], neighbours: Sequence[str], organ: str) -> float:
    if not neighbours:
        raise MissingQueryError("No eligible neighbours.")
    group = organ_findings(organ)
    return float(np.mean([jaccard(query, labels.positives(n, group)) for n in neighbours]))


def jaccard_at_k(
    db: SentenceDB,
    query_id: str,
    organ: str,
    modality: str,
    k: int = DEFAULT_K,
    *,
    exclude_self: bool = True,
) -> float:
    if k < 1:
        raise ValueError("k must be at least 1.")
    organ = normalize_organ(organ, indexed_only=True)
    query = _query_labels(db.labels, query_id, organ)
    neighbours = ranked_neighbours(db, query_id, organ, modality, exclude_self=exclude_self)[:k]
    return _mean_jaccard(db.labels, query, neighbours, organ)


def upper_bound_at_k(
    labels: LabelTable,
    query_id: str,
    organ: str,
    k: int = DEFAULT_K,
    *,
    exclude_self: bool = True,
    pool: Optional[Iterable[str]] = None,
) -> float:
    """Mean Jaccard over the k studies whose labels overlap the query's most.

    With a pool (see modality_pool) only those studies compete, so the bound
    averages the same number of neighbours the modality can return.
    """
    if k < 1:
        raise ValueError("k must be at least 1.")
    organ = normalize_organ(organ, indexed_only=True)
    query = _query_labels(labels, query_id, organ)
    group = organ_findings(organ)
    allowed = None if pool is None else set(pool)
    candidates = [study for study in labels.ids if allowed is None or study in allowed]
    scored = [
        (jaccard(query, labels.positives(study, group)), study)
        for study in candidates
        if not (exclude_self and study == query_id)
    ]
    scored.sort(key=lambda item: (-item[0], item[1]))
    if not scored:
        raise MissingQueryError("No eligible neighbours.")
    return float(np.mean([score for score, _ in scored[:k]]))


# ── Corpus evaluation ────────────────────────────────────────────────────────

class RetrievalEvaluation(BaseModel):
    organ: str
    modality: str
    k: int
    exclude_self: bool
    mean_jaccard: float
    n_queries: int
    n_skipped: int
    available: bool = True


def _unavailable_reason(db: SentenceDB, organ: str, modality: str) -> Optional[str]:
    if modality != IMG2TXT:
        return None
    matrix = db.image_embeddings.get(organ)
    if matrix is not None and matrix.dim != db.text_dim:
        return f"image dim {matrix.dim} does not match text dim {db.text_dim}"
    return None


def evaluate_retrieval(
    db: SentenceDB,
    organ: str,
    modality: str,
    k: int = DEFAULT_K,
    *,
    exclude_self: bool = True,
    threads: int = 1,
) -> RetrievalEvaluation:
    """Mean Jaccard@k over every labelled query study.

    When the organ has an image index the upper bound ranks the Img2Img pool
    and answers the same queries. A modality whose spaces cannot be compared
    is reported unavailable.
    """
    organ = normalize_organ(organ, indexed_only=True)
    if modality not in ALL_MODALITIES:
        raise ValueError(f"Unknown modality '{modality}'. Allowed values: {', '.join(ALL_MODALITIES)}.")
    queries = sorted(db.labels.ids)

    reason = _unavailable_reason(db, organ, modality)
    if reason is not None:
        logger.warning("%s %s unavailable: %s", organ, modality, reason)
        return RetrievalEvaluation(
            organ=organ,
            modality=modality,
            k=k,
            exclude_self=exclude_self,
            mean_jaccard=0.0,
            n_queries=0,
            n_skipped=len(queries),
            available=False,
        )

    upper_pool = modality_pool(db, organ, IMG2IMG) if modality == UPPER and organ in db.image_embeddings else None

    def run(study_id: str) -> Optional[float]:
        try:
            if modality == UPPER:
                if upper_pool is not None:
                    _image_query(db, study_id, organ)
                return upper_bound_at_k(db.labels, study_id, organ, k, exclude_self=exclude_self, pool=upper_pool)
            return jaccard_at_k(db, study_id, organ, modality, k, exclude_self=exclude_self)
        except MissingQueryError as exc:
            logger.debug("Skipping %s/%s: %s", organ, study_id, exc)
            return None

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        values = list(pool.map(run, queries))
    scores = [v for v in values if v is not None]
    skipped = len(values) - len(scores)
    if skipped:
        logger.warning("%s %s: skipped %d of %d queries", organ, modality, skipped, len(values))
    return RetrievalEvaluation(
        organ=organ,
        modality=modality,
        k=k,
        exclude_self=exclude_self,
        mean_jaccard=float(np.mean(scores)) if scores else 0.0,
        n_queries=len(scores),
        n_skipped=skipped,
    )


def retrieval_table(evaluations: Sequence[RetrievalEvaluation]) -> str:
    """Organ rows by modality columns; missing cells print as '-'."""
    cells = {(e.organ, e.modality): e.mean_jaccard for e in evaluations if e.available}
    modalities = [m for m in ALL_MODALITIES if any(e.modality == m for e in evaluations)]
    organs = [o for o in INDEXED_ORGANS if any(e.organ == o for e in evaluations)]
    header = f"{'organ':<10}" + "".join(f" {_COLUMN_TITLES[m]:>12}" for m in modalities)
    lines = [header, "-" * len(header)]
    for organ in organs:
        row = f"{organ:<10}"
        for modality in modalities:
            value = cells.get((organ, modality))
            row += f" {'-' if value is None else f'{value:.3f}':>12}"
        lines.append(row)
    return "\n".join(lines)
