"""
Lumen — Two-Stage and Text2Text sentence retrieval.

Two-Stage: image cosine picks the k_coarse nearest studies, their sentences
for the organ form the pool, text cosine against the query re-ranks and MMR
selects k_fine.
Text2Text: text cosine over the whole organ index fills a pool of depth
max(k_coarse, text_pool_depth); MMR selects k_fine.
"""

from __future__ import annotations

import logging
import os
import time
from typing import Callable, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.findings import normalize_organ
from core.matrix import normalize_vector
from db.operations import IMAGE, TEXT, SentenceDB
from db.sentences import SentenceRecord
from embeddings import QueryEncoder
from retrieval.mmr import mmr_select

logger = logging.getLogger(__name__)

_DEFAULT_K_COARSE = max(1, int(os.environ.get("RETRIEVAL_K_COARSE", "20")))
_DEFAULT_K_FINE = max(1, int(os.environ.get("RETRIEVAL_K_FINE", "3")))
_DEFAULT_LAMBDA = float(os.environ.get("RETRIEVAL_LAMBDA", "0.7"))
_DEFAULT_POOL_DEPTH = max(1, int(os.environ.get("RETRIEVAL_TEXT_POOL_DEPTH", "50")))

TWO_STAGE = "twostage"
TEXT2TEXT = "text2text"
STRATEGIES = (TWO_STAGE, TEXT2TEXT)


class RetrievalConfig(BaseModel):
    model_config = ConfigDict(populate_by_name=True, extra="forbid")

    k_coarse: int = Field(_DEFAULT_K_COARSE, ge=1)
    k_fine: int = Field(_DEFAULT_K_FINE, ge=1)
    lam: float = Field(_DEFAULT_LAMBDA, ge=0.0, le=1.0, alias="lambda")
    strategy: Literal["twostage", "text2text"] = TWO_STAGE
    text_pool_depth: int = Field(_DEFAULT_POOL_DEPTH, ge=1)

    @model_validator(mode="after")
    def _fine_within_coarse(self) -> "RetrievalConfig":
        if self.strategy == TWO_STAGE and self.k_fine > self.k_coarse:
            raise ValueError(f"k_fine ({self.k_fine}) cannot exceed k_coarse ({self.k_coarse}).")
        return self


class RetrievalResult(BaseModel):
    strategy: str
    organ: str
    query: str = ""
    selected: list[SentenceRecord] = Field(default_factory=list)
    mmr_scores: list[float] = Field(default_factory=list)
    candidate_pool_size: int = 0
    stage_timings: dict[str, float] = Field(default_factory=dict)

    @property
    def texts(self) -> list[str]:
        return [record.text for record in self.selected]

    @property
    def sentence_ids(self) -> list[str]:
        return [record.sentence_id for record in self.selected]


def _elapsed_ms(started: float) -> float:
    return round((time.perf_counter() - started) * 1000, 3)


def _select(
    db: SentenceDB,
    pool: list[str],
    sims: list[float],
    cfg: RetrievalConfig,
) -> tuple[list[SentenceRecord], list[float]]:
    texts = [db.record(i).text for i in pool]
    picks = mmr_select(texts, sims, cfg.lam, cfg.k_fine)
    return [db.record(pool[i]) for i, _ in picks], [score for _, score in picks]


def two_stage_retrieve(
    db: SentenceDB,
    organ: str,
    image_query: np.ndarray,
    text_query: str,
    text_query_emb: np.ndarray,
    cfg: RetrievalConfig,
    *,
    exclude_study: Optional[str] = None,
) -> RetrievalResult:
    organ = normalize_organ(organ, indexed_only=True)
    timings: dict[str, float] = {}

    started = time.perf_counter()
    studies = db.knn(organ, IMAGE, image_query, cfg.k_coarse, exclude_study=exclude_study)
    pool = [sid for study_id, _ in studies for sid in db.organ_sentences(study_id, organ)]
    timings["coarse_ms"] = _elapsed_ms(started)
    if not pool:
        return RetrievalResult(strategy=TWO_STAGE, organ=organ, query=text_query, stage_timings=timings)

    started = time.perf_counter()
    index = db.index(organ, TEXT)
    query = normalize_vector(text_query_emb)
    if query.size != index.dim:
        raise ValueError(f"Text query has dim {query.size}, index has dim {index.dim}.")
    sims = [float(index.vector(sid) @ query) for sid in pool]
    selected, scores = _select(db, pool, sims, cfg)
    timings["rerank_ms"] = _elapsed_ms(started)
    return RetrievalResult(
        strategy=TWO_STAGE,
        organ=organ,
        query=text_query,
        selected=selected,
        mmr_scores=scores,
        candidate_pool_size=len(pool),
        stage_timings=timings,
    )


def text2text_retrieve(
    db: SentenceDB,
    organ: str,
    text_query_emb: np.ndarray,
    cfg: RetrievalConfig,
    *,
    text_query: str = "",
    exclude_study: Optional[str] = None,
) -> RetrievalResult:
    organ = normalize_organ(organ, indexed_only=True)
    timings: dict[str, float] = {}

    started = time.perf_counter()
    depth = max(cfg.k_coarse, cfg.text_pool_depth)
    hits = db.knn(organ, TEXT, text_query_emb, depth, exclude_study=exclude_study)
    timings["search_ms"] = _elapsed_ms(started)
    if not hits:
        return RetrievalResult(strategy=TEXT2TEXT, organ=organ, query=text_query, stage_timings=timings)

    started = time.perf_counter()
    pool = [sid for sid, _ in hits]
    selected, scores = _select(db, pool, [score for _, score in hits], cfg)
    timings["rerank_ms"] = _elapsed_ms(started)
    return RetrievalResult(
        strategy=TEXT2TEXT,
        organ=organ,
        query=text_query,
        selected=selected,
        mmr_scores=scores,
        candidate_pool_size=len(pool),
        stage_timings=timings,
    )


# ── Configured retriever ─────────────────────────────────────────────────────

RetrieveFn = Callable[[str, str], RetrievalResult]


class SentenceRetriever:
    """A retrieval strategy bound to a database, config and query encoder."""

    def __init__(self, db: SentenceDB, cfg: RetrievalConfig, encoder: QueryEncoder):
        self.db = db
        self.cfg = cfg
        self.encoder = encoder

    def retrieve(
        self,
        organ: str,
        query_text: str,
        *,
        image_query: Optional[np.ndarray] = None,
        exclude_study: Optional[str] = None,
    ) -> RetrievalResult:
        embedding = self.encoder.encode(query_text)
        if self.cfg.strategy == TEXT2TEXT:
            return text2text_retrieve(
                self.db, organ, embedding, self.cfg, text_query=query_text, exclude_study=exclude_study
            )
        if image_query is None:
            raise ValueError("Two-Stage retrieval needs an image query for the organ.")
        return two_stage_retrieve(
            self.db, organ, image_query, query_text, embedding, self.cfg, exclude_study=exclude_study
        )

    def image_query(self, study_id: str, organ: str) -> Optional[np.ndarray]:
        matrix = self.db.image_embeddings.get(organ)
        if matrix is None or study_id not in matrix:
            return None
        return matrix.row(study_id)

    def bound(
        self,
        study_id: Optional[str] = None,
        *,
        exclude_self: bool = True,
        image_queries: Optional[dict[str, np.ndarray]] = None,
    ) -> RetrieveFn:
        """
        ``(organ, query_text) -> RetrievalResult`` for one study. Image
        queries default to the study's own rows in the database.
        """
        def retrieve(organ: str, query_text: str) -> RetrievalResult:
            image_query = None
            if image_queries and organ in image_queries:
                image_query = image_queries[organ]
            elif study_id is not None:
                image_query = self.image_query(study_id, organ)
            return self.retrieve(
                organ,
                query_text,
                image_query=image_query,
                exclude_study=study_id if exclude_self else None,
            )

        return retrieve
