"""
Lumen — Oracle-mixed [RAG] supervision samples.

High-perplexity sentences become retrieval targets. Each target gets a
"[RAG]" marker and one delimited context block in front of it: with
probability p_oracle 1-2 sentences taken from later in the same report,
otherwise what the retriever returns for the sentence. Context blocks are
recorded as character spans and masked from the generation loss.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.findings import normalize_organ
from orchestrator.generator import RET_END, RET_START, wrap_context
from retrieval.pipelines import RetrievalResult

logger = logging.getLogger(__name__)

RAG_MARKER = "[RAG]"
_BLOCK_PATTERN = re.compile(re.escape(RET_START) + r" .+ " + re.escape(RET_END))

_DEFAULT_P_ORACLE = float(os.environ.get("TRAINPREP_P_ORACLE", "0.7"))
_DEFAULT_K_RAG = max(0, int(os.environ.get("TRAINPREP_K_RAG", "4")))
_DEFAULT_PERCENTILE = float(os.environ.get("TRAINPREP_PERCENTILE", "80"))

RetrieveFn = Callable[[str, str], RetrievalResult]


class SpanOverlapError(ValueError):
    """Context spans overlap, are unsorted or do not cover a delimited block."""


class TrainPrepConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    percentile: float = Field(_DEFAULT_PERCENTILE, gt=0, lt=100)
    p_oracle: float = Field(_DEFAULT_P_ORACLE, ge=0, le=1)
    k_rag_max: int = Field(_DEFAULT_K_RAG, ge=0)
    oracle_context_min: int = Field(1, ge=1, le=2)
    oracle_context_max: int = Field(2, ge=1, le=2)
    seed: int = Field(0, ge=0)
    threshold_scope: Literal["report", "corpus"] = "report"

    @model_validator(mode="after")
    def _ordered_range(self) -> "TrainPrepConfig":
        if self.oracle_context_min > self.oracle_context_max:
            raise ValueError("oracle_context_min cannot exceed oracle_context_max.")
        return self


# ── Inputs ───────────────────────────────────────────────────────────────────

class ReportSentence(BaseModel):
    organ: str
    text: str


class ReportRecord(BaseModel):
    study_id: str
    sentences: list[ReportSentence]


class PerplexityRecord(BaseModel):
    study_id: str
    perplexities: list[float]


def _read_jsonl(path: Union[str, Path], model: type[BaseModel]) -> list:
    rows = []
    with Path(path).open(encoding="utf-8") as handle:
        for number, raw in enumerate(handle, start=1):
            if raw.strip():
                try:
                    rows.append(model.model_validate_json(raw))
                except ValueError as exc:
                    raise ValueError(f"{path}:{number}: {exc}") from exc
    return rows


def load_reports(path: Union[str, Path]) -> list[ReportRecord]:
    return _read_jsonl(path, ReportRecord)


def load_perplexities(path: Union[str, Path]) -> dict[str, list[float]]:
    return {r.study_id: r.perplexities for r in _read_jsonl(path, PerplexityRecord)}


# ── Samples ──────────────────────────────────────────────────────────────────

class TrainingSample(BaseModel):
    study_id: str
    sentence_sequence: list[str]
    # Report-sentence indices preceded by the marker; one context block each.
    rag_positions: list[int] = Field(default_factory=list)
    context_spans: list[tuple[int, int]] = Field(default_factory=list)
    mask_spans: list[tuple[int, int]] = Field(default_factory=list)
    oracle_flags: list[bool] = Field(default_factory=list)
    fallback_flags: list[bool] = Field(default_factory=list)
    text: str = ""


def mark_rag_targets(
    perplexities: Sequence[float],
    percentile: float,
    *,
    threshold: Optional[float] = None,
) -> set[int]:
    """Indices whose perplexity is strictly above the percentile threshold."""
    if not perplexities:
        raise ValueError("At least one perplexity is required.")
    values = np.asarray(perplexities, dtype=np.float64)
    if threshold is None:
        threshold = float(np.percentile(values, percentile))
    return {int(i) for i in np.flatnonzero(values > threshold)}


def corpus_threshold(perplexities: Iterable[Sequence[float]], percentile: float) -> float:
    pooled = [p for report in perplexities for p in report]
    if not pooled:
        raise ValueError("At least one perplexity is required.")
    return float(np.percentile(np.asarray(pooled, dtype=np.float64), percentile))


def cap_targets(targets: Iterable[int], k: int, perplexities: Optional[Sequence[float]] = None) -> list[int]:
    """Keep the k highest-perplexity targets (ties by index), in report order."""
    ordered = sorted(targets)
    if perplexities is not None:
        ordered.sort(key=lambda i: (-perplexities[i], i))
    return sorted(ordered[:k])


def report_rng(seed: int, study_id: str) -> np.random.Generator:
    digest = hashlib.sha256(study_id.encode("utf-8")).digest()
    return np.random.default_rng([seed, int.from_bytes(digest[:8], "little")])


def assemble_oracle_mixed(
    study_id: str,
    sentences: Sequence[ReportSentence],
    targets: Iterable[int],
    cfg: TrainPrepConfig,
    rng: np.random.Generator,
    *,
    retrieve: Optional[RetrieveFn] = None,
    perplexities: Optional[Sequence[float]] = None,
) -> TrainingSample:
    n = len(sentences)
    chosen = cap_targets(targets, cfg.k_rag_max, perplexities)
    if any(t < 0 or t >= n for t in chosen):
        raise ValueError(f"{study_id}: target index out of range for {n} sentences.")

    contexts: dict[int, tuple[list[str], bool, bool]] = {}
    for target in chosen:
        draw = rng.random()
        count = int(rng.integers(cfg.oracle_context_min, cfg.oracle_context_max + 1))
        later = list(range(target + 1, n))
        if draw < cfg.p_oracle and later:
            picks = sorted(int(i) for i in rng.choice(later, size=min(count, len(later)), replace=False))
            contexts[target] = ([sentences[i].text for i in picks], True, False)
            continue
        fallback = draw < cfg.p_oracle
        if fallback:
            logger.warning("%s: no later sentence for oracle context at %d, using retrieval", study_id, target)
        retrieved = _retrieve(study_id, sentences[target], retrieve)
        if retrieved:
            contexts[target] = (retrieved, False, fallback)

    sequence: list[str] = []
    spans: list[tuple[int, int]] = []
    offset = 0

    def push(part: str) -> tuple[int, int]:
        nonlocal offset
        if sequence:
            offset += 1
        start = offset
        sequence.append(part)
        offset += len(part)
        return start, offset

    for i, sentence in enumerate(sentences):
        if i in contexts:
            push(RAG_MARKER)
            spans.append(push(wrap_context(contexts[i][0])))
        push(sentence.text)

    positions = sorted(contexts)
    sample = TrainingSample(
        study_id=study_id,
        sentence_sequence=sequence,
        rag_positions=positions,
        context_spans=spans,
        oracle_flags=[contexts[p][1] for p in positions],
        fallback_flags=[contexts[p][2] for p in positions],
        text=" ".join(sequence),
    )
    return mask_context_spans(sample)


def _retrieve(study_id: str, sentence: ReportSentence, retrieve: Optional[RetrieveFn]) -> list[str]:
    if retrieve is None:
        logger.warning("%s: no retriever configured, target dropped", study_id)
        return []
    try:
        result = retrieve(normalize_organ(sentence.organ, indexed_only=True), sentence.text)
    except Exception as exc:
        logger.warning("%s: retrieval failed (%s), target dropped", study_id, exc)
        return []
    if not result.selected:
        logger.warning("%s: empty retrieval, target dropped", study_id)
    return result.texts


def _check_spans(spans: Sequence[tuple[int, int]], text: Optional[str] = None) -> None:
    previous_end = -1
    for start, end in spans:
        if start < 0 or end <= start:
            raise SpanOverlapError(f"Invalid span ({start}, {end}).")
        if start < previous_end:
            raise SpanOverlapError(f"Span ({start}, {end}) overlaps or precedes the previous span.")
        if text is not None and not _BLOCK_PATTERN.fullmatch(text[start:end]):
            raise SpanOverlapError(f"Span ({start}, {end}) does not cover a delimited context block.")
        previous_end = end


def mask_context_spans(sample: TrainingSample) -> TrainingSample:
    _check_spans(sample.context_spans)
    return sample.model_copy(update={"mask_spans": list(sample.context_spans)})


def validate_sample(sample: TrainingSample) -> None:
    if sample.text != " ".join(sample.sentence_sequence):
        raise ValueError(f"{sample.study_id}: text does not match the sentence sequence.")
    _check_spans(sample.context_spans, sample.text)
    if sample.mask_spans != sample.context_spans:
        raise SpanOverlapError(f"{sample.study_id}: mask spans differ from context spans.")
    if not (len(sample.rag_positions) == len(sample.context_spans) == len(sample.oracle_flags)):
        raise ValueError(f"{sample.study_id}: every rag position needs one context block and one flag.")


# ── Corpus ───────────────────────────────────────────────────────────────────

def prepare_samples(
    reports: Sequence[ReportRecord],
    perplexities: dict[str, list[float]],
    cfg: TrainPrepConfig,
    *,
    retriever_for: Optional[Callable[[str], RetrieveFn]] = None,
    threads: int = 1,
) -> list[TrainingSample]:
    """One sample per report, in input order. Per-report RNG streams keep output independent of threads."""
    for report in reports:
        values = perplexities.get(report.study_id)
        if values is None or len(values) != len(report.sentences):
            raise ValueError(f"{report.study_id}: expected {len(report.sentences)} perplexities.")

    threshold = None
    if cfg.threshold_scope == "corpus":
        threshold = corpus_threshold((perplexities[r.study_id] for r in reports if r.sentences), cfg.percentile)

    def run(report: ReportRecord) -> TrainingSample:
        values = perplexities[report.study_id]
        targets = mark_rag_targets(values, cfg.percentile, threshold=threshold) if values else set()
        return assemble_oracle_mixed(
            report.study_id,
            report.sentences,
            targets,
            cfg,
            report_rng(cfg.seed, report.study_id),
            retrieve=retriever_for(report.study_id) if retriever_for else None,
            perplexities=values,
        )

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return list(pool.map(run, reports))


def serialize_samples(samples: Sequence[TrainingSample], path: Union[str, Path]) -> int:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", encoding="utf-8") as handle:
        for sample in samples:
            handle.write(json.dumps(sample.model_dump(mode="json"), sort_keys=True, ensure_ascii=False) + "\n")
    return len(samples)


def load_samples(path: Union[str, Path]) -> list[TrainingSample]:
    samples: list[TrainingSample] = _read_jsonl(path, TrainingSample)
    for sample in samples:
        validate_sample(sample)
    return samples
