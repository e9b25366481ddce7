"""
Lumen — Organ-indexed sentence database.

Builds the per-organ text and image indices from organ paragraphs, sentence
embeddings, organ image embeddings and study labels; answers exact k-NN
queries; reports per-organ statistics; persists to a directory.

Sentences of the "other" section are stored and counted but never indexed.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel

from core.findings import ALL_ORGANS, INDEXED_ORGANS, OTHER, UnknownOrganError, normalize_organ, organ_findings
from core.io import load_embeddings, load_labels, save_embeddings, save_labels
from core.matrix import EmbeddingMatrix, LabelTable
from db.index import FlatIndex
from db.sentences import OrganParagraph, SentenceRecord, sentence_id, split_sentences, word_count

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DB_FORMAT_VERSION = 1
TEXT = "text"
IMAGE = "image"
SPACES = (TEXT, IMAGE)


class DatabaseBuildError(ValueError):
    """Inputs do not line up; ``offenders`` lists the unresolved ids."""

    def __init__(self, message: str, offenders: Sequence[str] = ()):
        super().__init__(message)
        self.offenders = list(offenders)


class UnknownQueryError(ValueError):
    """A stored-query id names neither an indexed sentence nor an embedded study."""


# ── Stats models ─────────────────────────────────────────────────────────────

class OrganStats(BaseModel):
    organ: str
    sentences: int = 0
    studies: int = 0
    words: int = 0
    avg_sentences_per_study: float = 0.0
    avg_words_per_sentence: float = 0.0


class DatabaseStats(BaseModel):
    organs: list[OrganStats]
    total: OrganStats

    def organ(self, name: str) -> OrganStats:
        for row in self.organs:
            if row.organ == name:
                return row
        raise UnknownOrganError(f"No stats row for organ '{name}'.")


def _organ_stats(organ: str, sentences: int, studies: int, words: int) -> OrganStats:
    return OrganStats(
        organ=organ,
        sentences=sentences,
        studies=studies,
        words=words,
        avg_sentences_per_study=sentences / studies if studies else 0.0,
        avg_words_per_sentence=words / sentences if sentences else 0.0,
    )


# ── Database ─────────────────────────────────────────────────────────────────

class SentenceDB:
    """Frozen sentence database. Safe for concurrent reads."""

    def __init__(
        self,
        records: Sequence[SentenceRecord],
        sentence_embeddings: EmbeddingMatrix,
        image_embeddings: Mapping[str, EmbeddingMatrix],
        labels: LabelTable,
    ):
        self.records: tuple[SentenceRecord, ...] = tuple(records)
        self.sentence_embeddings = sentence_embeddings
        self.image_embeddings: dict[str, EmbeddingMatrix] = {o: image_embeddings[o] for o in sorted(image_embeddings)}
        self.labels = labels
        self._by_id = {r.sentence_id: r for r in self.records}

        self.study_to_sentences: dict[tuple[str, str], list[str]] = {}
        for record in self.records:
            self.study_to_sentences.setdefault((record.study_id, record.organ), []).append(record.sentence_id)

        self.text_index: dict[str, FlatIndex] = {}
        for organ in INDEXED_ORGANS:
            indexed = [r for r in self.records if r.organ == organ and r.has_embedding]
            ids = [r.sentence_id for r in indexed]
            self.text_index[organ] = FlatIndex.from_matrix(
                sentence_embeddings.subset(ids) if ids else EmbeddingMatrix(ids=(), data=np.zeros((0, sentence_embeddings.dim))),
                groups=[r.study_id for r in indexed],
            )
        self.image_index: dict[str, FlatIndex] = {
            organ: FlatIndex.from_matrix(matrix) for organ, matrix in self.image_embeddings.items()
        }

    # ── lookups ──

    def record(self, sentence_id_: str) -> SentenceRecord:
        return self._by_id[sentence_id_]

    def __contains__(self, sentence_id_: object) -> bool:
        return sentence_id_ in self._by_id

    @property
    def text_dim(self) -> int:
        return self.sentence_embeddings.dim

    def studies(self) -> list[str]:
        return sorted({r.study_id for r in self.records} | set(self.labels.ids))

    def organ_sentences(self, study_id: str, organ: str, *, indexed_only: bool = True) -> list[str]:
        ids = self.study_to_sentences.get((study_id, organ), [])
        if not indexed_only:
            return list(ids)
        index = self.text_index.get(organ)
        return [i for i in ids if index is not None and i in index]

    def index(self, organ: str, space: str) -> FlatIndex:
        organ = normalize_organ(organ, indexed_only=True)
        if space == TEXT:
            return self.text_index[organ]
        if space == IMAGE:
            if organ not in self.image_index:
                raise UnknownOrganError(f"No image index for organ '{organ}'.")
            return self.image_index[organ]
        raise ValueError(f"Unknown space '{space}'. Allowed values: {', '.join(SPACES)}.")

    def study_findings(self, study_id: str, organ: str) -> frozenset[str]:
        return self.labels.positives(study_id, organ_findings(organ))

    def knn(
        self,
        organ: str,
        space: str,
        query: np.ndarray,
        k: int,
        exclude_study: Optional[str] = None,
    ) -> list[tuple[str, float]]:
        return self.index(organ, space).search(query, k, exclude_group=exclude_study)


def knn(
    db: SentenceDB,
    organ: str,
    space: str,
    query: np.ndarray,
    k: int,
    exclude_study: Optional[str] = None,
) -> list[tuple[str, float]]:
    """Exact top-k by cosine; ties by ascending id; ``exclude_study`` rows dropped first."""
    return db.knn(organ, space, query, k, exclude_study=exclude_study)


def knn_by_id(
    db: SentenceDB,
    organ: str,
    record_id: str,
    k: int,
) -> tuple[str, list[tuple[str, float]]]:
    """
    k-NN seeded by a stored vector. A sentence id searches the organ's text
    index, a study id its image index; the owning study is always excluded.
    Returns the space searched and the hits.
    """
    organ = normalize_organ(organ, indexed_only=True)
    text_index = db.index(organ, TEXT)
    if record_id in text_index:
        return TEXT, db.knn(organ, TEXT, text_index.vector(record_id), k, exclude_study=text_index.group_of(record_id))
    matrix = db.image_embeddings.get(organ)
    if matrix is not None and record_id in matrix:
        return IMAGE, db.knn(organ, IMAGE, matrix.row(record_id), k, exclude_study=record_id)
    raise UnknownQueryError(f"'{record_id}' is neither an indexed {organ} sentence nor a study with a {organ} image.")


# ── Build ────────────────────────────────────────────────────────────────────

def _split_paragraphs(paragraphs: Iterable[OrganParagraph], labels: LabelTable) -> list[SentenceRecord]:
    counters: dict[tuple[str, str], int] = {}
    records: list[SentenceRecord] = []
    for paragraph in paragraphs:
        key = (paragraph.study_id, paragraph.organ)
        group = organ_findings(paragraph.organ)
        findings = [f for f in group if f in labels.positives(paragraph.study_id, group)]
        for text in split_sentences(paragraph.text):
            index = counters.get(key, 0)
            counters[key] = index + 1
            records.append(
                SentenceRecord(
                    sentence_id=sentence_id(paragraph.study_id, paragraph.organ, index),
                    study_id=paragraph.study_id,
                    organ=paragraph.organ,
                    text=text,
                    findings=findings,
                )
            )
    return records


def build_database(
    organ_paragraphs: Iterable[OrganParagraph],
    sentence_embeddings: EmbeddingMatrix,
    image_embeddings: Mapping[str, EmbeddingMatrix],
    labels: LabelTable,
) -> SentenceDB:
    """
    Split paragraphs into sentences, attach organ-restricted study labels
    and freeze per-organ indices. Embedding ids that resolve to no
    sentence or study are reported all at once.
    """
    records = _split_paragraphs(organ_paragraphs, labels)
    sentence_ids = {r.sentence_id for r in records}
    studies = {r.study_id for r in records} | set(labels.ids)

    offenders = [i for i in sentence_embeddings.ids if i not in sentence_ids]
    for organ, matrix in image_embeddings.items():
        if normalize_organ(organ) == OTHER or organ not in INDEXED_ORGANS:
            raise UnknownOrganError(f"Image embeddings given for non-indexed organ '{organ}'.")
        offenders.extend(f"{organ}/{i}" for i in matrix.ids if i not in studies)
    if offenders:
        raise DatabaseBuildError(
            f"{len(offenders)} embedding id(s) do not resolve to a sentence or study.", offenders
        )

    records = [r.model_copy(update={"has_embedding": r.sentence_id in sentence_embeddings}) for r in records]
    embedded = [r.sentence_id for r in records if r.has_embedding]
    missing = len(records) - len(embedded)
    if missing:
        logger.warning("%d sentence(s) have no embedding and stay out of the indices", missing)
    db = SentenceDB(records, sentence_embeddings.subset(embedded) if embedded else sentence_embeddings.subset([]), image_embeddings, labels)
    logger.info(
        "Built sentence DB: %d sentences, %s",
        len(records),
        ", ".join(f"{o}={len(db.text_index[o])}" for o in INDEXED_ORGANS),
    )
    return db


# ── Stats ────────────────────────────────────────────────────────────────────

def db_stats(db: SentenceDB) -> DatabaseStats:
    """Per-organ sentence counts, study counts and averages, plus totals."""
    rows: list[OrganStats] = []
    all_studies: set[str] = set()
    total_sentences = 0
    total_words = 0
    for organ in ALL_ORGANS:
        records = [r for r in db.records if r.organ == organ]
        studies = {r.study_id for r in records}
        words = sum(word_count(r.text) for r in records)
        rows.append(_organ_stats(organ, len(records), len(studies), words))
        all_studies |= studies
        total_sentences += len(records)
        total_words += words
    return DatabaseStats(organs=rows, total=_organ_stats("total", total_sentences, len(all_studies), total_words))


def stats_table(stats: DatabaseStats) -> str:
    header = f"{'organ':<10} {'sentences':>10} {'studies':>8} {'sents/study':>12} {'words/sent':>11}"
    lines = [header, "-" * len(header)]
    for row in [*stats.organs, stats.total]:
        lines.append(
            f"{row.organ:<10} {row.sentences:>10,} {row.studies:>8,} "
            f"{row.avg_sentences_per_study:>12.2f} {row.avg_words_per_sentence:>11.1f}"
        )
    return "\n".join(lines)


# ── Persistence ──────────────────────────────────────────────────────────────

def load_paragraphs(path: PathLike) -> list[OrganParagraph]:
    paragraphs: list[OrganParagraph] = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                paragraphs.append(OrganParagraph.model_validate_json(line))
    return paragraphs


def save_database(db: SentenceDB, directory: PathLike) -> Path:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "sentences.jsonl", "w", encoding="utf-8", newline="\n") as f:
        for record in db.records:
            f.write(record.model_dump_json() + "\n")
    save_embeddings(db.sentence_embeddings, root / "sentence_embeddings.aemb")
    for organ, matrix in db.image_embeddings.items():
        save_embeddings(matrix, root / IMAGE / f"{organ}.aemb")
    save_labels(db.labels, root / "labels.csv")
    meta = {
        "format": DB_FORMAT_VERSION,
        "sentences": len(db.records),
        "text_dim": db.text_dim,
        "image_dims": {organ: m.dim for organ, m in db.image_embeddings.items()},
    }
    (root / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return root


def load_database(directory: PathLike) -> SentenceDB:
    root = Path(directory)
    meta = json.loads((root / "meta.json").read_text(encoding="utf-8"))
    if meta.get("format") != DB_FORMAT_VERSION:
        raise DatabaseBuildError(f"{root}: unsupported database format {meta.get('format')}.")
    records: list[SentenceRecord] = []
    with open(root / "sentences.jsonl", "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                records.append(SentenceRecord.model_validate_json(line))
    image = {organ: load_embeddings(root / IMAGE / f"{organ}.aemb") for organ in meta.get("image_dims", {})}
    return SentenceDB(records, load_embeddings(root / "sentence_embeddings.aemb"), image, load_labels(root / "labels.csv"))
