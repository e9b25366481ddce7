"""
Lumen — Deterministic synthetic corpus generator.

Studies get random finding sets; each present finding contributes one
templated sentence to its organ section, and a section without findings
gets one normal sentence. Text and image embeddings are built from
shared per-finding centroids plus noise, so label overlap tracks
embedding similarity. The manifest records every count and assignment.

Planted-signal modes replace the image embeddings with anisotropic
Gaussian noise (axis scales falling geometrically from 16 to 1) and plant
the label of one designated finding per organ:
  tail_dim   only in the lowest-variance coordinate
  isotropic  with equal effect in the highest- and lowest-variance
             coordinates; their within-class noise is anti-correlated so
             the label adds no covariance between them
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from core.findings import ALL_FINDINGS, INDEXED_ORGANS, OTHER, normalize_organ, organ_findings
from core.io import save_embeddings, save_labels, sidecar_path
from core.matrix import EmbeddingMatrix, LabelTable
from db.sentences import OrganParagraph, sentence_id, split_sentences, word_count
from embeddings import LookupTextEncoder, save_encoder
from orchestrator.generator import DecodeScript, ScriptEntry, save_script
from synthgen.templates import FINDING_TEMPLATES, NORMAL_TEMPLATES, realize
from trainprep.samples import PerplexityRecord, ReportRecord, ReportSentence

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1
TAIL_STRENGTH = 4.0
ISOTROPIC_STRENGTH = 1.8
_TOP_SCALE = 16.0


class SynthConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = Field(0, ge=0)
    n_studies: int = Field(100, ge=2)
    organs: list[str] = Field(default_factory=lambda: list(INDEXED_ORGANS))
    # Defaults to every finding of each configured organ.
    findings: Optional[dict[str, list[str]]] = None
    embed_dim_image: int = Field(64, ge=2)
    embed_dim_text: int = Field(64, ge=2)
    cluster_spread: float = Field(0.35, ge=0.0)
    finding_rate: float = Field(0.25, ge=0.0, le=1.0)
    planted_signal_mode: Literal["none", "tail_dim", "isotropic"] = "none"
    planted_prevalence: float = Field(0.5, gt=0.0, lt=1.0)

    @field_validator("organs")
    @classmethod
    def _known_organs(cls, value: list[str]) -> list[str]:
        organs = [normalize_organ(o) for o in value]
        if not organs or len(set(organs)) != len(organs):
            raise ValueError("organs must be a non-empty list without repeats.")
        return organs

    @model_validator(mode="after")
    def _known_findings(self) -> "SynthConfig":
        if self.findings is None:
            return self
        for organ, names in self.findings.items():
            if organ not in self.organs:
                raise ValueError(f"findings given for unconfigured organ '{organ}'.")
            unknown = [n for n in names if n not in organ_findings(organ)]
            if unknown:
                raise ValueError(f"Unknown {organ} findings: {', '.join(unknown)}.")
        return self

    def organ_group(self, organ: str) -> list[str]:
        if self.findings is not None:
            return list(self.findings.get(organ, []))
        return list(organ_findings(organ))


class OrganCount(BaseModel):
    organ: str
    sentences: int
    studies: int
    words: int


class SynthManifest(BaseModel):
    version: int = MANIFEST_VERSION
    config: SynthConfig
    studies: list[str]
    assignments: dict[str, list[str]]
    prevalence: dict[str, int]
    counts: list[OrganCount]
    total: OrganCount
    designated_findings: dict[str, str]
    index_sizes: dict[str, int]
    files: list[str] = Field(default_factory=list)

    def count(self, organ: str) -> OrganCount:
        for row in self.counts:
            if row.organ == organ:
                return row
        raise KeyError(organ)


@dataclass(frozen=True, eq=False)
class SynthCorpus:
    config: SynthConfig
    paragraphs: list[OrganParagraph]
    sentence_embeddings: EmbeddingMatrix
    image_embeddings: dict[str, EmbeddingMatrix]
    labels: LabelTable
    reports: list[ReportRecord]
    perplexities: list[PerplexityRecord]
    scripts: list[DecodeScript]
    encoder: LookupTextEncoder
    manifest: SynthManifest


# ── Generation ───────────────────────────────────────────────────────────────

def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def _axis_scales(dim: int) -> np.ndarray:
    return _TOP_SCALE ** (1.0 - np.arange(dim) / (dim - 1))


def _study_id(i: int) -> str:
    return f"study_{i:05d}"


class _Centroids:
    """Unit centroids per finding and per organ-normal phrase, in text and image space."""

    def __init__(self, cfg: SynthConfig, rng: np.random.Generator):
        self.text: dict[str, np.ndarray] = {}
        self.image: dict[str, np.ndarray] = {}
        shared = cfg.embed_dim_text == cfg.embed_dim_image
        keys = [f for organ in cfg.organs for f in cfg.organ_group(organ)] + [f"normal:{o}" for o in cfg.organs]
        for key in keys:
            self.text[key] = _unit(rng, cfg.embed_dim_text)
            self.image[key] = self.text[key] if shared else _unit(rng, cfg.embed_dim_image)

    def encoder(self, cfg: SynthConfig) -> LookupTextEncoder:
        phrases: dict[str, list[float]] = {}
        for key, vector in self.text.items():
            if key.startswith("normal:"):
                phrase = NORMAL_TEMPLATES[key.split(":", 1)[1]][0]
            else:
                phrase = FINDING_TEMPLATES[key][0]
            phrases[phrase] = vector.tolist()
        noise = cfg.cluster_spread / np.sqrt(cfg.embed_dim_text)
        return LookupTextEncoder(dim=cfg.embed_dim_text, phrases=phrases, noise=float(noise), seed=cfg.seed)


class _Study:
    def __init__(self, study_id: str):
        self.study_id = study_id
        self.findings: dict[str, list[str]] = {}
        self.sentences: dict[str, list[str]] = {}
        self.is_finding: dict[str, list[bool]] = {}
        self.alternates: dict[str, list[str]] = {}
        self.perplexities: dict[str, list[float]] = {}
        self.images: dict[str, np.ndarray] = {}


def _designated(cfg: SynthConfig) -> dict[str, str]:
    if cfg.planted_signal_mode == "none":
        return {}
    return {o: cfg.organ_group(o)[0] for o in cfg.organs if o in INDEXED_ORGANS and cfg.organ_group(o)}


def _generate_study(
    cfg: SynthConfig,
    study_id: str,
    rng: np.random.Generator,
    centroids: _Centroids,
    designated: dict[str, str],
) -> _Study:
    study = _Study(study_id)
    scales = _axis_scales(cfg.embed_dim_image)
    for organ in cfg.organs:
        group = cfg.organ_group(organ)
        rates = [cfg.planted_prevalence if designated.get(organ) == f else cfg.finding_rate for f in group]
        present = [f for f, rate in zip(group, rates) if rng.random() < rate]
        study.findings[organ] = present

        if present:
            sentences = [realize(FINDING_TEMPLATES[f][1], rng) for f in present]
            alternates = [realize(FINDING_TEMPLATES[f][1], rng) for f in present]
            perplexities = [6.0 + 4.0 * float(rng.random()) for _ in present]
            flags = [True] * len(present)
        else:
            sentences = [realize(NORMAL_TEMPLATES[organ][1], rng)]
            alternates = list(sentences)
            perplexities = [1.5 + 1.5 * float(rng.random())]
            flags = [False]
        study.sentences[organ] = sentences
        study.alternates[organ] = alternates
        study.perplexities[organ] = perplexities
        study.is_finding[organ] = flags

        if organ == OTHER:
            continue
        noise = rng.standard_normal(cfg.embed_dim_image)
        if cfg.planted_signal_mode == "none":
            image = centroids.image[f"normal:{organ}"] + sum(
                (centroids.image[f] for f in present), np.zeros(cfg.embed_dim_image)
            )
            image = image + cfg.cluster_spread / np.sqrt(cfg.embed_dim_image) * noise
        else:
            label = float(designated.get(organ) in present)
            if cfg.planted_signal_mode == "tail_dim":
                image = scales * noise
                image[-1] += TAIL_STRENGTH * scales[-1] * label
            else:
                p = cfg.planted_prevalence
                rho = -p * (1.0 - p) * ISOTROPIC_STRENGTH**2
                noise[-1] = rho * noise[0] + np.sqrt(1.0 - rho**2) * noise[-1]
                image = scales * noise
                image[0] += ISOTROPIC_STRENGTH * scales[0] * label
                image[-1] += ISOTROPIC_STRENGTH * scales[-1] * label
        study.images[organ] = image
    return study


def gen_synthetic_corpus(cfg: SynthConfig) -> SynthCorpus:
    """Pure function of the config; each study draws from its own spawned stream."""
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.n_studies + 1)
    centroids = _Centroids(cfg, np.random.default_rng(streams[0]))
    encoder = centroids.encoder(cfg)
    designated = _designated(cfg)
    study_ids = [_study_id(i) for i in range(cfg.n_studies)]
    studies = [
        _generate_study(cfg, sid, np.random.default_rng(streams[i + 1]), centroids, designated)
        for i, sid in enumerate(study_ids)
    ]

    paragraphs: list[OrganParagraph] = []
    reports: list[ReportRecord] = []
    perplexities: list[PerplexityRecord] = []
    scripts: list[DecodeScript] = []
    sentence_ids: list[str] = []
    sentence_vectors: list[np.ndarray] = []
    plan = [o for o in cfg.organs if o in INDEXED_ORGANS]

    for study in studies:
        report_sentences: list[ReportSentence] = []
        report_perplexities: list[float] = []
        for organ in cfg.organs:
            sentences = study.sentences[organ]
            paragraphs.append(OrganParagraph(study_id=study.study_id, organ=organ, text=" ".join(sentences)))
            for i, text in enumerate(sentences):
                sentence_ids.append(sentence_id(study.study_id, organ, i))
                sentence_vectors.append(encoder.encode(text))
                report_sentences.append(ReportSentence(organ=organ, text=text))
            report_perplexities.extend(study.perplexities[organ])
        reports.append(ReportRecord(study_id=study.study_id, sentences=report_sentences))
        perplexities.append(PerplexityRecord(study_id=study.study_id, perplexities=report_perplexities))
        scripts.append(_decode_script(study, plan))

    labels = LabelTable(
        ids=tuple(study_ids),
        findings=ALL_FINDINGS,
        matrix=np.array(
            [[int(f in sum(s.findings.values(), [])) for f in ALL_FINDINGS] for s in studies],
            dtype=np.int8,
        ).reshape(len(studies), len(ALL_FINDINGS)),
    )
    sentence_matrix = EmbeddingMatrix(ids=tuple(sentence_ids), data=np.vstack(sentence_vectors))
    image_matrices = {
        organ: EmbeddingMatrix(ids=tuple(study_ids), data=np.vstack([s.images[organ] for s in studies]))
        for organ in plan
    }
    manifest = _manifest(cfg, studies, designated)
    logger.info(
        "Generated %d studies, %d sentences (mode=%s)",
        cfg.n_studies,
        manifest.total.sentences,
        cfg.planted_signal_mode,
    )
    return SynthCorpus(
        config=cfg,
        paragraphs=paragraphs,
        sentence_embeddings=sentence_matrix,
        image_embeddings=image_matrices,
        labels=labels,
        reports=reports,
        perplexities=perplexities,
        scripts=scripts,
        encoder=encoder,
        manifest=manifest,
    )


def _decode_script(study: _Study, plan: list[str]) -> DecodeScript:
    """Finding sentences ask for retrieval; their alternates become post-injection overrides."""
    entries: list[ScriptEntry] = []
    overrides: dict[int, str] = {}
    position = 0
    for organ in plan:
        rows = zip(study.sentences[organ], study.alternates[organ], study.is_finding[organ], study.perplexities[organ])
        for text, alternate, is_finding, perplexity in rows:
            entries.append(ScriptEntry(text=text, emits_rag=is_finding, perplexity=perplexity))
            if is_finding:
                overrides[position] = alternate
            position += 1
        entries.append(ScriptEntry(text="", perplexity=1.0))
    return DecodeScript(study_id=study.study_id, organ_plan=plan, entries=entries, overrides=overrides)


def _manifest(cfg: SynthConfig, studies: list[_Study], designated: dict[str, str]) -> SynthManifest:
    counts: list[OrganCount] = []
    index_sizes: dict[str, int] = {}
    for organ in cfg.organs:
        sentences = [s for study in studies for s in split_sentences(" ".join(study.sentences[organ]))]
        counts.append(
            OrganCount(
                organ=organ,
                sentences=len(sentences),
                studies=sum(1 for study in studies if study.sentences[organ]),
                words=sum(word_count(s) for s in sentences),
            )
        )
        if organ in INDEXED_ORGANS:
            index_sizes[organ] = len(sentences)
    total = OrganCount(
        organ="total",
        sentences=sum(c.sentences for c in counts),
        studies=len(studies),
        words=sum(c.words for c in counts),
    )
    assignments = {s.study_id: [f for organ in cfg.organs for f in s.findings[organ]] for s in studies}
    prevalence = {f: sum(1 for a in assignments.values() if f in a) for f in ALL_FINDINGS}
    return SynthManifest(
        config=cfg,
        studies=[s.study_id for s in studies],
        assignments=assignments,
        prevalence=prevalence,
        counts=counts,
        total=total,
        designated_findings=designated,
        index_sizes=index_sizes,
    )


# ── Writing ──────────────────────────────────────────────────────────────────

def _write_jsonl(path: Path, rows: list[BaseModel]) -> None:
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for row in rows:
            handle.write(json.dumps(row.model_dump(mode="json"), sort_keys=True, ensure_ascii=False) + "\n")


def write_corpus(corpus: SynthCorpus, out_dir: Union[str, Path]) -> SynthManifest:
    """Write every corpus file plus ``manifest.json``; returns the manifest with its file list."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    files: list[Path] = []

    files.append(root / "paragraphs.jsonl")
    _write_jsonl(files[-1], corpus.paragraphs)
    files.append(save_embeddings(corpus.sentence_embeddings, root / "sentence_embeddings.aemb"))
    for organ, matrix in corpus.image_embeddings.items():
        files.append(save_embeddings(matrix, root / "image" / f"{organ}.aemb"))
    files.append(save_labels(corpus.labels, root / "labels.csv"))
    files.append(root / "reports.jsonl")
    _write_jsonl(files[-1], corpus.reports)
    files.append(root / "perplexities.jsonl")
    _write_jsonl(files[-1], corpus.perplexities)
    for script in corpus.scripts:
        files.append(save_script(script, root / "scripts" / f"{script.study_id}.json"))
    files.append(save_encoder(corpus.encoder, root / "text_encoder.json"))

    files += [sidecar_path(p) for p in files if p.suffix == ".aemb"]
    manifest = corpus.manifest.model_copy(
        update={"files": sorted(p.relative_to(root).as_posix() for p in files)}
    )
    (root / "manifest.json").write_text(
        json.dumps(manifest.model_dump(mode="json"), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest


def load_manifest(path: Union[str, Path]) -> SynthManifest:
    target = Path(path)
    if target.is_dir():
        target = target / "manifest.json"
    return SynthManifest.model_validate_json(target.read_text(encoding="utf-8"))
