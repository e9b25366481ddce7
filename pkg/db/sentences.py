"""
Lumen — Report sentence splitting and sentence records.

Organ paragraphs arrive already split by section; this module only
segments them into sentences and gives each one a stable id.
"""

from __future__ import annotations

import re
from typing import Optional

from pydantic import BaseModel, Field, field_validator

from core.findings import ALL_ORGANS, ORGAN_HEADERS

# Split after a full stop or semicolon that is followed by whitespace.
_SPLIT_PATTERN = re.compile(r"(?<=[.;])\s+")
_WORD_PATTERN = re.compile(r"\w")
_WHITESPACE = re.compile(r"\s+")
_HEADER_STRIP = re.compile(r"[^\w\s]")


def normalize_text(value: Optional[str]) -> str:
    """Collapse internal whitespace and trim."""
    if value is None:
        return ""
    return _WHITESPACE.sub(" ", str(value)).strip()


def _is_bare_header(fragment: str) -> bool:
    bare = _HEADER_STRIP.sub("", fragment).strip().lower()
    return bare in ORGAN_HEADERS


def split_sentences(paragraph: str) -> list[str]:
    """
    Segment on '.' or ';' followed by whitespace.

    Fragments with no word characters (pure punctuation) and bare organ
    headers such as ``Lungs:`` are dropped.
    """
    text = normalize_text(paragraph)
    if not text:
        return []
    sentences: list[str] = []
    for fragment in _SPLIT_PATTERN.split(text):
        fragment = fragment.strip()
        if not fragment or not _WORD_PATTERN.search(fragment):
            continue
        if _is_bare_header(fragment):
            continue
        sentences.append(fragment)
    return sentences


def sentence_id(study_id: str, organ: str, index: int) -> str:
    return f"{study_id}:{organ}:{index:03d}"


def word_count(text: str) -> int:
    return len(text.split())


# ── Records ──────────────────────────────────────────────────────────────────

class OrganParagraph(BaseModel):
    study_id: str = Field(min_length=1)
    organ: str
    text: str

    @field_validator("organ")
    @classmethod
    def _organ_known(cls, value: str) -> str:
        organ = value.strip().lower()
        if organ not in ALL_ORGANS:
            raise ValueError(f"Unknown organ '{value}'.")
        return organ


class SentenceRecord(BaseModel):
    sentence_id: str
    study_id: str
    organ: str
    text: str = Field(min_length=1)
    findings: list[str] = Field(default_factory=list)
    has_embedding: bool = False

    @field_validator("organ")
    @classmethod
    def _organ_known(cls, value: str) -> str:
        if value not in ALL_ORGANS:
            raise ValueError(f"Unknown organ '{value}'.")
        return value
