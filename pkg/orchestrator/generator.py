"""
Lumen — Generator contract, context items and the scripted mock generator.

A generator produces one sentence per call from the context so far. Empty
text ends the current organ section.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Protocol, Sequence, Union

from pydantic import BaseModel, ConfigDict, Field

from core.findings import INDEXED_ORGANS

RET_START = "<|ret_start|>"
RET_END = "<|ret_end|>"

VISUAL_STUB = "visual_stub"
GENERATED_SENTENCE = "generated_sentence"
INJECTED_CONTEXT = "injected_context"


class ContextItem(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["visual_stub", "generated_sentence", "injected_context"]
    payload: str


def wrap_context(sentences: Sequence[str]) -> str:
    return f"{RET_START} {' '.join(sentences)} {RET_END}"


class GeneratorInterface(Protocol):
    def next_sentence(self, context: Sequence[ContextItem]) -> tuple[str, bool, float]:
        """Return (text, emits_rag, perplexity); empty text ends the organ section."""
        ...


# ── Scripts ──────────────────────────────────────────────────────────────────

class ScriptEntry(BaseModel):
    text: str
    emits_rag: bool = False
    perplexity: float = Field(1.0, gt=0)


class DecodeScript(BaseModel):
    """Scripted generator input, one per study (``scripts/<study>.json``)."""

    study_id: Optional[str] = None
    organ_plan: list[str] = Field(default_factory=lambda: list(INDEXED_ORGANS))
    entries: list[ScriptEntry]
    overrides: dict[int, str] = Field(default_factory=dict)


def load_script(path: Union[str, Path]) -> DecodeScript:
    return DecodeScript.model_validate_json(Path(path).read_text(encoding="utf-8"))


def save_script(script: DecodeScript, path: Union[str, Path]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    payload = script.model_dump(mode="json")
    target.write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")
    return target


class ScriptedMockGenerator:
    """
    Replays a flat script. Once the script runs out it keeps returning "".

    A call is a regeneration when the last sentence it handed out was never
    committed to the context and the newest context item is injected
    context. Regenerations return the override for the report index if one
    exists, otherwise the original text, and never ask for retrieval.
    """

    def __init__(self, script: Sequence[ScriptEntry], overrides: Optional[dict[int, str]] = None):
        if not script:
            raise ValueError("Script must contain at least one entry.")
        self.script = list(script)
        self.overrides = dict(overrides or {})
        self._cursor = 0
        self._pending: Optional[tuple[int, ScriptEntry]] = None

    def next_sentence(self, context: Sequence[ContextItem]) -> tuple[str, bool, float]:
        committed = sum(1 for item in context if item.kind == GENERATED_SENTENCE)
        after_injection = bool(context) and context[-1].kind == INJECTED_CONTEXT

        if after_injection and self._pending is not None and self._pending[0] == committed:
            _, entry = self._pending
            self._pending = None
            return self.overrides.get(committed, entry.text), False, entry.perplexity

        if self._cursor >= len(self.script):
            return "", False, 1.0
        entry = self.script[self._cursor]
        self._cursor += 1
        if not entry.text:
            return "", False, entry.perplexity
        self._pending = (committed, entry)
        text = self.overrides.get(committed, entry.text) if after_injection else entry.text
        return text, entry.emits_rag, entry.perplexity


def scripted_mock_generator(
    script: Sequence[Union[ScriptEntry, tuple[str, bool, float]]],
    post_injection_overrides: Optional[dict[int, str]] = None,
) -> ScriptedMockGenerator:
    entries = [
        e if isinstance(e, ScriptEntry) else ScriptEntry(text=e[0], emits_rag=e[1], perplexity=e[2])
        for e in script
    ]
    return ScriptedMockGenerator(entries, post_injection_overrides)
