"""
Lumen — Query-text encoders.

Retrieval needs an embedding for text the generator drafts at decode time.
Two encoders share one interface:

  - RemoteTextEncoder: an OpenAI-compatible embeddings endpoint serving the
    sentence encoder the database was built with.
  - LookupTextEncoder: deterministic phrase-centroid encoder written by the
    synthetic corpus generator (``text_encoder.json``).
"""

from __future__ import annotations

import hashlib
import json
import os
from functools import lru_cache
from pathlib import Path
from typing import Protocol, Union

import numpy as np
from openai import OpenAI


class QueryEncoder(Protocol):
    dim: int

    def encode(self, text: str) -> np.ndarray:
        ...


# ── Remote encoder ───────────────────────────────────────────────────────────

_CLIENT: OpenAI | None = None


def _get_client() -> OpenAI:
    """Return a shared OpenAI client pointed at the configured endpoint."""
    global _CLIENT
    if _CLIENT is None:
        _CLIENT = OpenAI(
            api_key=os.environ.get("EMBEDDING_API_KEY") or os.environ.get("OPENAI_API_KEY"),
            base_url=os.environ.get("EMBEDDING_BASE_URL", "https://api.deepinfra.com/v1/openai"),
        )
    return _CLIENT


def _get_model() -> str:
    return os.environ.get("EMBEDDING_MODEL", "microsoft/BiomedVLP-CXR-BERT-specialized")


def _get_dimensions() -> int:
    return int(os.environ.get("EMBEDDING_DIMENSIONS", "512"))


_EMBEDDING_CACHE_SIZE = int(os.environ.get("EMBEDDING_CACHE_SIZE", "256"))


@lru_cache(maxsize=_EMBEDDING_CACHE_SIZE)
def _get_embedding_cached(text: str, model: str, dimensions: int) -> tuple:
    """Cache exact query embeddings; decoding re-asks for the same drafts."""
    response = _get_client().embeddings.create(
        model=model,
        input=text,
        dimensions=dimensions,
    )
    return tuple(response.data[0].embedding)


class RemoteTextEncoder:
    def __init__(self, model: str | None = None, dimensions: int | None = None):
        self.model = model or _get_model()
        self.dim = dimensions or _get_dimensions()

    def encode(self, text: str) -> np.ndarray:
        text = text.strip()
        if not text:
            raise ValueError("Cannot embed empty text.")
        vector = np.asarray(_get_embedding_cached(text, self.model, self.dim), dtype=np.float64)
        if vector.size != self.dim:
            raise ValueError(f"Endpoint returned dim {vector.size}, expected {self.dim}.")
        return vector


# ── Lookup encoder ───────────────────────────────────────────────────────────

def _text_seed(text: str, seed: int) -> int:
    digest = hashlib.sha256(f"{seed}\x00{text}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class LookupTextEncoder:
    """
    Sum of the centroids of every key phrase found in the lower-cased text,
    plus text-seeded Gaussian noise. Same text, same vector.
    """

    def __init__(self, dim: int, phrases: dict[str, list[float]], noise: float, seed: int):
        self.dim = dim
        self.noise = noise
        self.seed = seed
        # Longest phrases first so "pericardial effusion" wins over "effusion".
        self.phrases = sorted(
            ((phrase.lower(), np.asarray(vec, dtype=np.float64)) for phrase, vec in phrases.items()),
            key=lambda item: (-len(item[0]), item[0]),
        )

    def encode(self, text: str) -> np.ndarray:
        lowered = " ".join(text.lower().split())
        vector = np.zeros(self.dim, dtype=np.float64)
        for phrase, centroid in self.phrases:
            if phrase in lowered:
                vector += centroid
                lowered = lowered.replace(phrase, " ")
        rng = np.random.default_rng(_text_seed(text.strip(), self.seed))
        vector += self.noise * rng.standard_normal(self.dim)
        return vector

    def to_dict(self) -> dict:
        return {
            "kind": "lookup",
            "dim": self.dim,
            "noise": self.noise,
            "seed": self.seed,
            "phrases": {phrase: vec.tolist() for phrase, vec in sorted(self.phrases)},
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "LookupTextEncoder":
        return cls(
            dim=int(payload["dim"]),
            phrases={k: list(v) for k, v in payload["phrases"].items()},
            noise=float(payload["noise"]),
            seed=int(payload["seed"]),
        )


def save_encoder(encoder: LookupTextEncoder, path: Union[str, Path]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(encoder.to_dict(), sort_keys=True) + "\n", encoding="utf-8")
    return target


def load_encoder(source: Union[str, Path]) -> QueryEncoder:
    """``remote`` selects the endpoint encoder; anything else is a lookup-encoder file."""
    if str(source) == "remote":
        return RemoteTextEncoder()
    payload = json.loads(Path(source).read_text(encoding="utf-8"))
    if payload.get("kind") != "lookup":
        raise ValueError(f"{source}: unknown encoder kind '{payload.get('kind')}'.")
    return LookupTextEncoder.from_dict(payload)
