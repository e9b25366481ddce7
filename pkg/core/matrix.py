"""
Lumen — Embedding and label containers plus the vector primitives every
other module builds on.

Matrices are held as read-only float64 arrays. Files store float32; the
extra precision only matters for the spectrum arithmetic downstream.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)


# ── Errors ───────────────────────────────────────────────────────────────────

class DuplicateIdError(ValueError):
    """Two rows share an identifier."""


class NonFiniteError(ValueError):
    """A matrix contains NaN or infinite values."""


class LabelTableError(ValueError):
    """A label table is malformed (non-binary values, misaligned columns)."""


class ZeroNormError(ValueError):
    """Cosine similarity requested for a zero vector."""


def _check_unique(ids: Sequence[str], what: str) -> None:
    seen: set[str] = set()
    dupes: list[str] = []
    for record_id in ids:
        if record_id in seen:
            dupes.append(record_id)
        seen.add(record_id)
    if dupes:
        raise DuplicateIdError(f"Duplicate {what} ids: {sorted(set(dupes))[:10]}")


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


# ── Containers ───────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """Row-aligned ids plus an n×d float64 matrix."""

    ids: tuple[str, ...]
    data: np.ndarray
    _positions: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        ids = tuple(str(i) for i in self.ids)
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.ndim != 2:
            raise ValueError(f"Embedding data must be 2-D, got shape {data.shape}.")
        if data.shape[1] < 1:
            raise ValueError("Embedding dimension must be positive.")
        if len(ids) != data.shape[0]:
            raise ValueError(f"{len(ids)} ids for {data.shape[0]} rows.")
        if not np.isfinite(data).all():
            raise NonFiniteError("Embedding matrix contains non-finite values.")
        _check_unique(ids, "embedding")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "_positions", {record_id: i for i, record_id in enumerate(ids)})

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def __len__(self) -> int:
        return self.n

    def __contains__(self, record_id: object) -> bool:
        return record_id in self._positions

    def index_of(self, record_id: str) -> int:
        return self._positions[record_id]

    def row(self, record_id: str) -> np.ndarray:
        return self.data[self._positions[record_id]]

    def subset(self, ids: Iterable[str]) -> "EmbeddingMatrix":
        wanted = list(ids)
        rows = [self._positions[record_id] for record_id in wanted]
        return EmbeddingMatrix(ids=tuple(wanted), data=self.data[rows].reshape(len(rows), self.dim))

    def equals(self, other: "EmbeddingMatrix") -> bool:
        """Bitwise equality of ids and data."""
        return (
            self.ids == other.ids
            and self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
        )


@dataclass(frozen=True, eq=False)
class LabelTable:
    """Binary finding labels, one row per record id."""

    ids: tuple[str, ...]
    findings: tuple[str, ...]
    matrix: np.ndarray
    _positions: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        ids = tuple(str(i) for i in self.ids)
        findings = tuple(str(f) for f in self.findings)
        matrix = np.array(self.matrix, dtype=np.int8, copy=True).reshape(len(ids), len(findings))
        if not np.isin(matrix, (0, 1)).all():
            raise LabelTableError("Label values must be 0 or 1.")
        _check_unique(ids, "label")
        if len(set(findings)) != len(findings):
            raise LabelTableError("Duplicate finding columns.")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "findings", findings)
        object.__setattr__(self, "matrix", _frozen(matrix))
        object.__setattr__(self, "_positions", {record_id: i for i, record_id in enumerate(ids)})

    def __contains__(self, record_id: object) -> bool:
        return record_id in self._positions

    def column(self, finding: str, ids: Optional[Sequence[str]] = None) -> np.ndarray:
        """Binary column for one finding, optionally re-ordered to ``ids``."""
        col = self.matrix[:, self.findings.index(finding)]
        if ids is None:
            return col.copy()
        return np.array([col[self._positions[record_id]] for record_id in ids], dtype=np.int8)

    def positives(self, record_id: str, subset: Optional[Iterable[str]] = None) -> frozenset[str]:
        """Finding names set to 1 for ``record_id``, restricted to ``subset`` when given."""
        if record_id not in self._positions:
            return frozenset()
        row = self.matrix[self._positions[record_id]]
        allowed = None if subset is None else set(subset)
        return frozenset(
            name
            for name, value in zip(self.findings, row)
            if value and (allowed is None or name in allowed)
        )


# ── Vector primitives ────────────────────────────────────────────────────────

def l2_normalize(m: EmbeddingMatrix) -> tuple[EmbeddingMatrix, list[str]]:
    """
    Scale every nonzero row to unit Euclidean norm.

    Zero rows come back unchanged; their ids are returned so callers can
    decide what a degenerate embedding means for them.
    """
    norms = np.linalg.norm(m.data, axis=1)
    zero_mask = norms == 0.0
    safe = np.where(zero_mask, 1.0, norms)
    normalized = m.data / safe[:, None]
    zero_ids = [record_id for record_id, is_zero in zip(m.ids, zero_mask) if is_zero]
    if zero_ids:
        logger.warning("l2_normalize: %d zero row(s) left unnormalized", len(zero_ids))
    return EmbeddingMatrix(ids=m.ids, data=normalized), zero_ids


def normalize_vector(v: np.ndarray) -> np.ndarray:
    vec = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        raise ZeroNormError("Cannot normalize a zero vector.")
    return vec / norm


def cosine_sim(a: np.ndarray, b: np.ndarray) -> float:
    """dot(a, b) / (|a||b|)."""
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise ValueError(f"Dimension mismatch: {va.shape} vs {vb.shape}.")
    norm_a = np.linalg.norm(va)
    norm_b = np.linalg.norm(vb)
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroNormError("cosine_sim is undefined for zero-norm input.")
    score = float(np.dot(va / norm_a, vb / norm_b))
    return max(-1.0, min(1.0, score))


def mean_center(m: EmbeddingMatrix) -> tuple[EmbeddingMatrix, np.ndarray]:
    """Subtract the column means; returns the centered matrix and the mean."""
    if m.n < 1:
        raise ValueError("mean_center needs at least one row.")
    mean = m.data.mean(axis=0)
    return EmbeddingMatrix(ids=m.ids, data=m.data - mean), mean
