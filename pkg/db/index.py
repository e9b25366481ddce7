"""
Lumen — Exact flat cosine index.

Rows are stored L2-normalised and sorted by id, so cosine is a dot
product and a stable sort on descending score breaks ties by ascending id.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from core.matrix import EmbeddingMatrix, l2_normalize, normalize_vector


class DimensionMismatchError(ValueError):
    """Query dimension differs from the index dimension."""


class FlatIndex:
    """Frozen exact-search index over unit vectors."""

    def __init__(self, ids: Sequence[str], vectors: np.ndarray, groups: Optional[Sequence[str]] = None, dim: Optional[int] = None):
        order = sorted(range(len(ids)), key=lambda i: ids[i])
        matrix = np.asarray(vectors, dtype=np.float64)
        if matrix.size == 0:
            width = dim if dim is not None else (matrix.shape[1] if matrix.ndim == 2 else 0)
            matrix = np.zeros((0, width), dtype=np.float64)
        else:
            matrix = matrix[order]
        self.ids: tuple[str, ...] = tuple(ids[i] for i in order)
        # group = owning study; rows of a group can be excluded from a search.
        source_groups = list(groups) if groups is not None else list(ids)
        self.groups: np.ndarray = np.array([source_groups[i] for i in order], dtype=object)
        self.vectors = matrix
        self.vectors.setflags(write=False)
        self._positions = {record_id: i for i, record_id in enumerate(self.ids)}

    @classmethod
    def from_matrix(cls, m: EmbeddingMatrix, groups: Optional[Sequence[str]] = None) -> "FlatIndex":
        normalized, _ = l2_normalize(m)
        return cls(list(normalized.ids), normalized.data, groups=groups, dim=m.dim)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, record_id: object) -> bool:
        return record_id in self._positions

    def vector(self, record_id: str) -> np.ndarray:
        return self.vectors[self._positions[record_id]]

    def group_of(self, record_id: str) -> str:
        return self.groups[self._positions[record_id]]

    def scores(self, query: np.ndarray) -> np.ndarray:
        q = np.asarray(query, dtype=np.float64).ravel()
        if q.size != self.dim:
            raise DimensionMismatchError(f"Query has dim {q.size}, index has dim {self.dim}.")
        return self.vectors @ normalize_vector(q)

    def search(
        self,
        query: np.ndarray,
        k: int,
        *,
        exclude_group: Optional[str] = None,
    ) -> list[tuple[str, float]]:
        """Top-k (id, cosine) pairs, scores descending, ties by ascending id."""
        if k < 1:
            raise ValueError("k must be at least 1.")
        if np.asarray(query).size != self.dim:
            raise DimensionMismatchError(f"Query has dim {np.asarray(query).size}, index has dim {self.dim}.")
        if len(self) == 0:
            return []
        scores = self.scores(query)
        eligible = np.arange(len(self.ids))
        if exclude_group is not None:
            eligible = eligible[self.groups != exclude_group]
        order = eligible[np.argsort(-scores[eligible], kind="stable")]
        return [(self.ids[i], float(scores[i])) for i in order[:k]]
