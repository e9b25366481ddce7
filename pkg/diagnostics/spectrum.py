"""
Lumen — PCA spectrum metrics.

SVD of the mean-centred data is the primary path. Squared singular values
equal (n-1)·eigenvalues of the sample covariance; the factor cancels in
every fraction reported here.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
from pydantic import BaseModel

from core.matrix import EmbeddingMatrix, mean_center

_CUMSUM_TOL = 1e-12


class InsufficientDataError(ValueError):
    """Too few rows to estimate a spectrum."""


class DomainError(ValueError):
    """Input outside the metric's domain (e.g. all-zero spectrum)."""


class SpectrumReport(BaseModel):
    name: str = ""
    n_samples: int
    total_dim: int
    singular_values: list[float]
    variance_fractions: list[float]
    dim90: int
    dim95: int
    participation_ratio: float


def effective_dims(variance_fractions: Sequence[float], threshold: float) -> int:
    """Smallest k whose cumulative variance fraction reaches ``threshold``."""
    fractions = np.asarray(variance_fractions, dtype=np.float64)
    if fractions.size == 0:
        raise ValueError("effective_dims needs at least one variance fraction.")
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}.")
    total = fractions.sum()
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"variance fractions must sum to 1, got {total:.8f}.")
    cumulative = np.cumsum(fractions)
    reached = np.nonzero(cumulative >= threshold - _CUMSUM_TOL)[0]
    if reached.size == 0:
        return int(fractions.size)
    return int(reached[0]) + 1


def participation_ratio(singular_values: Iterable[float]) -> float:
    """(Σσ²)² / Σσ⁴."""
    sigma = np.asarray(list(singular_values), dtype=np.float64)
    if sigma.size == 0 or not np.any(sigma > 0):
        raise DomainError("participation_ratio needs at least one positive singular value.")
    squares = sigma ** 2
    return float(squares.sum() ** 2 / np.sum(squares ** 2))


def pca_spectrum(m: EmbeddingMatrix, name: str = "") -> SpectrumReport:
    """Full spectrum report of one embedding space."""
    if m.n < 2:
        raise InsufficientDataError(f"pca_spectrum needs n >= 2 rows, got {m.n}.")
    centered, _ = mean_center(m)
    sigma = np.linalg.svd(centered.data, compute_uv=False)
    # min(n, d) values come back; the remaining directions carry no variance.
    if sigma.size < m.dim:
        sigma = np.concatenate([sigma, np.zeros(m.dim - sigma.size)])
    sigma = np.sort(np.clip(sigma, 0.0, None))[::-1]
    squares = sigma ** 2
    total = squares.sum()
    if total <= 0.0:
        raise DomainError("All rows are identical; the spectrum is empty.")
    fractions = squares / total
    return SpectrumReport(
        name=name,
        n_samples=m.n,
        total_dim=m.dim,
        singular_values=sigma.tolist(),
        variance_fractions=fractions.tolist(),
        dim90=effective_dims(fractions, 0.90),
        dim95=effective_dims(fractions, 0.95),
        participation_ratio=participation_ratio(sigma),
    )


def spectrum_table(reports: Sequence[SpectrumReport]) -> str:
    """Plain-text table: name, total dim, dim90, dim95, PR."""
    header = f"{'embedding':<32} {'dim':>6} {'dim90':>6} {'dim95':>6} {'PR':>8}"
    lines = [header, "-" * len(header)]
    for report in reports:
        lines.append(
            f"{report.name:<32} {report.total_dim:>6} {report.dim90:>6} "
            f"{report.dim95:>6} {report.participation_ratio:>8.2f}"
        )
    return "\n".join(lines)
