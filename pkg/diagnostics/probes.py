"""
Lumen — Linear probes and the projection test.

Probes are L2-regularised logistic regressions (L-BFGS) on frozen
embeddings. Splitting into train / eval is always the caller's job.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Mapping, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field
from scipy.stats import rankdata
from sklearn.linear_model import LogisticRegression

from core.matrix import EmbeddingMatrix, LabelTable
from diagnostics.spectrum import DomainError

logger = logging.getLogger(__name__)

_DEFAULT_L2 = max(0.0, float(os.environ.get("PROBE_L2_STRENGTH", "1.0")))
_DEFAULT_MAX_ITER = max(1, int(os.environ.get("PROBE_MAX_ITERATIONS", "1000")))
_DEFAULT_TOL = float(os.environ.get("PROBE_TOL", "1e-8"))


class SingleClassError(ValueError):
    """Labels contain only one class."""


# ── Models ───────────────────────────────────────────────────────────────────

class ProbeConfig(BaseModel):
    # l2_strength = 1 / C; 0 disables the penalty.
    l2_strength: float = Field(_DEFAULT_L2, ge=0.0)
    max_iterations: int = Field(_DEFAULT_MAX_ITER, ge=1)
    class_balanced: bool = True
    convergence_tol: float = Field(_DEFAULT_TOL, gt=0.0)


class ProbeResult(BaseModel):
    finding: str
    auc: float = Field(ge=0.0, le=1.0)
    weights: list[float]
    bias: float
    converged: bool


class ProjectionTestResult(BaseModel):
    finding: str = ""
    k: int
    top_k_auc: float = Field(ge=0.0, le=1.0)
    tail_auc: float = Field(ge=0.0, le=1.0)
    delta: float


def _binary(labels: Sequence[int] | np.ndarray) -> np.ndarray:
    y = np.asarray(labels).astype(np.int64).ravel()
    if not np.isin(y, (0, 1)).all():
        raise ValueError("Labels must be binary 0/1.")
    return y


def _require_both_classes(y: np.ndarray, what: str) -> None:
    positives = int(y.sum())
    if positives == 0 or positives == y.size:
        raise SingleClassError(f"{what} labels contain a single class.")


# ── AUC ──────────────────────────────────────────────────────────────────────

def auc_roc(scores: Sequence[float] | np.ndarray, labels: Sequence[int] | np.ndarray) -> float:
    """
    Mann-Whitney AUC: probability a random positive outscores a random
    negative, tied pairs counting one half (mid-ranks).
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = _binary(labels)
    if s.size != y.size:
        raise ValueError(f"{s.size} scores for {y.size} labels.")
    _require_both_classes(y, "AUC")
    ranks = rankdata(s, method="average")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    rank_sum = float(ranks[y == 1].sum())
    auc = (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    return float(min(1.0, max(0.0, auc)))


# ── Probes ───────────────────────────────────────────────────────────────────

def _fit(x: np.ndarray, y: np.ndarray, cfg: ProbeConfig) -> tuple[LogisticRegression, bool]:
    if cfg.l2_strength > 0:
        clf = LogisticRegression(
            penalty="l2",
            C=1.0 / cfg.l2_strength,
            solver="lbfgs",
            max_iter=cfg.max_iterations,
            tol=cfg.convergence_tol,
            class_weight="balanced" if cfg.class_balanced else None,
        )
    else:
        clf = LogisticRegression(
            penalty=None,
            solver="lbfgs",
            max_iter=cfg.max_iterations,
            tol=cfg.convergence_tol,
            class_weight="balanced" if cfg.class_balanced else None,
        )
    clf.fit(x, y)
    converged = int(np.max(clf.n_iter_)) < cfg.max_iterations
    return clf, converged


def train_linear_probe(
    train: EmbeddingMatrix | np.ndarray,
    train_labels: Sequence[int] | np.ndarray,
    cfg: ProbeConfig,
    eval_data: EmbeddingMatrix | np.ndarray,
    eval_labels: Sequence[int] | np.ndarray,
    *,
    finding: str = "",
) -> ProbeResult:
    """Fit on the training split, report AUC on the evaluation split."""
    x_train = train.data if isinstance(train, EmbeddingMatrix) else np.asarray(train, dtype=np.float64)
    x_eval = eval_data.data if isinstance(eval_data, EmbeddingMatrix) else np.asarray(eval_data, dtype=np.float64)
    y_train = _binary(train_labels)
    y_eval = _binary(eval_labels)
    if x_train.shape[0] != y_train.size or x_eval.shape[0] != y_eval.size:
        raise ValueError("Embedding rows and labels are misaligned.")
    _require_both_classes(y_train, "Training")

    clf, converged = _fit(x_train, y_train, cfg)
    if not converged:
        logger.warning("Probe '%s' hit max_iterations=%d without converging", finding, cfg.max_iterations)
    scores = clf.decision_function(x_eval)
    return ProbeResult(
        finding=finding,
        auc=auc_roc(scores, y_eval),
        weights=clf.coef_[0].tolist(),
        bias=float(clf.intercept_[0]),
        converged=converged,
    )


def _principal_axes(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and all d principal directions (rows, descending variance)."""
    mean = x.mean(axis=0)
    centered = x - mean
    n, d = centered.shape
    _, _, vt = np.linalg.svd(centered, full_matrices=n < d)
    return mean, vt[:d]


def projection_test(
    train: EmbeddingMatrix | np.ndarray,
    train_labels: Sequence[int] | np.ndarray,
    eval_data: EmbeddingMatrix | np.ndarray,
    eval_labels: Sequence[int] | np.ndarray,
    k: int,
    cfg: ProbeConfig,
    *,
    finding: str = "",
) -> ProjectionTestResult:
    """
    Probe AUC on the top-k principal components versus the lower half of
    all components. A positive delta means the label lives in directions
    that carry little variance.
    """
    x_train = train.data if isinstance(train, EmbeddingMatrix) else np.asarray(train, dtype=np.float64)
    x_eval = eval_data.data if isinstance(eval_data, EmbeddingMatrix) else np.asarray(eval_data, dtype=np.float64)
    d = x_train.shape[1]
    if k < 1:
        raise ValueError("k must be at least 1.")
    if d < 2 * k:
        raise DomainError(f"projection_test needs d >= 2k (d={d}, k={k}).")

    mean, axes = _principal_axes(x_train)
    top = axes[:k]
    tail = axes[d - d // 2:]

    top_result = train_linear_probe(
        (x_train - mean) @ top.T, train_labels, cfg, (x_eval - mean) @ top.T, eval_labels, finding=finding
    )
    tail_result = train_linear_probe(
        (x_train - mean) @ tail.T, train_labels, cfg, (x_eval - mean) @ tail.T, eval_labels, finding=finding
    )
    return ProjectionTestResult(
        finding=finding,
        k=k,
        top_k_auc=top_result.auc,
        tail_auc=tail_result.auc,
        delta=tail_result.auc - top_result.auc,
    )


# ── Per-finding batteries ────────────────────────────────────────────────────

def _usable(y_train: np.ndarray, y_eval: np.ndarray) -> bool:
    return 0 < int(y_train.sum()) < y_train.size and 0 < int(y_eval.sum()) < y_eval.size


def probe_all_findings(
    train: EmbeddingMatrix,
    train_labels: Mapping[str, np.ndarray],
    eval_data: EmbeddingMatrix,
    eval_labels: Mapping[str, np.ndarray],
    cfg: ProbeConfig,
    *,
    threads: int = 1,
) -> list[ProbeResult]:
    """One independent probe per finding; findings lacking a class are skipped."""
    findings = [f for f in train_labels if _usable(_binary(train_labels[f]), _binary(eval_labels[f]))]
    skipped = [f for f in train_labels if f not in findings]
    if skipped:
        logger.warning("Skipping single-class findings: %s", ", ".join(skipped))

    def run(finding: str) -> ProbeResult:
        return train_linear_probe(train, train_labels[finding], cfg, eval_data, eval_labels[finding], finding=finding)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return list(pool.map(run, findings))


def projection_test_all(
    train: EmbeddingMatrix,
    train_labels: Mapping[str, np.ndarray],
    eval_data: EmbeddingMatrix,
    eval_labels: Mapping[str, np.ndarray],
    k: int,
    cfg: ProbeConfig,
    *,
    threads: int = 1,
) -> list[ProjectionTestResult]:
    findings = [f for f in train_labels if _usable(_binary(train_labels[f]), _binary(eval_labels[f]))]

    def run(finding: str) -> ProjectionTestResult:
        return projection_test(
            train, train_labels[finding], eval_data, eval_labels[finding], k, cfg, finding=finding
        )

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return list(pool.map(run, findings))


def category_mean_auc(
    results: Sequence[ProbeResult],
    groups: Mapping[str, Sequence[str]],
) -> dict[str, Optional[float]]:
    """Mean AUC per finding group plus the macro average over all results."""
    by_finding = {r.finding: r.auc for r in results}
    summary: dict[str, Optional[float]] = {}
    for group, findings in groups.items():
        aucs = [by_finding[f] for f in findings if f in by_finding]
        summary[group] = float(np.mean(aucs)) if aucs else None
    summary["macro"] = float(np.mean(list(by_finding.values()))) if by_finding else None
    return summary


def projection_summary(results: Sequence[ProjectionTestResult]) -> dict[str, float]:
    if not results:
        return {"top_k_auc": 0.0, "tail_auc": 0.0, "delta": 0.0}
    return {
        "top_k_auc": float(np.mean([r.top_k_auc for r in results])),
        "tail_auc": float(np.mean([r.tail_auc for r in results])),
        "delta": float(np.mean([r.delta for r in results])),
    }


# ── Splits ───────────────────────────────────────────────────────────────────

def train_eval_split(
    m: EmbeddingMatrix,
    labels: LabelTable,
    findings: Sequence[str],
    *,
    eval_fraction: float = 0.5,
    seed: int = 0,
) -> tuple[EmbeddingMatrix, dict[str, np.ndarray], EmbeddingMatrix, dict[str, np.ndarray]]:
    """
    Seeded split of the ids present in both the embeddings and the label
    table. Returns (train, train_labels, eval, eval_labels) with one label
    column per finding.
    """
    if not 0.0 < eval_fraction < 1.0:
        raise ValueError("eval_fraction must be in (0, 1).")
    ids = sorted(i for i in m.ids if i in labels)
    if len(ids) < 2:
        raise ValueError("Need at least two labelled embeddings to split.")
    order = np.random.default_rng(seed).permutation(len(ids))
    n_eval = min(len(ids) - 1, max(1, int(round(len(ids) * eval_fraction))))
    eval_ids = sorted(ids[i] for i in order[:n_eval])
    train_ids = sorted(ids[i] for i in order[n_eval:])
    train, eval_data = m.subset(train_ids), m.subset(eval_ids)
    return (
        train,
        {f: labels.column(f, train_ids) for f in findings},
        eval_data,
        {f: labels.column(f, eval_ids) for f in findings},
    )
