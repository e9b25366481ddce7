"""
Lumen — ``probe`` and ``project-test``: linear-probe diagnostics per finding.
"""

from __future__ import annotations

import argparse

from cli.config import RunConfig
from cli.options import resolve_findings
from cli.output import emit
from core.findings import FINDING_GROUPS
from core.io import load_embeddings, load_labels
from diagnostics.probes import (
    category_mean_auc,
    probe_all_findings,
    projection_summary,
    projection_test_all,
    train_eval_split,
)


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--embeddings", required=True, help=".aemb file of study embeddings.")
    parser.add_argument("--labels", required=True, help="Label CSV.")
    parser.add_argument("--findings", default="all", help="Comma list of findings (default: all).")
    parser.add_argument("--eval-fraction", type=float, default=0.5)
    parser.add_argument("--l2", dest="probe.l2_strength", type=float, help="L2 strength (1/C).")
    parser.add_argument("--max-iter", dest="probe.max_iterations", type=int)
    parser.add_argument("--out", help="Write results as JSON.")


def register(subparsers, parents: list[argparse.ArgumentParser]) -> None:
    probe = subparsers.add_parser("probe", parents=parents, help="Per-finding linear probes.")
    _common(probe)
    probe.set_defaults(handler=run_probe)

    project = subparsers.add_parser("project-test", parents=parents, help="Top-k vs tail-half projection test.")
    _common(project)
    project.add_argument("--k", dest="projection_k", type=int, default=2, help="Top components kept (default 2).")
    project.set_defaults(handler=run_projection)


def _split(args: argparse.Namespace, cfg: RunConfig):
    return train_eval_split(
        load_embeddings(args.embeddings),
        load_labels(args.labels),
        resolve_findings(args.findings),
        eval_fraction=args.eval_fraction,
        seed=cfg.seed,
    )


def run_probe(args: argparse.Namespace, cfg: RunConfig) -> int:
    train, train_labels, eval_data, eval_labels = _split(args, cfg)
    results = probe_all_findings(train, train_labels, eval_data, eval_labels, cfg.probe, threads=cfg.worker_count)
    for result in results:
        flag = "" if result.converged else "  ⚠️  not converged"
        print(f"{result.finding:<36} AUC {result.auc:.3f}{flag}")
    summary = category_mean_auc(results, FINDING_GROUPS)
    for group, auc in summary.items():
        print(f"{group:<36} mean {'-' if auc is None else f'{auc:.3f}'}")
    if args.out:
        emit({"results": results, "summary": summary}, args.out)
    return 0


def run_projection(args: argparse.Namespace, cfg: RunConfig) -> int:
    train, train_labels, eval_data, eval_labels = _split(args, cfg)
    results = projection_test_all(
        train, train_labels, eval_data, eval_labels, args.projection_k, cfg.probe, threads=cfg.worker_count
    )
    for result in results:
        print(
            f"{result.finding:<36} top{result.k} {result.top_k_auc:.3f}  "
            f"tail {result.tail_auc:.3f}  delta {result.delta:+.3f}"
        )
    summary = projection_summary(results)
    print(f"{'mean':<36} top {summary['top_k_auc']:.3f}  tail {summary['tail_auc']:.3f}  delta {summary['delta']:+.3f}")
    if args.out:
        emit({"results": results, "summary": summary}, args.out)
    return 0
