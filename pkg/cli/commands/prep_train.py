"""
Lumen — ``prep-train``: oracle-mixed [RAG] supervision samples.
"""

from __future__ import annotations

import argparse

from cli.commands.retrieve import add_retrieval_flags
from cli.config import RunConfig
from db.connection import get_db
from embeddings import load_encoder
from retrieval.pipelines import SentenceRetriever
from trainprep.samples import load_perplexities, load_reports, prepare_samples, serialize_samples


def register(subparsers, parents: list[argparse.ArgumentParser]) -> None:
    parser = subparsers.add_parser("prep-train", parents=parents, help="Build oracle-mixed training samples.")
    parser.add_argument("--db", required=True, help="Database directory.")
    parser.add_argument("--reports", required=True, help="Reports JSONL.")
    parser.add_argument("--perplexities", required=True, help="Per-sentence perplexities JSONL.")
    parser.add_argument("--percentile", dest="trainprep.percentile", type=float)
    parser.add_argument("--p-oracle", dest="trainprep.p_oracle", type=float)
    parser.add_argument("--k-rag", dest="trainprep.k_rag_max", type=int)
    parser.add_argument("--scope", dest="trainprep.threshold_scope", choices=("report", "corpus"))
    parser.add_argument("--out", required=True, help="Samples JSONL output.")
    add_retrieval_flags(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, cfg: RunConfig) -> int:
    reports = load_reports(args.reports)
    perplexities = load_perplexities(args.perplexities)
    with get_db(args.db) as db:
        retriever = SentenceRetriever(db, cfg.retrieval, load_encoder(args.encoder))
        samples = prepare_samples(
            reports,
            perplexities,
            cfg.trainprep,
            retriever_for=lambda study_id: retriever.bound(study_id, exclude_self=True),
            threads=cfg.worker_count,
        )
    count = serialize_samples(samples, args.out)
    flags = [flag for sample in samples for flag in sample.oracle_flags]
    oracle = sum(flags) / len(flags) if flags else 0.0
    print(f"✅ {count} sample(s), {len(flags)} injection(s), oracle fraction {oracle:.3f}; written to {args.out}")
    return 0
