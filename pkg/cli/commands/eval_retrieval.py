"""
Lumen — ``eval-retrieval``: organ-level Jaccard@k per modality plus the label upper bound.
"""

from __future__ import annotations

import argparse

from cli.config import RunConfig
from cli.options import resolve_modalities, resolve_organs
from cli.output import emit
from core.io import load_labels
from db.connection import get_db
from db.operations import SentenceDB
from retrieval.evaluation import evaluate_retrieval, retrieval_table


def register(subparsers, parents: list[argparse.ArgumentParser]) -> None:
    parser = subparsers.add_parser("eval-retrieval", parents=parents, help="Jaccard@k retrieval precision.")
    parser.add_argument("--db", required=True, help="Database directory.")
    parser.add_argument("--labels", help="Label CSV replacing the database's own labels.")
    parser.add_argument("--modality", default="all", help="img2img,img2txt,txt2txt,upper or all.")
    parser.add_argument("--organ", default="all", help="Comma list of organs or all.")
    parser.add_argument("--k", dest="k", type=int, help="Neighbours per query (default 10).")
    parser.add_argument("--include-self", action="store_true", help="Keep the query study among its neighbours.")
    parser.add_argument("--out", help="Write the evaluations as JSON.")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, cfg: RunConfig) -> int:
    modalities = resolve_modalities(args.modality)
    organs = resolve_organs(args.organ)
    with get_db(args.db) as db:
        if args.labels:
            db = SentenceDB(db.records, db.sentence_embeddings, db.image_embeddings, load_labels(args.labels))
        evaluations = [
            evaluate_retrieval(
                db, organ, modality, cfg.k, exclude_self=not args.include_self, threads=cfg.worker_count
            )
            for organ in organs
            for modality in modalities
        ]
    print(retrieval_table(evaluations))
    skipped = sum(e.n_skipped for e in evaluations)
    if skipped:
        print(f"⚠️  {skipped} queries skipped for missing labels or embeddings")
    if args.out:
        emit(evaluations, args.out)
    return 0
