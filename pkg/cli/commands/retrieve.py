"""
Lumen — ``retrieve``: run one Two-Stage or Text2Text query against a database,
or a plain k-NN seeded by a stored sentence or study id.
"""

from __future__ import annotations

import argparse

from cli.config import ConfigError, RunConfig
from cli.options import resolve_organ
from cli.output import emit
from db.connection import get_db
from db.operations import SentenceDB, knn_by_id
from embeddings import load_encoder
from retrieval.pipelines import TWO_STAGE, SentenceRetriever


def add_retrieval_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--strategy", help="twostage | text2text")
    parser.add_argument("--k-coarse", dest="retrieval.k_coarse", type=int)
    parser.add_argument("--k-fine", dest="retrieval.k_fine", type=int)
    parser.add_argument("--lambda", dest="retrieval.lam", type=float)
    parser.add_argument("--pool-depth", dest="retrieval.text_pool_depth", type=int)
    parser.add_argument("--encoder", default="remote", help="Query encoder: 'remote' or a text_encoder.json file.")


def register(subparsers, parents: list[argparse.ArgumentParser]) -> None:
    parser = subparsers.add_parser("retrieve", parents=parents, help="Retrieve sentences for one query.")
    parser.add_argument("--db", required=True, help="Database directory.")
    parser.add_argument("--organ", required=True)
    query = parser.add_mutually_exclusive_group(required=True)
    query.add_argument("--query", help="Query text.")
    query.add_argument("--query-id", help="Stored sentence id or study id; runs exact k-NN from its vector.")
    parser.add_argument("--k", dest="k", type=int, help="Neighbours for --query-id (default 10).")
    parser.add_argument("--study", help="Study whose image embedding drives Two-Stage; excluded from results.")
    parser.add_argument("--include-self", action="store_true", help="Keep the study's own sentences.")
    parser.add_argument("--out", help="Write the result as JSON.")
    add_retrieval_flags(parser)
    parser.set_defaults(handler=run)


def _neighbours(db: SentenceDB, organ: str, record_id: str, k: int) -> dict:
    space, hits = knn_by_id(db, organ, record_id, k)
    rows = []
    for hit_id, score in hits:
        row = {"id": hit_id, "score": score}
        if hit_id in db:
            record = db.record(hit_id)
            row.update(study_id=record.study_id, text=record.text)
        rows.append(row)
        print(f"{score:+.4f}  {hit_id}  {row.get('text', '')}".rstrip())
    return {"organ": organ, "space": space, "query_id": record_id, "k": k, "neighbours": rows}


def run(args: argparse.Namespace, cfg: RunConfig) -> int:
    organ = resolve_organ(args.organ)
    if args.query_id:
        with get_db(args.db) as db:
            payload = _neighbours(db, organ, args.query_id, cfg.k)
        if args.out:
            emit(payload, args.out)
        return 0

    with get_db(args.db) as db:
        retriever = SentenceRetriever(db, cfg.retrieval, load_encoder(args.encoder))
        image_query = retriever.image_query(args.study, organ) if args.study else None
        if cfg.retrieval.strategy == TWO_STAGE and image_query is None:
            raise ConfigError("Two-Stage retrieval needs --study with an image embedding.", ["study"])
        exclude = None if args.include_self else args.study
        result = retriever.retrieve(organ, args.query, image_query=image_query, exclude_study=exclude)
    for record, score in zip(result.selected, result.mmr_scores):
        print(f"{score:+.4f}  {record.sentence_id}  {record.text}")
    if args.out:
        emit(result, args.out)
    return 0
