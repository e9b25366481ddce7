"""
Lumen — ``build-db``: split paragraphs, attach labels, freeze indices, persist.
"""

from __future__ import annotations

import argparse
from pathlib import Path

from cli.config import ConfigError, RunConfig
from core.io import load_embeddings, load_labels
from db.operations import build_database, db_stats, load_paragraphs, save_database, stats_table


def register(subparsers, parents: list[argparse.ArgumentParser]) -> None:
    parser = subparsers.add_parser("build-db", parents=parents, help="Build the organ-indexed sentence database.")
    parser.add_argument("--corpus", help="Directory laid out like gen-synthetic output; fills the inputs below.")
    parser.add_argument("--paragraphs", help="Organ paragraphs JSONL, or a directory holding paragraphs.jsonl.")
    parser.add_argument("--sent-emb", "--sentence-embeddings", dest="sentence_embeddings", help="Sentence .aemb file.")
    parser.add_argument("--img-emb", "--image-dir", dest="image_dir", help="Directory of <organ>.aemb image embeddings.")
    parser.add_argument("--labels", help="Label CSV.")
    parser.add_argument("--out", required=True, help="Database directory.")
    parser.set_defaults(handler=run)


def _inputs(args: argparse.Namespace) -> tuple[Path, Path, Path, Path]:
    corpus = Path(args.corpus) if args.corpus else None
    chosen = {
        "paragraphs": args.paragraphs or (corpus and corpus / "paragraphs.jsonl"),
        "sentence_embeddings": args.sentence_embeddings or (corpus and corpus / "sentence_embeddings.aemb"),
        "image_dir": args.image_dir or (corpus and corpus / "image"),
        "labels": args.labels or (corpus and corpus / "labels.csv"),
    }
    missing = [name for name, value in chosen.items() if not value]
    if missing:
        raise ConfigError("build-db needs --corpus or every input flag.", [f"missing: {m}" for m in missing])
    return tuple(Path(v) for v in chosen.values())  # type: ignore[return-value]


def run(args: argparse.Namespace, cfg: RunConfig) -> int:
    paragraphs_path, sentences_path, image_dir, labels_path = _inputs(args)
    if paragraphs_path.is_dir():
        paragraphs_path = paragraphs_path / "paragraphs.jsonl"
    image = {p.stem: load_embeddings(p) for p in sorted(image_dir.glob("*.aemb"))}
    db = build_database(
        load_paragraphs(paragraphs_path),
        load_embeddings(sentences_path),
        image,
        load_labels(labels_path),
    )
    save_database(db, args.out)
    print(stats_table(db_stats(db)))
    print(f"✅ Sentence DB written to {args.out}")
    return 0
