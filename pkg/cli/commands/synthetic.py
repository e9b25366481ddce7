"""
Lumen — ``gen-synthetic``: write a deterministic synthetic corpus.
"""

from __future__ import annotations

import argparse

from cli.config import RunConfig
from synthgen.corpus import gen_synthetic_corpus, write_corpus


def register(subparsers, parents: list[argparse.ArgumentParser]) -> None:
    parser = subparsers.add_parser("gen-synthetic", parents=parents, help="Generate a synthetic corpus.")
    parser.add_argument("--out", required=True, help="Output directory.")
    parser.add_argument("--studies", dest="synth.n_studies", type=int, help="Number of studies.")
    parser.add_argument("--mode", dest="synth.planted_signal_mode", choices=("none", "tail_dim", "isotropic"))
    parser.add_argument("--dim-image", dest="synth.embed_dim_image", type=int)
    parser.add_argument("--dim-text", dest="synth.embed_dim_text", type=int)
    parser.add_argument("--spread", dest="synth.cluster_spread", type=float)
    parser.add_argument("--finding-rate", dest="synth.finding_rate", type=float)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, cfg: RunConfig) -> int:
    corpus = gen_synthetic_corpus(cfg.synth)
    manifest = write_corpus(corpus, args.out)
    print(
        f"✅ {manifest.total.studies} studies, {manifest.total.sentences} sentences "
        f"({cfg.synth.planted_signal_mode}) written to {args.out}"
    )
    return 0
