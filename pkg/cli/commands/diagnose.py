"""
Lumen — ``diagnose``: PCA spectrum, dim90 / dim95 and participation ratio.
"""

from __future__ import annotations

import argparse
from pathlib import Path

from cli.config import RunConfig
from cli.output import emit
from core.io import load_embeddings
from diagnostics.spectrum import pca_spectrum, spectrum_table


def register(subparsers, parents: list[argparse.ArgumentParser]) -> None:
    parser = subparsers.add_parser("diagnose", parents=parents, help="Effective dimensionality of embedding files.")
    parser.add_argument("--embeddings", nargs="+", required=True, help="One or more .aemb files.")
    parser.add_argument("--json", dest="json_out", help="Also write the reports as JSON.")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, cfg: RunConfig) -> int:
    reports = [pca_spectrum(load_embeddings(path), name=Path(path).stem) for path in args.embeddings]
    print(spectrum_table(reports))
    if args.json_out:
        emit(reports, args.json_out)
    return 0
