"""
Lumen — Command-line entry point.

Subcommands:
  gen-synthetic   deterministic synthetic corpus
  diagnose        PCA spectrum, dim90 / dim95, participation ratio
  probe           per-finding linear probes
  project-test    top-k vs tail-half projection test
  build-db        organ-indexed sentence database
  retrieve        one Two-Stage / Text2Text query
  eval-retrieval  Jaccard@k per modality and the label upper bound
  decode          scripted decoding under a RAG policy
  prep-train      oracle-mixed training samples

Errors are written to stderr as one JSON record; exit code 2 for usage or
configuration problems, 1 for everything else.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Any, Optional, Sequence

from dotenv import load_dotenv

# Load .env before anything reads environment defaults
load_dotenv(os.path.join(os.path.dirname(__file__), "..", ".env"))

from cli.commands import build_db, decode, diagnose, eval_retrieval, prep_train, probe, retrieve, synthetic
from cli.config import ConfigError, load_run_config
from cli.options import resolve_strategy
from cli.output import error_record

_COMMANDS = (synthetic, diagnose, probe, build_db, retrieve, eval_retrieval, decode, prep_train)
_TOP_LEVEL_KEYS = {"seed", "threads", "log_level", "policy", "k"}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON run configuration.")
    common.add_argument("--seed", dest="seed", type=int, help="Seed for every random draw.")
    common.add_argument("--threads", dest="threads", type=int, help="Worker threads (0 = auto).")
    common.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING, ERROR.")

    parser = argparse.ArgumentParser(prog="lumen", description="Embedding diagnostics and adaptive retrieval toolkit.")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for module in _COMMANDS:
        module.register(subparsers, [common])
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    values = vars(args)
    overrides = {key: value for key, value in values.items() if key in _TOP_LEVEL_KEYS or "." in key}
    if "strategy" in values:
        overrides["retrieval.strategy"] = resolve_strategy(values["strategy"])
    return overrides


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        cfg = load_run_config(args.config, _overrides(args))
        logging.basicConfig(level=cfg.log_level, format="%(levelname)s %(name)s: %(message)s")
        return args.handler(args, cfg)
    except ConfigError as exc:
        print(error_record(exc), file=sys.stderr)
        return 2
    except Exception as exc:
        logging.getLogger(__name__).debug("Command failed", exc_info=True)
        print(error_record(exc), file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
