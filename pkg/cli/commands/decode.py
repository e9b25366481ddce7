"""
Lumen — ``decode``: run scripted generators through a decoding policy and log traces.
"""

from __future__ import annotations

import argparse
import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from cli.commands.retrieve import add_retrieval_flags
from cli.config import ConfigError, RunConfig
from db.connection import get_db
from embeddings import load_encoder
from orchestrator.decoder import decode_report
from orchestrator.generator import DecodeScript, load_script, scripted_mock_generator
from orchestrator.policies import parse_policy
from orchestrator.trace import DecodeTrace, dump_trace, trigger_stats, trigger_stats_table
from retrieval.pipelines import SentenceRetriever


def register(subparsers, parents: list[argparse.ArgumentParser]) -> None:
    parser = subparsers.add_parser("decode", parents=parents, help="Decode reports from generator scripts.")
    parser.add_argument("--db", required=True, help="Database directory.")
    parser.add_argument("--policy", dest="policy", help="norag | fixed:N | adaptive:K | adaptive-nocontext:K")
    parser.add_argument("--script", nargs="+", default=[], help="Script JSON file(s).")
    parser.add_argument("--scripts", help="Directory of script JSON files.")
    parser.add_argument("--trace-out", required=True, help="Trace JSONL output.")
    parser.add_argument("--reports-out", help="Decoded reports JSONL output.")
    parser.add_argument("--include-self", action="store_true", help="Let retrieval return the study's own sentences.")
    add_retrieval_flags(parser)
    parser.set_defaults(handler=run)


def _scripts(args: argparse.Namespace) -> list[DecodeScript]:
    paths = [Path(p) for p in args.script]
    if args.scripts:
        paths += sorted(Path(args.scripts).glob("*.json"))
    if not paths:
        raise ConfigError("decode needs --script or --scripts.", ["script"])
    return [load_script(p) for p in paths]


def run(args: argparse.Namespace, cfg: RunConfig) -> int:
    policy = parse_policy(cfg.policy)
    scripts = _scripts(args)
    with get_db(args.db) as db:
        retriever = SentenceRetriever(db, cfg.retrieval, load_encoder(args.encoder))

        def decode(script: DecodeScript) -> DecodeTrace:
            gen = scripted_mock_generator(script.entries, script.overrides)
            retrieve = retriever.bound(script.study_id, exclude_self=not args.include_self)
            _, trace = decode_report(gen, policy, retrieve, script.organ_plan, study_id=script.study_id)
            return trace

        with ThreadPoolExecutor(max_workers=cfg.worker_count) as pool:
            traces = list(pool.map(decode, scripts))

    dump_trace(traces, args.trace_out)
    if args.reports_out:
        target = Path(args.reports_out)
        target.parent.mkdir(parents=True, exist_ok=True)
        with target.open("w", encoding="utf-8", newline="\n") as handle:
            for trace in traces:
                record = {"study_id": trace.study_id, "policy": trace.policy, "report": trace.final_report}
                handle.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
    print(trigger_stats_table(trigger_stats(traces)))
    print(f"✅ {len(traces)} report(s) decoded with {cfg.policy}; traces in {args.trace_out}")
    return 0
