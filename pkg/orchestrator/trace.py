"""
Lumen — Decode trace events, replay, JSONL persistence and trigger statistics.
"""

from __future__ import annotations

import json
from collections import Counter
from pathlib import Path
from statistics import median
from typing import Annotated, Iterable, Literal, Optional, Sequence, Union

from pydantic import BaseModel, Field, TypeAdapter

# ── Events ───────────────────────────────────────────────────────────────────


class SentenceEmitted(BaseModel):
    event: Literal["sentence_emitted"] = "sentence_emitted"
    index: int
    text: str
    perplexity: float
    organ: str = ""


class TriggerFired(BaseModel):
    event: Literal["trigger_fired"] = "trigger_fired"
    sentence_index: int
    organ: str = ""


class TriggerSuppressed(BaseModel):
    event: Literal["trigger_suppressed"] = "trigger_suppressed"
    sentence_index: int


class QueryDrafted(BaseModel):
    event: Literal["query_drafted"] = "query_drafted"
    text: str


class Retrieved(BaseModel):
    event: Literal["retrieved"] = "retrieved"
    sentence_ids: list[str]
    strategy: str


class RetrievalFailed(BaseModel):
    event: Literal["retrieval_failed"] = "retrieval_failed"
    message: str


class RolledBack(BaseModel):
    event: Literal["rolled_back"] = "rolled_back"
    sentence_index: int


class ContextInjected(BaseModel):
    event: Literal["context_injected"] = "context_injected"
    delimited_text: str


class Regenerated(BaseModel):
    event: Literal["regenerated"] = "regenerated"
    index: int
    text: str
    perplexity: float = 1.0


TraceEvent = Annotated[
    Union[
        SentenceEmitted,
        TriggerFired,
        TriggerSuppressed,
        QueryDrafted,
        Retrieved,
        RetrievalFailed,
        RolledBack,
        ContextInjected,
        Regenerated,
    ],
    Field(discriminator="event"),
]


class DecodeTrace(BaseModel):
    study_id: Optional[str] = None
    policy: str = "norag"
    organ_plan: list[str] = Field(default_factory=list)
    events: list[TraceEvent] = Field(default_factory=list)
    final_report: str = ""
    trigger_count: int = 0


def replay_trace(events: Iterable[BaseModel]) -> str:
    """Rebuild the report from committed sentences alone."""
    return " ".join(e.text for e in events if isinstance(e, (SentenceEmitted, Regenerated)))


# ── Persistence ──────────────────────────────────────────────────────────────

class _TraceStart(BaseModel):
    event: Literal["trace_start"] = "trace_start"
    study_id: Optional[str] = None
    policy: str
    organ_plan: list[str]


class _TraceEnd(BaseModel):
    event: Literal["trace_end"] = "trace_end"
    final_report: str
    trigger_count: int


_RECORD = TypeAdapter(
    Annotated[
        Union[
            _TraceStart,
            _TraceEnd,
            SentenceEmitted,
            TriggerFired,
            TriggerSuppressed,
            QueryDrafted,
            Retrieved,
            RetrievalFailed,
            RolledBack,
            ContextInjected,
            Regenerated,
        ],
        Field(discriminator="event"),
    ]
)


def _line(record: BaseModel) -> str:
    return json.dumps(record.model_dump(mode="json"), sort_keys=True, ensure_ascii=False)


def dump_trace(traces: Sequence[DecodeTrace], path: Union[str, Path]) -> int:
    """Write traces as JSONL bracketed by trace_start / trace_end records."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", encoding="utf-8") as handle:
        for trace in traces:
            handle.write(_line(_TraceStart(study_id=trace.study_id, policy=trace.policy, organ_plan=trace.organ_plan)) + "\n")
            for event in trace.events:
                handle.write(_line(event) + "\n")
            handle.write(_line(_TraceEnd(final_report=trace.final_report, trigger_count=trace.trigger_count)) + "\n")
    return len(traces)


def load_trace(path: Union[str, Path]) -> list[DecodeTrace]:
    traces: list[DecodeTrace] = []
    current: Optional[DecodeTrace] = None
    with Path(path).open(encoding="utf-8") as handle:
        for number, raw in enumerate(handle, start=1):
            if not raw.strip():
                continue
            record = _RECORD.validate_json(raw)
            if isinstance(record, _TraceStart):
                if current is not None:
                    raise ValueError(f"{path}:{number}: trace_start before trace_end.")
                current = DecodeTrace(study_id=record.study_id, policy=record.policy, organ_plan=record.organ_plan)
            elif current is None:
                raise ValueError(f"{path}:{number}: event outside a trace.")
            elif isinstance(record, _TraceEnd):
                current.final_report = record.final_report
                current.trigger_count = record.trigger_count
                traces.append(current)
                current = None
            else:
                current.events.append(record)
    if current is not None:
        raise ValueError(f"{path}: last trace has no trace_end record.")
    return traces


# ── Trigger statistics ───────────────────────────────────────────────────────

class TriggerStats(BaseModel):
    n_reports: int
    mean_triggers: float
    median_triggers: float
    histogram: dict[int, int]
    fraction_zero: float
    fraction_one_to_two: float
    fraction_three_plus: float
    per_organ: dict[str, int]


def trigger_stats(traces: Sequence[DecodeTrace]) -> TriggerStats:
    if not traces:
        return TriggerStats(
            n_reports=0,
            mean_triggers=0.0,
            median_triggers=0.0,
            histogram={},
            fraction_zero=0.0,
            fraction_one_to_two=0.0,
            fraction_three_plus=0.0,
            per_organ={},
        )
    counts = [t.trigger_count for t in traces]
    per_organ = Counter(
        e.organ for t in traces for e in t.events if isinstance(e, TriggerFired)
    )
    n = len(counts)
    return TriggerStats(
        n_reports=n,
        mean_triggers=sum(counts) / n,
        median_triggers=float(median(counts)),
        histogram=dict(sorted(Counter(counts).items())),
        fraction_zero=sum(1 for c in counts if c == 0) / n,
        fraction_one_to_two=sum(1 for c in counts if 1 <= c <= 2) / n,
        fraction_three_plus=sum(1 for c in counts if c >= 3) / n,
        per_organ=dict(sorted(per_organ.items())),
    )


def trigger_stats_table(stats: TriggerStats) -> str:
    lines = [
        f"reports            {stats.n_reports}",
        f"mean triggers      {stats.mean_triggers:.2f}",
        f"median triggers    {stats.median_triggers:.1f}",
        f"zero triggers      {stats.fraction_zero:.1%}",
        f"1-2 triggers       {stats.fraction_one_to_two:.1%}",
        f">=3 triggers       {stats.fraction_three_plus:.1%}",
    ]
    lines += [f"  {count} -> {reports}" for count, reports in stats.histogram.items()]
    lines += [f"  {organ:<10} {fired}" for organ, fired in stats.per_organ.items()]
    return "\n".join(lines)
