"""
Lumen — Report decoding under NoRag, FixedInterval and Adaptive policies.

Adaptive protocol on a [RAG] trigger, at sentence granularity:
draft the sentence, retrieve with the draft as query for the current
organ, roll the draft back, inject the retrieved block, regenerate once.
Regeneration never re-triggers.

FixedInterval(n) uses the same rollback once a real sentence is drafted at
a 1-based position divisible by n, querying with the previous sentence.
"""

from __future__ import annotations

import logging
from typing import Callable, Optional, Sequence, Union

from core.findings import normalize_organ
from orchestrator.generator import (
    GENERATED_SENTENCE,
    INJECTED_CONTEXT,
    VISUAL_STUB,
    ContextItem,
    GeneratorInterface,
    wrap_context,
)
from orchestrator.policies import Adaptive, FixedInterval, NoRag, policy_label
from orchestrator.trace import (
    ContextInjected,
    DecodeTrace,
    QueryDrafted,
    Regenerated,
    RetrievalFailed,
    Retrieved,
    RolledBack,
    SentenceEmitted,
    TriggerFired,
    TriggerSuppressed,
)
from retrieval.pipelines import RetrievalResult

logger = logging.getLogger(__name__)

RetrieveFn = Callable[[str, str], RetrievalResult]

# Hard stop for generators that never end a section.
MAX_REPORT_SENTENCES = 512


class GeneratorFailure(RuntimeError):
    """The generator raised mid-decode; ``trace`` holds everything up to the failure."""

    def __init__(self, message: str, trace: DecodeTrace):
        super().__init__(message)
        self.trace = trace


def inject_context(context: list[ContextItem], sentences: Sequence[str]) -> list[ContextItem]:
    """Append one delimited block of retrieved sentences; empty input is a no-op."""
    if not sentences:
        logger.warning("Empty retrieval, nothing injected")
        return context
    context.append(ContextItem(kind=INJECTED_CONTEXT, payload=wrap_context(sentences)))
    return context


def fixed_interval_positions(total_sentences: int, n: int) -> list[int]:
    if n < 1:
        raise ValueError("n must be at least 1.")
    return list(range(n, total_sentences + 1, n))


class _Decode:
    """Mutable state of one decode."""

    def __init__(self, gen: GeneratorInterface, retriever: Optional[RetrieveFn], trace: DecodeTrace):
        self.gen = gen
        self.retriever = retriever
        self.trace = trace
        self.context: list[ContextItem] = []
        self.report: list[str] = []

    def generate(self) -> tuple[str, bool, float]:
        try:
            text, emits_rag, perplexity = self.gen.next_sentence(tuple(self.context))
        except Exception as exc:
            self.trace.final_report = " ".join(self.report)
            raise GeneratorFailure(f"Generator failed at sentence {len(self.report)}: {exc}", self.trace) from exc
        return text.strip(), bool(emits_rag), float(perplexity)

    def commit(self, text: str, perplexity: float, organ: str, *, regenerated: bool = False) -> None:
        index = len(self.report)
        if regenerated:
            self.trace.events.append(Regenerated(index=index, text=text, perplexity=perplexity))
        else:
            self.trace.events.append(SentenceEmitted(index=index, text=text, perplexity=perplexity, organ=organ))
        self.context.append(ContextItem(kind=GENERATED_SENTENCE, payload=text))
        self.report.append(text)

    def retrieve(self, organ: str, query: str) -> Optional[RetrievalResult]:
        """None when retrieval failed or came back empty; both are logged, never raised."""
        self.trace.events.append(QueryDrafted(text=query))
        if self.retriever is None:
            self.trace.events.append(RetrievalFailed(message="no retriever configured"))
            logger.warning("Retrieval requested for %s but no retriever is configured", organ)
            return None
        try:
            result = self.retriever(organ, query)
        except Exception as exc:
            self.trace.events.append(RetrievalFailed(message=str(exc)))
            logger.warning("Retrieval failed for %s: %s", organ, exc)
            return None
        if not result.selected:
            self.trace.events.append(RetrievalFailed(message="empty retrieval"))
            logger.warning("Empty retrieval for %s", organ)
            return None
        self.trace.events.append(Retrieved(sentence_ids=result.sentence_ids, strategy=result.strategy))
        return result

    def inject(self, result: RetrievalResult) -> None:
        inject_context(self.context, result.texts)
        self.trace.events.append(ContextInjected(delimited_text=self.context[-1].payload))

    def regenerate(self, index: int, result: RetrievalResult, draft: str, organ: str) -> None:
        """Roll the draft back, inject ``result`` and commit one regeneration (the draft if it comes back empty)."""
        self.trace.events.append(RolledBack(sentence_index=index))
        self.inject(result)
        text, _, perplexity = self.generate()
        self.commit(text or draft, perplexity, organ, regenerated=True)


def decode_report(
    gen: GeneratorInterface,
    policy: Union[NoRag, FixedInterval, Adaptive],
    retriever: Optional[RetrieveFn],
    organ_plan: Sequence[str],
    *,
    study_id: Optional[str] = None,
) -> tuple[str, DecodeTrace]:
    if not organ_plan:
        raise ValueError("organ_plan must name at least one organ.")
    plan = [normalize_organ(o, indexed_only=True) for o in organ_plan]
    trace = DecodeTrace(study_id=study_id, policy=policy_label(policy), organ_plan=plan)
    state = _Decode(gen, retriever, trace)

    for organ in plan:
        state.context.append(ContextItem(kind=VISUAL_STUB, payload=organ))
        while len(state.report) < MAX_REPORT_SENTENCES:
            position = len(state.report) + 1
            text, emits_rag, perplexity = state.generate()
            if not text:
                break

            # A section end never consumes a fixed-interval slot; it fires on the
            # next real sentence, under that sentence's organ.
            if isinstance(policy, FixedInterval) and position % policy.n == 0:
                index = len(state.report)
                result = state.retrieve(organ, state.report[-1] if state.report else organ)
                if result is None:
                    state.commit(text, perplexity, organ)
                    continue
                state.regenerate(index, result, text, organ)
                continue

            if not (isinstance(policy, Adaptive) and emits_rag):
                state.commit(text, perplexity, organ)
                continue

            index = len(state.report)
            if trace.trigger_count >= policy.k_rag_max:
                trace.events.append(TriggerSuppressed(sentence_index=index))
                state.commit(text, perplexity, organ)
                continue
            trace.trigger_count += 1
            trace.events.append(TriggerFired(sentence_index=index, organ=organ))
            result = state.retrieve(organ, text) if policy.with_context else None
            if result is None:
                state.commit(text, perplexity, organ)
                continue
            state.regenerate(index, result, text, organ)
        else:
            logger.warning("Stopped %s after %d sentences", organ, MAX_REPORT_SENTENCES)

    trace.final_report = " ".join(state.report)
    return trace.final_report, trace
