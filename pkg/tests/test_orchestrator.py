import re

import numpy as np
import pytest

import orchestrator.decoder as decoder
from db.sentences import SentenceRecord
from orchestrator.decoder import GeneratorFailure, decode_report, fixed_interval_positions, inject_context
from orchestrator.generator import (
    INJECTED_CONTEXT,
    RET_END,
    RET_START,
    ContextItem,
    DecodeScript,
    ScriptedMockGenerator,
    ScriptEntry,
    load_script,
    save_script,
    scripted_mock_generator,
    wrap_context,
)
from orchestrator.policies import Adaptive, FixedInterval, NoRag, parse_policy, policy_label
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
    dump_trace,
    load_trace,
    replay_trace,
    trigger_stats,
    trigger_stats_table,
)
from retrieval.pipelines import RetrievalResult

_BLOCK = re.compile(re.escape(RET_START) + r" (.+) " + re.escape(RET_END))


class FakeRetriever:
    def __init__(self, texts=("Retrieved nodule.", "Retrieved effusion."), fail=False):
        self.texts = list(texts)
        self.fail = fail
        self.calls = []

    def __call__(self, organ, query):
        self.calls.append((organ, query))
        if self.fail:
            raise RuntimeError("index offline")
        selected = [
            SentenceRecord(sentence_id=f"s9:{organ}:{i:03d}", study_id="s9", organ=organ, text=text)
            for i, text in enumerate(self.texts)
        ]
        return RetrievalResult(strategy="twostage", organ=organ, query=query, selected=selected)


class ExplodingGenerator:
    def __init__(self, after):
        self.after = after
        self.calls = 0

    def next_sentence(self, context):
        self.calls += 1
        if self.calls > self.after:
            raise RuntimeError("model crashed")
        return f"Sentence {self.calls}.", False, 1.0


class EndlessGenerator:
    def next_sentence(self, context):
        return "Again.", False, 1.0


def _kinds(trace):
    return [e.event for e in trace.events]


# ── Policies ─────────────────────────────────────────────────────────────────

@pytest.mark.parametrize(
    "text, expected",
    [
        ("norag", NoRag()),
        ("fixed:3", FixedInterval(n=3)),
        ("adaptive:2", Adaptive(k_rag_max=2)),
        ("adaptive", Adaptive(k_rag_max=4)),
        ("Adaptive-NoContext:4", Adaptive(k_rag_max=4, with_context=False)),
    ],
)
def test_parse_policy(text, expected):
    policy = parse_policy(text)
    assert policy == expected
    assert parse_policy(policy_label(policy)) == policy


@pytest.mark.parametrize("text", ["fixed", "fixed:0", "adaptive:-1", "adaptive:x", "sometimes", "norag:1"])
def test_parse_policy_rejects(text):
    with pytest.raises(ValueError, match="Allowed forms"):
        parse_policy(text)


# ── Generator ────────────────────────────────────────────────────────────────

def test_wrap_context_delimiters():
    block = wrap_context(["One.", "Two."])
    assert block == f"{RET_START} One. Two. {RET_END}"
    assert _BLOCK.fullmatch(block).group(1) == "One. Two."


def test_inject_context_empty_is_noop():
    context = [ContextItem(kind="visual_stub", payload="lung")]
    assert inject_context(context, []) == [ContextItem(kind="visual_stub", payload="lung")]
    inject_context(context, ["A."])
    assert context[-1].kind == INJECTED_CONTEXT


def test_scripted_generator_exhausts_to_empty():
    gen = scripted_mock_generator([("A.", False, 2.0)])
    assert gen.next_sentence(()) == ("A.", False, 2.0)
    assert gen.next_sentence(()) == ("", False, 1.0)
    with pytest.raises(ValueError):
        ScriptedMockGenerator([])


def test_script_round_trip(tmp_path):
    script = DecodeScript(
        study_id="study_00001",
        organ_plan=["lung"],
        entries=[ScriptEntry(text="Nodule.", emits_rag=True, perplexity=7.5), ScriptEntry(text="")],
        overrides={0: "Small nodule."},
    )
    assert load_script(save_script(script, tmp_path / "s.json")) == script


# ── Decoding ─────────────────────────────────────────────────────────────────

def test_norag_passes_script_through():
    gen = scripted_mock_generator(
        [("A.", True, 3.0), ("B.", False, 1.0), ("", False, 1.0), ("C.", True, 9.0), ("", False, 1.0)]
    )
    retriever = FakeRetriever()
    report, trace = decode_report(gen, NoRag(), retriever, ["lung", "heart"])
    assert report == "A. B. C."
    assert set(_kinds(trace)) == {"sentence_emitted"}
    assert [e.organ for e in trace.events] == ["lung", "lung", "heart"]
    assert retriever.calls == []
    assert trace.trigger_count == 0


def test_adaptive_trigger_event_sequence():
    gen = scripted_mock_generator(
        [("Heart normal.", False, 1.0), ("Nodule seen.", True, 8.0), ("", False, 1.0)],
        {1: "Small nodule in the right lobe."},
    )
    retriever = FakeRetriever()
    report, trace = decode_report(gen, Adaptive(k_rag_max=4), retriever, ["lung"], study_id="s1")

    assert report == "Heart normal. Small nodule in the right lobe."
    assert [type(e) for e in trace.events] == [
        SentenceEmitted,
        TriggerFired,
        QueryDrafted,
        Retrieved,
        RolledBack,
        ContextInjected,
        Regenerated,
    ]
    assert trace.events[2].text == "Nodule seen."
    assert retriever.calls == [("lung", "Nodule seen.")]
    assert _BLOCK.fullmatch(trace.events[5].delimited_text).group(1) == "Retrieved nodule. Retrieved effusion."
    assert trace.events[6].index == 1
    assert trace.trigger_count == 1


def test_regeneration_without_override_keeps_text():
    gen = scripted_mock_generator([("Nodule seen.", True, 8.0), ("", False, 1.0)])
    report, trace = decode_report(gen, Adaptive(), FakeRetriever(), ["lung"])
    assert report == "Nodule seen."
    assert isinstance(trace.events[-1], Regenerated)


def test_trigger_cap_suppresses_extra_triggers():
    script = [(f"Finding {i}.", True, 9.0) for i in range(6)] + [("", False, 1.0)]
    report, trace = decode_report(scripted_mock_generator(script), Adaptive(k_rag_max=4), FakeRetriever(), ["lung"])
    assert trace.trigger_count == 4
    assert sum(isinstance(e, TriggerFired) for e in trace.events) == 4
    suppressed = [e for e in trace.events if isinstance(e, TriggerSuppressed)]
    assert [e.sentence_index for e in suppressed] == [4, 5]
    assert report.endswith("Finding 4. Finding 5.")


def test_zero_cap_never_retrieves():
    retriever = FakeRetriever()
    _, trace = decode_report(
        scripted_mock_generator([("Nodule.", True, 9.0)]), Adaptive(k_rag_max=0), retriever, ["lung"]
    )
    assert retriever.calls == []
    assert _kinds(trace) == ["trigger_suppressed", "sentence_emitted"]


def test_failing_retriever_commits_draft():
    retriever = FakeRetriever(fail=True)
    report, trace = decode_report(
        scripted_mock_generator([("Nodule seen.", True, 9.0), ("", False, 1.0)]),
        Adaptive(),
        retriever,
        ["lung"],
    )
    assert report == "Nodule seen."
    assert _kinds(trace) == ["trigger_fired", "query_drafted", "retrieval_failed", "sentence_emitted"]
    assert "index offline" in trace.events[2].message


def test_empty_retrieval_is_logged():
    _, trace = decode_report(
        scripted_mock_generator([("Nodule seen.", True, 9.0)]), Adaptive(), FakeRetriever(texts=()), ["lung"]
    )
    failed = [e for e in trace.events if isinstance(e, RetrievalFailed)]
    assert [e.message for e in failed] == ["empty retrieval"]


def test_adaptive_without_context_only_records_triggers():
    retriever = FakeRetriever()
    report, trace = decode_report(
        scripted_mock_generator([("Nodule seen.", True, 9.0), ("", False, 1.0)], {0: "Other."}),
        Adaptive(with_context=False),
        retriever,
        ["lung"],
    )
    assert report == "Nodule seen."
    assert _kinds(trace) == ["trigger_fired", "sentence_emitted"]
    assert retriever.calls == []


def test_fixed_interval_injects_before_every_nth_sentence():
    script = [(f"S{i}.", False, 1.0) for i in range(4)] + [("", False, 1.0)]
    retriever = FakeRetriever()
    report, trace = decode_report(
        scripted_mock_generator(script, {1: "S1 revised.", 3: "S3 revised."}), FixedInterval(n=2), retriever, ["heart"]
    )
    assert fixed_interval_positions(4, 2) == [2, 4]
    assert retriever.calls == [("heart", "S0."), ("heart", "S2.")]
    assert report == "S0. S1 revised. S2. S3 revised."
    assert sum(isinstance(e, ContextInjected) for e in trace.events) == 2


def test_fixed_interval_slot_survives_a_section_end():
    script = [("L0.", False, 1.0), ("", False, 1.0), ("H0.", False, 1.0), ("", False, 1.0)]
    retriever = FakeRetriever()
    report, trace = decode_report(
        scripted_mock_generator(script, {1: "H0 override."}), FixedInterval(n=2), retriever, ["lung", "heart"]
    )
    assert retriever.calls == [("heart", "L0.")]
    assert report == "L0. H0 override."
    assert _kinds(trace) == [
        "sentence_emitted",
        "query_drafted",
        "retrieved",
        "rolled_back",
        "context_injected",
        "regenerated",
    ]
    assert replay_trace(trace.events) == report


def test_fixed_interval_failed_retrieval_keeps_the_draft():
    script = [("A0.", False, 1.0), ("A1.", False, 1.0), ("", False, 1.0)]
    retriever = FakeRetriever(fail=True)
    report, trace = decode_report(
        scripted_mock_generator(script, {1: "A1 override."}), FixedInterval(n=2), retriever, ["aorta"]
    )
    assert report == "A0. A1."
    assert _kinds(trace) == ["sentence_emitted", "query_drafted", "retrieval_failed", "sentence_emitted"]


def test_fixed_interval_first_query_falls_back_to_organ():
    retriever = FakeRetriever()
    decode_report(scripted_mock_generator([("A.", False, 1.0), ("", False, 1.0)]), FixedInterval(n=1), retriever, ["aorta"])
    assert retriever.calls[0] == ("aorta", "aorta")


def test_generator_failure_carries_partial_trace():
    with pytest.raises(GeneratorFailure) as exc:
        decode_report(ExplodingGenerator(after=2), NoRag(), None, ["lung"])
    trace = exc.value.trace
    assert [e.text for e in trace.events] == ["Sentence 1.", "Sentence 2."]
    assert trace.final_report == "Sentence 1. Sentence 2."


def test_endless_generator_is_cut_off(monkeypatch):
    monkeypatch.setattr(decoder, "MAX_REPORT_SENTENCES", 5)
    report, _ = decode_report(EndlessGenerator(), NoRag(), None, ["lung", "heart"])
    assert report == " ".join(["Again."] * 5)


def test_missing_retriever_is_a_logged_failure():
    report, trace = decode_report(
        scripted_mock_generator([("Nodule.", True, 9.0)]), Adaptive(), None, ["lung"]
    )
    assert report == "Nodule."
    assert any(isinstance(e, RetrievalFailed) for e in trace.events)


def test_decode_requires_a_plan():
    with pytest.raises(ValueError):
        decode_report(scripted_mock_generator([("A.", False, 1.0)]), NoRag(), None, [])


def _random_script(rng):
    entries = []
    for organ in range(int(rng.integers(1, 4))):
        for i in range(int(rng.integers(0, 6))):
            entries.append(ScriptEntry(text=f"O{organ} s{i}.", emits_rag=bool(rng.random() < 0.4), perplexity=1.0 + rng.random()))
        entries.append(ScriptEntry(text=""))
    overrides = {int(i): f"Override {i}." for i in rng.choice(12, size=4, replace=False)}
    return entries, overrides


@pytest.mark.parametrize("policy", [NoRag(), FixedInterval(n=2), Adaptive(k_rag_max=2)])
def test_replay_reproduces_report(policy):
    rng = np.random.default_rng(42)
    for _ in range(100):
        entries, overrides = _random_script(rng)
        report, trace = decode_report(
            scripted_mock_generator(entries, overrides), policy, FakeRetriever(), ["lung", "heart", "aorta"]
        )
        assert replay_trace(trace.events) == report == trace.final_report
        assert trace.trigger_count <= 2


# ── Trace persistence and stats ──────────────────────────────────────────────

def _trace_with(count, organ="lung"):
    return DecodeTrace(
        policy="adaptive:4",
        organ_plan=[organ],
        events=[TriggerFired(sentence_index=i, organ=organ) for i in range(count)],
        trigger_count=count,
    )


def test_trigger_stats():
    stats = trigger_stats([_trace_with(c) for c in (0, 1, 2, 3)])
    assert stats.mean_triggers == pytest.approx(1.5)
    assert stats.median_triggers == pytest.approx(1.5)
    assert stats.histogram == {0: 1, 1: 1, 2: 1, 3: 1}
    assert (stats.fraction_zero, stats.fraction_one_to_two, stats.fraction_three_plus) == (0.25, 0.5, 0.25)
    assert stats.per_organ == {"lung": 6}
    assert "mean triggers      1.50" in trigger_stats_table(stats)


def test_trigger_stats_empty():
    stats = trigger_stats([])
    assert stats.n_reports == 0
    assert stats.mean_triggers == 0.0


def test_trace_dump_and_load(tmp_path):
    gen = scripted_mock_generator([("Nodule.", True, 9.0), ("Clear.", False, 1.0)], {0: "Nodule, 4 mm."})
    _, first = decode_report(gen, Adaptive(), FakeRetriever(), ["lung"], study_id="s1")
    _, second = decode_report(scripted_mock_generator([("Normal.", False, 1.0)]), NoRag(), None, ["heart"])
    path = tmp_path / "traces.jsonl"
    assert dump_trace([first, second], path) == 2
    assert load_trace(path) == [first, second]


def test_load_trace_rejects_unterminated(tmp_path):
    path = tmp_path / "traces.jsonl"
    dump_trace([_trace_with(1)], path)
    path.write_text("\n".join(path.read_text(encoding="utf-8").splitlines()[:-1]) + "\n", encoding="utf-8")
    with pytest.raises(ValueError):
        load_trace(path)
