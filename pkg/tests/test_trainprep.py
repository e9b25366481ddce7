import numpy as np
import pytest

from db.sentences import SentenceRecord
from retrieval.pipelines import RetrievalConfig, RetrievalResult, SentenceRetriever
from trainprep.samples import (
    RAG_MARKER,
    ReportRecord,
    ReportSentence,
    SpanOverlapError,
    TrainingSample,
    TrainPrepConfig,
    assemble_oracle_mixed,
    cap_targets,
    load_samples,
    mark_rag_targets,
    mask_context_spans,
    prepare_samples,
    report_rng,
    serialize_samples,
    validate_sample,
)


def fake_retrieve(organ, query):
    record = SentenceRecord(sentence_id=f"s9:{organ}:000", study_id="s9", organ=organ, text="Retrieved context.")
    return RetrievalResult(strategy="text2text", organ=organ, query=query, selected=[record])


def empty_retrieve(organ, query):
    return RetrievalResult(strategy="text2text", organ=organ, query=query)


def _sentences(*texts, organ="lung"):
    return [ReportSentence(organ=organ, text=t) for t in texts]


# ── Targets ──────────────────────────────────────────────────────────────────

def test_mark_rag_targets_percentile():
    assert mark_rag_targets([float(v) for v in range(1, 11)], 80) == {8, 9}


def test_mark_rag_targets_equal_values_selects_nothing():
    assert mark_rag_targets([3.0] * 6, 80) == set()


def test_mark_rag_targets_requires_values():
    with pytest.raises(ValueError):
        mark_rag_targets([], 80)


@pytest.mark.parametrize(
    "targets, k, ppl, expected",
    [
        ({1, 3, 5}, 2, None, [1, 3]),
        ({1, 3, 5}, 2, [0, 2, 0, 9, 0, 5], [3, 5]),
        ({0, 2}, 0, None, []),
        ({4, 2}, 5, None, [2, 4]),
    ],
)
def test_cap_targets(targets, k, ppl, expected):
    assert cap_targets(targets, k, ppl) == expected


def test_config_rejects_unknown_and_inverted():
    with pytest.raises(ValueError):
        TrainPrepConfig(p_oracel=0.5)
    with pytest.raises(ValueError):
        TrainPrepConfig(oracle_context_min=2, oracle_context_max=1)


# ── Assembly ─────────────────────────────────────────────────────────────────

def test_oracle_context_comes_from_later_sentences():
    sentences = _sentences("Nodule seen.", "It measures 4 mm.", "No effusion.")
    cfg = TrainPrepConfig(p_oracle=1.0)
    sample = assemble_oracle_mixed("s1", sentences, [0], cfg, report_rng(0, "s1"), retrieve=fake_retrieve)

    validate_sample(sample)
    assert sample.rag_positions == [0]
    assert sample.oracle_flags == [True]
    assert sample.sentence_sequence[0] == RAG_MARKER
    start, end = sample.context_spans[0]
    block = sample.text[start:end]
    assert sample.text[:start] == f"{RAG_MARKER} "
    assert sample.text[end:].startswith(" Nodule seen.")
    assert "Nodule seen." not in block
    assert any(s in block for s in ("It measures 4 mm.", "No effusion."))
    assert sample.mask_spans == sample.context_spans


def test_retrieved_context_when_not_oracle():
    sentences = _sentences("Nodule seen.", "No effusion.")
    sample = assemble_oracle_mixed(
        "s1", sentences, [1], TrainPrepConfig(p_oracle=0.0), report_rng(0, "s1"), retrieve=fake_retrieve
    )
    validate_sample(sample)
    assert sample.oracle_flags == [False]
    assert sample.fallback_flags == [False]
    start, end = sample.context_spans[0]
    assert "Retrieved context." in sample.text[start:end]


def test_last_sentence_falls_back_to_retrieval():
    sample = assemble_oracle_mixed(
        "s1", _sentences("Nodule seen."), [0], TrainPrepConfig(p_oracle=1.0), report_rng(0, "s1"), retrieve=fake_retrieve
    )
    assert sample.oracle_flags == [False]
    assert sample.fallback_flags == [True]


def test_empty_retrieval_drops_target():
    sample = assemble_oracle_mixed(
        "s1", _sentences("A.", "B."), [1], TrainPrepConfig(p_oracle=0.0), report_rng(0, "s1"), retrieve=empty_retrieve
    )
    assert sample.rag_positions == []
    assert sample.text == "A. B."


def test_failed_retrieval_drops_target():
    def broken(organ, query):
        raise RuntimeError("index offline")

    sample = assemble_oracle_mixed(
        "s1", _sentences("A.", "B."), [0], TrainPrepConfig(p_oracle=0.0), report_rng(0, "s1"), retrieve=broken
    )
    assert sample.rag_positions == []


def test_target_out_of_range():
    with pytest.raises(ValueError):
        assemble_oracle_mixed("s1", _sentences("A."), [3], TrainPrepConfig(), report_rng(0, "s1"))


def test_oracle_fraction_tracks_p_oracle():
    cfg = TrainPrepConfig(p_oracle=0.7)
    sentences = _sentences("Nodule seen.", "It is stable.", "No effusion.")
    flags = []
    for i in range(10_000):
        sample = assemble_oracle_mixed(
            f"s{i}", sentences, [0], cfg, report_rng(cfg.seed, f"s{i}"), retrieve=fake_retrieve
        )
        flags.extend(sample.oracle_flags)
    assert len(flags) == 10_000
    assert 0.68 <= np.mean(flags) <= 0.72


# ── Spans ────────────────────────────────────────────────────────────────────

def _sample_with_spans(spans):
    return TrainingSample(study_id="s1", sentence_sequence=["x" * 40], context_spans=spans, text="x" * 40)


@pytest.mark.parametrize("spans", [[(0, 10), (5, 12)], [(10, 20), (0, 5)], [(4, 4)], [(-1, 3)]])
def test_mask_context_spans_rejects_bad_spans(spans):
    with pytest.raises(SpanOverlapError):
        mask_context_spans(_sample_with_spans(spans))


def test_validate_sample_rejects_span_off_block():
    sample = assemble_oracle_mixed(
        "s1", _sentences("A.", "B."), [0], TrainPrepConfig(p_oracle=0.0), report_rng(0, "s1"), retrieve=fake_retrieve
    )
    start, end = sample.context_spans[0]
    shifted = sample.model_copy(update={"context_spans": [(start + 1, end)], "mask_spans": [(start + 1, end)]})
    with pytest.raises(SpanOverlapError):
        validate_sample(shifted)


# ── Corpus ───────────────────────────────────────────────────────────────────

def _reports():
    return [
        ReportRecord(study_id="a", sentences=_sentences("A1.", "A2.")),
        ReportRecord(study_id="b", sentences=_sentences("B1.", "B2.")),
    ]


def test_threshold_scope():
    perplexities = {"a": [1.0, 2.0], "b": [9.0, 10.0]}
    per_report = prepare_samples(_reports(), perplexities, TrainPrepConfig(percentile=50, p_oracle=0.0), retriever_for=lambda s: fake_retrieve)
    corpus = prepare_samples(
        _reports(), perplexities, TrainPrepConfig(percentile=50, p_oracle=0.0, threshold_scope="corpus"), retriever_for=lambda s: fake_retrieve
    )
    assert [s.rag_positions for s in per_report] == [[1], [1]]
    assert [s.rag_positions for s in corpus] == [[], [0, 1]]


def test_prepare_samples_checks_perplexity_counts():
    with pytest.raises(ValueError):
        prepare_samples(_reports(), {"a": [1.0, 2.0], "b": [1.0]}, TrainPrepConfig())


def test_prepare_samples_on_synthetic_corpus(tmp_path, synth_corpus, synth_db):
    perplexities = {p.study_id: p.perplexities for p in synth_corpus.perplexities}
    retriever = SentenceRetriever(synth_db, RetrievalConfig(k_coarse=5, k_fine=2), synth_corpus.encoder)
    cfg = TrainPrepConfig(seed=3)

    def run(threads):
        return prepare_samples(
            synth_corpus.reports,
            perplexities,
            cfg,
            retriever_for=lambda study_id: retriever.bound(study_id),
            threads=threads,
        )

    single, pooled = run(1), run(4)
    assert single == pooled
    assert all(len(s.rag_positions) <= cfg.k_rag_max for s in single)
    assert any(s.rag_positions for s in single)

    path = tmp_path / "samples.jsonl"
    assert serialize_samples(single, path) == len(single)
    assert load_samples(path) == single


def test_load_samples_revalidates(tmp_path):
    bad = _sample_with_spans([(0, 5)]).model_copy(update={"mask_spans": [(0, 5)]})
    path = tmp_path / "samples.jsonl"
    serialize_samples([bad], path)
    with pytest.raises(SpanOverlapError):
        load_samples(path)


def test_serialize_no_samples_writes_empty_file(tmp_path):
    path = tmp_path / "nested" / "samples.jsonl"
    assert serialize_samples([], path) == 0
    assert path.read_bytes() == b""
    assert load_samples(path) == []
