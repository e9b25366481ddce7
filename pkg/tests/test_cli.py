import json

import pytest

from cli.config import ConfigError, load_run_config, read_config_file
from cli.main import run
from cli.options import resolve_findings, resolve_modalities, resolve_organs, resolve_strategy
from cli.output import error_record
from db.operations import TEXT, DatabaseBuildError, load_database


# ── Configuration ────────────────────────────────────────────────────────────

def test_config_precedence(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('seed = 9\npolicy = "fixed:3"\n\n[retrieval]\nk_coarse = 5\nk_fine = 4\n', encoding="utf-8")
    cfg = load_run_config(path, {"retrieval.k_fine": 2, "threads": None})
    assert cfg.retrieval.k_coarse == 5
    assert cfg.retrieval.k_fine == 2
    assert cfg.policy == "fixed:3"
    assert cfg.threads == 1
    assert cfg.trainprep.seed == 9 and cfg.synth.seed == 9


def test_section_seed_wins_over_top_level(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"seed": 1, "synth": {"seed": 4}}), encoding="utf-8")
    cfg = load_run_config(path)
    assert (cfg.synth.seed, cfg.trainprep.seed) == (4, 1)


def test_config_errors_list_every_key(tmp_path):
    with pytest.raises(ConfigError) as exc:
        load_run_config(None, {"retrieval.k_fine": 0, "policy": "sometimes", "colour": "red"})
    joined = " ".join(exc.value.details)
    assert "retrieval.k_fine" in joined and "policy" in joined and "colour" in joined


@pytest.mark.parametrize("name, body", [("run.yaml", "seed: 1"), ("run.json", "[1, 2]"), ("run.toml", "seed = ")])
def test_read_config_file_rejects(tmp_path, name, body):
    path = tmp_path / name
    path.write_text(body, encoding="utf-8")
    with pytest.raises(ConfigError):
        read_config_file(path)


def test_worker_count_auto():
    assert load_run_config(None, {"threads": 0}).worker_count >= 1


# ── Options ──────────────────────────────────────────────────────────────────

@pytest.mark.parametrize(
    "value, expected",
    [
        (None, ["img2img", "img2txt", "txt2txt", "upper"]),
        ("all", ["img2img", "img2txt", "txt2txt", "upper"]),
        (" I2I, oracle ,i2i", ["img2img", "upper"]),
    ],
)
def test_resolve_modalities(value, expected):
    assert resolve_modalities(value) == expected


@pytest.mark.parametrize(
    "resolver, value",
    [
        (resolve_modalities, "img2audio"),
        (resolve_strategy, "beam"),
        (resolve_organs, "lung,spleen"),
        (resolve_findings, "Lung nodule,Broken rib"),
    ],
)
def test_resolvers_reject(resolver, value):
    with pytest.raises(ConfigError):
        resolver(value)


def test_resolvers_accept_aliases():
    assert resolve_strategy(" Two-Stage ") == "twostage"
    assert resolve_strategy("") is None
    assert resolve_organs(" Lung, heart, lung") == ["lung", "heart"]
    assert resolve_findings("lung NODULE") == ["Lung nodule"]


def test_error_record_shape():
    record = json.loads(error_record(DatabaseBuildError("2 ids do not resolve", ["a", "b"])))
    assert record == {"error": "DatabaseBuildError", "message": "2 ids do not resolve", "details": ["a", "b"]}


# ── Commands ─────────────────────────────────────────────────────────────────

_OUTPUTS = ("eval.json", "traces.jsonl", "reports.jsonl", "samples.jsonl", "spectrum.json", "projection.json")


def _pipeline(root, threads):
    corpus, db = root / "corpus", root / "db"
    common = ["--seed", "7", "--threads", str(threads)]
    encoder = ["--encoder", str(corpus / "text_encoder.json")]
    steps = [
        ["gen-synthetic", "--out", str(corpus), "--studies", "30", "--dim-image", "16", "--dim-text", "16", *common],
        ["build-db", "--corpus", str(corpus), "--out", str(db), *common],
        ["eval-retrieval", "--db", str(db), "--k", "5", "--out", str(root / "eval.json"), *common],
        [
            "decode", "--db", str(db), "--scripts", str(corpus / "scripts"), "--policy", "adaptive:2",
            "--k-coarse", "5", "--k-fine", "2", "--trace-out", str(root / "traces.jsonl"),
            "--reports-out", str(root / "reports.jsonl"), *encoder, *common,
        ],
        [
            "prep-train", "--db", str(db), "--reports", str(corpus / "reports.jsonl"),
            "--perplexities", str(corpus / "perplexities.jsonl"), "--strategy", "text2text",
            "--out", str(root / "samples.jsonl"), *encoder, *common,
        ],
        ["diagnose", "--embeddings", str(corpus / "image" / "lung.aemb"), "--json", str(root / "spectrum.json"), *common],
        [
            "project-test", "--embeddings", str(corpus / "image" / "lung.aemb"), "--labels", str(corpus / "labels.csv"),
            "--findings", "Lung nodule,Consolidation", "--out", str(root / "projection.json"), *common,
        ],
    ]
    for argv in steps:
        assert run(argv) == 0, argv


def test_pipeline_is_reproducible_across_thread_counts(tmp_path):
    _pipeline(tmp_path / "one", threads=1)
    _pipeline(tmp_path / "four", threads=4)
    for name in _OUTPUTS:
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "four" / name).read_bytes(), name

    evaluations = json.loads((tmp_path / "one" / "eval.json").read_text(encoding="utf-8"))
    assert len(evaluations) == 16
    assert {e["modality"] for e in evaluations} == {"img2img", "img2txt", "txt2txt", "upper"}

    reports = (tmp_path / "one" / "reports.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(reports) == 30
    assert all(json.loads(line)["policy"] == "adaptive:2" for line in reports)


def test_retrieve_command(tmp_path, capsys):
    corpus, db = tmp_path / "corpus", tmp_path / "db"
    assert run(["gen-synthetic", "--out", str(corpus), "--studies", "12", "--dim-image", "8", "--dim-text", "8"]) == 0
    assert run(["build-db", "--corpus", str(corpus), "--out", str(db)]) == 0
    capsys.readouterr()
    code = run([
        "retrieve", "--db", str(db), "--organ", " Lung ", "--query", "A 5 mm nodule.", "--study", "study_00001",
        "--k-coarse", "4", "--k-fine", "2", "--encoder", str(corpus / "text_encoder.json"),
        "--out", str(tmp_path / "hit.json"),
    ])
    assert code == 0
    result = json.loads((tmp_path / "hit.json").read_text(encoding="utf-8"))
    assert result["strategy"] == "twostage" and result["organ"] == "lung"
    assert 1 <= len(result["selected"]) <= 2
    assert all(r["study_id"] != "study_00001" for r in result["selected"])


def test_two_stage_without_study_is_a_usage_error(tmp_path, capsys):
    corpus, db = tmp_path / "corpus", tmp_path / "db"
    run(["gen-synthetic", "--out", str(corpus), "--studies", "6", "--dim-image", "8", "--dim-text", "8"])
    run(["build-db", "--corpus", str(corpus), "--out", str(db)])
    capsys.readouterr()
    code = run(["retrieve", "--db", str(db), "--organ", "lung", "--query", "nodule", "--encoder", str(corpus / "text_encoder.json")])
    assert code == 2
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "ConfigError"


def test_unknown_flag_exits_nonzero():
    assert run(["eval-retrieval", "--db", "x", "--bogus"]) != 0
    assert run([]) != 0


def test_bad_config_exits_with_json_record(tmp_path, capsys):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"retrieval": {"k_fine": 0}}), encoding="utf-8")
    code = run(["eval-retrieval", "--db", str(tmp_path), "--config", str(path)])
    assert code == 2
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["error"] == "ConfigError"
    assert any("retrieval.k_fine" in d for d in record["details"])


def test_bad_strategy_and_modality_exit_2(tmp_path, capsys):
    assert run(["decode", "--db", str(tmp_path), "--trace-out", str(tmp_path / "t.jsonl"), "--strategy", "beam"]) == 2
    assert run(["eval-retrieval", "--db", str(tmp_path), "--modality", "img2audio"]) == 2


def test_runtime_failure_exits_1(tmp_path, capsys):
    code = run(["eval-retrieval", "--db", str(tmp_path / "missing")])
    assert code == 1
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["error"] == "FileNotFoundError"


def test_build_db_and_stored_id_knn(tmp_path, capsys):
    corpus, db_dir = tmp_path / "corpus", tmp_path / "db"
    assert run(["gen-synthetic", "--out", str(corpus), "--studies", "12", "--dim-image", "8", "--dim-text", "8"]) == 0
    code = run([
        "build-db", "--paragraphs", str(corpus), "--sent-emb", str(corpus / "sentence_embeddings.aemb"),
        "--img-emb", str(corpus / "image"), "--labels", str(corpus / "labels.csv"), "--out", str(db_dir),
    ])
    assert code == 0
    db = load_database(db_dir)
    sentence = db.index("lung", TEXT).ids[0]
    owner = db.record(sentence).study_id

    assert run(["retrieve", "--db", str(db_dir), "--organ", "lung", "--query-id", sentence, "--k", "3",
                "--out", str(tmp_path / "text.json")]) == 0
    text_hits = json.loads((tmp_path / "text.json").read_text(encoding="utf-8"))
    assert text_hits["space"] == "text" and text_hits["k"] == 3
    assert len(text_hits["neighbours"]) == 3
    assert all(hit["study_id"] != owner for hit in text_hits["neighbours"])

    assert run(["retrieve", "--db", str(db_dir), "--organ", "lung", "--query-id", owner, "--k", "20",
                "--out", str(tmp_path / "image.json")]) == 0
    image_hits = json.loads((tmp_path / "image.json").read_text(encoding="utf-8"))
    assert image_hits["space"] == "image"
    assert sorted(hit["id"] for hit in image_hits["neighbours"]) == sorted(s for s in db.image_embeddings["lung"].ids if s != owner)


def test_retrieve_query_flags(tmp_path, capsys):
    corpus, db_dir = tmp_path / "corpus", tmp_path / "db"
    run(["gen-synthetic", "--out", str(corpus), "--studies", "6", "--dim-image", "8", "--dim-text", "8"])
    run(["build-db", "--corpus", str(corpus), "--out", str(db_dir)])
    capsys.readouterr()
    assert run(["retrieve", "--db", str(db_dir), "--organ", "lung"]) == 2
    assert run(["retrieve", "--db", str(db_dir), "--organ", "lung", "--query", "x", "--query-id", "y"]) == 2
    assert run(["retrieve", "--db", str(db_dir), "--organ", "lung", "--query-id", "nobody"]) == 1
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "UnknownQueryError"
