from __future__ import annotations

import json
from pathlib import Path

import pytest

from opencoding.cli import main, resolve_approach
from opencoding.coders import Approach

from conftest import FIXTURES_DIR, METADATA


def run_cli(*argv) -> int:
    return main([str(a) for a in argv])


def ingest_and_chunk(project: Path, raw: Path) -> None:
    assert run_cli(
        "--project", project, "ingest", "--input", raw,
        "--research-question", METADATA["research_question"],
        "--context", METADATA["context"],
    ) == 0
    assert run_cli("--project", project, "chunk") == 0


@pytest.fixture
def small_raw(tmp_path) -> Path:
    raw = tmp_path / "raw.jsonl"
    rows = [
        {"id": f"m{i}", "author": "a", "role": "user", "ts": 1000 + 60 * i,
         "text": f"message number {i} about wiring and gardens"}
        for i in range(4)
    ]
    raw.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    return raw


class TestApproachResolution:
    def test_aliases_and_flags(self):
        assert resolve_approach("item", True, False) is Approach.ITEM_VERB
        assert resolve_approach("item", False, False) is Approach.ITEM_LEVEL
        assert resolve_approach("chunk", False, True) is Approach.CHUNK_STRUCTURED
        assert resolve_approach("chunk_structured", False, False) is Approach.CHUNK_STRUCTURED
        assert resolve_approach("topic_model", False, False) is Approach.TOPIC_MODEL
        with pytest.raises(ValueError):
            resolve_approach("mystery", False, False)


class TestPipelineCommands:
    def test_ingest_chunk_write_corpus_and_manifests(self, tmp_path, small_raw):
        project = tmp_path / "proj"
        ingest_and_chunk(project, small_raw)
        lines = (project / "corpus.jsonl").read_text().splitlines()
        assert len(lines) == 4
        assert all("chunk_id" in json.loads(line) for line in lines)
        ingest_manifest = json.loads((project / "manifests" / "ingest.json").read_text())
        assert ingest_manifest["params"]["messages"] == 4
        assert (project / "manifests" / "chunk.json").exists()

    def test_code_with_replay_fixture_writes_codebook_and_manifest(self, tmp_path):
        project = tmp_path / "proj"
        ingest_and_chunk(project, FIXTURES_DIR / "corpus_20.jsonl")
        status = run_cli(
            "--project", project, "code", "--approach", "item", "--verb-phrases",
            "--model", "gpt-4o-0513", "--temperature", "0.5",
            "--replay", FIXTURES_DIR / "transcripts",
        )
        assert status == 0
        codebook_path = project / "codebooks" / "item_verb_gpt-4o-0513_0.5_1.json"
        assert codebook_path.exists()
        doc = json.loads(codebook_path.read_text())
        labels = {c["label"] for c in doc["codes"]}
        assert "manage user expectations" in labels
        manifest = json.loads(
            (project / "manifests" / "code-item_verb_gpt-4o-0513_0.5_1.json").read_text()
        )
        assert manifest["params"]["approach"] == "item_verb"
        assert manifest["transcript"]  # digest of the replayed transcript
        assert manifest["params"]["parse_failures"] == 0

    def test_merge_and_report(self, tmp_path, small_raw):
        project = tmp_path / "proj"
        ingest_and_chunk(project, small_raw)
        assert run_cli(
            "--project", project, "code", "--approach", "item", "--provider", "scripted"
        ) == 0
        assert run_cli(
            "--project", project, "code", "--approach", "chunk", "--provider", "scripted"
        ) == 0
        assert run_cli("--project", project, "merge", "--threshold", "0.35") == 0
        assert (project / "merged_codes.json").exists()
        assert (project / "embeddings.json").exists()
        merged = json.loads((project / "merged_codes.json").read_text())
        assert merged["params"]["distance_threshold"] == 0.35
        assert merged["merged_codes"]
        assert run_cli("--project", project, "report", "--table", "2") == 0
        report = json.loads((project / "reports" / "table2.json").read_text())
        assert report["rows"][0][0] == "# Codes"

    def test_matrix_expands_cross_product(self, tmp_path, small_raw, capsys):
        project = tmp_path / "proj"
        ingest_and_chunk(project, small_raw)
        status = run_cli(
            "--project", project, "matrix",
            "--models", "model-a,model-b,model-c,model-d,model-e,model-f",
            "--temperatures", "0.1,0.3,0.5,0.7,0.9",
            "--runs", "1",
            "--approach", "item_level",
            "--provider", "scripted",
        )
        assert status == 0
        codebooks = list((project / "codebooks").glob("item_level_*.json"))
        assert len(codebooks) == 30
        names = {p.stem for p in codebooks}
        assert "item_level_model-a_0.1_1" in names
        manifest = json.loads((project / "manifests" / "matrix.json").read_text())
        assert manifest["params"]["codebooks"] == 30


class TestErrorSurface:
    def test_unknown_subcommand_exits_2_with_usage(self, capsys):
        with pytest.raises(SystemExit) as exit_info:
            run_cli("frobnicate")
        assert exit_info.value.code == 2
        assert "usage:" in capsys.readouterr().err

    def test_failure_emits_single_line_json(self, tmp_path, capsys):
        status = run_cli("--project", tmp_path, "chunk")
        assert status == 1
        err_lines = [l for l in capsys.readouterr().err.splitlines() if l.strip()]
        assert len(err_lines) == 1
        payload = json.loads(err_lines[0])
        assert "error" in payload and "detail" in payload

    def test_replay_miss_surfaces_as_error(self, tmp_path, small_raw, capsys):
        project = tmp_path / "proj"
        ingest_and_chunk(project, small_raw)
        status = run_cli(
            "--project", project, "code", "--approach", "item",
            "--replay", tmp_path / "empty_transcripts",
        )
        assert status == 1
        payload = json.loads(capsys.readouterr().err.strip())
        assert payload["error"] == "ReplayMiss"

    def test_malformed_record_reports_index(self, tmp_path, capsys):
        raw = tmp_path / "bad.jsonl"
        raw.write_text('{"id": "a", "author": "x", "role": "user", "ts": "??", "text": "hi"}\n')
        status = run_cli("--project", tmp_path / "p", "ingest", "--input", raw)
        assert status == 1
        payload = json.loads(capsys.readouterr().err.strip())
        assert payload["error"] == "MalformedRecord"
