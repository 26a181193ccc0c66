from __future__ import annotations

import io
import json
import subprocess
import sys

import pytest

from ragfa.cli import main
from ragfa.pipeline import RagPipeline
from ragfa.prompt import PromptParts, build_prompt

CORPUS = [
    {"id": "tehran", "text": "تهران پایتخت ایران است. جمعیت تهران زیاد است.", "source_file": "cities.txt"},
    {"id": "shiraz", "text": "شیراز شهر شعر و باغ است. حافظ در شیراز است.", "datetime": "2024-06-01"},
]


@pytest.fixture
def corpus(tmp_path):
    p = tmp_path / "corpus.jsonl"
    p.write_text("\n".join(json.dumps(r, ensure_ascii=False) for r in CORPUS), encoding="utf-8")
    return p


@pytest.fixture
def indexed(tmp_path, corpus):
    out = tmp_path / "out"
    assert main(["ingest", str(corpus), "--out", str(out)]) == 0
    assert main(["index", "--out", str(out)]) == 0
    return out


def write_dataset(path, examples):
    path.write_text("\n".join(json.dumps(e.__dict__, ensure_ascii=False) for e in examples), encoding="utf-8")
    return path


class TestIngestIndex:
    def test_writes_chunk_store_and_echoes_config(self, tmp_path, corpus, capsys):
        out = tmp_path / "o"
        assert main(["ingest", str(corpus), "--out", str(out), "--chunk-size", "8", "--overlap", "2"]) == 0
        captured = capsys.readouterr()
        assert json.loads(captured.err.splitlines()[0])["chunking"] == {"chunk_size_tokens": 8, "overlap_tokens": 2}
        assert (out / "chunks.jsonl").exists()

    def test_missing_corpus(self, tmp_path, capsys):
        assert main(["ingest", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path)]) == 2
        assert "error" in capsys.readouterr().err

    def test_invalid_chunk_config_names_field(self, tmp_path, corpus, capsys):
        assert main(["ingest", str(corpus), "--out", str(tmp_path), "--chunk-size", "4", "--overlap", "4"]) == 2
        assert "overlap_tokens" in capsys.readouterr().err

    def test_unknown_config_key(self, tmp_path, corpus):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"chunking": {"size": 3}}))
        assert main(["ingest", str(corpus), "--config", str(cfg), "--out", str(tmp_path)]) == 2

    def test_config_file_and_set_override(self, tmp_path, corpus, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"hybrid": {"fusion": "rrf", "join_cap": 5}}))
        args = ["ingest", str(corpus), "--config", str(cfg), "--set", "hybrid.join_cap=7", "--out", str(tmp_path)]
        assert main(args) == 0
        echoed = json.loads(capsys.readouterr().err.splitlines()[0])
        assert echoed["hybrid"]["fusion"] == "rrf" and echoed["hybrid"]["join_cap"] == 7

    def test_index_files_reloadable(self, indexed):
        for name in ("bm25.json", "vectors.json", "embedder.json"):
            assert (indexed / name).exists()
        assert RagPipeline.load(indexed).retrieve("تهران")

    def test_empty_chunk_store(self, tmp_path):
        (tmp_path / "chunks.jsonl").write_text(json.dumps({"magic": "PRAG1", "kind": "chunks"}) + "\n")
        assert main(["index", "--out", str(tmp_path)]) == 2

    def test_index_without_ingest(self, tmp_path):
        assert main(["index", "--out", str(tmp_path)]) == 2


class TestQuery:
    def test_known_answer_and_provenance(self, indexed, capsys):
        assert main(["query", "حافظ در کدام شهر است؟", "--out", str(indexed)]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "حافظ در شیراز است"
        assert lines[2].split()[0] == "1" and lines[2].split()[-1] == "shiraz#0"

    def test_show_prompt_matches_builder(self, indexed, capsys):
        assert main(["query", "حافظ", "--show-prompt", "--out", str(indexed)]) == 0
        out = capsys.readouterr().out
        pipe = RagPipeline.load(indexed)
        ans = pipe.answer("حافظ")
        assert ans.prompt == build_prompt(PromptParts("حافظ", ans.chunks))
        assert out.endswith(ans.prompt)

    def test_repl(self, indexed, capsys, monkeypatch):
        monkeypatch.setattr(sys, "stdin", io.StringIO("حافظ در کدام شهر است\n\nپایتخت ایران\n"))
        assert main(["query", "--repl", "--out", str(indexed)]) == 0
        out = capsys.readouterr().out
        assert "حافظ در شیراز است" in out and "تهران پایتخت ایران است" in out

    def test_unindexed(self, tmp_path):
        assert main(["query", "x", "--out", str(tmp_path)]) == 2

    def test_remote_failure_exit_3(self, indexed, capsys):
        code = main(["query", "حافظ", "--out", str(indexed), "--generator", "remote", "--set", 'generator.endpoint="http://127.0.0.1:9"'])
        assert code == 3
        assert "remote" in capsys.readouterr().err

    def test_remote_without_endpoint_exit_2(self, indexed):
        assert main(["query", "حافظ", "--out", str(indexed), "--generator", "remote"]) == 2


class TestEvalAndSweep:
    def test_eval_embed_self_similar(self, tmp_path, factoid50, capsys):
        from ragfa.evaluate import QAExample

        ds = [QAExample(e.paragraph, e.paragraph, e.gold_answer) for e in factoid50[:10]]
        path = write_dataset(tmp_path / "d.jsonl", ds)
        assert main(["eval-embed", str(path), "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0].split()[:6] == ["Model", "Top", "1", "Top", "2", "Top"]
        assert out[1].split()[1:] == ["10", "0", "0", "0", "0", "10"]
        assert len((tmp_path / "embed_results.jsonl").read_text(encoding="utf-8").splitlines()) == 10

    def test_eval_rag(self, tmp_path, factoid50, capsys):
        path = write_dataset(tmp_path / "d.jsonl", factoid50[:10])
        assert main(["eval-rag", str(path), "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "Grading rule" in out and (tmp_path / "rag_results.jsonl").exists()

    def test_sweep(self, tmp_path, factoid50, capsys):
        path = write_dataset(tmp_path / "d.jsonl", factoid50[:10])
        space = tmp_path / "space.json"
        space.write_text(json.dumps({"chunk_size_tokens": [16, 32], "overlap_tokens": [0]}))
        assert main(["sweep", str(space), str(path), "--out", str(tmp_path)]) == 0
        assert "best: trial" in capsys.readouterr().out
        assert len((tmp_path / "trials.jsonl").read_text().splitlines()) == 2

    def test_sweep_bad_space(self, tmp_path, factoid50):
        path = write_dataset(tmp_path / "d.jsonl", factoid50[:3])
        space = tmp_path / "space.json"
        space.write_text(json.dumps({"learning_rate": [1]}))
        assert main(["sweep", str(space), str(path), "--out", str(tmp_path)]) == 2

    def test_missing_dataset(self, tmp_path):
        assert main(["eval-rag", str(tmp_path / "none.jsonl"), "--out", str(tmp_path)]) == 2


def test_console_entry_point_runs(tmp_path, corpus):
    proc = subprocess.run(
        [sys.executable, "-m", "ragfa.cli", "ingest", str(corpus), "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0 and "ingested 2 documents" in proc.stdout


def test_usage_error_exit_2():
    with pytest.raises(SystemExit) as err:
        main(["frobnicate"])
    assert err.value.code == 2
