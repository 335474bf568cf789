from __future__ import annotations

import csv
import json

import pytest

from gamerank.cli import main

SMALL = ["--users", "30", "--games", "120", "--ranking-length", "30"]


@pytest.fixture
def workdir(tmp_path):
    return tmp_path / "work"


def run(*argv):
    return main([str(a) for a in argv])


def test_usage_errors_exit_1(capsys, workdir):
    assert run("frobnicate") == 1
    assert run("rerank", "--workdir", workdir, "--cutoffs", "ten") == 1
    assert run("rerank", "--workdir", workdir, "--models", "bm25") == 1
    assert "bm25" in capsys.readouterr().err


def test_stage_order_is_enforced(capsys, workdir):
    assert run("synth", "--workdir", workdir, *SMALL) == 0
    assert run("eval", "--workdir", workdir) == 2
    err = capsys.readouterr().err
    assert "reranks.jsonl" in err and "[eval]" in err
    assert run("strategize", "--workdir", workdir) == 2
    assert "profiles.jsonl" in capsys.readouterr().err


def test_missing_corpus_names_file(capsys, tmp_path):
    assert run("profile", "--workdir", tmp_path) == 2
    assert "games.jsonl" in capsys.readouterr().err


def test_synth_creates_dir_and_is_reproducible(workdir):
    assert run("synth", "--workdir", workdir, *SMALL, "--seed", "7") == 0
    first = {p.name: p.read_bytes() for p in workdir.iterdir()}
    assert set(first) == {"games.jsonl", "histories.jsonl", "rankings.jsonl", "labels.jsonl", "ground_truth.jsonl"}
    assert run("synth", "--workdir", workdir, *SMALL, "--seed", "7") == 0
    assert first == {p.name: p.read_bytes() for p in workdir.iterdir()}


def test_full_pipeline_stagewise(capsys, workdir):
    assert run("synth", "--workdir", workdir, *SMALL) == 0
    assert run("profile", "--workdir", workdir) == 0
    assert run("strategize", "--workdir", workdir) == 0
    assert run("rerank", "--workdir", workdir, "--runs", "2") == 0
    assert run("eval", "--workdir", workdir, "--runs", "2") == 0
    capsys.readouterr()
    assert run("report", "--workdir", workdir) == 0
    out = capsys.readouterr().out
    assert out.count("Total Avg.") == 3
    for label in ("Baseline", "Title-based", "Title+Desc", "LLM w/o Pers.", "Proposed"):
        assert label in out
    assert (workdir / "report.txt").read_text() == out
    with open(workdir / "curve.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["model"] for r in rows} == {
        "baseline_identity", "title", "title_desc", "llm_no_personalization", "llm_personalized",
    }
    assert max(int(r["position"]) for r in rows) == 30

    assert run("report", "--workdir", workdir, "--format", "machine") == 0
    lines = capsys.readouterr().out.splitlines()
    cells = [json.loads(line) for line in lines]
    assert all("metric" in c and "segment" in c for c in cells)


def test_rerank_reuses_cache_and_stage_isolation(workdir):
    assert run("synth", "--workdir", workdir, *SMALL) == 0
    assert run("profile", "--workdir", workdir) == 0
    assert run("strategize", "--workdir", workdir) == 0
    assert run("rerank", "--workdir", workdir, "--runs", "1") == 0
    reranks = (workdir / "reranks.jsonl").read_bytes()
    profiles = (workdir / "profiles.jsonl").read_bytes()
    assert run("rerank", "--workdir", workdir, "--runs", "1") == 0
    assert (workdir / "reranks.jsonl").read_bytes() == reranks

    (workdir / "strategies.jsonl").unlink()
    assert run("strategize", "--workdir", workdir) == 0
    assert (workdir / "profiles.jsonl").read_bytes() == profiles
    assert run("rerank", "--workdir", workdir, "--runs", "1") == 0
    assert (workdir / "reranks.jsonl").read_bytes() == reranks


def test_single_model_eval(capsys, workdir):
    assert run("synth", "--workdir", workdir, *SMALL) == 0
    assert run("rerank", "--workdir", workdir, "--models", "baseline_identity", "--runs", "1") == 0
    assert run("eval", "--workdir", workdir, "--runs", "1") == 0
    meta = json.loads((workdir / "eval_meta.json").read_text())
    assert meta["models"] == ["baseline_identity"]
    capsys.readouterr()
    assert run("report", "--workdir", workdir) == 0
    assert "Baseline" in capsys.readouterr().out


def test_missing_segment_renders_gaps(capsys, caplog, workdir):
    assert run("synth", "--workdir", workdir, *SMALL) == 0
    assert run("rerank", "--workdir", workdir, "--models", "baseline_identity", "--runs", "1") == 0
    assert run("eval", "--workdir", workdir, "--runs", "1") == 0
    cells = [json.loads(line) for line in (workdir / "eval_cells.jsonl").read_text().splitlines()]
    kept = [c for c in cells if c["segment"] != "30-70"]
    (workdir / "eval_cells.jsonl").write_text("".join(json.dumps(c) + "\n" for c in kept))
    capsys.readouterr()
    assert run("report", "--workdir", workdir) == 0
    assert "--" in capsys.readouterr().out
    assert any("30-70" in r.getMessage() and r.levelname == "WARNING" for r in caplog.records)


def test_config_file_overrides_defaults(workdir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"users": 12, "games": 50, "ranking_length": 10, "seed": 4}))
    assert run("synth", "--workdir", workdir, "--config", cfg) == 0
    assert len((workdir / "histories.jsonl").read_text().splitlines()) == 12
    # explicit flags win over the file
    assert run("synth", "--workdir", workdir, "--config", cfg, "--users", "9") == 0
    assert len((workdir / "histories.jsonl").read_text().splitlines()) == 9


def test_bad_config_is_usage_error(workdir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"no_such_flag": 1}))
    assert run("synth", "--workdir", workdir, "--config", cfg) == 1
    cfg.write_text("{broken")
    assert run("synth", "--workdir", workdir, "--config", cfg) == 1


def test_two_stage_flag_is_reserved(capsys, workdir):
    assert run("synth", "--workdir", workdir, *SMALL) == 0
    assert run("profile", "--workdir", workdir) == 0
    assert run("strategize", "--workdir", workdir, "--two-stage-strategy") == 1
    assert "reserved" in capsys.readouterr().err


def test_remote_without_endpoint_is_usage_error(workdir):
    assert run("synth", "--workdir", workdir, *SMALL) == 0
    assert run("profile", "--workdir", workdir, "--provider", "remote") == 1


def test_unreachable_provider_exits_3(capsys, workdir):
    assert run("synth", "--workdir", workdir, *SMALL) == 0
    code = run(
        "profile", "--workdir", workdir, "--provider", "remote",
        "--llm-endpoint", "http://127.0.0.1:9/v1/chat/completions", "--max-attempts", "1",
    )
    assert code == 3
    assert "[profile]" in capsys.readouterr().err


def test_profile_threshold_error_exits_2(capsys, workdir):
    assert run("synth", "--workdir", workdir, *SMALL) == 0
    code = run("profile", "--workdir", workdir, "--provider", "mock-adversarial", "--retry-cap", "1", "--failure-threshold", "0")
    assert code == 2
    assert "[profile]" in capsys.readouterr().err
