import csv
import hashlib
import json

import pytest

from sarcasmcue.cli import main


def run_cli(*argv):
    return main([str(a) for a in argv])


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_run_writes_reports(tmp_path, capsys):
    out = tmp_path / "out"
    assert run_cli("run", "--strategy", "CoC", "--dataset", "sarcasm20", "--out-dir", out) == 0
    assert (out / "results.csv").exists() and (out / "report.json").exists()
    assert len(list((out / "traces" / "CoC").glob("run*.jsonl"))) == 5
    assert "CoC" in capsys.readouterr().out


def test_data_alias(tmp_path):
    assert run_cli("run", "--strategy", "IO", "--data", "sarcasm20", "--runs", 1, "--out-dir", tmp_path) == 0


def test_rerun_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run_cli("run", "--strategy", "BoC", "--dataset", "sarcasm20", "--out-dir", out) == 0
    assert digest(a / "report.json") == digest(b / "report.json")
    assert digest(a / "results.csv") == digest(b / "results.csv")


@pytest.mark.parametrize("cmd", [
    ["run", "--strategy", "GoC", "--k", 5, "--baseline", "IO"],
    ["ablate", "--strategy", "BoC", "--remove", "lin"],
])
def test_config_replay(tmp_path, cmd):
    first = tmp_path / "first"
    assert run_cli(*cmd, "--dataset", "sarcasm20", "--out-dir", first) == 0
    again = tmp_path / "again"
    assert run_cli(cmd[0], "--config", first / "report.json", "--out-dir", again) == 0
    assert digest(first / "report.json") == digest(again / "report.json")


def test_flags_beat_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"strategy": {"strategy": "CoT"}, "dataset": {"path": "sarcasm20"}, "runs": 2}))
    out = tmp_path / "out"
    assert run_cli("run", "--config", cfg, "--strategy", "IO", "--out-dir", out) == 0
    doc = json.loads((out / "report.json").read_text())
    assert doc["reports"][0]["strategy"] == "IO" and len(doc["reports"][0]["runs"]) == 2


def test_writes_only_to_out_and_cache(tmp_path, monkeypatch):
    work = tmp_path / "cwd"
    work.mkdir()
    monkeypatch.chdir(work)
    out, cache = tmp_path / "out", tmp_path / "cache"
    assert run_cli("run", "--strategy", "GoC", "--dataset", "sarcasm20", "--runs", 1,
                   "--backend", "simulated", "--out-dir", out, "--cache-dir", cache) == 0
    assert list(work.iterdir()) == []
    assert {p.name for p in tmp_path.iterdir()} == {"cwd", "out", "cache"}
    assert any(cache.iterdir())


def test_cache_dir_doubles_as_fixture_store(tmp_path):
    cache = tmp_path / "cache"
    assert run_cli("run", "--strategy", "CoC", "--dataset", "sarcasm20", "--runs", 1, "--backend", "simulated",
                   "--out-dir", tmp_path / "a", "--cache-dir", cache) == 0
    assert run_cli("run", "--strategy", "CoC", "--dataset", "sarcasm20", "--runs", 1,
                   "--fixture-dir", cache, "--out-dir", tmp_path / "b") == 0
    assert digest(tmp_path / "a" / "results.csv") == digest(tmp_path / "b" / "results.csv")


@pytest.mark.parametrize("argv", [
    ["run", "--strategy", "BoC", "--q", "11"],
    ["run", "--strategy", "BoC", "--q", "0"],
    ["run", "--strategy", "nope"],
    ["run", "--strategy", "ToC", "--lr", "0"],
    ["run", "--strategy", "GoC", "--threshold", "2"],
    ["run", "--strategy", "IO", "--k", "-1"],
    ["run", "--strategy", "IO", "--backend", "openai", "--model", "gpt-x"],
    ["run", "--strategy", "IO", "--backend", "anthropic"],
    ["ablate", "--strategy", "CoC"],
    ["ablate", "--strategy", "GoC", "--remove", "bogus"],
    ["run"],
    ["frobnicate"],
])
def test_config_errors_exit_2(tmp_path, monkeypatch, argv):
    monkeypatch.delenv("OPENAI_API_KEY", raising=False)
    monkeypatch.delenv("ANTHROPIC_API_KEY", raising=False)
    assert run_cli(*argv, "--dataset", "sarcasm20", "--out-dir", tmp_path) == 2


def test_missing_dataset_exit_2(tmp_path):
    assert run_cli("run", "--strategy", "IO", "--dataset", tmp_path / "missing.jsonl", "--out-dir", tmp_path) == 2


def test_secret_in_config_rejected(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"backend": {"provider": "openai", "api_key": "sk-123"}}))
    assert run_cli("run", "--config", cfg, "--strategy", "IO", "--dataset", "sarcasm20") == 2
    assert "backend.api_key" in capsys.readouterr().err


def test_unknown_config_key_names_field(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"strategy": {"tee": 3}}))
    assert run_cli("run", "--config", cfg, "--strategy", "IO", "--dataset", "sarcasm20") == 2
    assert "strategy.tee" in capsys.readouterr().err


def test_missing_fixture_is_runtime_error(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert run_cli("run", "--strategy", "IO", "--dataset", "sarcasm20", "--runs", 1,
                   "--fixture-dir", empty, "--out-dir", tmp_path / "out") == 1
    assert (tmp_path / "out" / "traces" / "FAILED").exists()


def test_train_toc_reproducible(tmp_path, capsys):
    for name in ("a", "b"):
        assert run_cli("train-toc", "--dataset", "sarcasm20", "--seed", 3, "--out-dir", tmp_path / name) == 0
    assert digest(tmp_path / "a" / "toc_params.json") == digest(tmp_path / "b" / "toc_params.json")
    assert "dev_f1=" in capsys.readouterr().out
    params = json.loads((tmp_path / "a" / "toc_params.json").read_text())
    assert params


def test_train_toc_with_removed_category(tmp_path):
    assert run_cli("train-toc", "--dataset", "sarcasm20", "--remove", "emo", "--seed", 0,
                   "--out-dir", tmp_path) == 0


def test_stats(tmp_path, capsys):
    assert run_cli("stats", "sarcasm20") == 0
    out = capsys.readouterr().out
    assert "10" in out and "6" in out


def test_report_from_traces_and_json(tmp_path):
    out = tmp_path / "out"
    assert run_cli("run", "--strategy", "GoC", "--baseline", "IO", "--dataset", "sarcasm20", "--out-dir", out) == 0
    rebuilt = tmp_path / "rebuilt"
    assert run_cli("report", out / "traces", "--baseline", "IO", "--out-dir", rebuilt) == 0
    live = {r["strategy"]: r for r in csv.DictReader((out / "results.csv").open())}
    again = {r["strategy"]: r for r in csv.DictReader((rebuilt / "results.csv").open())}
    assert live == again
    merged = tmp_path / "merged"
    assert run_cli("report", out / "report.json", "--no-chart-data", "--out-dir", merged) == 0
    assert not (merged / "error_rates.csv").exists()
    assert run_cli("report", tmp_path / "nothing", "--out-dir", merged) == 2
