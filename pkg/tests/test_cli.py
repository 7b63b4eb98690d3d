import json

from click.testing import CliRunner

from chronos.cli import main
from chronos.eval.datasets import mini_path

MINI = mini_path().parent


def test_ingest_index_ask(tmp_path):
    runner = CliRunner()
    work = str(tmp_path / "store")
    r = runner.invoke(main, ["ingest", str(MINI / "questions.json"), "--workdir", work,
                             "--extractor-script", str(MINI / "extractor_script.json")])
    assert r.exit_code == 0, r.output
    assert "16 events" in r.output
    r = runner.invoke(main, ["index", "--workdir", work])
    assert r.exit_code == 0, r.output
    r = runner.invoke(main, ["ask", "What is my dog's name?", "--date", "2024-06-15", "--workdir", work,
                             "--agent-script", str(MINI / "agent_script.json"), "--trace"])
    assert r.exit_code == 0, r.output
    assert r.output.startswith("Your dog is called Biscuit.")


def test_eval_and_report(tmp_path):
    runner = CliRunner()
    out, rep = tmp_path / "r.jsonl", tmp_path / "rep.json"
    r = runner.invoke(main, ["eval", "--bench", "mini", "--ablate", "full", "--ablate", "turns_only",
                             "--out", str(out), "--report-out", str(rep), "--workers", "2"])
    assert r.exit_code == 0, r.output
    lines = out.read_text().splitlines()
    assert len(lines) == 24
    report = json.loads(rep.read_text())
    assert report["runs"]["full"]["overall"]["accuracy"] == 100.0
    r = runner.invoke(main, ["report", str(out)])
    assert r.exit_code == 0 and "turns_only" in r.output


def test_sampling_and_bad_flags(tmp_path):
    runner = CliRunner()
    r = runner.invoke(main, ["eval", "--bench", "mini", "--sample", "stratified:6", "--out", str(tmp_path / "r")])
    assert r.exit_code == 0, r.output
    assert len((tmp_path / "r").read_text().splitlines()) == 6
    r = runner.invoke(main, ["eval", "--bench", "mini", "--ablate", "grep_only,vector_only"])
    assert r.exit_code != 0


def test_remote_without_credentials_fails_fast(monkeypatch):
    monkeypatch.delenv("OPENAI_API_KEY", raising=False)
    monkeypatch.delenv("COHERE_API_KEY", raising=False)
    r = CliRunner().invoke(main, ["eval", "--bench", "mini", "--providers", "remote"])
    assert r.exit_code != 0 and "OPENAI_API_KEY" in r.output
