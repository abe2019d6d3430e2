import json
import shutil
import subprocess
import sys

import pytest

from advnews.cli import RunConfig, main
from advnews.fixtures import copy_bundle


@pytest.fixture
def work(tmp_path):
    copy_bundle(tmp_path / "b")
    return tmp_path


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_help_lists_flags():
    r = subprocess.run([sys.executable, "-m", "advnews.cli", "sweep", "--help"],
                       capture_output=True, text=True)
    assert r.returncode == 0
    for flag in ("--config", "--prices", "--headlines", "--out", "--seed", "--jobs", "--sanitize",
                 "--kinds"):
        assert flag in r.stdout


def test_backtest(work, capsys):
    code, out, _ = run(capsys, "backtest", "--config", str(work / "b/run.json"),
                       "--out", str(work / "o"))
    assert code == 0
    summary = json.loads((work / "o/summary.json").read_text())
    assert "cr" in summary and json.loads(out)["cr"] == summary["cr"]
    for name in ("equity.csv", "trades.csv", "actions.csv", "manifest.json"):
        assert (work / "o" / name).exists(), name
    man = json.loads((work / "o/manifest.json").read_text())
    assert man["command"] == "backtest" and len(man["config_sha256"]) == 64


def test_backtest_is_reproducible(work, capsys):
    cfg = str(work / "b/run.json")
    run(capsys, "backtest", "--config", cfg, "--out", str(work / "o1"))
    run(capsys, "backtest", "--config", cfg, "--out", str(work / "o2"))
    for name in ("equity.csv", "trades.csv", "actions.csv", "summary.json"):
        assert (work / "o1" / name).read_bytes() == (work / "o2" / name).read_bytes()
    m1, m2 = (json.loads((work / d / "manifest.json").read_text()) for d in ("o1", "o2"))
    assert m1["inputs"] == m2["inputs"]


def test_missing_prices_names_the_path(work, capsys):
    shutil.rmtree(work / "b/prices")
    code, _, err = run(capsys, "backtest", "--config", str(work / "b/run.json"),
                       "--out", str(work / "o"))
    assert code != 0
    assert "prices" in json.loads(err)["message"]


def test_config_errors_are_all_listed(work, capsys):
    code, _, err = run(capsys, "backtest", "--config", str(work / "b/run.json"),
                       "--prices", str(work / "nope"), "--start", "2024-13-45")
    assert code == 2
    problems = json.loads(err)["problems"]
    assert len(problems) >= 2
    assert any("nope" in p for p in problems) and any("start" in p for p in problems)


def test_unknown_config_key(work):
    cfg = json.loads((work / "b/run.json").read_text())
    cfg["bogus"] = 1
    (work / "b/run.json").write_text(json.dumps(cfg))
    with pytest.raises(Exception, match="bogus"):
        RunConfig.load(work / "b/run.json")


def test_attack_writes_artifacts(work, capsys):
    code, out, _ = run(capsys, "attack", "--config", str(work / "b/run.json"), "--out", str(work / "a"),
                       "--kind", "hidden-text", "--ticker", "NVDA", "--date", "2024-03-01")
    assert code == 0
    res = json.loads(out)
    assert res["touched"] == 2 and res["action_flip"] is True
    rep = json.loads((work / "a/attack_report.json").read_text())
    assert all(h["changed"] for h in rep["headlines"])
    assert all(h["visible_before"] == h["visible_after"] for h in rep["headlines"])
    assert (work / "a/clean/equity.csv").exists() and (work / "a/attacked/equity.csv").exists()


def test_attack_rejects_unknown_ticker(work, capsys):
    code, _, err = run(capsys, "attack", "--config", str(work / "b/run.json"), "--out", str(work / "a"),
                       "--kind", "homoglyph", "--ticker", "ZZZZ", "--date", "2024-03-01")
    assert code != 0 and "ZZZZ" in err


def test_sweep_then_report(work, capsys):
    code, out, _ = run(capsys, "sweep", "--config", str(work / "b/run.json"), "--out", str(work / "s"),
                       "--jobs", "2")
    assert code == 0 and "homoglyph" in out
    for name in ("records.csv", "headline_effects.csv", "summary.json", "summary.txt", "manifest.json"):
        assert (work / "s" / name).exists(), name
    assert list((work / "s/curves").glob("*.csv"))
    code, out2, _ = run(capsys, "report", "--records", str(work / "s/records.csv"))
    assert code == 0
    assert out2 == (work / "s/summary.txt").read_text()


def test_sanitize_command(work, capsys):
    code, out, _ = run(capsys, "sanitize", "--in", str(work / "b/headlines.jsonl"),
                       "--out", str(work / "clean.jsonl"), "--report", str(work / "rep.json"))
    assert code == 0
    res = json.loads(out)
    lines = (work / "clean.jsonl").read_text().splitlines()
    rep = json.loads((work / "rep.json").read_text())
    assert res["headlines"] == len(lines) == len(rep["headlines"]) > 0
    assert rep["totals"]["headlines"] == len(lines)
    assert set(rep["headlines"][0]) >= {"id", "hidden_elements_removed", "homoglyphs_normalized",
                                        "suspicious", "elapsed"}


def test_sanitize_flags_attacked_store(work, capsys):
    run(capsys, "attack", "--config", str(work / "b/run.json"), "--out", str(work / "a"),
        "--kind", "homoglyph", "--ticker", "NVDA", "--date", "2024-03-01")
    code, out, _ = run(capsys, "sanitize", "--in", str(work / "a/attacked_headlines.jsonl"),
                       "--out", str(work / "s"))
    assert code == 0
    res = json.loads(out)
    assert res["suspicious"] == 2 and res["homoglyphs_normalized"] > 0
    assert (work / "s/sanitized.jsonl").exists() and (work / "s/sanitized_report.json").exists()


def test_report_writes_plot_data(work, capsys):
    run(capsys, "sweep", "--config", str(work / "b/run.json"), "--out", str(work / "s"))
    code, _, _ = run(capsys, "report", "--records", str(work / "s/records.csv"),
                     "--out", str(work / "r"))
    assert code == 0
    pts = (work / "r/delta_cr_points.csv").read_text()
    assert pts == (work / "s/curves/delta_cr_points.csv").read_text()
    assert pts.startswith("kind,ticker,date,") and len(pts.splitlines()) == 65


def test_homoglyph_rows_validated(work, capsys):
    cfg = json.loads((work / "b/run.json").read_text())
    cfg["homoglyph_rows"] = "everything"
    (work / "b/run.json").write_text(json.dumps(cfg))
    code, _, err = run(capsys, "backtest", "--config", str(work / "b/run.json"),
                       "--out", str(work / "o"))
    assert code == 2 and "homoglyph_rows" in err


def test_fixtures_command(tmp_path, capsys):
    code, _, _ = run(capsys, "fixtures", "--out", str(tmp_path / "f"))
    assert code == 0 and (tmp_path / "f/run.json").exists()
