import json
from pathlib import Path

import pytest

from gramtraj import cli
from gramtraj import io as gio
from gramtraj import report as rp
from gramtraj.errors import ValidationError

FIXTURE = str(gio.bundled("blimp_changepoints.csv"))
SCORES = str(gio.bundled("synthetic_scores.jsonl"))
CORPUS = str(gio.bundled("synthetic_corpus.txt"))
PAIRS = str(gio.bundled("synthetic_pairs.jsonl"))
CKPT = str(gio.bundled("checkpoints"))


def _err(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_report_prints_summary(tmp_path, capsys):
    assert cli.main(["report", "--fixture", FIXTURE, "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "CES       34       7,351         6,234" in out
    assert "CLS        9      20,367         6,994" in out
    assert "EES       24       5,542         6,798" in out
    assert (tmp_path / "patterns.csv").exists() and (tmp_path / "stats.json").exists()


def test_pooled_flag_changes_t_rows(tmp_path):
    cli.main(["stats", "--fixture", FIXTURE, "--out", str(tmp_path), "--format", "json", "--pooled"])
    tests = {r["test"] for r in gio.read_report(tmp_path / "stats.json").records()}
    assert "pooled_t" in tests and "welch_t" not in tests


def test_stage_by_stage_matches_all(tmp_path):
    out = tmp_path / "steps"
    args = ["--out", str(out), "--format", "json"]
    assert cli.main(["gaps", "--scores", SCORES, *args]) == 0
    assert cli.main(["changepoint", "--gaps", str(out / "gaps.json"), *args]) == 0
    assert cli.main(["categorize", "--gaps", str(out / "gaps.json"), *args]) == 0
    assert cli.main(["stats", "--changepoints", str(out / "changepoints.json"),
                     "--categories", str(out / "categories.json"), *args]) == 0
    full = tmp_path / "full"
    assert cli.main(["all", "--scores", SCORES, "--out", str(full), "--format", "json", "--no-plots"]) == 0
    for name in ("gaps", "changepoints", "categories", "stats"):
        assert (out / f"{name}.json").read_text() == (full / f"{name}.json").read_text(), name


def test_bigram_command(tmp_path):
    dump = tmp_path / "model.tsv"
    code = cli.main(["bigram", "--corpus", CORPUS, "--pairs", PAIRS, "--scores", SCORES,
                     "--out", str(tmp_path), "--format", "json", "--order", "3",
                     "--dump-model", str(dump)])
    assert code == 0
    rows = gio.read_report(tmp_path / "bigram.json").records()
    assert {r["order"] for r in rows} == {2, 3}
    assert dump.read_text().splitlines()[0].count("\t") == 1


def test_spectral_command_with_heads(tmp_path):
    assert cli.main(["spectral", "--checkpoints", CKPT, "--heads", "2", "--out", str(tmp_path),
                     "--format", "csv"]) == 0
    rows = gio.read_report(tmp_path / "spectral_summary.csv").records()
    assert len(rows) == 3 * 2 * 4 * 3
    assert len(gio.read_report(tmp_path / "spectral_qk.csv").rows) == 6
    assert len(gio.read_report(tmp_path / "spectral_cosine.csv").rows) == 2 * 2 * 4


def test_all_with_baselines_writes_correlations(tmp_path):
    classes = sorted(json.loads(gio.bundled("synthetic_labels.json").read_text()))
    base = tmp_path / "base.csv"
    base.write_text("class,gpt2,human\n" + "".join(
        f"{c},{50 + 3 * i},{60 + (i * 7) % 11}\n" for i, c in enumerate(classes)))
    out = tmp_path / "out"
    assert cli.main(["all", "--scores", SCORES, "--baselines", str(base), "--out", str(out)]) == 0
    corr = gio.read_report(out / "correlations.json").records()
    assert [r["model"] for r in corr] == ["gpt2", "human"]
    assert (out / "plots" / "accuracy_correlation_grid.svg").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert "correlations" in manifest["tables"]


def test_exit_code_io(tmp_path, capsys):
    assert cli.main(["gaps", "--scores", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path)]) == 2
    err = _err(capsys)
    assert err["kind"] == "io" and err["status"] == "error"
    assert "nope.jsonl" in err["message"]


def test_exit_code_validation(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"class_name": "x"}\n')
    assert cli.main(["gaps", "--scores", str(bad), "--out", str(tmp_path)]) == 1
    err = _err(capsys)
    assert err["module"] == "io" and "bad keys" in err["message"]


def test_exit_code_validation_names_class(tmp_path, capsys):
    short = tmp_path / "short.jsonl"
    short.write_text("".join(
        json.dumps({"class_name": "tiny", "pair_id": 0, "checkpoint_step": t, "nll_good": 1.0,
                    "n_tokens_good": 2, "nll_bad": 2.0, "n_tokens_bad": 2}) + "\n"
        for t in range(4)))
    assert cli.main(["changepoint", "--scores", str(short), "--out", str(tmp_path)]) == 1
    assert _err(capsys)["subject"] == "tiny"


def test_missing_required_input(tmp_path, capsys):
    assert cli.main(["bigram", "--corpus", CORPUS, "--out", str(tmp_path)]) == 1
    assert "--pairs" in _err(capsys)["message"]


def test_bad_option_values(tmp_path, capsys):
    assert cli.main(["categorize", "--scores", SCORES, "--early-frac", "0.8", "--out", str(tmp_path)]) == 1
    with pytest.raises(SystemExit):
        cli.main(["changepoint", "--penalty", "lots"])


def test_exit_code_internal(monkeypatch, tmp_path, capsys):
    def boom(args):
        raise RuntimeError("unexpected")
    monkeypatch.setitem(cli.COMMANDS, "gaps", boom)
    assert cli.main(["gaps", "--scores", SCORES]) == 3
    assert _err(capsys)["kind"] == "internal"


def test_run_config_validation(tmp_path):
    with pytest.raises(ValidationError):
        rp.RunConfig(trim_frac=0.5).validate()
    with pytest.raises(ValidationError):
        rp.RunConfig(method="window").validate()
    with pytest.raises(FileNotFoundError):
        rp.RunConfig(scores=tmp_path / "missing").validate()
    with pytest.raises(ValidationError):
        rp.run_pipeline(rp.RunConfig(out=tmp_path))


def test_summarize_patterns_checks_class_sets():
    with pytest.raises(ValidationError):
        rp.summarize_patterns({"a": "CES"}, {"b": (1, 2)})
    out = rp.summarize_patterns({"a": "CES", "b": "CES", "c": "EES"},
                                {"a": (100, None), "b": (300, 50), "c": (10, 20)})
    assert [(s.pattern, s.n, s.avg_cusum_step, s.avg_ruptures_step, s.n_ruptures) for s in out] == \
        [("CES", 2, 200.0, 50.0, 1), ("EES", 1, 10.0, 20.0, 1)]


def test_single_class_summary_row():
    (row,) = rp.summarize_patterns({"only": "CLS"}, {"only": (1250, 4900)})
    assert (row.pattern, row.n, row.avg_cusum_step, row.avg_ruptures_step) == ("CLS", 1, 1250.0, 4900.0)
