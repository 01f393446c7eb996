"""CLI argument handling, exit codes, and pipeline smoke tests."""

import json

import pytest

from egomatch.cli import main


def test_no_command_is_usage_error(capsys):
    assert main([]) == 1


def test_unknown_command_and_flag(capsys):
    assert main(["frobnicate"]) == 1
    assert main(["synth", "--out", "/tmp/x", "--bogus"]) == 1


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert main(["train", "--help"]) == 0


def test_missing_required_argument(capsys):
    assert main(["synth"]) == 1
    assert main(["train", "--data", "/tmp/x"]) == 1


def test_bad_frame_range_is_usage_error(capsys):
    assert main(["eval", "--data", "x", "--model", "y",
                 "--frame-range", "abc"]) == 1


def test_missing_dataset_is_data_error(capsys, tmp_path):
    assert main(["train", "--data", str(tmp_path / "none"),
                 "--out", str(tmp_path / "m.ckpt")]) == 2


def test_invalid_world_config_is_data_error(capsys, tmp_path):
    assert main(["synth", "--agents", "2", "--wearers", "3",
                 "--out", str(tmp_path / "ds")]) == 2


def test_gradcheck_smoke(capsys):
    assert main(["gradcheck", "--instances", "2"]) == 0
    out = capsys.readouterr().out
    assert "overall max rel err" in out


@pytest.fixture(scope="module")
def trained(small_ds_dir, tmp_path_factory):
    work = tmp_path_factory.mktemp("cli")
    ckpt = work / "model.ckpt"
    trace = work / "trace.csv"
    rc = main(["train", "--data", str(small_ds_dir), "--arch", "temporal",
               "--iters", "3", "--batch", "8", "--ego", "ego0",
               "--frame-range", "4:40", "--out", str(ckpt),
               "--trace", str(trace)])
    assert rc == 0
    return small_ds_dir, ckpt, trace, work


def test_train_writes_checkpoint_and_trace(trained, capsys):
    _, ckpt, trace, _ = trained
    assert ckpt.exists()
    lines = trace.read_text().strip().splitlines()
    assert lines[0] == "iteration,loss" and len(lines) == 4


def test_train_rerun_byte_identical(trained, tmp_path, capsys):
    data, ckpt, _, _ = trained
    again = tmp_path / "again.ckpt"
    rc = main(["train", "--data", str(data), "--arch", "temporal",
               "--iters", "3", "--batch", "8", "--ego", "ego0",
               "--frame-range", "4:40", "--out", str(again)])
    assert rc == 0
    assert again.read_bytes() == ckpt.read_bytes()


def test_eval_report_artifacts(trained, capsys):
    data, ckpt, _, work = trained
    rep = work / "report.json"
    pr = work / "pr.csv"
    scores = work / "scores.csv"
    rc = main(["eval", "--data", str(data), "--model", str(ckpt),
               "--ego", "ego0", "--frame-range", "40:80",
               "--report", str(rep), "--pr", str(pr), "--scores", str(scores)])
    assert rc == 0
    body = json.loads(rep.read_text())
    assert set(body) == {"ap", "multi_accuracy", "positives", "negatives",
                         "frames"}
    assert pr.read_text().startswith("recall,precision")
    assert scores.read_text().startswith("frame,camera,person,score,label")


def test_match_prints_person_id(trained, capsys):
    data, ckpt, _, _ = trained
    rc = main(["match", "--data", str(data), "--model", str(ckpt),
               "--frame", "50", "--ego", "ego0"])
    assert rc == 0
    printed = capsys.readouterr().out.strip()
    assert printed.isdigit()


def test_match_early_frame_is_data_error(trained, capsys):
    data, ckpt, _, _ = trained
    assert main(["match", "--data", str(data), "--model", str(ckpt),
                 "--frame", "1", "--ego", "ego0"]) == 2


def test_baseline_smoke(small_ds_dir, tmp_path, capsys):
    rep = tmp_path / "b.json"
    rc = main(["baseline", "--data", str(small_ds_dir), "--method", "flowmag",
               "--ego", "ego0", "--train-range", "1:80",
               "--test-range", "80:120", "--report", str(rep)])
    assert rc == 0
    body = json.loads(rep.read_text())
    assert "ego0" in body and "ap" in body["ego0"]


def test_temporal_match_smoke(trained, capsys):
    data, ckpt, _, _ = trained
    rc = main(["temporal-match", "--data", str(data), "--observer", "ego1",
               "--model", str(ckpt), "--frame-range", "4:60"])
    assert rc == 0
    body = json.loads(capsys.readouterr().out)
    assert 0.0 <= body["ap"] <= 1.0


def test_observer_requires_temporal_arch(small_ds_dir, tmp_path, capsys):
    assert main(["train", "--data", str(small_ds_dir), "--arch", "two-stream",
                 "--observer", "ego1", "--iters", "1",
                 "--out", str(tmp_path / "x.ckpt")]) == 2


def test_console_script_installed():
    import subprocess
    out = subprocess.run(["egomatch", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "synth" in out.stdout
