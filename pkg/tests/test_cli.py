import json
import os

import numpy as np
import pytest
from click.testing import CliRunner

from dgn.cli import main
from dgn.graphs import load_dataset


@pytest.fixture
def runner():
    return CliRunner()


def _invoke(runner, args, **kwargs):
    return runner.invoke(main, args, catch_exceptions=False, **kwargs)


def test_generate_writes_balanced_dataset(runner, tmp_path):
    out = str(tmp_path / "test.json")
    result = _invoke(runner, ["generate", "--family", "orthogonal", "--count", "50", "--seed", "7", "-o", out])
    assert result.exit_code == 0
    graphs, meta = load_dataset(out)
    assert len(graphs) == 50
    assert np.array_equal(np.bincount([g.label for g in graphs]), np.full(5, 10))
    assert meta["seed"] == 7


def test_generate_zero_count_makes_valid_empty_dataset(runner, tmp_path):
    out = str(tmp_path / "empty.json")
    assert _invoke(runner, ["generate", "--family", "orthogonal", "--count", "0", "-o", out]).exit_code == 0
    graphs, meta = load_dataset(out)
    assert graphs == [] and meta["count"] == 0


def test_generate_same_flags_byte_identical(runner, tmp_path):
    a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
    args = ["generate", "--family", "orthogonal_dilation", "--count", "25", "--seed", "3"]
    assert _invoke(runner, args + ["-o", a]).exit_code == 0
    assert _invoke(runner, args + ["-o", b]).exit_code == 0
    assert open(a, "rb").read() == open(b, "rb").read()


def test_generate_usage_errors(runner, tmp_path):
    out = str(tmp_path / "x.json")
    r = runner.invoke(main, ["generate", "--family", "orthogonal", "--count", "7", "-o", out])
    assert r.exit_code == 2
    r = runner.invoke(main, ["generate", "--family", "non_orthogonal", "--count", "5", "-o", out])
    assert r.exit_code == 2  # missing --mu
    r = runner.invoke(main, ["generate", "--family", "weird", "--count", "5", "-o", out])
    assert r.exit_code == 2
    r = runner.invoke(main, ["generate", "--family", "orthogonal", "--count", "5", "-o", out, "--bogus"])
    assert r.exit_code == 2


def test_train_writes_checkpoint_records_and_config(runner, tmp_path):
    out = str(tmp_path / "run")
    result = _invoke(
        runner,
        ["train", "--block", "dgn", "--map", "identity", "--family", "orthogonal",
         "--seed", "0", "--epochs", "3", "--per-class", "2", "-o", out],
    )
    assert result.exit_code == 0
    files = sorted(os.listdir(out))
    assert files == ["checkpoint.json", "config.json", "records.csv", "run.json"]
    config = json.load(open(os.path.join(out, "config.json")))
    assert config["config"]["seed"] == 0 and config["command"] == "train"
    lines = open(os.path.join(out, "records.csv")).read().splitlines()
    assert lines[0] == "epoch,train_loss,train_acc,test_acc"
    assert len(lines) == 4


def test_train_epochs_zero_headers_only(runner, tmp_path):
    out = str(tmp_path / "run0")
    result = _invoke(
        runner,
        ["train", "--block", "sdgn", "--family", "orthogonal", "--epochs", "0",
         "--per-class", "2", "-o", out],
    )
    assert result.exit_code == 0
    lines = open(os.path.join(out, "records.csv")).read().splitlines()
    assert lines == ["epoch,train_loss,train_acc,test_acc"]
    assert os.path.exists(os.path.join(out, "checkpoint.json"))


def test_train_determinism_byte_identical_records(runner, tmp_path):
    args = ["train", "--block", "dgn", "--family", "orthogonal", "--seed", "1",
            "--epochs", "4", "--per-class", "2"]
    out1, out2 = str(tmp_path / "r1"), str(tmp_path / "r2")
    assert _invoke(runner, args + ["-o", out1]).exit_code == 0
    assert _invoke(runner, args + ["-o", out2]).exit_code == 0
    rec1 = open(os.path.join(out1, "records.csv"), "rb").read()
    rec2 = open(os.path.join(out2, "records.csv"), "rb").read()
    assert rec1 == rec2


def test_train_invalid_block_usage_error(runner, tmp_path):
    r = runner.invoke(main, ["train", "--block", "mlp", "-o", str(tmp_path / "x")])
    assert r.exit_code == 2


def test_train_nan_abort_exit_code_distinct_from_io(runner, tmp_path, monkeypatch):
    import dgn.cli
    from dgn.training import TrainingDiverged

    def diverge(*args, **kwargs):
        raise TrainingDiverged(7)

    monkeypatch.setattr(dgn.cli, "train", diverge)
    r = runner.invoke(
        main,
        ["train", "--block", "dgn", "--family", "orthogonal", "--epochs", "1",
         "--per-class", "2", "-o", str(tmp_path / "x")],
    )
    assert r.exit_code == 3
    assert "epoch 7" in r.output


def test_train_rejects_map_none_for_dgn(runner, tmp_path):
    r = runner.invoke(main, ["train", "--block", "dgn", "--map", "none", "-o", str(tmp_path / "x")])
    assert r.exit_code == 2


def test_train_from_dataset_files(runner, tmp_path):
    train_file = str(tmp_path / "train.json")
    test_file = str(tmp_path / "test.json")
    _invoke(runner, ["generate", "--family", "orthogonal", "--count", "5", "--seed", "1", "-o", train_file])
    _invoke(runner, ["generate", "--family", "orthogonal", "--count", "10", "--seed", "2", "-o", test_file])
    out = str(tmp_path / "run")
    result = _invoke(
        runner,
        ["train", "--block", "gn", "--map", "none", "--epochs", "2",
         "--train-data", train_file, "--test-data", test_file, "-o", out],
    )
    assert result.exit_code == 0


def test_train_missing_dataset_is_usage_error(runner, tmp_path):
    r = runner.invoke(
        main,
        ["train", "--block", "dgn", "--train-data", str(tmp_path / "nope.json"), "-o", str(tmp_path / "x")],
    )
    assert r.exit_code == 2  # click validates exists=True


def test_evaluate_checkpoint_roundtrip(runner, tmp_path):
    out = str(tmp_path / "run")
    _invoke(runner, ["train", "--block", "dgn", "--family", "orthogonal", "--epochs", "2",
                     "--per-class", "2", "-o", out])
    data = str(tmp_path / "data.json")
    _invoke(runner, ["generate", "--family", "orthogonal", "--count", "15", "--seed", "5", "-o", data])
    result = _invoke(runner, ["evaluate", "--checkpoint", os.path.join(out, "checkpoint.json"), "--data", data])
    assert result.exit_code == 0
    assert result.output.startswith("accuracy=")


def test_audit_command_reports_expected_verdicts(runner, tmp_path):
    result = _invoke(runner, ["audit", "--block", "dgn", "--family", "orthogonal_dilation",
                              "--transforms", "5"])
    assert result.exit_code == 0
    assert "FAIL" in result.output

    out = str(tmp_path / "audit")
    result = _invoke(runner, ["audit", "--block", "sdgn", "--transforms", "5", "-o", out])
    assert result.exit_code == 0
    report = json.load(open(os.path.join(out, "summary.json")))
    assert report["families"]["orthogonal"]["pass"] is True
    assert report["families"]["orthogonal_dilation"]["pass"] is True
    assert report["families"]["non_orthogonal_mu0.5"]["pass"] is False
    assert "PASS" in result.output and "FAIL" in result.output


def test_table1_command_small_grid(runner, tmp_path):
    out = str(tmp_path / "grid")
    result = _invoke(runner, ["--jobs", "1", "table1", "--seeds", "1", "--epochs", "2",
                              "--per-class", "2", "-o", out])
    assert result.exit_code == 0
    assert os.path.exists(os.path.join(out, "table1.csv"))
    assert os.path.exists(os.path.join(out, "config.json"))
    assert result.output.count("\n") >= 25


def test_sweep_command_writes_points(runner, tmp_path):
    out = str(tmp_path / "sweep")
    result = _invoke(runner, ["--jobs", "1", "sweep", "--family", "orthogonal", "--copies", "2",
                              "--seeds", "1", "--epochs", "2", "--per-class", "2", "-o", out])
    assert result.exit_code == 0
    assert os.path.exists(os.path.join(out, "sweep.csv"))


def test_sweep_bad_copies_usage_error(runner, tmp_path):
    r = runner.invoke(main, ["sweep", "--copies", "a,b", "-o", str(tmp_path / "x")])
    assert r.exit_code == 2


def test_results_dir_env_var(runner, tmp_path, monkeypatch):
    monkeypatch.setenv("DGN_RESULTS_DIR", str(tmp_path / "envroot"))
    result = _invoke(
        runner,
        ["train", "--block", "dgn", "--family", "orthogonal", "--epochs", "1", "--per-class", "2"],
    )
    assert result.exit_code == 0
    assert os.path.isdir(str(tmp_path / "envroot"))
    runs = os.listdir(str(tmp_path / "envroot"))
    assert len(runs) == 1 and runs[0].startswith("train-dgn")
