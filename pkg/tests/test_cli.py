from __future__ import annotations

import json
import subprocess
import sys

import pytest

CLI = [sys.executable, "-m", "mmnas.cli"]


def run_cli(*args, check=True):
    proc = subprocess.run(
        CLI + [str(a) for a in args], capture_output=True, text=True
    )
    if check and proc.returncode != 0:
        raise AssertionError(f"cli failed ({proc.returncode}): {proc.stderr}")
    return proc


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "data"
    run_cli("gen-data", "--out", out, "--sizes", "200,40,40", "--seed", 3)
    return out


def test_cardinality_prints_exact_counts():
    proc = run_cli("cardinality", "--L", 5)
    assert "cells: 8153726976" in proc.stdout
    assert "fusion: 262144" in proc.stdout
    proc = run_cli("cardinality", "--L", 2, "--D", 2, "--C", 2)
    assert "cells: 1152" in proc.stdout
    assert "fusion: 1024" in proc.stdout


def test_sample_same_seed_byte_identical(tmp_path):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    run_cli("sample", "--seed", 42, "--out", a)
    run_cli("sample", "--seed", 42, "--out", b)
    assert a.read_bytes() == b.read_bytes()
    spec = json.loads(a.read_text())
    assert spec["schema_version"] == 1
    assert len(spec["cells"]["x"]) == 5


def test_gen_data_writes_manifest(data_dir):
    manifest = json.loads((data_dir / "manifest.json").read_text())
    assert manifest["splits"]["train"]["count"] == 200
    assert (data_dir / "train_x.rntf").exists()


def test_search_train_eval_round_trip(tmp_path, data_dir):
    run_json = tmp_path / "run.json"
    arch_json = tmp_path / "arch.json"
    proc = run_cli(
        "search", "--data", data_dir, "--budget", 2, "--steps", 3, "--seed", 1,
        "--out", run_json, "--best-arch", arch_json, "--width", 8, "--fusion-width", 16,
    )
    assert str(run_json) in proc.stdout
    record = json.loads(run_json.read_text())
    assert len(record["log"]) == 2
    assert record["best"]["spec_hash"]
    assert "timing" not in record

    model = tmp_path / "model.rnps"
    proc = run_cli("train", "--arch", arch_json, "--data", data_dir,
                   "--epochs", 1, "--out", model)
    assert "test accuracy:" in proc.stdout
    proc = run_cli("eval", "--arch", arch_json, "--params", model,
                   "--data", data_dir, "--split", "val")
    assert "val accuracy:" in proc.stdout


def test_search_steps_auto_uses_ten_percent_rule(tmp_path, data_dir):
    run_json = tmp_path / "run.json"
    run_cli("search", "--data", data_dir, "--budget", 1, "--steps", "auto",
            "--seed", 2, "--out", run_json, "--width", 8, "--fusion-width", 16)
    record = json.loads(run_json.read_text())
    # ceil(0.1 * 200 / 32) = 1
    assert record["search"]["steps"] == 1


def test_report_from_run_records(tmp_path, data_dir):
    runs = []
    for seed in (1, 2):
        run_json = tmp_path / f"run{seed}.json"
        run_cli("search", "--data", data_dir, "--budget", 1, "--steps", 2,
                "--seed", seed, "--out", run_json, "--width", 8, "--fusion-width", 16)
        runs.append(run_json)
    proc = run_cli("report", "--runs", *runs, "--format", "markdown")
    assert "| Mean |" in proc.stdout
    assert "Search Time" in proc.stdout
    proc = run_cli("report", "--runs", *runs, "--format", "csv")
    assert proc.stdout.startswith("Run,Accuracy")


def test_report_arch_summary_and_dot(tmp_path):
    arch = tmp_path / "arch.json"
    dot = tmp_path / "arch.dot"
    run_cli("sample", "--seed", 9, "--out", arch)
    proc = run_cli("report", "--arch", arch, "--dot", dot)
    assert "Fusion connectivity" in proc.stdout
    assert dot.read_text().startswith("digraph")


def test_method_card_output():
    proc = run_cli("method-card")
    assert "Method Card" in proc.stdout
    assert "Code availability" in proc.stdout


def test_unknown_flag_exits_1_with_error_prefix():
    proc = run_cli("cardinality", "--bogus", check=False)
    assert proc.returncode == 1
    assert proc.stderr.splitlines()[-1].startswith("error:")


def test_missing_file_exits_2(tmp_path, data_dir):
    proc = run_cli("train", "--arch", tmp_path / "nope.json", "--data", data_dir,
                   "--epochs", 1, "--out", tmp_path / "m.rnps", check=False)
    assert proc.returncode == 2
    assert proc.stderr.splitlines()[-1].startswith("error:")


def test_schema_mismatch_exits_2(tmp_path, data_dir):
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema_version": 1, "cells": "nope"}')
    proc = run_cli("report", "--arch", bad, check=False)
    assert proc.returncode == 2
    assert proc.stderr.splitlines()[-1].startswith("error:")


def test_config_file_merges_under_explicit_flags(tmp_path):
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({"L": 2, "seed": 7}))
    out_config_seed = tmp_path / "c.json"
    run_cli("sample", "--config", config, "--out", out_config_seed)
    spec = json.loads(out_config_seed.read_text())
    assert len(spec["cells"]["x"]) == 2  # L came from the config file

    out_flag_wins = tmp_path / "d.json"
    run_cli("sample", "--config", config, "--L", 3, "--out", out_flag_wins)
    assert len(json.loads(out_flag_wins.read_text())["cells"]["x"]) == 3

    proc = run_cli("sample", "--config", config, "--out", tmp_path / "e.json")
    assert '"seed": 7' in proc.stderr  # effective config echoed

    config.write_text(json.dumps({"nonsense_option": 1}))
    proc = run_cli("sample", "--config", config, check=False)
    assert proc.returncode == 1


def test_help_lists_defaults():
    proc = run_cli("search", "--help")
    assert "default: 100" in proc.stdout  # architecture budget
    assert "default: 0.0001" in proc.stdout  # search learning rate
    proc = run_cli("gen-data", "--help")
    assert "default: 0.25" in proc.stdout  # noise level
    assert "4000,500,2000" in proc.stdout
