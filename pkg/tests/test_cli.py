import json
import subprocess
import sys

import numpy as np
import pytest

from flowroute.cli import dispatch
from flowroute.graph import read_matrix_csv, write_matrix_csv

from conftest import random_connected_sc, random_fc

TINY_MODEL = {"d": 8, "res_hidden": 8, "gate_hidden": 8, "dropout": 0.0}


def run(capsys, *argv):
    code = dispatch([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def pair_files(tmp_path):
    rng = np.random.default_rng(4)
    write_matrix_csv(tmp_path / "sc.csv", random_connected_sc(rng, 10))
    write_matrix_csv(tmp_path / "fc.csv", random_fc(rng, 10))
    return tmp_path


@pytest.fixture
def cohort(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"n_nodes": 8, "n_per_class": 10, "seed": 2}))
    code, _, _ = run(capsys, "gen-synth", "--spec", spec, "--out", tmp_path / "syn")
    assert code == 0
    return tmp_path / "syn"


def test_selftest_passes(capsys):
    code, out, _ = run(capsys, "selftest", "--quick")
    assert code == 0
    assert "FAIL" not in out and out.count("PASS") == 8


def test_compute_flow_oracle(capsys, pair_files):
    d = pair_files
    code, out, _ = run(capsys, "compute-flow", "--sc", d / "sc.csv", "--fc", d / "fc.csv", "--oracle",
                       "--out", d / "phi.csv")
    assert code == 0
    assert json.loads(out)["oracle_max_rel_dev"] < 1e-8
    lines = (d / "phi.csv").read_text().splitlines()
    assert lines[0] == "i,j,c_ij,phi_ij"
    echo = json.loads((d / "phi.csv.config.json").read_text())
    assert echo["command"] == "compute-flow" and echo["args"]["oracle"] is True


def test_compute_flow_uniform_and_capacity_file(capsys, pair_files):
    d = pair_files
    assert run(capsys, "compute-flow", "--sc", d / "sc.csv", "--fc", d / "fc.csv", "--uniform",
               "--out", d / "u.csv")[0] == 0
    m = len((d / "u.csv").read_text().splitlines()) - 1
    write_matrix_csv(d / "caps.csv", np.ones((1, m)))
    assert run(capsys, "compute-flow", "--sc", d / "sc.csv", "--fc", d / "fc.csv", "--capacities",
               d / "caps.csv", "--out", d / "c.csv")[0] == 0
    assert (d / "u.csv").read_bytes() == (d / "c.csv").read_bytes()


def test_missing_file_is_io_error(capsys, tmp_path):
    code, _, err = run(capsys, "resistance", "--sc", tmp_path / "nope.csv", "--out", tmp_path / "r.csv")
    assert code == 3
    payload = json.loads(err)
    assert payload["error"] == "io" and payload["path"].endswith("nope.csv")


def test_unknown_flag_is_usage_error(capsys):
    code, _, err = run(capsys, "selftest", "--bogus")
    assert code == 2 and json.loads(err)["error"] == "usage"


def test_disconnected_resistance(capsys, tmp_path):
    sc = np.zeros((4, 4))
    sc[0, 1] = sc[1, 0] = sc[2, 3] = sc[3, 2] = 1.0
    write_matrix_csv(tmp_path / "sc.csv", sc)
    code, _, err = run(capsys, "resistance", "--sc", tmp_path / "sc.csv", "--out", tmp_path / "r.csv")
    assert code == 4 and json.loads(err)["error"] == "disconnected"
    code, _, _ = run(capsys, "resistance", "--sc", tmp_path / "sc.csv", "--erd-regularize",
                     "--out", tmp_path / "r.csv")
    assert code == 0 and np.all(np.isfinite(read_matrix_csv(tmp_path / "r.csv")))


def test_asymmetric_input_is_validation_error(capsys, tmp_path):
    write_matrix_csv(tmp_path / "sc.csv", np.array([[0.0, 1.0], [2.0, 0.0]]))
    code, _, err = run(capsys, "resistance", "--sc", tmp_path / "sc.csv", "--out", tmp_path / "r.csv")
    assert code == 2 and "symmetric" in json.loads(err)["message"]


def snapshot(root):
    return {str(f.relative_to(root)): f.read_bytes() for f in sorted(root.rglob("*")) if f.is_file()}


def test_gen_synth_is_byte_reproducible(capsys, tmp_path):
    out = tmp_path / "syn"
    assert run(capsys, "gen-synth", "--seed", 9, "--out", out)[0] == 0
    first = snapshot(out)
    assert run(capsys, "gen-synth", "--seed", 9, "--out", out)[0] == 0
    assert snapshot(out) == first
    assert len(first) == 200 * 2 + 3


def test_train_eval_analyze_round_trip(capsys, tmp_path, cohort):
    cfg = tmp_path / "train.json"
    cfg.write_text(json.dumps({"epochs": 2, "batch_size": 4, "lr": 1e-3, "model": TINY_MODEL}))
    code, out, err = run(capsys, "train", "--manifest", cohort / "manifest.json", "--config", cfg,
                         "--seed", 0, 1, "--out", tmp_path / "run")
    assert code == 0, err
    run_dir = tmp_path / "run"
    for f in ("model.ckpt", "summary.json", "run_config.json", "seed_0/model.ckpt", "seed_1/history.json"):
        assert (run_dir / f).exists(), f
    assert set(json.loads(out)) == {"acc", "pre", "rec", "f1", "auc"}

    code, out, _ = run(capsys, "eval", "--ckpt", run_dir, "--manifest", cohort / "manifest.json",
                       "--split", "test", "--out", tmp_path / "ev" / "metrics.json")
    assert code == 0 and set(json.loads(out)) == {"acc", "pre", "rec", "f1", "auc"}

    for source in (["--ckpt", run_dir / "model.ckpt"], ["--from-sc"]):
        code, out, _ = run(capsys, "analyze-groups", "--manifest", cohort / "manifest.json", *source,
                           "--topk", 5, "--log-flow", "--fdr", "by", "--out", tmp_path / "grp")
        assert code == 0
        summary = json.loads(out)
        assert summary["n_patients"] == summary["n_controls"] == 10
        assert len((tmp_path / "grp" / "topk.csv").read_text().splitlines()) == 6


def test_compute_flow_from_checkpoint(capsys, tmp_path, cohort):
    cfg = tmp_path / "train.json"
    cfg.write_text(json.dumps({"epochs": 1, "batch_size": 8, "model": TINY_MODEL}))
    assert run(capsys, "train", "--manifest", cohort / "manifest.json", "--config", cfg, "--seed", 0,
               "--out", tmp_path / "run")[0] == 0
    sub = cohort / "subjects"
    code, _, err = run(capsys, "compute-flow", "--sc", sub / "sub-0000_sc.csv", "--fc", sub / "sub-0000_fc.csv",
                       "--ckpt", tmp_path / "run", "--oracle", "--out", tmp_path / "phi.csv")
    assert code == 0, err
    rows = np.loadtxt(tmp_path / "phi.csv", delimiter=",", skiprows=1)
    assert np.all(rows[:, 2] > 0) and np.all(rows[:, 3] >= 0)


def test_bad_config_key_is_input_error(capsys, tmp_path, cohort):
    cfg = tmp_path / "train.json"
    cfg.write_text(json.dumps({"epoch": 2}))
    code, _, err = run(capsys, "train", "--manifest", cohort / "manifest.json", "--config", cfg,
                       "--out", tmp_path / "run")
    assert code == 2 and json.loads(err)["error"] == "config"


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "flowroute.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip()
