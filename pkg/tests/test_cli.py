"""CLI runner: determinism, idempotence, error handling, aggregation."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from cumlab import cli, datagen


def write_config(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def run_cli(args):
    return cli.main(args)


SEARCH_CFG = {
    "experiment": "search-curve",
    "seed": 21,
    "d": 7,
    "theta": [0.5, 1.25],
    "beta": 10.0,
    "g": "rademacher",
    "runs": 6,
}


def read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_search_curve_deterministic_across_jobs(tmp_path):
    cfg = write_config(tmp_path, "cfg.json", SEARCH_CFG)
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    assert run_cli(["search-curve", "--config", cfg, "--out", out1, "--jobs", "1"]) == 0
    assert run_cli(["search-curve", "--config", cfg, "--out", out2, "--jobs", "3"]) == 0
    for name in ("success.csv", "success_rate.csv"):
        assert read_bytes(os.path.join(out1, name)) == read_bytes(os.path.join(out2, name))
    # idempotent overwrite
    assert run_cli(["search-curve", "--config", cfg, "--out", out1, "--jobs", "2"]) == 0
    assert read_bytes(os.path.join(out1, "success.csv")) == read_bytes(
        os.path.join(out2, "success.csv")
    )
    with open(os.path.join(out1, "success_rate.csv")) as fh:
        header = fh.readline().strip()
    assert header == "theta,success_rate,runs,d,beta,seed"


def test_manifest_contents(tmp_path):
    cfg = write_config(tmp_path, "cfg.json", SEARCH_CFG)
    out = str(tmp_path / "m")
    run_cli(["search-curve", "--config", cfg, "--out", out, "--jobs", "1"])
    manifest = json.loads(read_bytes(os.path.join(out, "manifest.json")))
    assert manifest["experiment"] == "search-curve"
    assert manifest["seed"] == 21
    assert manifest["config"]["theta"] == [0.5, 1.25]
    assert manifest["metrics"] == ["success"]
    assert manifest["version"].startswith("cumlab-")
    assert len(manifest["point_seeds"]) == 2 * 6
    assert manifest["failed_points"] == 0


def test_seed_env_override(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, "cfg.json", SEARCH_CFG)
    out1, out2 = str(tmp_path / "s1"), str(tmp_path / "s2")
    run_cli(["search-curve", "--config", cfg, "--out", out1, "--jobs", "1"])
    monkeypatch.setenv("CUMLAB_SEED", "999")
    run_cli(["search-curve", "--config", cfg, "--out", out2, "--jobs", "1"])
    monkeypatch.delenv("CUMLAB_SEED")
    m2 = json.loads(read_bytes(os.path.join(out2, "manifest.json")))
    assert m2["seed"] == 999
    assert read_bytes(os.path.join(out1, "success.csv")) != read_bytes(
        os.path.join(out2, "success.csv")
    )


def test_config_error_exit_code(tmp_path):
    cfg = write_config(tmp_path, "bad.json", {"experiment": "lr-curve", "seed": 1, "d": [8]})
    assert run_cli(["lr-curve", "--config", cfg, "--out", str(tmp_path / "x")]) == 2
    mismatched = write_config(tmp_path, "mm.json", SEARCH_CFG)
    assert run_cli(["lr-curve", "--config", mismatched, "--out", str(tmp_path / "y")]) == 2
    missing = str(tmp_path / "nope.json")
    assert run_cli(["lr-curve", "--config", missing, "--out", str(tmp_path / "z")]) == 2


def test_partial_failure_exit_code(tmp_path):
    # an exact-norm budget blowup on one grid point: error row + exit 1
    cfg = write_config(
        tmp_path,
        "cfg.json",
        {
            "experiment": "ldlr-bounds",
            "seed": 2,
            "d": [3, 16],
            "n": [40],
            "D": [8],
            "beta": [10.0],
            "exact": True,
        },
    )
    out = str(tmp_path / "pf")
    assert run_cli(["ldlr-bounds", "--config", cfg, "--out", out, "--jobs", "1"]) == 1
    with open(os.path.join(out, "errors.csv")) as fh:
        lines = fh.read().strip().splitlines()
    assert lines[0] == "d,n,D,beta,run,error"
    assert len(lines) == 2 and lines[1].startswith("16,40,8,10.0,0")
    # the healthy point still produced records
    assert os.path.exists(os.path.join(out, "log_lower.csv"))


def test_generate_round_trip(tmp_path):
    cfg = write_config(
        tmp_path,
        "gen.json",
        {
            "experiment": "generate",
            "seed": 4,
            "name": "toy",
            "n_per_class": 30,
            "model": {"kind": "spiked_cumulant", "d": 5, "beta": 10.0, "g": "rademacher"},
            "format": "both",
        },
    )
    out = str(tmp_path / "gen")
    assert run_cli(["generate", "--config", cfg, "--out", out]) == 0
    a = datagen.read_csv(os.path.join(out, "toy.csv"))
    b = datagen.read_binary(os.path.join(out, "toy.bin"))
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.labels, b.labels)
    assert a.n == 60 and a.d == 5


def test_ldlr_bounds_csv_and_plotdata(tmp_path):
    cfg = write_config(
        tmp_path,
        "cfg.json",
        {
            "experiment": "ldlr-bounds",
            "seed": 3,
            "d": [3],
            "n": [2],
            "D": [4, 8],
            "beta": [1.0, 10.0],
            "exact": True,
        },
    )
    out = str(tmp_path / "lb")
    assert run_cli(["ldlr-bounds", "--config", cfg, "--out", out]) == 0
    with open(os.path.join(out, "log_exact.csv")) as fh:
        rows = fh.read().strip().splitlines()
    assert rows[0] == "d,n,D,beta,run,value"
    assert len(rows) == 5
    assert run_cli(["emit-plotdata", "--out", out]) == 0
    with open(os.path.join(out, "plot_log_exact.csv")) as fh:
        agg = fh.read().strip().splitlines()
    assert agg[0] == "d,n,D,beta,mean,sd,count"
    assert all(line.endswith(",0.0,1") for line in agg[1:])  # single runs: sd = 0


def test_emit_plotdata_errors(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert run_cli(["emit-plotdata", "--out", str(empty)]) == 2
    # manifest present but a metric CSV deleted -> exit 1, missing listed
    cfg = write_config(tmp_path, "cfg.json", SEARCH_CFG)
    out = str(tmp_path / "pd")
    run_cli(["search-curve", "--config", cfg, "--out", out, "--jobs", "1"])
    os.unlink(os.path.join(out, "success.csv"))
    assert run_cli(["emit-plotdata", "--out", out]) == 1


def test_cli_entry_point_installed():
    proc = subprocess.run(
        [sys.executable, "-m", "cumlab.cli", "--help"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    for sub in ("generate", "lr-curve", "search-curve", "emit-plotdata"):
        assert sub in proc.stdout


def test_train_sweep_smoke(tmp_path):
    cfg = write_config(
        tmp_path,
        "cfg.json",
        {
            "experiment": "train-sweep",
            "seed": 6,
            "task": "spiked_wishart",
            "beta": 20.0,
            "d": [8],
            "n_per_class": [120],
            "alpha_lazy": [1.0],
            "runs": 1,
            "n_test_per_class": 200,
            "train": {"batch_size": 32},
            "rf": True,
        },
    )
    out = str(tmp_path / "ts")
    assert run_cli(["train-sweep", "--config", cfg, "--out", out, "--jobs", "1"]) == 0
    for metric in ("nn_early_stop_acc", "nn_final_max_overlap", "rf_acc"):
        assert os.path.exists(os.path.join(out, f"{metric}.csv")), metric


def test_train_sweep_nlgp_lazy_grid(tmp_path):
    # NLGP task trains against the matched Gaussian class; no spike, so no
    # overlap metric; alpha > 1 exercises the centred lazy path
    cfg = write_config(
        tmp_path,
        "cfg.json",
        {
            "experiment": "train-sweep",
            "seed": 9,
            "task": "nlgp",
            "gain": 3.0,
            "xi": 1.0,
            "d": [8],
            "n_per_class": [80],
            "alpha_lazy": [1.0, 100.0],
            "runs": 1,
            "n_test_per_class": 100,
            "train": {"epochs": 5, "batch_size": 32},
            "rf": False,
        },
    )
    out = str(tmp_path / "nlt")
    assert run_cli(["train-sweep", "--config", cfg, "--out", out]) == 0
    assert not os.path.exists(os.path.join(out, "nn_final_max_overlap.csv"))
    with open(os.path.join(out, "nn_early_stop_acc.csv")) as fh:
        rows = fh.read().strip().splitlines()
    alphas = {r.split(",")[2] for r in rows[1:]}
    assert alphas == {"1.0", "100.0"}


def test_nlgp_localisation_smoke(tmp_path):
    cfg = write_config(
        tmp_path,
        "cfg.json",
        {
            "experiment": "nlgp-localisation",
            "seed": 7,
            "d": 10,
            "gain": 3.0,
            "xi": 1.0,
            "n_per_d": [20],
            "runs": 1,
        },
    )
    out = str(tmp_path / "nl")
    assert run_cli(["nlgp-localisation", "--config", cfg, "--out", out]) == 0
    with open(os.path.join(out, "cp_ipr.csv")) as fh:
        rows = fh.read().strip().splitlines()
    assert rows[0] == "d,n,data_class,run,value"
    classes = {r.split(",")[2] for r in rows[1:]}
    assert classes == {"nlgp", "gp_match"}
