"""CLI contract: commands, exit codes, overrides, artifacts."""
import json
import os

import numpy as np
import pytest

from qpinn.cli import main

TINY_EXPERIMENT = {
    "schema_version": 1,
    "case": "vacuum",
    "model": {"variant": "hybrid", "ansatz": "strongly", "scale": "acos",
              "hidden_width": 8, "rff_features": 6, "n_qubits": 3,
              "n_layers_pqc": 2, "seed": 1},
    "train": {"epochs": 2, "seed": 1, "grid": [5, 5, 5], "eval_cadence": 1,
              "probe_cadence": 1, "probe_grid": [6, 6, 4], "mw_probe_points": 4},
    "fdtd": {"nx": 12, "ny": 12, "n_snapshots": 3},
}


@pytest.fixture
def experiment(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(TINY_EXPERIMENT))
    return str(path)


def read_csv(path):
    return [line.split(",") for line in open(path).read().splitlines()]


# --- run ---------------------------------------------------------------------------

def test_run_writes_artifacts(experiment, tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", experiment, "--out", str(out)]) == 0
    rows = read_csv(out / "metrics.csv")
    assert rows[0][:3] == ["epoch", "lr", "phys"]
    assert len(rows) == 3  # header + 2 epochs
    assert (out / "final.ckpt").exists()
    assert (out / "summary.json").exists()
    assert (out / "config.json").exists()


def test_run_row_count_matches_epochs(experiment, tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", experiment, "--out", str(out),
                 "--set", "epochs=10", "--set", "eval_cadence=0",
                 "--set", "probe_cadence=0"]) == 0
    assert len(read_csv(out / "metrics.csv")) == 11


def test_run_missing_config_exits_2(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2


def test_run_unknown_key_exits_2(experiment, tmp_path):
    cfg = json.loads(open(experiment).read())
    cfg["model"]["bogus"] = 3
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(cfg))
    assert main(["run", "--config", str(bad)]) == 2


def test_run_refuses_overwrite_without_force(experiment, tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", experiment, "--out", str(out)]) == 0
    assert main(["run", "--config", experiment, "--out", str(out)]) == 2
    assert main(["run", "--config", experiment, "--out", str(out), "--force"]) == 0


def test_run_cross_mesh_summary_reports_table_counts(experiment, tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", experiment, "--out", str(out),
                 "--set", "model.ansatz=cross_mesh",
                 "--set", "model.hidden_width=128",
                 "--set", "model.rff_features=128",
                 "--set", "model.n_qubits=7", "--set", "model.n_layers_pqc=4",
                 "--set", "epochs=1", "--set", "eval_cadence=0",
                 "--set", "probe_cadence=0", "--set", "grid=[4,4,4]"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["counts"] == {"classical": 66848, "quantum": 196,
                                 "total": 67044}


def test_run_seed_flag_threads_through(experiment, tmp_path):
    out = tmp_path / "s9"
    assert main(["run", "--config", experiment, "--out", str(out),
                 "--seed", "9"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["seed"] == 9
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["model"]["seed"] == 9


def test_rerun_is_byte_identical(experiment, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["run", "--config", experiment, "--out", str(out)]) == 0
        outs.append(out)
    for rel in ("metrics.csv", "final.ckpt", "reference/ez.f64"):
        assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes()
    summaries = []
    for out in outs:
        s = json.loads((out / "summary.json").read_text())
        s.pop("wall_s")  # wall time is the one legitimately varying field
        summaries.append(s)
    assert summaries[0] == summaries[1]


# --- reference ----------------------------------------------------------------------

def test_reference_writes_snapshots(experiment, tmp_path):
    out = tmp_path / "ref"
    assert main(["reference", "--config", experiment, "--out", str(out)]) == 0
    meta = json.loads((out / "meta.json").read_text())
    assert meta["shape"] == [3, 12, 12]
    assert (out / "ez.f64").stat().st_size == 3 * 12 * 12 * 8


def test_reference_dielectric_tags_material(experiment, tmp_path):
    out = tmp_path / "ref"
    assert main(["reference", "--config", experiment, "--out", str(out),
                 "--set", "case=dielectric"]) == 0
    meta = json.loads((out / "meta.json").read_text())
    assert meta["material"]["case"] == "dielectric"
    assert meta["material"]["eps_r"] == 4.0


def test_reference_rerun_identical(experiment, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["reference", "--config", experiment, "--out", str(a)]) == 0
    assert main(["reference", "--config", experiment, "--out", str(b)]) == 0
    assert (a / "ez.f64").read_bytes() == (b / "ez.f64").read_bytes()


def test_reference_cfl_violation_surfaces(experiment):
    assert main(["reference", "--config", experiment,
                 "--set", "fdtd.dt=0.5"]) == 2


# --- verify ---------------------------------------------------------------------------

def test_verify_physics_passes(capsys):
    assert main(["verify", "physics"]) == 0
    out = capsys.readouterr().out
    assert "[PASS]" in out and "FAIL" not in out


def test_verify_grad_passes():
    assert main(["verify", "grad"]) == 0


# --- sweep / report ----------------------------------------------------------------------

@pytest.fixture
def matrix_config(tmp_path):
    matrix = {
        "base": {
            "schema_version": 1,
            "case": "vacuum",
            "model": {"variant": "hybrid", "hidden_width": 8, "rff_features": 6,
                      "n_qubits": 3, "n_layers_pqc": 1},
            "train": {"epochs": 2, "grid": [4, 4, 4], "eval_cadence": 1,
                      "probe_cadence": 1, "probe_grid": [5, 5, 4],
                      "mw_probe_points": 4},
            "fdtd": {"nx": 8, "ny": 8, "n_snapshots": 3},
        },
        "ansatz": ["strongly", "no_entanglement"],
        "scale": ["acos"],
        "energy": [True, False],
        "seeds": [0, 1],
    }
    path = tmp_path / "matrix.json"
    path.write_text(json.dumps(matrix))
    return str(path)


def test_sweep_cartesian_product(matrix_config, tmp_path):
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", matrix_config, "--out", str(out)]) == 0
    cells = [d for d in os.listdir(out) if os.path.isdir(out / d)]
    assert len(cells) == 8  # 2 ansatze x 1 scale x 2 energy x 2 seeds
    agg = read_csv(out / "aggregate.csv")
    assert len(agg) == 5  # header + 4 groups
    by_name = {tuple(r[:5]): r for r in agg[1:]}
    for key, row in by_name.items():
        assert row[5] == "2"  # mean/std pooled over the 2 seeds only


def test_sweep_continues_past_failing_cell(matrix_config, tmp_path):
    matrix = json.loads(open(matrix_config).read())
    matrix["scale"] = ["acos", "not_a_scale"]
    matrix["energy"] = [True]
    matrix["seeds"] = [0]
    bad = tmp_path / "bad_matrix.json"
    bad.write_text(json.dumps(matrix))
    out = tmp_path / "sweep2"
    assert main(["sweep", "--config", str(bad), "--out", str(out)]) == 1
    summaries = []
    for d in sorted(os.listdir(out)):
        p = out / d / "summary.json"
        if p.exists():
            summaries.append(json.loads(p.read_text())["status"])
    assert "ok" in summaries and "error" in summaries


def test_report_aggregates_over_seeds(matrix_config, tmp_path):
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", matrix_config, "--out", str(out)]) == 0
    report = tmp_path / "table.csv"
    assert main(["report", "--runs", str(out), "--out", str(report)]) == 0
    rows = read_csv(report)
    header = rows[0]
    i_l2m = header.index("l2_mean")
    i_frac = header.index("collapse_fraction")
    for r in rows[1:]:
        assert float(r[i_l2m]) > 0
        assert 0.0 <= float(r[i_frac]) <= 1.0


def test_report_empty_dir_exits_2(tmp_path):
    empty = tmp_path / "none"
    empty.mkdir()
    assert main(["report", "--runs", str(empty)]) == 2


def test_verify_qsim_passes():
    assert main(["verify", "qsim"]) == 0
