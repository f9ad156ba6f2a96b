import json
import subprocess
import sys

import numpy as np
import pytest

import cooploc.harness as harness
from cooploc.analysis import RunRecord
from cooploc.cli import main as cli_main
from cooploc.harness import (
    ConfigError,
    ExperimentConfig,
    config_from_dict,
    config_to_dict,
    load_config,
    plot_data,
    run_experiment,
    run_realization,
    stream_rng,
)
from cooploc.network import DeploymentConfig, ErrorModel, Scenario, corner_layout
from cooploc.solvers import NumericalFailureError, SolverConfig, solve_ppm


def small_config(tmp_path, **overrides):
    base = dict(
        deployment=DeploymentConfig(n_targets=6, seed=0, reference_layout=corner_layout()),
        error=ErrorModel(sigma=1.0),
        solver=SolverConfig(max_iterations=60, stop_tol=1e-6),
        algorithms=("ppm", "pocs", "ppb"),
        n_realizations=3,
        master_seed=11,
        output_dir=str(tmp_path / "out"),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


# ---------------------------------------------------------------------------
# config documents


def test_config_round_trip():
    doc = {
        "deployment": {"field_size": 100.0, "n_targets": 5, "comm_range": 40.0, "seed": 2},
        "error": {"sigma": 1.0, "mode": "nlos", "p_nlos": 0.2, "nlos_max": 20.0},
        "solver": {"max_iterations": 120, "stop_tol": 1e-7, "initializer": "random"},
        "solver_overrides": {"pocs": {"max_iterations": 40}},
        "algorithms": ["ppm", "pocs"],
        "n_realizations": 4,
        "master_seed": 9,
        "output_dir": "runs/demo",
    }
    cfg = config_from_dict(doc)
    assert cfg.solver_for("pocs").max_iterations == 40
    assert cfg.solver_for("pocs").stop_tol == 1e-7  # inherits the base
    assert cfg.solver_for("ppm").max_iterations == 120
    back = config_to_dict(cfg)
    assert back["algorithms"] == ["ppm", "pocs"]
    assert config_to_dict(config_from_dict(back)) == back


@pytest.mark.parametrize(
    "doc, fragment",
    [
        ({"deployment": {"comm_range": 0}}, "deployment"),
        ({"deployment": {"n_targets": "five"}}, "deployment.n_targets"),
        ({"error": {"mode": "mixed"}}, "error"),
        ({"solver": {"initializer": "magic"}}, "solver"),
        ({"solver": {"bogus": 1}}, "solver.bogus"),
        ({"algorithms": ["ppm", "newton"]}, "newton"),
        ({"algorithms": []}, "algorithms"),
        ({"n_realizations": 0}, "n_realizations"),
        ({"master_seed": -1}, "master_seed"),
        ({"unknown_section": {}}, "unknown_section"),
        ({"solver_overrides": {"newton": {}}}, "newton"),
    ],
)
def test_malformed_config_names_the_field(doc, fragment):
    with pytest.raises(ConfigError) as excinfo:
        config_from_dict(doc)
    assert fragment in str(excinfo.value)


def test_load_config_rejects_bad_json(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)


# ---------------------------------------------------------------------------
# PRNG streams


def test_stream_rng_is_deterministic_and_distinct():
    a = stream_rng(5, 1, "scenario").uniform(size=4)
    b = stream_rng(5, 1, "scenario").uniform(size=4)
    c = stream_rng(5, 2, "scenario").uniform(size=4)
    d = stream_rng(5, 1, "init").uniform(size=4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


# ---------------------------------------------------------------------------
# realizations


def test_realization_uses_shared_scenario_and_init(tmp_path):
    cfg = small_config(tmp_path)
    scenario, records, failures = run_realization(cfg, 2)
    assert not failures
    assert set(records) == {"ppm", "pocs", "ppb"}
    # reproduce the ppm run by deriving the same streams manually
    rng_s = stream_rng(cfg.master_seed, 2, "scenario")
    from cooploc.network import generate_scenario

    s2 = generate_scenario(cfg.deployment, cfg.error, rng_s)
    assert np.array_equal(s2.targets_true, scenario.targets_true)
    lo, hi = s2.references.min(axis=0), s2.references.max(axis=0)
    x0 = stream_rng(cfg.master_seed, 2, "init").uniform(lo, hi, (6, 2))
    est, _ = solve_ppm(s2, cfg.solver, x0=x0)
    assert np.array_equal(est, records["ppm"].estimates)


def test_scenario_draw_independent_of_algorithm_subset(tmp_path):
    full = small_config(tmp_path)
    only_ppm = small_config(tmp_path, algorithms=("ppm",))
    s_full, rec_full, _ = run_realization(full, 1)
    s_one, rec_one, _ = run_realization(only_ppm, 1)
    assert np.array_equal(s_full.targets_true, s_one.targets_true)
    assert s_full.anchor_links == s_one.anchor_links
    assert np.array_equal(rec_full["ppm"].estimates, rec_one["ppm"].estimates)


# ---------------------------------------------------------------------------
# experiments


def test_run_experiment_outputs(tmp_path):
    cfg = small_config(tmp_path)
    manifest = run_experiment(cfg)
    out = tmp_path / "out"
    assert (out / "manifest.json").exists()
    assert (out / "cdf.csv").exists()
    assert (out / "residual.csv").exists()
    assert len(list((out / "runs").glob("*.json"))) == 9
    assert len(list((out / "scenarios").glob("*.json"))) == 3
    assert manifest["failures"] == []
    assert manifest["prng"]["bit_generator"] == "PCG64"
    assert manifest["config"]["n_realizations"] == 3

    header = (out / "cdf.csv").read_text().splitlines()[0]
    assert header == "alpha,ppm,pocs,ppb"
    # stored scenario is loadable and consistent
    s = Scenario.load(out / "scenarios" / "m00001.json")
    assert s.n_targets == 6

    # record files carry the per-iteration residuals used by residual.csv
    rec = RunRecord.load(out / "runs" / "m00001_ppm.json")
    assert rec.trace.residuals.shape[0] >= 1


def test_run_experiment_is_byte_deterministic(tmp_path):
    cfg_a = small_config(tmp_path, output_dir=str(tmp_path / "a"))
    cfg_b = small_config(tmp_path, output_dir=str(tmp_path / "b"))
    run_experiment(cfg_a)
    run_experiment(cfg_b)
    for name in ("cdf.csv", "residual.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    for sub in ("runs", "scenarios"):
        files_a = sorted((tmp_path / "a" / sub).glob("*.json"))
        files_b = sorted((tmp_path / "b" / sub).glob("*.json"))
        assert [f.name for f in files_a] == [f.name for f in files_b]
        for fa, fb in zip(files_a, files_b):
            assert fa.read_bytes() == fb.read_bytes()


def test_plot_data_reproduces_csvs(tmp_path):
    cfg = small_config(tmp_path)
    run_experiment(cfg)
    out = tmp_path / "out"
    redo = tmp_path / "redo"
    plot_data(out, redo)
    for name in ("cdf.csv", "residual.csv"):
        assert (out / name).read_bytes() == (redo / name).read_bytes()


def test_solver_failure_is_flagged_and_run_continues(tmp_path, monkeypatch):
    def exploding_ppm(*args, **kwargs):
        raise NumericalFailureError("injected failure", 1)

    monkeypatch.setattr(harness, "solve_ppm", exploding_ppm)
    cfg = small_config(tmp_path, n_realizations=2)
    manifest = run_experiment(cfg)
    assert len(manifest["failures"]) == 2
    assert all(f["algorithm"] == "ppm" for f in manifest["failures"])
    header = (tmp_path / "out" / "cdf.csv").read_text().splitlines()[0]
    assert header == "alpha,pocs,ppb"


def test_run_experiment_requires_output_dir(tmp_path):
    cfg = small_config(tmp_path, output_dir=None)
    with pytest.raises(ConfigError):
        run_experiment(cfg)


def test_run_experiment_parallel_matches_serial(tmp_path):
    serial = small_config(tmp_path, output_dir=str(tmp_path / "serial"), n_realizations=2)
    parallel = small_config(tmp_path, output_dir=str(tmp_path / "parallel"), n_realizations=2)
    run_experiment(serial, threads=1)
    run_experiment(parallel, threads=2)
    assert (tmp_path / "serial" / "cdf.csv").read_bytes() == (
        tmp_path / "parallel" / "cdf.csv"
    ).read_bytes()


# ---------------------------------------------------------------------------
# CLI


def write_config_file(tmp_path, out_dir):
    doc = {
        "deployment": {"n_targets": 5, "seed": 1, "reference_layout": [[0, 0], [100, 0], [100, 100], [0, 100]]},
        "error": {"sigma": 1.0},
        "solver": {"max_iterations": 40},
        "algorithms": ["ppm", "ppb"],
        "n_realizations": 2,
        "master_seed": 3,
        "output_dir": str(out_dir),
    }
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps(doc))
    return path


def test_cli_run_and_plot_data(tmp_path, capsys):
    cfg_path = write_config_file(tmp_path, tmp_path / "run1")
    assert cli_main(["run", str(cfg_path)]) == 0
    assert (tmp_path / "run1" / "cdf.csv").exists()
    assert cli_main(["plot-data", str(tmp_path / "run1"), "--out", str(tmp_path / "re")]) == 0
    assert (tmp_path / "run1" / "cdf.csv").read_bytes() == (tmp_path / "re" / "cdf.csv").read_bytes()
    assert (tmp_path / "run1" / "residual.csv").read_bytes() == (
        tmp_path / "re" / "residual.csv"
    ).read_bytes()


def test_cli_overrides(tmp_path):
    cfg_path = write_config_file(tmp_path, tmp_path / "ignored")
    out = tmp_path / "cli_out"
    code = cli_main(
        ["run", str(cfg_path), "--out", str(out), "--algorithms", "ppm", "--n-realizations", "1", "--seed", "5"]
    )
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["algorithms"] == ["ppm"]
    assert manifest["config"]["master_seed"] == 5
    assert manifest["config"]["n_realizations"] == 1


def test_cli_scenario_stdout_and_file(tmp_path, capsys):
    cfg_path = write_config_file(tmp_path, tmp_path / "unused")
    assert cli_main(["scenario", str(cfg_path)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["dimension"] == 2
    target = tmp_path / "scenario.json"
    assert cli_main(["scenario", str(cfg_path), "--out", str(target)]) == 0
    assert Scenario.load(target).n_targets == 5


def test_cli_rejects_malformed_config(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"deployment": {"comm_range": -5}}))
    assert cli_main(["run", str(path)]) == 2
    assert "comm_range" in capsys.readouterr().err


def test_cli_check_runs_quick_suite(tmp_path, monkeypatch):
    # stub the heavy checks; the CLI contract is exercised end to end
    import cooploc.checks as checks

    monkeypatch.setattr(
        checks, "ALL_CHECKS", [("always ok", lambda rng: (True, "fine"))]
    )
    assert cli_main(["check", "--seed", "1"]) == 0
    monkeypatch.setattr(
        checks, "ALL_CHECKS", [("always bad", lambda rng: (False, "broken"))]
    )
    assert cli_main(["check", "--seed", "1"]) == 1


def test_console_script_entry_point(tmp_path):
    cfg_path = write_config_file(tmp_path, tmp_path / "unused2")
    target = tmp_path / "via_script.json"
    proc = subprocess.run(
        [sys.executable, "-m", "cooploc.cli", "scenario", str(cfg_path), "--out", str(target)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert target.exists()
