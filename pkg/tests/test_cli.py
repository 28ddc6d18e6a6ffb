import json
from pathlib import Path

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from wfsmkit.cli import main
from wfsmkit.config import load_run_config
from wfsmkit.powertrain import DriveCycle
from wfsmkit.resources import DATA_DIR

STAGES = {
    "map_build": ["map", "build"],
    "control_mtpl": ["control", "mtpl"],
    "control_envelope": ["control", "envelope"],
    "cycle_run": ["cycle", "run"],
    "optimize_run": ["optimize", "run"],
    "report_compare": ["report", "compare"],
}


def _short_cycle(path):
    t = np.arange(0.0, 121.0)
    v = 60.0 * np.sin(np.pi * t / 120.0) ** 2
    DriveCycle.from_kmh(t, v, name="short").to_csv(path)


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    _short_cycle(root / "short.csv")
    cfg = {
        "machine": "wfsm_m0", "cycle": "short.csv", "grid": [9, 9, 5], "seed": 4,
        "stages": {
            "mtpl": {"points": [[145.0, 3000.0], [40.0, 6000.0]], "torque_axis": [50.0, 200.0],
                     "speed_axis": [1000.0, 6000.0]},
            "envelope": {"speeds": [1000.0, 6000.0, 12000.0]},
            "cycle": {"histogram": {"torque_bins": 6, "speed_bins": 6}},
            "optimize": {"ga": {"pop_size": 4, "n_generations": 1},
                         "evaluation": {"grid": [7, 7, 3], "final_grid": [9, 9, 5]}},
            "report": {"cruise_kmh": [70.0]},
        },
    }
    (root / "run.yaml").write_text(yaml.safe_dump(cfg), encoding="utf-8")
    return root


def _invoke(args, env=None):
    return CliRunner().invoke(main, args, env=env or {}, catch_exceptions=False)


@pytest.fixture(scope="module")
def stage_runs(run_dir):
    out = run_dir / "out"
    codes = {}
    for name, cmd in STAGES.items():
        res = _invoke([*cmd, "--config", str(run_dir / "run.yaml"), "--out", str(out)])
        codes[name] = (res.exit_code, res.output)
    return out, codes


def test_every_stage_succeeds_and_stamps_outputs(stage_runs):
    out, codes = stage_runs
    for name, (code, text) in codes.items():
        assert code == 0, f"{name}: {text}"
    h = json.loads((out / "manifest_map_build.json").read_text())["config_hash"]
    for name in STAGES:
        man = json.loads((out / f"manifest_{name}.json").read_text())
        assert man["config_hash"] == h and man["seed"] == 4 and man["stage"] == name
        for key in ("config", "inputs", "outputs", "versions", "started", "elapsed_s"):
            assert key in man
        for fname in man["outputs"]:
            p = out / fname
            if p.suffix in (".csv", ".yaml"):
                assert p.read_text().splitlines()[0] == f"# config_hash: {h}"
            elif p.suffix == ".json":
                assert json.loads(p.read_text())["config_hash"] == h
    assert not list(out.glob(".partial-*")) and not (out / ".wfsm.lock").exists()
    table = (out / "edu_comparison.csv").read_text().splitlines()
    assert table[1] == "characteristic,WFSM,PMSM" and len(table) == 4


@pytest.mark.parametrize("name", ["map_build", "control_mtpl", "cycle_run"])
def test_rerun_from_manifest_is_byte_identical(stage_runs, tmp_path, name):
    out, _ = stage_runs
    man = json.loads((out / f"manifest_{name}.json").read_text())
    res = _invoke([*STAGES[name], "--config", str(out / f"manifest_{name}.json"), "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    for fname in man["outputs"]:
        assert (tmp_path / fname).read_bytes() == (out / fname).read_bytes(), fname


def test_bad_config_exits_2(tmp_path):
    (tmp_path / "bad.yaml").write_text("bogus_key: 1\n", encoding="utf-8")
    res = _invoke(["map", "build", "--config", str(tmp_path / "bad.yaml"), "--out", str(tmp_path / "o")])
    assert res.exit_code == 2
    res = _invoke(["map", "build", "--config", str(tmp_path / "missing.yaml")])
    assert res.exit_code == 2
    (tmp_path / "v.yaml").write_text("strategy: fastest\n", encoding="utf-8")
    assert _invoke(["map", "build", "--config", str(tmp_path / "v.yaml")]).exit_code == 2


def test_materials_validate(tmp_path):
    assert _invoke(["materials", "validate"]).exit_code == 0
    data = yaml.safe_load((DATA_DIR / "materials" / "no35.yaml").read_text())
    data["bh_curve"][4] = [120.0, 0.5]
    (tmp_path / "bad.yaml").write_text(yaml.safe_dump(data), encoding="utf-8")
    res = _invoke(["materials", "validate", str(tmp_path / "bad.yaml")])
    assert res.exit_code == 3
    assert "index 4" in res.output
    smc = yaml.safe_load((DATA_DIR / "materials" / "smc_c.yaml").read_text())
    smc["stacking_factor"] = 0.95
    (tmp_path / "smc.yaml").write_text(yaml.safe_dump(smc), encoding="utf-8")
    res = _invoke(["materials", "validate", str(tmp_path / "smc.yaml")])
    assert res.exit_code == 3 and "smc_stacking_factor" in res.output


def test_locked_output_refused(run_dir, tmp_path):
    (tmp_path / ".wfsm.lock").write_text("123")
    res = _invoke(["map", "build", "--config", str(run_dir / "run.yaml"), "--out", str(tmp_path)])
    assert res.exit_code == 2
    assert not (tmp_path / "fluxmap.npz").exists()


def test_failed_stage_leaves_no_partial_outputs(run_dir, tmp_path):
    cfg = yaml.safe_load((run_dir / "run.yaml").read_text())
    cfg["stages"]["mtpl"] = {"points": [[145.0, 3000.0]], "torque_axis": [50.0], "speed_axis": [-5.0]}
    (run_dir / "neg.yaml").write_text(yaml.safe_dump(cfg), encoding="utf-8")
    res = _invoke(["control", "mtpl", "--config", str(run_dir / "neg.yaml"), "--out", str(tmp_path)])
    assert res.exit_code == 3
    assert sorted(p.name for p in tmp_path.iterdir()) == []


def test_precedence_flag_over_env_over_file(run_dir):
    path = run_dir / "run.yaml"
    assert load_run_config(path, env={}).seed == 4
    assert load_run_config(path, env={"WFSM_SEED": "9"}).seed == 9
    assert load_run_config(path, env={"WFSM_SEED": "9"}, overrides={"seed": 12}).seed == 12
    assert load_run_config(path, env={"WFSM_V_DC": "625"}).v_dc == 625.0
    assert load_run_config(path, env={"WFSM_GRID": "[5, 5, 3]"}).grid == (5, 5, 3)


def test_seed_flag_reaches_manifest(run_dir, tmp_path):
    res = _invoke(["control", "envelope", "--config", str(run_dir / "run.yaml"), "--out", str(tmp_path),
                   "--seed", "77"], env={"WFSM_SEED": "5"})
    assert res.exit_code == 0, res.output
    assert json.loads((tmp_path / "manifest_control_envelope.json").read_text())["seed"] == 77
    assert Path(tmp_path / "envelope.csv").read_text().count("\n") == 5
