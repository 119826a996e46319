import json
import subprocess
import sys
from pathlib import Path

import pytest

from coalflow.cli import main
from coalflow.config import RunConfig
from coalflow.errors import ConfigError


def write_config(tmp_path, **overrides):
    cfg = {
        "seed": 42,
        "out": str(tmp_path / "out"),
        "model": {"kind": "arratia"},
        "skeleton": {"window": [0.0, 1.0], "dx": 0.0625, "t0": 0.0,
                     "t1": 0.3, "dt": 1e-3, "row_period": 0.05,
                     "observe": "all"},
        "bundles": ["counterexample"],
        "scale": 0.2,
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def read_tree(root: Path, skip=("manifest.json",)):
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*"))
            if p.is_file() and p.name not in skip}


def test_config_validation():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"bundles": ["nope"]})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"coffee": True})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"model": {"kind": "unknown"}})


def test_simulate_deterministic_and_manifested(tmp_path):
    cfg_path = write_config(tmp_path)
    assert main(["simulate", "--config", str(cfg_path)]) == 0
    out = Path(json.loads(cfg_path.read_text())["out"])
    first = read_tree(out)
    assert "skeleton.cfsk" in first and "trajectories.csv" in first \
        and "plotdata.csv" in first
    assert main(["simulate", "--config", str(cfg_path)]) == 0
    second = read_tree(out)
    assert first == second  # byte-identical artifact set
    manifest = json.loads((out / "manifest.json").read_text())
    listed = {a["path"] for a in manifest["artifacts"]}
    on_disk = set(read_tree(out))
    assert listed == on_disk  # manifest completeness


def test_simulate_seed_changes_artifacts(tmp_path):
    cfg_path = write_config(tmp_path)
    main(["simulate", "--config", str(cfg_path)])
    out = Path(json.loads(cfg_path.read_text())["out"])
    first = read_tree(out)
    main(["simulate", "--config", str(cfg_path), "--seed", "43"])
    assert read_tree(out)["trajectories.csv"] != first["trajectories.csv"]


def test_verify_reports_and_exit_code(tmp_path):
    cfg_path = write_config(tmp_path)
    rc = main(["verify", "--config", str(cfg_path)])
    assert rc == 0
    out = Path(json.loads(cfg_path.read_text())["out"])
    bundle = json.loads((out / "report_counterexample.json").read_text())
    assert bundle["all_pass"] is True
    assert bundle["config_hash"]
    assert (out / "counterexample_verdict.txt").exists()


def test_verify_byte_identical_reports(tmp_path):
    cfg_path = write_config(tmp_path, bundles=["counterexample", "rng"])
    main(["verify", "--config", str(cfg_path)])
    out = Path(json.loads(cfg_path.read_text())["out"])
    first = read_tree(out)
    main(["verify", "--config", str(cfg_path)])
    assert read_tree(out) == first


def test_export_contract(tmp_path):
    cfg_path = write_config(tmp_path)
    main(["simulate", "--config", str(cfg_path)])
    out = Path(json.loads(cfg_path.read_text())["out"])
    queries = tmp_path / "queries.csv"
    queries.write_text("s,x,t\n0.1,0.5,0.2\n0.1,0.5,0.1\n0.1,99.0,0.2\n")
    dest = tmp_path / "evals.csv"
    assert main(["export", "--snapshot", str(out / "skeleton.cfsk"),
                 "--queries", str(queries), "--out", str(dest)]) == 0
    lines = dest.read_text().strip().splitlines()
    assert lines[0] == "s,x,t,value,trajectory_id,status"
    assert len(lines) == 4
    assert lines[2].split(",")[3] == "0.5"  # value at (s,x,s) is x
    assert lines[3].endswith("above_range")
    # empty query file: header only
    queries.write_text("s,x,t\n")
    main(["export", "--snapshot", str(out / "skeleton.cfsk"),
          "--queries", str(queries), "--out", str(dest)])
    assert dest.read_text().strip() == "s,x,t,value,trajectory_id,status"


def test_simulate_single_start_single_trajectory(tmp_path):
    cfg_path = write_config(
        tmp_path,
        skeleton={"window": [0.0, 0.0], "dx": 1.0, "t0": 0.0, "t1": 0.2,
                  "dt": 1e-3, "start_times": [0.0], "observe": "all"})
    main(["simulate", "--config", str(cfg_path)])
    out = Path(json.loads(cfg_path.read_text())["out"])
    lines = (out / "trajectories.csv").read_text().strip().splitlines()[1:]
    ids = {ln.split(",")[1] for ln in lines}
    assert ids == {"0"}


def test_cli_entrypoint_runs():
    proc = subprocess.run([sys.executable, "-m", "coalflow.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "simulate" in proc.stdout and "verify" in proc.stdout
