import csv
import json
import math
import subprocess
import sys
from fractions import Fraction

import pytest

from zklab.cli import (
    ConfigError,
    emit_plot_script,
    main,
    parse_config,
    run_subcommand,
)

SMALL = [
    "grid.Nx=32",
    "grid.Ny=8",
    "run.T=0.05",
    "run.dt=0.005",
    "run.sample_every=2",
    "identities.snapshots=5",
    "identities.delta=0.01",
]


def test_defaults():
    cfg = parse_config()
    assert cfg["grid"]["Lx"] == pytest.approx(8 * math.pi)
    assert (cfg["grid"]["Nx"], cfg["grid"]["Ny"]) == (128, 32)
    assert cfg["imethod"]["s"] == pytest.approx(0.9)
    assert all(e["source"] == "default" for e in cfg.echo)


def test_imethod_s_must_be_below_one():
    with pytest.raises(ConfigError) as exc:
        parse_config(flags=["imethod.s=1.5"])
    assert any("s<1 required" in o for o in exc.value.offenses)


def test_file_and_flag_precedence(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[grid]\nNx = 64\nNy = 16\n[run]\nseed = 5\n")
    cfg = parse_config(ini, {"grid.Nx": "256"})
    assert cfg["grid"]["Nx"] == 256
    assert cfg["grid"]["Ny"] == 16
    echo = {e["key"]: e for e in cfg.echo}
    assert echo["grid.Nx"]["source"] == "flag"
    assert echo["grid.Nx"]["file_value"] == "64" and echo["grid.Nx"]["flag_value"] == "256"
    assert echo["grid.Ny"]["source"] == "file"
    assert echo["run.seed"]["value"] == 5


def test_errors_are_aggregated(tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[grid]\nNx = 33\nbogus = 1\n[nowhere]\nx = 1\n")
    with pytest.raises(ConfigError) as exc:
        parse_config(ini, ["imethod.s=2"])
    text = "\n".join(exc.value.offenses)
    assert "grid.Nx" in text and "grid.bogus" in text and "[nowhere]" in text and "imethod.s" in text


def test_malformed_flag():
    with pytest.raises(ConfigError, match="section.key=value"):
        parse_config(flags=["nonsense"])


def test_thresholds_output(tmp_path):
    cfg = parse_config(flags={"thresholds.s": "9/10"})
    res = run_subcommand("thresholds", cfg, tmp_path)
    assert res.status == 0
    text = (tmp_path / "thresholds.json").read_text()
    assert "11/13" in text
    assert cfg["thresholds"]["s"] == Fraction(9, 10)


def test_gronwall_passes(tmp_path):
    res = run_subcommand("gronwall", out_dir=tmp_path)
    assert res.status == 0, res.failures
    data = json.loads((tmp_path / "gronwall.json").read_text())
    assert data["check"]["bound_holds"]
    assert not data["negative_control"]["stabilized"]


def test_identities_on_zero_data(tmp_path):
    cfg = parse_config(flags=SMALL + ["initial.profile=zero"])
    res = run_subcommand("verify-identities", cfg, tmp_path)
    assert res.status == 0, res.failures
    with open(tmp_path / "identities.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["identity"] for r in rows} == {"modified_energy_increment", "sobolev_growth"}
    for r in rows:
        assert float(r["residual"]) == 0.0 and r["pass"] == "1"


def test_simulate_deterministic(tmp_path):
    cfg = parse_config(flags=SMALL)
    a = run_subcommand("simulate", cfg, tmp_path / "a")
    b = run_subcommand("simulate", cfg, tmp_path / "b")
    assert a.status == 0 and b.status == 0
    assert a.files == b.files
    for name in a.files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_manifest_hashes(tmp_path):
    import hashlib

    res = run_subcommand("simulate", parse_config(flags=SMALL), tmp_path)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["command"] == "simulate" and man["seed"] == 0
    assert man["grid"]["Nx"] == 32
    recorded = {f["path"]: f for f in man["files"]}
    assert set(recorded) == set(res.files)
    for name, rec in recorded.items():
        data = (tmp_path / name).read_bytes()
        assert rec["sha256"] == hashlib.sha256(data).hexdigest()
        assert rec["bytes"] == len(data)


def test_failing_assertion_sets_status(tmp_path):
    cfg = parse_config(flags=SMALL + ["assert.drift_tol=1e-300"])
    res = run_subcommand("simulate", cfg, tmp_path)
    assert res.status == 1
    fails = json.loads((tmp_path / "failures.json").read_text())["failures"]
    assert any(f["check"] == "energy_drift" for f in fails)
    relaxed = run_subcommand("simulate", cfg, tmp_path / "r", assertions=False)
    assert relaxed.status == 0 and relaxed.failures


def _csv(path, header, rows):
    path.write_text("\n".join(",".join(map(str, r)) for r in [header] + rows) + "\n")
    return path


def test_plot_script_schemas(tmp_path):
    d = _csv(tmp_path / "decay.csv", ["N", "increment", "resolved", "fitted_slope"], [[1, 0.1, 1, -1.5], [2, 0.05, 1, -1.5]])
    g = _csv(tmp_path / "growth.csv", ["t", "H^2"], [[0, 1.0], [1, 1.5]])
    t = _csv(tmp_path / "trajectory.csv", ["t", "mass", "energy"], [])
    script = emit_plot_script([d, g, t], alpha={"H^2": 0.5})
    compile(script, "plot.py", "exec")
    assert "fitted slope" in script
    assert "'H^2': 0.5" in script
    assert "no data" in script
    assert script.count("savefig") == 3


def test_plot_script_runs(tmp_path):
    pytest.importorskip("matplotlib")
    g = _csv(tmp_path / "growth.csv", ["t", "H^2"], [[0, 1.0], [1, 1.5], [2, 1.8]])
    e = _csv(tmp_path / "trajectory.csv", ["t", "mass"], [])
    (tmp_path / "plot.py").write_text(emit_plot_script([g, e]))
    subprocess.run([sys.executable, "plot.py"], cwd=tmp_path, check=True)
    assert (tmp_path / "growth.png").exists() and (tmp_path / "trajectory.png").exists()


def test_plot_script_rejects_unknown_columns(tmp_path):
    p = _csv(tmp_path / "x.csv", ["a", "b"], [[1, 2]])
    with pytest.raises(ValueError, match="unrecognized report columns"):
        emit_plot_script([p])


def test_env_out_dir(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("ZKLAB_OUT", str(tmp_path))
    assert main(["thresholds"]) == 0
    assert (tmp_path / "thresholds" / "manifest.json").exists()
    assert capsys.readouterr().out.strip().endswith("manifest.json")


def test_main_config_error(tmp_path, capsys):
    code = main(["gronwall", "--out-dir", str(tmp_path), "--set", "imethod.s=1.5", "--set", "grid.Nx=7"])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert len(err["config_errors"]) == 2


def test_main_simulate_with_plot(tmp_path):
    argv = ["simulate", "--out-dir", str(tmp_path), "--seed", "3", "--plot"]
    for s in SMALL:
        argv += ["--set", s]
    assert main(argv) == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["seed"] == 3
    assert (tmp_path / "plot.py").exists()


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "zklab", "thresholds", "--out-dir", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "thresholds.json").exists()
