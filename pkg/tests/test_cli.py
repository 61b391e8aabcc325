import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import scenario_path
from interact_clark import cli
from interact_clark.exceptions import BandwidthError

SMALL = {"grid": {"n_steps": 64},
         "experiment": {"M": 64, "M_outer": 4, "M_mean": 50, "n_inner": 16,
                        "density_n_inner": 400}}

HEADERS = {
    "trajectory.csv": None,
    "brownian.csv": "t,W",
    "picard.csv": "n,delta,ratio",
    "picard_summary.csv": "n_iter,delta_last,sup_picard_euler",
    "malliavin_summary.csv": "epsilon,h_start,h_end,n_steps,fd_rel_error,init_max_abs_diff",
    "density.csv": "t,v,g_hat",
    "density_consistency.csv": "phi_name,theta_hat,pairing,rel_error",
}


def write_config(tmp_path, name, **patch):
    doc = json.loads(scenario_path(name).read_text())
    for key, val in {**SMALL, **patch}.items():
        if isinstance(val, dict):
            doc.setdefault(key, {}).update(val)
        else:
            doc[key] = val
    p = tmp_path / f"{name}.json"
    p.write_text(json.dumps(doc))
    return p


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize("command", cli.COMMANDS)
def test_commands_write_outputs_and_manifest(tmp_path, command, capsys):
    name = "degenerate" if command == "delta-example" else "tanh"
    cfg = write_config(tmp_path, name)
    out = tmp_path / "out"
    assert cli.main([command, "--config", str(cfg), "--out-dir", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == command and manifest["tool"] == "interact-clark"
    assert manifest["outputs"]
    for f in manifest["outputs"]:
        text = (out / f["file"]).read_text()
        head = HEADERS.get(f["file"])
        if head:
            assert text.splitlines()[0] == head
    printed = capsys.readouterr().out
    assert printed.count("PASS") + printed.count("FAIL") == len(manifest["checks"])


def test_clark_outputs(tmp_path):
    cfg = write_config(tmp_path, "tanh")
    cli.main(["clark-verify", "--config", str(cfg), "--out-dir", str(tmp_path)])
    for phi in ("v", "sin", "bump"):
        rows = read_csv(tmp_path / f"clark_summary_{phi}.csv")
        assert len(rows) == 1 and int(rows[0]["M_outer"]) == 4
        integrand = read_csv(tmp_path / f"clark_integrand_{phi}_outer0.csv")
        assert len(integrand) == 64 and list(integrand[0]) == ["t", "theta_hat", "stderr"]


def test_simulate_translation_moves_with_brownian(tmp_path):
    cfg = write_config(tmp_path, "translation")
    cli.main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path)])
    w = np.array([float(r["W"]) for r in read_csv(tmp_path / "brownian.csv")])
    rows = read_csv(tmp_path / "trajectory.csv")
    x = np.array([float(r["position"]) for r in rows]).reshape(w.size, -1)
    assert np.allclose(x - x[0], w[:, None] - w[0], rtol=0, atol=1e-12)


def test_delta_example_identity_is_exact(tmp_path):
    cfg = write_config(tmp_path, "degenerate")
    assert cli.main(["delta-example", "--config", str(cfg), "--out-dir", str(tmp_path),
                     "--assert"]) == 0
    rows = {r["f_name"]: r for r in read_csv(tmp_path / "delta_example.csv")}
    assert float(rows["v"]["rms_resid"]) <= 1e-12


def test_seed_env_override(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, "tanh")
    monkeypatch.setenv(cli.SEED_ENV, "11")
    cli.main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path / "a")])
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["base_seed"] == 11
    monkeypatch.delenv(cli.SEED_ENV)
    cli.main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path / "b")])
    assert (tmp_path / "a" / "brownian.csv").read_text() != (tmp_path / "b" / "brownian.csv").read_text()
    monkeypatch.setenv(cli.SEED_ENV, "x")
    assert cli.main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path / "c")]) == 2


def test_config_errors_exit_2(tmp_path, capsys):
    cfg = write_config(tmp_path, "tanh", coefficients={"drift": {"family": "cubic"}})
    assert cli.main(["simulate", "--config", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "coefficients.drift.family" in err and "cubic" in err
    assert cli.main(["simulate", "--config", str(tmp_path / "none.json")]) == 2
    late = write_config(tmp_path, "tanh", experiment={"density_time": 1.0})
    assert cli.main(["density", "--config", str(late), "--out-dir", str(tmp_path)]) == 2


def test_numeric_error_exit_3(tmp_path, capsys):
    cfg = write_config(tmp_path, "linear",
                       coefficients={"drift": {"family": "linear_attraction", "params": [1e9]}})
    assert cli.main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 3
    assert "numeric error" in capsys.readouterr().err


def test_bandwidth_error_exit_3(tmp_path, monkeypatch):
    # valid scenarios always spread the samples, so inject the failure
    def coincide(*args, **kw):
        raise BandwidthError("all samples coincide; cannot choose a bandwidth")

    monkeypatch.setattr(cli.de, "integrand_density", coincide)
    cfg = write_config(tmp_path, "degenerate")
    assert cli.main(["density", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 3


def test_assert_exit_4(tmp_path, capsys):
    # a strongly state-dependent diffusion on a coarse grid misses the fd tolerance
    cfg = write_config(tmp_path, "tanh_sin",
                       coefficients={"drift": {"family": "tanh_kernel", "params": [0.2, 1.0]},
                                     "diffusion": {"family": "sin_bounded", "params": [1.0, 0.9]}})
    args = ["malliavin-check", "--config", str(cfg), "--out-dir", str(tmp_path)]
    assert cli.main(args) == 0
    assert cli.main(args + ["--assert"]) == 4
    assert "FAIL  fd relative error" in capsys.readouterr().out


def test_warnings_reach_stderr_and_manifest(tmp_path, capsys):
    cfg = write_config(tmp_path, "tanh", grid={"n_steps": 48})
    assert cli.main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 0
    assert "not a power of two" in capsys.readouterr().err
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert any("power of two" in w for w in manifest["warnings"])


def test_console_script_entry_point(tmp_path):
    cfg = write_config(tmp_path, "degenerate")
    proc = subprocess.run([sys.executable, "-m", "interact_clark.cli", "simulate", "--config", str(cfg),
                           "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "interact_clark.cli", "bogus", "--config", str(cfg)],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and "invalid choice" in proc.stderr
