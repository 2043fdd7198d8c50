import json
import subprocess
import sys

import pytest

from coopftrl.cli import main


def test_run_preset_small(tmp_path, capsys):
    code = main(["run", "--preset", "exp4", "--out", str(tmp_path), "--runs", "1",
                 "--horizon", "50"])
    assert code == 0
    assert (tmp_path / "exp4" / "summary.csv").exists()
    assert "cftrl" in capsys.readouterr().out


def test_env_var_default_out(tmp_path, monkeypatch):
    monkeypatch.setenv("COOPFTRL_OUT", str(tmp_path))
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"T": 30, "runs": 1, "K": [3], "graph": {"N": [10]}}))
    assert main(["run", "--preset", "exp4", "--config", str(cfg)]) == 0
    assert (tmp_path / "exp4" / "runs" / "K3_N10_d1.csv").exists()


def test_config_error_exit_code(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"algorithms": []}))
    assert main(["run", "--preset", "exp1", "--config", str(cfg)]) == 2
    assert main(["validate", "--config", str(cfg)]) == 2
    assert main(["run"]) == 2


def test_validate_ok(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "name": "mine", "K": [5], "graph": {"type": "star", "N": [4]}, "d": [2], "T": 10,
        "algorithms": ["dftrl"],
    }))
    assert main(["validate", "--config", str(cfg)]) == 0


def test_unknown_preset_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["run", "--preset", "exp9"])
    assert exc.value.code == 2


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "coopftrl", "verify", "--quick",
                          "--out", str(tmp_path / "r.csv")],
                         capture_output=True, text=True, timeout=600)
    assert out.returncode == 0, out.stdout + out.stderr
    assert "tsallis_vs_reference" in out.stdout
    assert (tmp_path / "r.csv").read_text().startswith("check,instance,")
