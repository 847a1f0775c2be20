import json
import subprocess
import sys
from pathlib import Path

import pytest

from hallpump.cli import main
from hallpump.config import ConfigError, ExperimentConfig, load_config, parse_config

DEMO = Path(__file__).resolve().parents[1] / "src" / "hallpump" / "data" / "demo.cfg"

SMALL = """
[model]
L = 4
V = 0.0
[spectral]
phi_points = 9
[evolution]
eps = 0.2, 0.1, 0.05
parallel_steps = 16
checkpoints = 5
[index]
steps = 16
[run]
stages = validate, gap, parallel, sweep
"""


def test_defaults_roundtrip_bit_exact():
    cfg = ExperimentConfig().replace("model", t=0.1 + 0.2).replace("evolution", tol=1.0000000000000002e-9)
    text = cfg.dumps()
    back = parse_config(text)
    assert back == cfg and back.dumps() == text
    assert back.model.t.hex() == (0.1 + 0.2).hex()


def test_demo_parses():
    cfg = load_config(DEMO)
    assert cfg.model.L == 4 and cfg.model.V == 0.25 and cfg.evolution.eps == (0.2, 0.1, 0.05)


@pytest.mark.parametrize("text", [
    "[model]\nL = 5\n",
    "[model]\nL = 4\nq = 3\n",
    "[evolution]\neps = 0.05, 0.1\n",
    "[evolution]\ntol = 0\n",
    "[evolution]\nprofile = sine\n",
    "[transport]\nsplit = left\n",
    "[nonsense]\nx = 1\n",
    "[model]\nflux = 1\n",
    "[model]\nL = four\n",
    "[run]\nstages = validate, dance\n",
])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_cli_odd_L_fails(tmp_path, capsys):
    p = tmp_path / "odd.cfg"
    p.write_text("[model]\nL = 5\n")
    assert main(["validate-config", "--config", str(p)]) != 0
    assert "L must be even" in capsys.readouterr().err


def test_cli_validate_config_prints_normalised(capsys):
    assert main(["validate-config", "--config", str(DEMO)]) == 0
    out = capsys.readouterr().out
    assert parse_config(out) == load_config(DEMO)


def test_cli_oracle_prints_integer_only():
    out = subprocess.run([sys.executable, "-m", "hallpump.cli", "oracle", "--config", str(DEMO)],
                         capture_output=True, text=True, check=True)
    assert out.stdout == "-1\n"


def _run_small(tmp_path, name, threads=1):
    cfg = tmp_path / "small.cfg"
    cfg.write_text(SMALL)
    out = tmp_path / name
    code = main(["run", "--config", str(cfg), "--out", str(out), "--threads", str(threads), "--seed", "3"])
    return code, out


def test_run_artifacts_and_determinism(tmp_path):
    code, a = _run_small(tmp_path, "a")
    summary = json.loads((a / "summary.json").read_text())
    assert summary["schema"] == "hallpump.summary/1" and summary["seed"] == 3
    for c in summary["checks"]:
        assert set(c) >= {"name", "value", "threshold", "pass"}
    assert code == (0 if summary["ok"] else 1)
    names = {c["name"] for c in summary["checks"]}
    assert {"spectral.min_gap", "parallel.transport", "transport.quantization", "exactness.slope"} <= names
    for f in ("gap.csv", "gap.svg", "parallel.csv", "locality.csv", "transport_compliant.csv",
              "transport_ramp.csv", "transport.svg", "hamiltonian.json", "parallel_final.bin", "config.cfg"):
        assert (a / f).exists(), f
    assert (a / "locality.csv").read_text().startswith("r,relative_tail\n")
    _, b = _run_small(tmp_path, "b", threads=2)
    for f in ("gap.csv", "parallel.csv", "locality.csv", "transport_compliant.csv", "transport_ramp.csv"):
        assert (a / f).read_bytes() == (b / f).read_bytes(), f


def test_stage_selection_and_abort(tmp_path):
    cfg = tmp_path / "gapless.cfg"
    cfg.write_text("[model]\nL = 4\nq = 2\nV = 0.0\nN = 8\n")
    code = main(["run", "--config", str(cfg), "--out", str(tmp_path / "g"), "--stage", "parallel"])
    assert code != 0
    s = json.loads((tmp_path / "g" / "summary.json").read_text())
    status = {st["name"]: st["status"] for st in s["stages"]}
    assert status["validate"] == "ok" and status["gap"] == "aborted" and status["parallel"] == "skipped"
    assert "sweep" not in status
