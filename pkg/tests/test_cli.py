import csv
import json
import os
import subprocess
import sys

import pytest

from smallmass.cli import load_config, parse_config, run
from smallmass.errors import ConfigError


def write(path, text):
    path.write_text(text)
    return str(path)


def files_under(root):
    out = {}
    for d, _, names in os.walk(root):
        for n in names:
            p = os.path.join(d, n)
            out[os.path.relpath(p, root)] = open(p, "rb").read()
    return out


QUICK = """
system = "ou-linear"
[params]
m = 1.0
gamma = 1.0
kBT = 1.0
omega = 1.0
[grid]
T = 1.0
dt_rule = 20
[ensemble]
n_paths = 300
master_seed = 42
q0 = [0.5]
[sweep]
eps_list = [0.1, 0.05, 0.025, 0.0125]
p = 2
"""


def test_converge_ou_default_slope(tmp_path, capsys):
    cfg = write(tmp_path / "c.toml", QUICK)
    assert run(["converge", "--config", cfg, "--output", str(tmp_path / "out")]) == 0
    art = json.loads((tmp_path / "out" / "converge.json").read_text())
    assert art["schema_version"] == 1 and art["command"] == "converge"
    assert 0.8 <= art["report"]["slope"] <= 1.2
    assert art["config"]["ensemble"]["master_seed"] == 42
    rows = list(csv.reader(open(tmp_path / "out" / "converge.csv")))
    assert rows[0] == ["eps", "value", "stderr", "aborted_fraction"] and len(rows) == 5
    assert "slope" in capsys.readouterr().out


def test_rerun_byte_identical_and_round_trip(tmp_path):
    cfg = write(tmp_path / "c.toml", QUICK.replace("n_paths = 300", "n_paths = 100"))
    out = str(tmp_path / "out")
    assert run(["momentum", "--config", cfg, "--output", out]) == 0
    first = files_under(out)
    assert run(["momentum", "--config", cfg, "--output", out]) == 0
    assert files_under(out) == first
    art = json.loads(first["momentum.json"])
    original = load_config(cfg)
    original.output.directory = out
    assert parse_config(art["config"]) == original


def test_limit_coeffs_em2d_constant_field(tmp_path):
    out = tmp_path / "lc"
    assert run(["limit-coeffs", "--system", "em2d", "--output", str(out)]) != 0  # em2d needs params
    cfg = write(tmp_path / "e.json", json.dumps({
        "system": "em2d",
        "params": {"m": 1, "e": 1, "B": 1, "gamma": 2, "kBT": 1},
        "limit_coeffs": {"points": 5},
    }))
    assert run(["limit-coeffs", "--config", cfg, "--output", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "limit_coeffs.csv")))
    assert len(rows) == 25
    assert all(float(r["S_1"]) == 0.0 and float(r["S_2"]) == 0.0 for r in rows)
    art = json.loads((out / "limit_coeffs.json").read_text())
    assert len(art["points"]) == 25 and "J" in art["points"][0]


def test_simulate_writes_trajectories(tmp_path):
    cfg = write(tmp_path / "s.toml", QUICK.replace("n_paths = 300", "n_paths = 3") + """
[simulate]
eps = 0.1
long_format = true
""")
    out = tmp_path / "sim"
    assert run(["simulate", "--config", cfg, "--output", str(out)]) == 0
    rows = list(csv.reader(open(out / "trajectories" / "path_full.csv")))
    assert rows[0] == ["path_index", "t", "q_1", "p_1"]
    assert len(rows) == 1 + 3 * 201
    meta = json.loads((out / "simulate.json").read_text())
    assert meta["files"] == ["trajectories/path_full.csv", "trajectories/path_limit.csv"]


def test_validate_prints_table(tmp_path, capsys):
    cfg = write(tmp_path / "v.toml", QUICK + "\n[validate]\nsamples = 1000\n")
    assert run(["validate", "--config", cfg, "--output", str(tmp_path / "v")]) == 0
    text = capsys.readouterr().out
    assert "A2.2" in text and "confinement" in text
    art = json.loads((tmp_path / "v" / "validate.json").read_text())
    assert art["report"]["passed"] is True


def test_energy_command(tmp_path):
    cfg = write(tmp_path / "e.toml", QUICK.replace("n_paths = 300", "n_paths = 100").replace(
        "eps_list = [0.1, 0.05, 0.025, 0.0125]", "eps_list = [0.1, 0.01]"))
    assert run(["energy", "--config", cfg, "--output", str(tmp_path / "o")]) == 0
    art = json.loads((tmp_path / "o" / "energy.json").read_text())
    assert art["report"]["ratio"] <= 2


# ---------------------------------------------------------------- errors

def _diag(capsys):
    line = capsys.readouterr().err.strip().splitlines()[-1]
    assert line.startswith("smallmass: error code=")
    return line


@pytest.mark.parametrize("extra,needle", [
    ("\n[grid]\nbogus = 1\n", "bogus"),
    ("\nsurprise = 1\n", "surprise"),
    ("\n[ensemble]\nn_paths = \"many\"\n", "n_paths"),
])
def test_config_errors_exit_2(tmp_path, capsys, extra, needle):
    text = 'system = "ou-linear"\n[params]\nm = 1\ngamma = 1\nkBT = 1\nomega = 1\n' + extra
    assert run(["converge", "--config", write(tmp_path / "bad.toml", text)]) == 2
    line = _diag(capsys)
    assert "code=2" in line and needle in line


def test_unknown_system_and_missing_params(tmp_path, capsys):
    assert run(["validate", "--system", "nope"]) == 2
    assert "code=2" in _diag(capsys)
    assert run(["validate", "--system", "ou-linear"]) == 2
    assert "missing required parameter" in _diag(capsys)


def test_usage_errors(capsys):
    assert run(["frobnicate"]) == 2
    assert "UsageError" in _diag(capsys)
    assert run(["converge"]) == 2


def test_library_argument_error_exit_2(tmp_path, capsys):
    cfg = write(tmp_path / "c.toml", QUICK.replace("n_paths = 300", "n_paths = 20"))
    assert run(["converge", "--config", cfg, "--output", str(tmp_path / "o")]) == 2
    assert "n_paths" in _diag(capsys)


def test_aborted_budget_exit_3(tmp_path, capsys, monkeypatch):
    import smallmass.cli as cli
    from smallmass.errors import ExperimentInvalid

    def boom(*a, **k):
        raise ExperimentInvalid(0.5, 0.01)

    monkeypatch.setattr(cli, "strong_error_sweep", boom)
    cfg = write(tmp_path / "c.toml", QUICK)
    assert run(["converge", "--config", cfg, "--output", str(tmp_path / "o")]) == 3
    assert "type=ExperimentInvalid" in _diag(capsys)


def test_no_writes_outside_output(tmp_path):
    cfg = write(tmp_path / "c.toml", QUICK.replace("n_paths = 300", "n_paths = 100"))
    before = set(os.listdir(tmp_path))
    assert run(["momentum", "--config", cfg, "--output", str(tmp_path / "inside")]) == 0
    assert set(os.listdir(tmp_path)) - before == {"inside"}


def test_json_config_and_parse_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path / "x.json", "{not json"))
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.toml"))
    with pytest.raises(ConfigError):
        parse_config({"system": "ou-linear", "params": {"m": 1, "gamma": 1, "kBT": 1, "omega": 1},
                      "sweep": {"eps_list": [0.1, 0.2]}})


def test_threads_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("SMALLMASS_THREADS", "2")
    cfg = write(tmp_path / "c.toml", QUICK.replace("n_paths = 300", "n_paths = 100"))
    assert run(["momentum", "--config", cfg, "--output", str(tmp_path / "a")]) == 0
    monkeypatch.setenv("SMALLMASS_THREADS", "1")
    assert run(["momentum", "--config", cfg, "--output", str(tmp_path / "b")]) == 0
    a = json.loads((tmp_path / "a" / "momentum.json").read_text())["report"]
    b = json.loads((tmp_path / "b" / "momentum.json").read_text())["report"]
    assert a == b


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "smallmass.cli", "validate", "--system", "nope"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert proc.stderr.startswith("smallmass: error code=2")
