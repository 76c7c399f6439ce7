import json

import pytest

from landau_factor.cli import run

MINIMAL = """
[physical]
eps = 0.1

[basis]
Na = 3
Nb = 3
Nc = 4
buffer = 1

[path]
family = "cone"
theta = 0.0

[run]
end_time_fraction = 0.1
sample_count = 2
"""

TRIANGLE = """
[physical]
eps = 1.0

[path]
family = "triangle"
theta_deg = 60.0
dphi_deg = 180.0

[output]
formats = ["json", "csv"]
"""


@pytest.fixture
def write(tmp_path):
    def _write(text, name="s.toml"):
        p = tmp_path / name
        p.write_text(text)
        return str(p)

    return _write


def test_static_path_identities_pass(write, tmp_path, capsys):
    out = tmp_path / "out"
    code = run(["identities", "--config", write(MINIMAL), "--out", str(out)])
    assert code == 0
    doc = json.loads((out / "verdicts.json").read_text())
    assert doc["passed"] and doc["config"]["path"]["theta"] == 0.0
    assert all(v["verdict"] == "pass" for v in doc["verdicts"])
    assert (out / "identities.csv").exists()
    assert list(out.glob("identity_*.svg"))


def test_triangle_holonomy(write, tmp_path, capsys):
    out = tmp_path / "h"
    assert run(["holonomy", "--config", write(TRIANGLE), "--out", str(out)]) == 0
    doc = json.loads((out / "verdicts.json").read_text())
    assert doc["holonomy"]["omega"] == pytest.approx(3.141592653589793 / 2)
    assert "-m Omega" in capsys.readouterr().out
    assert (out / "holonomy.csv").read_text().startswith("m,phase,expected")


def test_open_path_holonomy_is_config_error(write, tmp_path):
    cfg = write(MINIMAL.replace("theta = 0.0", "theta = 0.5\nperiods = 0.5"))
    assert run(["holonomy", "--config", cfg, "--out", str(tmp_path)]) == 1


def test_bad_config_exit_1(write, tmp_path, capsys):
    assert run(["identities", "--config", write("[physical]\neps = 0.1\n"), "--out", str(tmp_path)]) == 1
    assert "configuration error" in capsys.readouterr().err
    assert run(["identities", "--out", str(tmp_path)]) == 1
    assert run(["identities", "--config", write(MINIMAL), "--override", "basis.Na=-1"]) == 1


def test_report_rerenders_and_fails(tmp_path, capsys):
    doc = {"schema_version": 1, "command": "identities", "verdicts": [
        {"name": "a", "verdict": "pass", "times": [0.0, 1.0], "interior": [1e-9, 2e-9], "full": [1e-3, None],
         "max_interior": 2e-9},
        {"name": "b", "verdict": "fail", "times": [1.0], "interior": [1.0], "full": [1.0], "max_interior": 1.0},
    ]}
    (tmp_path / "verdicts.json").write_text(json.dumps(doc))
    assert run(["report", "--out", str(tmp_path)]) == 2
    assert (tmp_path / "report_00.svg").exists()
    assert "FAIL" in capsys.readouterr().out
    assert run(["report", "--out", str(tmp_path / "none")]) == 1


def test_factorize_dumps(write, tmp_path):
    out = tmp_path / "f"
    # the lab oracle needs a larger basis than the factors
    text = MINIMAL.replace("theta = 0.0", "theta = 0.5") + "\n[oracle]\nNa = 8\nNb = 8\nNc = 10\nbuffer = [6, 6, 8]\n"
    code = run(["factorize", "--config", write(text), "--out", str(out), "--dump-matrices"])
    assert code == 0
    assert (out / "matrices" / "R.bin").exists()
    doc = json.loads((out / "verdicts.json").read_text())
    assert "beta" in doc["scalars"]
