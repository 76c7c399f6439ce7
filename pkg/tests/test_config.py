import math

import pytest

from landau_factor.config import ConfigError, apply_overrides, load_config, parse_config

BASE = {
    "physical": {"L": 1.0, "potential": [12.5, 0.0, 0.0], "eps": 0.01},
    "basis": {"Na": 4, "Nb": 4, "Nc": 5, "buffer": 2},
    "path": {"family": "cone", "theta_deg": 60.0},
}


def test_defaults_and_time_scales():
    cfg = parse_config(BASE)
    assert cfg.path.theta == pytest.approx(math.pi / 3)
    assert cfg.run.mode == "full"
    T1, T2, T3 = cfg.time_scales
    assert T1 == pytest.approx(100.0)
    assert cfg.end_time() == pytest.approx(20.0)
    assert len(cfg.sample_times()) == cfg.run.sample_count
    assert cfg.resolved["physical"]["eps"] == 0.01


def test_stiffness_shortcut():
    tree = {**BASE, "physical": {"stiffness": 25.0, "eps": 0.01}}
    assert parse_config(tree).physical.potential == (12.5, 0.0, 0.0)


def test_overrides():
    tree = apply_overrides(BASE, ["physical.eps=0.02", "run.mode=adiabatic", "basis.buffer=[1, 1, 2]"])
    cfg = parse_config(tree)
    assert cfg.physical.eps == 0.02
    assert cfg.run.mode == "adiabatic"
    assert cfg.basis.buffers == (1, 1, 2)
    assert BASE["physical"]["eps"] == 0.01  # input untouched
    with pytest.raises(ConfigError):
        apply_overrides(BASE, ["physical.eps"])


@pytest.mark.parametrize("patch, match", [
    ({"colour": {}}, "unknown sections"),
    ({"physical": {"eps": 0.01, "mass": 2.0}}, "unknown keys"),
    ({"path": {"family": "spiral"}}, "family"),
    ({"run": {"end_time_fraction": 1.5}}, "end_time_fraction"),
    ({"run": {"sample_count": 1}}, "sample_count"),
    ({"run": {"mode": "fast"}}, "mode"),
    ({"output": {"formats": ["png"]}}, "formats"),
    ({"holonomy": {"cutoff": 2, "m_values": [3]}}, "cutoff"),
    ({"basis": {"Na": 6, "Nb": 6, "Nc": 8, "dim_cap": 10}}, "exceeds cap"),
    ({"scan": {"control": "mass", "values": [1, 2, 4, 10]}}, "control"),
])
def test_validation_errors(patch, match):
    with pytest.raises(ConfigError, match=match):
        parse_config({**BASE, **patch})


def test_missing_section():
    with pytest.raises(ConfigError, match="path"):
        parse_config({"physical": {}})


def test_load_reports_line(tmp_path):
    f = tmp_path / "bad.toml"
    f.write_text("[physical]\neps = = 1\n")
    with pytest.raises(ConfigError, match="line 2"):
        load_config(f)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.toml")


def test_shipped_default_scenario():
    from pathlib import Path

    cfg = load_config(Path(__file__).parents[1] / "scenarios" / "default.toml")
    assert cfg.basis.cutoffs == (6, 6, 8)
    assert cfg.physical.harmonic_frequency == pytest.approx(5.0)
