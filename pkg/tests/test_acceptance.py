"""Acceptance criteria 1-10 at their stated tolerances.

Each test prints one ``criterion N: PASS/FAIL`` line (collected again in the
terminal summary).  Runtimes are a few seconds to several minutes each.
"""
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from landau_factor.analysis import (
    check_full_factorization,
    check_gauge_relation,
    check_h0_forms,
    check_h1_forms,
    check_splitting,
    check_translation_action,
    check_translation_phase,
    holonomy_phases,
    scaling_scan,
    scan_response,
)
from landau_factor.config import parse_config
from landau_factor.geometry import PolarTriangle, PrecessingCone, solid_angle, transport_frame
from landau_factor.hilbert import BasisConfig, PhysicalParams, build_operator_set

ROOT = Path(__file__).resolve().parents[1]
THETA = math.pi / 3
EPS = 0.01
T1 = 1 / EPS


@pytest.fixture(scope="module")
def cone():
    return transport_frame(PrecessingCone(THETA, EPS))


def _cone_config(**over):
    tree = {
        "physical": {"L": 1.0, "potential": [12.5, 0.0, 0.0], "eps": EPS},
        "basis": {"Na": 6, "Nb": 6, "Nc": 8, "buffer": 3},
        "path": {"family": "cone", "theta_deg": 60.0},
    }
    for sec, vals in over.items():
        tree[sec] = {**tree.get(sec, {}), **vals}
    return parse_config(tree)


def test_criterion_01_frame_geometry(verdict):
    worst_angle = worst_drift = 0.0
    for theta in (math.pi / 6, math.pi / 3, math.pi / 2):
        fr = transport_frame(PrecessingCone(theta, EPS))
        expected = 2 * math.pi * (1 - math.cos(theta))
        worst_angle = max(worst_angle, abs(math.remainder(fr.holonomy_angle() - expected, 2 * math.pi)))
        worst_drift = max(worst_drift, fr.drift)
    ok = worst_angle <= 1e-6 and worst_drift <= 1e-10
    assert verdict(1, ok, f"holonomy angle error {worst_angle:.2e} (tol 1e-6), drift {worst_drift:.2e} (tol 1e-10)")


def test_criterion_02_holonomy_phases(verdict):
    fr = transport_frame(PolarTriangle(THETA, math.pi, 1.0))
    assert solid_angle(fr.path) == pytest.approx(math.pi / 2, abs=1e-10)
    h = holonomy_phases(PhysicalParams(L=1.0, eps=1.0), fr, cutoff=3, m_values=(-2, -1, 0, 1, 2))
    err = max(r["error"] for r in h["rows"])
    ok = err <= 1e-4 and not h["flagged"]
    assert verdict(2, ok, f"max |phase + m Omega| {err:.2e} (tol 1e-4), Omega = {h['omega']:.10f}")


def test_criterion_03_hamiltonian_forms(verdict, cone):
    cfg = _cone_config(run={"end_time_fraction": 0.2, "sample_count": 8})
    ops = build_operator_set(cfg.physical, cfg.basis)
    times = cfg.sample_times()
    r1 = check_h1_forms(ops, cfg.physical, cone, times)
    r0 = check_h0_forms(ops, cfg.physical, cone, times)
    ok = len(times) == 8 and r1.passed and r0.passed
    assert verdict(3, ok, f"H1 {r1.max_interior:.2e}, H0 {r0.max_interior:.2e} at 8 times (tol 1e-8)")


def test_criterion_04_gauge_and_splitting(verdict, cone):
    p = PhysicalParams(L=1.0, eps=EPS)
    basis = BasisConfig(6, 6, 8, buffer=3)
    t = 0.2 * T1
    g = check_gauge_relation(basis, p, cone, t, tol=1e-6, integ_tol=1e-7)
    s = check_splitting(basis, p, cone, t, tol=1e-6, integ_tol=1e-7)
    ok = g.passed and s.passed
    assert verdict(4, ok, f"gauge {g.max_interior:.2e}, splitting {s.max_interior:.2e} at t = {t} (tol 1e-6)")


def test_criterion_05_full_factorization(verdict, cone):
    # lab oracle converged in truncation: interior n_a, n_b <= 2, n_c <= 3
    p = PhysicalParams.harmonic(25.0, L=0.25, eps=EPS)
    assert p.omega == 1.0 and p.harmonic_frequency == pytest.approx(5.0)
    basis = BasisConfig(11, 11, 15, buffer=(9, 9, 12))
    t = 0.2 * T1
    rep = check_full_factorization(basis, p, cone, t, tol=1e-4, integ_tol=1e-6)
    assert verdict(5, rep.passed, f"factorized vs lab {rep.max_interior:.2e} at t = {t} (tol 1e-4)")


def test_criterion_06_strong_confinement(verdict):
    cfg = parse_config({
        "physical": {"L": 1.0, "eps": 0.05},
        "basis": {"Na": 3, "Nb": 3, "Nc": 5, "buffer": [1, 1, 2]},
        "path": {"family": "cone", "theta_deg": 60.0},
        "integrator": {"tol": 1e-6},
    })
    res = scaling_scan(cfg, "stiffness_k", [25.0, 50.0, 100.0, 250.0], "u_xi", t_fraction=1.0,
                       expected=-0.5, band=0.15)
    ok = bool(res.within_band) and res.monotone
    assert verdict(6, ok, f"|U_xi - I| ~ k^{res.exponent:.3f} (expected -0.5 +- 0.15)")


def test_criterion_07_resonance(verdict):
    # omega = Delta = 1: no averaging, halving eps does not shrink U_xi - I
    cfg = parse_config({
        "physical": {"L": 1.0, "stiffness": 1.0, "eps": 0.02},
        "basis": {"Na": 3, "Nb": 3, "Nc": 5, "buffer": 2},
        "path": {"family": "cone", "theta_deg": 60.0},
        "integrator": {"tol": 1e-6},
    })
    assert cfg.physical.harmonic_frequency == pytest.approx(cfg.physical.omega)
    r_big = scan_response(cfg, "u_xi", "rotation_eps", 0.02)
    r_small = scan_response(cfg, "u_xi", "rotation_eps", 0.01)
    ratio = r_small / r_big
    ok = ratio > 0.8
    assert verdict(7, ok, f"|U_xi - I| {r_big:.3f} -> {r_small:.3f} when eps halves (ratio {ratio:.2f}, need > 0.8)")


def test_criterion_08_adiabatic_orders(verdict):
    cfg = parse_config({
        "physical": {"L": 2.0, "eps": 0.01},
        "basis": {"Na": 8, "Nb": 14, "Nc": 0, "buffer": [4, 7, 1]},
        "path": {"family": "cone", "theta_deg": 60.0},
        "integrator": {"tol": 1e-8},
    })
    vals = [0.01, 0.0178, 0.0316, 0.0562, 0.1]
    ut = scaling_scan(cfg, "rotation_eps", vals, "utilde_eps", expected=1.0, band=0.2)
    ue = scaling_scan(cfg, "rotation_eps", vals, "u_eps_first_order", expected=2.0, band=0.3)
    ok = bool(ut.within_band and ue.within_band)
    assert verdict(8, ok, f"|Ut_eps - I| ~ eps^{ut.exponent:.3f} (1 +- 0.2), "
                          f"|U_eps - U_eps_1st| ~ eps^{ue.exponent:.3f} (2 +- 0.3)")


def test_criterion_09_translation_algebra(verdict, cone):
    p = PhysicalParams(L=1.0, eps=EPS)
    ops = build_operator_set(p, BasisConfig(3, 14, 0, buffer=(1, 8, 1)))
    times = np.linspace(2.5, 20.0, 8)
    act = check_translation_action(ops, p, cone, times, tol=1e-8)
    phase = check_translation_phase(p, cone, times, tol=1e-8)
    ok = act.passed and phase.passed
    assert verdict(9, ok, f"M^-1 x M - x - d {act.max_interior:.2e}, beta vs shoelace {phase.max_interior:.2e} (tol 1e-8)")


def test_criterion_10_determinism(verdict, tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        proc = subprocess.run(
            [sys.executable, "-m", "landau_factor.cli", "identities", "--config",
             str(ROOT / "scenarios" / "default.toml"), "--out", str(out)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        outs.append((out / "verdicts.json").read_bytes())
    ok = outs[0] == outs[1]
    assert verdict(10, ok, f"two runs of the default scenario: verdicts.json byte-identical = {ok}")
