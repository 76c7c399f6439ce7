import math

import numpy as np
import pytest
from scipy.linalg import expm

from landau_factor.analysis import (
    IdentityReport,
    check_translation_phase,
    fit_power_law,
    holonomy_phases,
    identity_deviation,
    phase_extract,
    projected_distance,
    scaling_scan,
)
from landau_factor.config import parse_config
from landau_factor.geometry import PolarTriangle, transport_frame
from landau_factor.hilbert import PhysicalParams


def test_projected_distance_ignores_edge():
    A = np.eye(4, dtype=complex)
    B = A.copy()
    B[3, 3] = 5.0
    assert projected_distance(A, B, np.array([0, 1, 2])) == 0.0
    assert projected_distance(A, B) > 0.0
    with pytest.raises(ValueError):
        projected_distance(A, np.eye(3))


def test_identity_deviation_rms():
    U = np.diag(np.exp(1j * np.array([0.0, 0.0, 0.3, 2.0])))
    # |e^{0.3i} - 1| / sqrt(3) on the first three states
    assert identity_deviation(U, np.array([0, 1, 2])) == pytest.approx(2 * math.sin(0.15) / math.sqrt(3))


def test_phase_extract_eigenstates_and_flags():
    H = np.diag([0.0, 1.0, 2.5])
    U = expm(-1j * H)
    rep = phase_extract(U, np.eye(3))
    np.testing.assert_allclose(rep.phases, [0.0, -1.0, math.remainder(-2.5, 2 * math.pi)], atol=1e-12)
    assert rep.ok
    mixed = phase_extract(U, [np.array([1.0, 1.0, 0.0])])
    assert not mixed.ok
    with pytest.raises(ValueError):
        phase_extract(U, [np.zeros(3)])


def test_fit_power_law_exact():
    x = np.array([1.0, 2.0, 4.0, 8.0, 16.0])
    slope, icpt, res = fit_power_law(x, 3.0 * x**-0.5)
    assert slope == pytest.approx(-0.5, abs=1e-12)
    assert math.exp(icpt) == pytest.approx(3.0)
    assert res <= 1e-12
    with pytest.raises(ValueError):
        fit_power_law([1.0, 2.0], [1.0, -1.0])


def test_identity_report_verdict():
    r = IdentityReport("x", [0.0, 1.0], [1e-9, 2e-9], [1e-3, 1e-3], 1e-8)
    assert r.passed and r.to_dict()["verdict"] == "pass"
    bad = IdentityReport("x", [0.0], [float("nan")], [0.0], 1e-8)
    assert not bad.passed


def test_holonomy_phases_triangle():
    frame = transport_frame(PolarTriangle(math.pi / 3, math.pi, 1.0))
    h = holonomy_phases(PhysicalParams(eps=1.0), frame, cutoff=3)
    assert h["omega"] == pytest.approx(math.pi / 2, abs=1e-10)
    assert not h["flagged"]
    assert max(r["error"] for r in h["rows"]) <= 1e-4
    with pytest.raises(ValueError):
        holonomy_phases(PhysicalParams(eps=1.0), frame, cutoff=2, m_values=(2,))


def test_translation_phase_shoelace(params, fast_cone_frame):
    rep = check_translation_phase(params, fast_cone_frame, [10.0, 30.0, 60.0])
    assert rep.passed


SCAN_TREE = {
    "physical": {"L": 1.0, "eps": 0.05},
    "basis": {"Na": 3, "Nb": 3, "Nc": 4, "buffer": 1},
    "path": {"family": "cone", "theta_deg": 60.0},
}


@pytest.mark.parametrize("values, match", [
    ([1.0, 2.0, 4.0], "at least 4"),
    ([1.0, 4.0, 2.0, 16.0], "increase"),
    ([1.0, 2.0, 3.0, 4.0], "decade"),
])
def test_scan_validation(values, match):
    cfg = parse_config(SCAN_TREE)
    with pytest.raises(ValueError, match=match):
        scaling_scan(cfg, "rotation_eps", values)


def test_scan_thread_count_does_not_matter():
    # cheap response on the planar slice
    cfg = parse_config({**SCAN_TREE, "basis": {"Na": 4, "Nb": 4, "Nc": 0, "buffer": 2}})
    vals = [0.01, 0.02, 0.05, 0.1]
    a = scaling_scan(cfg, "rotation_eps", vals, "utilde_eps", t_fraction=0.5)
    b = scaling_scan(cfg, "rotation_eps", vals, "utilde_eps", t_fraction=0.5, threads=3)
    assert a.to_dict() == b.to_dict()
    assert a.monotone
