import math

import numpy as np
import pytest

from landau_factor._linalg import hermiticity_residual, unitarity_residual
from landau_factor.analysis import check_h0_forms, check_h1_forms
from landau_factor.geometry import FrameSignals
from landau_factor.hamiltonians import (
    axial_hamiltonian,
    build_gauge_unitary,
    build_h0,
    build_lab_hamiltonian,
    build_rotating_hamiltonian,
    gauge_derivative_fd,
    landau_hamiltonian,
)
from landau_factor.hilbert import BasisConfig, PhysicalParams, build_operator_set


@pytest.fixture(scope="module")
def ops(params):
    return build_operator_set(params, BasisConfig(4, 4, 5, buffer=2))


def _static_signals():
    n = np.array([0.0, 0.0, 1.0])
    return FrameSignals(0.0, n, np.zeros(3), np.eye(3), 0.0, 0.0, 0.0, 0.0, 0.0)


def test_lab_hamiltonian_hermitian(ops, params, fast_cone_frame):
    H = build_lab_hamiltonian(ops, params, fast_cone_frame.path, 3.0, fast_cone_frame)
    assert hermiticity_residual(H) == 0.0


def test_lab_equals_rotating_at_start(ops, params, fast_cone_frame):
    # at t = 0 the frames coincide; only the alpha.J term separates H_lab and H_1
    H_lab = build_lab_hamiltonian(ops, params, fast_cone_frame.path, 0.0, fast_cone_frame)
    s = fast_cone_frame.signals(0.0)
    H1 = build_rotating_hamiltonian(ops, params, s)
    P = ops.interior
    diff = P @ (H1 - (s.alpha2 * ops.J1 - s.alpha1 * ops.J2) - H_lab) @ P
    assert np.abs(diff).max() <= 1e-10


def test_static_frame_is_landau_plus_axial(ops, params):
    s = _static_signals()
    H1 = build_rotating_hamiltonian(ops, params, s)
    np.testing.assert_allclose(H1, landau_hamiltonian(ops) + axial_hamiltonian(ops), atol=1e-13)
    H0 = build_h0(ops, params, s)
    P = ops.interior
    assert np.abs(P @ (H0 - H1) @ P).max() <= 1e-10


def test_landau_spectrum(params):
    # H_B = omega (a^dagger a + 1/2) on the planar slice
    ops = build_operator_set(params, BasisConfig(5, 5, 0, buffer=1))
    HB = landau_hamiltonian(ops)
    na = ops.basis.occupations()[:, 0]
    P = ops.interior
    np.testing.assert_allclose(P @ HB @ P, P @ np.diag(params.omega * (na + 0.5)) @ P, atol=1e-12)


def test_gauge_unitary_and_derivative(ops, params, fast_cone_frame):
    g, term = build_gauge_unitary(ops, params, fast_cone_frame, 4.0)
    assert unitarity_residual(g) <= 1e-12
    fd = gauge_derivative_fd(ops, params, fast_cone_frame, 4.0, 1e-4)
    P = ops.interior
    assert np.abs(P @ (fd - term) @ P).max() <= 1e-6


def test_h1_and_h0_forms(params, cone_frame):
    # the gauge exponential grows with |ndot|; eps = 0.01 keeps it inside the margin
    big = build_operator_set(params, BasisConfig(6, 6, 8, buffer=3))
    times = np.linspace(0.0, 20.0, 4)
    assert check_h1_forms(big, params, cone_frame, times).passed
    assert check_h0_forms(big, params, cone_frame, times).passed


def test_unknown_form(ops, params):
    with pytest.raises(ValueError):
        build_rotating_hamiltonian(ops, params, _static_signals(), form="polar")
