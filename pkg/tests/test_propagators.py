import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from landau_factor._linalg import unitarity_residual
from landau_factor.analysis import check_full_factorization, isotropic_operator_set, projected_distance
from landau_factor.geometry import PolarTriangle, displacement_path, solid_angle, transport_frame
from landau_factor.hilbert import BasisConfig, PhysicalParams, build_operator_set, dagger
from landau_factor.propagators import (
    ConvergenceError,
    HermiticityError,
    ForwardPropagator,
    KronSumOperator,
    assemble_evolution,
    factorize,
    factorized_columns,
    magnetic_translation,
    propagate_columns,
    rotation_operator,
    time_ordered_propagator,
    translation_operator,
)

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def drive(t):
    return SZ + math.cos(t) * SX


def ivp_oracle(H, t1, dim):
    def rhs(t, y):
        return (-1j * H(t) @ y.reshape(dim, dim)).ravel()

    sol = solve_ivp(rhs, (0.0, t1), np.eye(dim, dtype=complex).ravel(), method="DOP853", rtol=1e-12, atol=1e-12)
    return sol.y[:, -1].reshape(dim, dim)


def test_constant_generator_is_exponential():
    H = SZ + 0.3 * SX
    res = time_ordered_propagator(lambda t: H, [0.0, 2.0], tol=1e-12, order=4)
    np.testing.assert_allclose(res.final, expm(-2j * H), atol=1e-12)


@pytest.mark.parametrize("order", [2, 4])
def test_driven_qubit_against_ivp(order):
    ref = ivp_oracle(drive, 3.0, 2)
    res = time_ordered_propagator(drive, [0.0, 3.0], tol=1e-10 if order == 4 else 1e-8, order=order)
    assert np.abs(res.final - ref).max() <= (1e-9 if order == 4 else 1e-7)
    assert res.unitarity_drift.max() <= 1e-12
    assert res.observed_order == pytest.approx(order, abs=0.3)


def test_forward_propagator_matches():
    ref = ivp_oracle(drive, 2.0, 2)
    fp = ForwardPropagator(drive, 2, h_max=1e-3)
    assert np.abs(fp(2.0) - ref).max() <= 1e-10
    fp(1.0)  # restarts from t0
    assert np.abs(fp(2.0) - ref).max() <= 1e-10


def test_convergence_error():
    with pytest.raises(ConvergenceError):
        time_ordered_propagator(drive, [0.0, 3.0], tol=1e-14, order=2, max_steps=64)


def test_non_hermitian_generator():
    with pytest.raises(HermiticityError):
        time_ordered_propagator(lambda t: np.array([[0, 1], [0, 0]], dtype=complex), [0.0, 1.0])


def test_grid_must_increase():
    with pytest.raises(ValueError):
        time_ordered_propagator(drive, [1.0, 0.5])


def test_column_propagation_matches_dense():
    V = np.eye(2, dtype=complex)[:, :1]
    res = propagate_columns(drive, V, 3.0, tol=1e-10)
    ref = ivp_oracle(drive, 3.0, 2)
    assert np.abs(res.V[:, 0] - ref[:, 0]).max() <= 1e-8


def test_kron_sum_operator():
    rng = np.random.default_rng(3)
    ops = build_operator_set(PhysicalParams(), BasisConfig(2, 2, 3, buffer=1))
    A = rng.normal(size=(9, 9))
    B = rng.normal(size=(4, 4))
    C = rng.normal(size=(9, 9))
    op = KronSumOperator(ops, [(A, B), (None, B), (C, None)])
    dense = np.kron(A, B) + np.kron(np.eye(9), B) + np.kron(C, np.eye(4))
    X = rng.normal(size=(36, 2))
    np.testing.assert_allclose(op.matmat(X), dense @ X, atol=1e-12)
    assert op.trace == pytest.approx(np.trace(dense))


def test_triangle_rotation_is_j3_phase():
    # closed loop with solid angle Omega: R(T) = exp(-i Omega J3)
    params = PhysicalParams(eps=1.0)
    frame = transport_frame(PolarTriangle(math.pi / 3, math.pi, 1.0))
    ops = isotropic_operator_set(params, 3, 1)
    R = rotation_operator(ops, frame, frame.duration)
    omega = solid_angle(frame.path)
    P = ops.interior
    assert np.abs(P @ (R - expm(-1j * omega * ops.J3)) @ P).max() <= 1e-10


def test_translation_operator_shifts_positions(params):
    # M acts on the b mode only; a long b ladder keeps the shift exact
    ops = build_operator_set(params, BasisConfig(3, 14, 0, buffer=(1, 8, 1)))
    M = translation_operator(ops, 0.2, -0.1, beta=0.7)
    P = ops.interior
    for x, d in ((ops.x1, 0.2), (ops.x2, -0.1)):
        shifted = dagger(M) @ x @ M
        assert np.abs(P @ (shifted - x - d * ops.identity) @ P).max() <= 1e-8
    assert unitarity_residual(M) <= 1e-12


def test_magnetic_translation_phase(params, fast_cone_frame):
    dp = displacement_path(fast_cone_frame, params.L)
    ops = build_operator_set(params, BasisConfig(3, 3, 0, buffer=1))
    _, beta = magnetic_translation(ops, params, dp, 30.0)
    assert beta == pytest.approx(-params.e * params.B * dp.at(30.0)[2])


def test_factorization_against_lab_oracle(fast_cone_frame):
    # column-propagated lab oracle in a basis large enough to converge
    p = PhysicalParams(L=0.25, eps=0.1)
    rep = check_full_factorization(BasisConfig(8, 8, 10, buffer=(6, 6, 8)), p, fast_cone_frame, 0.5,
                                   integ_tol=1e-8)
    assert rep.max_interior <= 1e-8


def test_dense_assembly_matches_columns(fast_cone_frame):
    p = PhysicalParams(L=0.25, eps=0.1)
    b = BasisConfig(4, 4, 5, buffer=2)
    t = 0.3
    bundle = factorize(build_operator_set(p, b), p, fast_cone_frame, t, tol=1e-10, u2d_source="factorized")
    for name, res in bundle.unitarity().items():
        if name != "U_eps_1st":
            assert res <= 1e-10, name
    U = assemble_evolution(bundle, "full")
    s = build_operator_set(p, b, sparse=True)
    Y, _ = factorized_columns(s, p, fast_cone_frame, t, tol=1e-10)
    idx = s.interior_index
    assert projected_distance(U[:, idx], Y) <= 1e-7


def test_gamma_is_minus_twice_delta_area(params, fast_cone_frame):
    # shoelace oracle on the sampled delta curve (refined, chord-closed)
    from landau_factor.geometry import shoelace_area
    from landau_factor.propagators import delta_path

    t = 40.0
    dlt = delta_path(fast_cone_frame, params, t_end=t)
    ts = np.linspace(0.0, t, 20001)
    z = np.array([dlt.at(s)[0] for s in ts])
    area = shoelace_area(z.real, z.imag)
    # chord polygon error is O(h^2) relative; the factor 2 is what matters
    assert dlt.at(t)[1] == pytest.approx(-2 * area, rel=1e-5)
    assert abs(dlt.at(t)[0]) > 1e-3  # non-trivial curve
