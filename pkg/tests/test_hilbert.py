import math

import numpy as np
import pytest

from landau_factor.analysis import isotropic_operator_set
from landau_factor.hilbert import (
    BasisConfig,
    DimensionCapError,
    PhysicalParams,
    build_operator_set,
    dagger,
    ladder,
    operator_polynomial,
)


def comm(A, B):
    return A @ B - B @ A


def test_ladder_commutator_truncation():
    a = ladder(5)
    c = comm(a, dagger(a))
    expected = np.eye(6)
    expected[-1, -1] = -5.0  # truncation edge
    np.testing.assert_allclose(c, expected, atol=1e-14)


def test_params_validation():
    with pytest.raises(ValueError):
        PhysicalParams(e=1.0)
    with pytest.raises(ValueError):
        PhysicalParams(potential=(-1.0,))
    with pytest.raises(ValueError):
        PhysicalParams(eps=0.0)


def test_params_derived_scales():
    p = PhysicalParams.harmonic(25.0, eps=0.01)
    assert p.omega == 1.0
    assert p.harmonic_frequency == pytest.approx(5.0)
    assert p.axial_gap == pytest.approx(5.0)
    assert p.l_B == pytest.approx(1 / math.sqrt(2))
    T1, T2, T3 = p.time_scales()
    assert (T1, T2, T3) == pytest.approx((100.0, 2 * math.pi, 0.2))


def test_anharmonic_gap_from_spectrum():
    # quartic term stiffens the well: gap exceeds the harmonic frequency
    p = PhysicalParams(potential=(12.5, 0.0, 1.0))
    assert not p.is_harmonic
    assert p.axial_gap > p.harmonic_frequency


def test_basis_indexing_and_interior():
    b = BasisConfig(4, 3, 5, buffer=(2, 1, 2))
    assert b.dim == 5 * 4 * 6
    occ = b.occupations()
    for k in (0, 17, 63, b.dim - 1):
        assert b.index(*occ[k]) == k
    mask = b.interior_mask()
    assert mask.sum() == 3 * 3 * 4


def test_basis_validation():
    with pytest.raises(ValueError):
        BasisConfig(4, 4, 4, buffer=4)
    with pytest.raises(DimensionCapError):
        BasisConfig(6, 6, 8, dim_cap=100)


def test_dimension_cap_env(monkeypatch):
    monkeypatch.setenv("LANDAU_FACTOR_DIM_CAP", "50")
    with pytest.raises(DimensionCapError):
        BasisConfig(4, 4, 4, buffer=1)


def test_frozen_axial_sector_is_not_buffered():
    b = BasisConfig(6, 6, 0, buffer=2)
    assert b.interior_mask().sum() == 5 * 5


def test_angular_momentum_algebra():
    ops = isotropic_operator_set(PhysicalParams(), 4, 1)
    P = ops.interior
    for A, B, C in ((ops.J1, ops.J2, ops.J3), (ops.J2, ops.J3, ops.J1), (ops.J3, ops.J1, ops.J2)):
        assert np.abs(P @ (comm(A, B) - 1j * C) @ P).max() <= 1e-12


def test_j3_is_number_difference():
    # sign fixed numerically for e < 0
    ops = isotropic_operator_set(PhysicalParams(), 3, 1)
    n = lambda x: dagger(x) @ x
    D = ops.J3 - (n(ops.a) - n(ops.b))
    idx = ops.interior_index
    assert np.abs(D[np.ix_(idx, idx)]).max() <= 1e-12


def test_canonical_pairs_on_interior():
    ops = build_operator_set(PhysicalParams(), BasisConfig(5, 5, 6, buffer=2))
    P = ops.interior
    for x, p in ((ops.x1, ops.p1), (ops.x2, ops.p2), (ops.x3, ops.p3)):
        np.testing.assert_allclose(P @ comm(x, p) @ P, 1j * P, atol=1e-12)
    np.testing.assert_allclose(P @ comm(ops.x1, ops.p2) @ P, 0, atol=1e-12)


def test_sparse_matches_dense():
    p = PhysicalParams()
    b = BasisConfig(3, 3, 4, buffer=1)
    d = build_operator_set(p, b)
    s = build_operator_set(p, b, sparse=True)
    for name in ("x1", "x2", "x3", "p1", "J1", "J2", "J3", "A1", "A2"):
        np.testing.assert_allclose(getattr(s, name).toarray(), getattr(d, name), atol=1e-14)


def test_landau_slice_and_embedding():
    ops = build_operator_set(PhysicalParams(), BasisConfig(3, 3, 4, buffer=1))
    sl = ops.landau_slice
    assert sl.dim == 16
    E = ops.embed_landau(sl.a)
    np.testing.assert_allclose(E, ops.a, atol=1e-14)


def test_operator_polynomial():
    X = np.diag([1.0, 2.0, 3.0])
    np.testing.assert_allclose(operator_polynomial(X, [1.0, 0.0, 2.0]), np.diag([3.0, 9.0, 19.0]))
