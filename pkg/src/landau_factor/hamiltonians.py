"""Hamiltonians and generators of the rotating-field problem as dense matrices.

Every builder takes an :class:`~landau_factor.hilbert.OperatorSet`; passing
``ops.landau_slice`` instead of the full set yields the same operator on the
(a, b) factor alone, which is how the planar propagators stay small.

Time dependence enters only through the frame signals ``alpha_mu = ndot.e_mu``,
their derivatives and ``|ndot|^2``.  Builders accept either a
:class:`~landau_factor.geometry.TransportedFrame` together with a time, or a
precomputed :class:`~landau_factor.geometry.FrameSignals` (then ``t`` is
ignored).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ._linalg import hermitian_part, kron_expm, unitarity_residual
from .geometry import FrameSignals, SpherePath, TransportedFrame, initial_frame
from .hilbert import OperatorSet, PhysicalParams, operator_polynomial

__all__ = [
    "NonUnitaryError",
    "signals_at",
    "potential_operator",
    "landau_hamiltonian",
    "axial_hamiltonian",
    "build_lab_hamiltonian",
    "build_rotating_hamiltonian",
    "build_gauge_unitary",
    "gauge_derivative_fd",
    "build_h0",
    "build_h1d",
    "build_h2d",
    "build_h2d_tilde",
    "build_s_eps2",
    "build_h_xi0",
    "xi_coupling",
    "build_h_xi",
    "HamiltonianBundle",
]


class NonUnitaryError(ValueError):
    """An operator expected to be unitary failed the unitarity check."""


def signals_at(frame, t: float | None = None, side: int = 1) -> FrameSignals:
    if isinstance(frame, FrameSignals):
        return frame
    if not isinstance(frame, TransportedFrame):
        raise TypeError("expected a TransportedFrame or FrameSignals")
    return frame.signals(t, side)


def _cached(ops: OperatorSet, key: str, build):
    store = ops.__dict__.setdefault("_hamiltonian_cache", {})
    if key not in store:
        store[key] = build()
    return store[key]


def potential_operator(ops: OperatorSet, params: PhysicalParams, X: np.ndarray) -> np.ndarray:
    """``V(X)`` for the configured polynomial potential."""
    return operator_polynomial(X, params.potential_coeffs)


def landau_hamiltonian(ops: OperatorSet) -> np.ndarray:
    """``H_B = (pi_1^2 + pi_2^2) / 2m``."""
    m = ops.params.m
    return _cached(ops, "HB", lambda: (ops.pi1 @ ops.pi1 + ops.pi2 @ ops.pi2) / (2 * m))


def axial_hamiltonian(ops: OperatorSet) -> np.ndarray:
    """Static axial part ``p_3^2/2m + V(x_3 - L)``."""
    p = ops.params

    def build():
        return ops.p3 @ ops.p3 / (2 * p.m) + potential_operator(ops, p, ops.xi0)

    return _cached(ops, "Kax", build)


def _quadratic_pieces(ops: OperatorSet):
    def build():
        return ops.x1 @ ops.x1, ops.x2 @ ops.x2, ops.x1 @ ops.x2 + ops.x2 @ ops.x1

    return _cached(ops, "xx", build)


def _w_squared(ops: OperatorSet, a1: float, a2: float) -> np.ndarray:
    """``(alpha_1 x_1 + alpha_2 x_2)^2``."""
    x11, x22, x12 = _quadratic_pieces(ops)
    return a1 * a1 * x11 + a2 * a2 * x22 + a1 * a2 * x12


def build_lab_hamiltonian(ops: OperatorSet, params: PhysicalParams, path: SpherePath, t: float,
                          frame: TransportedFrame | None = None, side: int = 1) -> np.ndarray:
    """``(p - eA)^2/2m + V(r.n - L)`` with ``A = (B/2) n x r``.

    Lab coordinates are those of the initial frame ``e_i(0)``.
    """
    E0 = frame.initial if frame is not None else initial_frame(path)
    n_lab, _ = path.evaluate(t, side)
    n = E0 @ n_lab
    x = (ops.x1, ops.x2, ops.x3)
    p = (ops.p1, ops.p2, ops.p3)
    half = 0.5 * params.B
    # (n x r)_i = eps_ijk n_j x_k
    A = (
        half * (n[1] * x[2] - n[2] * x[1]),
        half * (n[2] * x[0] - n[0] * x[2]),
        half * (n[0] * x[1] - n[1] * x[0]),
    )
    kin = [p[i] - params.e * A[i] for i in range(3)]
    H = sum(k @ k for k in kin) / (2 * params.m)
    u = n[0] * x[0] + n[1] * x[1] + n[2] * x[2] - params.L * ops.identity
    H = H + potential_operator(ops, params, u)
    return hermitian_part(H)


def build_rotating_hamiltonian(ops: OperatorSet, params: PhysicalParams, frame, t: float | None = None,
                               form: str = "angular", side: int = 1) -> np.ndarray:
    """Rotating-frame Hamiltonian ``H_1``.

    ``angular``: ``(pi^2 + p_3^2)/2m + alpha_2 J_1 - alpha_1 J_2 + V(x_3 - L)``.
    ``kinematic``: ``(K_1^2 + K_2^2 + K_3^2)/2m - e alpha_mu A_mu x_3 + V_c + V``
    with ``K_mu = pi_mu - m alpha_mu x_3``, ``K_3 = p_3 + m w``,
    ``w = alpha_1 x_1 + alpha_2 x_2`` and
    ``V_c = -(m/2)|ndot|^2 x_3^2 - (m/2) w^2``.
    """
    s = signals_at(frame, t, side)
    m = params.m
    a1, a2 = s.alpha1, s.alpha2
    if form == "angular":
        H = landau_hamiltonian(ops) + axial_hamiltonian(ops) + a2 * ops.J1 - a1 * ops.J2
    elif form == "kinematic":
        x3 = ops.x3
        K1 = ops.pi1 - m * a1 * x3
        K2 = ops.pi2 - m * a2 * x3
        w = a1 * ops.x1 + a2 * ops.x2
        K3 = ops.p3 + m * w
        Vc = -0.5 * m * s.ndot_sq * (x3 @ x3) - 0.5 * m * _w_squared(ops, a1, a2)
        H = (K1 @ K1 + K2 @ K2 + K3 @ K3) / (2 * m)
        H = H - params.e * (a1 * ops.A1 + a2 * ops.A2) @ x3 + Vc
        H = H + potential_operator(ops, params, ops.xi0)
    else:
        raise ValueError(f"unknown form {form!r}")
    return hermitian_part(H)


def _w_factors(ops: OperatorSet, a1: float, a2: float):
    """``w`` on the (a, b) factor and ``x_3 - 2L`` on the axial factor."""
    sl = ops.landau_slice
    W = a1 * sl.x1 + a2 * sl.x2
    X = ops.axial_factors["xi"] - ops.params.L * np.eye(ops.axial_dim)
    return hermitian_part(W), X


def build_gauge_unitary(ops: OperatorSet, params: PhysicalParams, frame, t: float | None = None,
                        side: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """``g = exp[-i m w (x_3 - 2L)]`` and the closed form of ``-i g^{-1} g-dot``.

    The exponent is a product of commuting factors on the planar and axial
    spaces, so ``g`` is assembled from two small eigendecompositions.  The
    exponents at different times commute, which gives
    ``-i g^{-1} g-dot = -m (alpha-dot_1 x_1 + alpha-dot_2 x_2)(x_3 - 2L)``.
    """
    s = signals_at(frame, t, side)
    W, X = _w_factors(ops, s.alpha1, s.alpha2)
    g = kron_expm(W, X, params.m)
    wdot = s.dalpha1 * ops.x1 + s.dalpha2 * ops.x2
    term = -params.m * wdot @ (ops.x3 - 2 * params.L * ops.identity)
    return g, hermitian_part(term)


def gauge_derivative_fd(ops: OperatorSet, params: PhysicalParams, frame: TransportedFrame, t: float,
                        h: float) -> np.ndarray:
    """Central-difference estimate of ``-i g^{-1} g-dot`` (test oracle)."""
    g0, _ = build_gauge_unitary(ops, params, frame, t)
    gp, _ = build_gauge_unitary(ops, params, frame, t + h)
    gm, _ = build_gauge_unitary(ops, params, frame, t - h)
    return -1j * g0.conj().T @ (gp - gm) / (2 * h)


def build_h1d(ops: OperatorSet, params: PhysicalParams, frame, t: float | None = None,
              side: int = 1) -> np.ndarray:
    """``p_3^2/2m + V(x_3 - L) - (m/2) L^2 |ndot|^2``."""
    s = signals_at(frame, t, side)
    return axial_hamiltonian(ops) - 0.5 * params.m * params.L**2 * s.ndot_sq * ops.identity


def build_s_eps2(ops: OperatorSet, params: PhysicalParams, frame, t: float | None = None,
                 side: int = 1) -> np.ndarray:
    """``S = m L alpha-dot_mu x_mu - (m/2) w^2``."""
    s = signals_at(frame, t, side)
    m, L = params.m, params.L
    S = m * L * (s.dalpha1 * ops.x1 + s.dalpha2 * ops.x2) - 0.5 * m * _w_squared(ops, s.alpha1, s.alpha2)
    return hermitian_part(S)


def build_h2d_tilde(ops: OperatorSet, params: PhysicalParams, frame, t: float | None = None,
                    side: int = 1) -> np.ndarray:
    """``H_B - e L alpha_mu A_mu``."""
    s = signals_at(frame, t, side)
    H = landau_hamiltonian(ops) - params.e * params.L * (s.alpha1 * ops.A1 + s.alpha2 * ops.A2)
    return hermitian_part(H)


def build_h2d(ops: OperatorSet, params: PhysicalParams, frame, t: float | None = None,
              side: int = 1) -> np.ndarray:
    """``H_B - e L alpha_mu A_mu + S``."""
    s = signals_at(frame, t, side)
    return build_h2d_tilde(ops, params, s) + build_s_eps2(ops, params, s)


def xi_coupling(ops: OperatorSet, params: PhysicalParams, frame, t: float | None = None,
                side: int = 1) -> tuple[np.ndarray, float]:
    """Split ``H_xi = O xi + q xi^2``.

    Returns ``O = -2 alpha_mu pi_mu - e alpha_mu A_mu - m alpha-dot_mu x_mu
    - m L |ndot|^2`` (acting on whatever factor ``ops`` spans) and the scalar
    ``q = (3m/2)|ndot|^2``.
    """
    s = signals_at(frame, t, side)
    m = params.m
    a1, a2 = s.alpha1, s.alpha2
    O = (-2 * (a1 * ops.pi1 + a2 * ops.pi2)
         - params.e * (a1 * ops.A1 + a2 * ops.A2)
         - m * (s.dalpha1 * ops.x1 + s.dalpha2 * ops.x2)
         - m * params.L * s.ndot_sq * ops.identity)
    return hermitian_part(O), 1.5 * m * s.ndot_sq


def build_h_xi0(ops: OperatorSet, params: PhysicalParams, frame, t: float | None = None,
                side: int = 1) -> np.ndarray:
    """``H_xi`` at ``xi = xi_0 = x_3 - L``."""
    O, q = xi_coupling(ops, params, frame, t, side)
    xi = ops.xi0
    return hermitian_part(O @ xi + q * xi @ xi)


def build_h0(ops: OperatorSet, params: PhysicalParams, frame, t: float | None = None,
             form: str = "decomposed", side: int = 1) -> np.ndarray:
    """Gauge-transformed Hamiltonian ``H_0`` in one of three equivalent forms.

    ``conjugated``: ``g^{-1} H_1 g - i g^{-1} g-dot``.
    ``closed``: ``(Pi_1^2 + Pi_2^2 + p_3^2)/2m - e alpha_mu A_mu x_3 + V_c + V
    - m alpha-dot_mu x_mu (x_3 - 2L)`` with
    ``Pi_mu = pi_mu - 2 m alpha_mu (x_3 - L)``.
    ``decomposed``: ``H_1d + H_2d + H_xi0``.
    """
    s = signals_at(frame, t, side)
    m = params.m
    if form == "conjugated":
        g, term = build_gauge_unitary(ops, params, s)
        H1 = build_rotating_hamiltonian(ops, params, s, form="angular")
        H = g.conj().T @ H1 @ g + term
    elif form == "closed":
        a1, a2 = s.alpha1, s.alpha2
        x3 = ops.x3
        P1 = ops.pi1 - 2 * m * a1 * ops.xi0
        P2 = ops.pi2 - 2 * m * a2 * ops.xi0
        Vc = -0.5 * m * s.ndot_sq * (x3 @ x3) - 0.5 * m * _w_squared(ops, a1, a2)
        H = (P1 @ P1 + P2 @ P2 + ops.p3 @ ops.p3) / (2 * m)
        H = H - params.e * (a1 * ops.A1 + a2 * ops.A2) @ x3 + Vc
        H = H + potential_operator(ops, params, ops.xi0)
        H = H - m * (s.dalpha1 * ops.x1 + s.dalpha2 * ops.x2) @ (x3 - 2 * params.L * ops.identity)
    elif form == "decomposed":
        H = build_h1d(ops, params, s) + build_h2d(ops, params, s) + build_h_xi0(ops, params, s)
    else:
        raise ValueError(f"unknown form {form!r}")
    return hermitian_part(H)


def build_h_xi(ops: OperatorSet, params: PhysicalParams, frame, t: float | None, U1d_t: np.ndarray,
               side: int = 1, tol: float = 1e-8) -> np.ndarray:
    """``H_xi(t) = O xi(t) + q xi(t)^2`` with ``xi(t) = U_1d^{-1} (x_3 - L) U_1d``.

    ``U1d_t`` may be given on the axial factor alone or on the full space.
    """
    res = unitarity_residual(U1d_t)
    if res > tol:
        raise NonUnitaryError(f"U_1d unitarity residual {res:.2e} exceeds {tol:.1e}")
    if U1d_t.shape[0] == ops.axial_dim and ops.axial_dim != ops.dim:
        xi_c = U1d_t.conj().T @ ops.axial_factors["xi"] @ U1d_t
        xi = ops.embed_axial(xi_c)
    elif U1d_t.shape[0] == ops.dim:
        xi = U1d_t.conj().T @ ops.xi0 @ U1d_t
    else:
        raise ValueError("U1d_t has incompatible dimension")
    O, q = xi_coupling(ops, params, frame, t, side)
    return hermitian_part(O @ xi + q * xi @ xi)


@dataclass(eq=False)
class HamiltonianBundle:
    """All generators at one time, built lazily."""

    ops: OperatorSet
    params: PhysicalParams
    frame: TransportedFrame
    t: float
    U1d_t: np.ndarray | None = None

    @cached_property
    def signals(self) -> FrameSignals:
        return self.frame.signals(self.t)

    @cached_property
    def H_lab(self):
        return build_lab_hamiltonian(self.ops, self.params, self.frame.path, self.t, frame=self.frame)

    @cached_property
    def H1(self):
        return build_rotating_hamiltonian(self.ops, self.params, self.signals, form="angular")

    @cached_property
    def H1_kinematic(self):
        return build_rotating_hamiltonian(self.ops, self.params, self.signals, form="kinematic")

    @cached_property
    def _gauge(self):
        return build_gauge_unitary(self.ops, self.params, self.signals)

    @property
    def g(self):
        return self._gauge[0]

    @property
    def g_dot_term(self):
        return self._gauge[1]

    @cached_property
    def H0_conjugated(self):
        return build_h0(self.ops, self.params, self.signals, form="conjugated")

    @cached_property
    def H0_closed(self):
        return build_h0(self.ops, self.params, self.signals, form="closed")

    @cached_property
    def H0_decomposed(self):
        return build_h0(self.ops, self.params, self.signals, form="decomposed")

    @cached_property
    def H1d(self):
        return build_h1d(self.ops, self.params, self.signals)

    @cached_property
    def H2d(self):
        return build_h2d(self.ops, self.params, self.signals)

    @cached_property
    def Hxi0(self):
        return build_h_xi0(self.ops, self.params, self.signals)

    @cached_property
    def S_eps2(self):
        return build_s_eps2(self.ops, self.params, self.signals)

    @cached_property
    def Htilde2d(self):
        return build_h2d_tilde(self.ops, self.params, self.signals)

    @property
    def HB(self):
        return landau_hamiltonian(self.ops)

    @cached_property
    def Hxi_t(self):
        if self.U1d_t is None:
            raise ValueError("H_xi(t) needs U1d_t")
        return build_h_xi(self.ops, self.params, self.signals, None, self.U1d_t)
