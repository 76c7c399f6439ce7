"""Brute-force propagators and the closed-form factors of ``U(t)``.

The evolution in the lab frame factorizes as

    U = R g(t) U_1d U_2d U_xi g(0)^{-1},    U_2d = M e^{-i H_B t} Ut_eps U_eps,

with ``R`` the parallel-transport rotation, ``g`` the position-only gauge
unitary, ``U_1d`` the axial evolution, ``M`` a magnetic translation along the
displacement path ``d``, ``Ut_eps`` a cyclotron-mode displacement and
``U_eps``, ``U_xi`` residual time-ordered factors.  Every factor here is either
closed form or the solution of its defining equation, so comparing them with a
direct integration of the lab Hamiltonian tests the whole chain.

Conventions fixed by the brute-force checks:

* ``R`` solves ``i dR/dt = (n x ndot).J R`` with ``n x ndot`` in initial-frame
  coordinates.
* ``Ut_eps = exp[-i(delta a + delta^* a^dagger)] e^{i gamma}`` with
  ``delta = (L/4 l_B) int alpha e^{-i omega tau} dtau`` and
  ``gamma = -int Im(delta^* delta-dot) dtau = -2 S_delta``.
* ``beta = -e B S_d`` and ``M^{-1} x M = x + d``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.sparse import linalg as spla

from ._linalg import (
    expm_hermitian,
    hermiticity_residual,
    relative_distance,
    unitarity_residual,
)
from .geometry import (
    DisplacementPath,
    QuadratureError,
    TransportedFrame,
    displacement_path,
    hermite_midpoints,
)
from .hamiltonians import (
    _w_factors,
    axial_hamiltonian,
    build_lab_hamiltonian,
    build_gauge_unitary,
    build_h2d,
    build_h2d_tilde,
    build_s_eps2,
    landau_hamiltonian,
    potential_operator,
    xi_coupling,
)
from .hilbert import OperatorSet, PhysicalParams, dagger

__all__ = [
    "ConvergenceError",
    "HermiticityError",
    "PropagatorResult",
    "time_ordered_propagator",
    "ForwardPropagator",
    "rotation_generator",
    "rotation_operator",
    "rotation_propagator",
    "axial_generator",
    "axial_propagator",
    "translation_operator",
    "magnetic_translation",
    "DeltaPath",
    "delta_path",
    "displacement_factor",
    "PerturbationCoefficients",
    "perturbation_coefficients",
    "perturbative_u_eps",
    "planar_propagator",
    "closed_u2d_tilde",
    "solve_u_eps",
    "brute_u_eps",
    "solve_u_xi",
    "FactorizationBundle",
    "factorize",
    "assemble_evolution",
    "ColumnResult",
    "propagate_columns",
    "lab_columns",
    "xi_columns",
    "factorized_columns",
    "KronSumOperator",
    "xi_generator",
]

_SQ3 = math.sqrt(3.0)
_GAUSS = (0.5 - _SQ3 / 6, 0.5 + _SQ3 / 6)
_CF4 = (0.25 + _SQ3 / 6, 0.25 - _SQ3 / 6)


class ConvergenceError(RuntimeError):
    """Step halving did not reach the requested tolerance within the budget."""


class HermiticityError(ValueError):
    """A generator handed to the propagator is not Hermitian."""


# --------------------------------------------------------------------------
# generic time-ordered exponential
# --------------------------------------------------------------------------

def _checked(H: Callable, tol: float) -> Callable:
    def wrapped(t):
        M = H(t)
        if tol is not None:
            r = hermiticity_residual(M)
            if r > tol:
                raise HermiticityError(f"generator at t={t:.6g} is not Hermitian (residual {r:.2e})")
        return M

    return wrapped


def _step(H: Callable, t: float, h: float, order: int) -> np.ndarray:
    """One-step propagator ``U(t+h, t)``.

    Order 2 is the exponential midpoint rule.  Order 4 is the two-exponential
    commutator-free scheme on the Gauss-Legendre nodes.
    """
    if order == 2:
        return expm_hermitian(H(t + 0.5 * h), h)
    if order == 4:
        H1 = H(t + _GAUSS[0] * h)
        H2 = H(t + _GAUSS[1] * h)
        first = expm_hermitian(_CF4[0] * H1 + _CF4[1] * H2, h)
        second = expm_hermitian(_CF4[1] * H1 + _CF4[0] * H2, h)
        return second @ first
    raise ValueError("order must be 2 or 4")


def _stops(grid: np.ndarray, breakpoints) -> np.ndarray:
    pts = set(float(x) for x in grid)
    for b in breakpoints:
        if grid[0] < b < grid[-1]:
            pts.add(float(b))
    return np.array(sorted(pts))


def _run(H, grid, stops, h, order, dim):
    U = np.eye(dim, dtype=complex)
    out = [U.copy()]
    gi = 1
    steps = 0
    for lo, hi in zip(stops[:-1], stops[1:]):
        n = max(1, int(math.ceil((hi - lo) / h - 1e-9)))
        hk = (hi - lo) / n
        for j in range(n):
            U = _step(H, lo + j * hk, hk, order) @ U
        steps += n
        while gi < grid.size and abs(grid[gi] - hi) <= 1e-12 * max(1.0, abs(hi)):
            out.append(U.copy())
            gi += 1
    return out, steps


def _count_steps(stops, h):
    return sum(max(1, int(math.ceil((hi - lo) / h - 1e-9))) for lo, hi in zip(stops[:-1], stops[1:]))


@dataclass
class PropagatorResult:
    """Propagator sampled on ``grid`` with convergence diagnostics."""

    grid: np.ndarray
    U: list
    unitarity_drift: np.ndarray
    step_count: int
    converged: bool
    error_estimate: float = 0.0
    order: int = 2
    refinement_diffs: list = field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        return self.U[-1]

    @property
    def observed_order(self) -> float | None:
        """``log2`` of the last ratio of successive refinement differences."""
        d = self.refinement_diffs
        if len(d) < 2 or d[-1] <= 0:
            return None
        return math.log2(d[-2] / d[-1])

    def at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.grid - t)))
        if abs(self.grid[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"t={t} is not a sample time")
        return self.U[k]


def time_ordered_propagator(
    H: Callable[[float], np.ndarray],
    grid,
    tol: float = 1e-8,
    order: int = 2,
    projector=None,
    h_init: float | None = None,
    max_steps: int = 400_000,
    breakpoints=(),
    adaptive: bool = True,
    hermitian_tol: float | None = 1e-10,
    drift_bound: float = 1e-8,
) -> PropagatorResult:
    """Solve ``i dU/dt = H(t) U``, ``U(grid[0]) = I``, sampled on ``grid``.

    Steps are exponentials of ``H`` at interior nodes (midpoint for
    ``order=2``, two Gauss nodes for ``order=4``), so every step is unitary to
    rounding.  With ``adaptive`` the global step is halved until two
    successive refinements differ by less than ``tol`` in relative
    (optionally ``projector``-restricted) Frobenius norm at every sample.
    ``breakpoints`` are times where ``H`` may jump; steps never straddle them.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    Hc = _checked(H, hermitian_tol)
    dim = Hc(float(grid[0])).shape[0]
    if grid.size == 1:
        I = np.eye(dim, dtype=complex)
        return PropagatorResult(grid, [I], np.zeros(1), 0, True, 0.0, order)
    stops = _stops(grid, breakpoints)
    span = grid[-1] - grid[0]
    h = h_init if h_init is not None else span / 8.0
    out, steps = _run(Hc, grid, stops, h, order, dim)
    diffs: list[float] = []
    converged = not adaptive
    while adaptive:
        if _count_steps(stops, h / 2) > max_steps:
            break
        h /= 2
        new, steps = _run(Hc, grid, stops, h, order, dim)
        diff = max(relative_distance(b, a, projector) for a, b in zip(out[1:], new[1:]))
        diffs.append(diff)
        out = new
        if diff < tol:
            converged = True
            break
    if adaptive and not converged:
        last = diffs[-1] if diffs else float("nan")
        raise ConvergenceError(
            f"no convergence to tol={tol:.1e} within {max_steps} steps (last refinement difference {last:.2e})"
        )
    drift = np.array([unitarity_residual(U) for U in out])
    if np.max(drift) > drift_bound:
        raise ConvergenceError(f"unitarity drift {np.max(drift):.2e} above {drift_bound:.1e}")
    err = diffs[-1] / (2**order - 1) if diffs else float("nan")
    return PropagatorResult(grid, out, drift, steps, converged, err, order, diffs)


class ForwardPropagator:
    """Evaluate ``U(t)`` of ``i dU/dt = H U`` at increasing query times.

    Each query advances from the previous one with steps no longer than
    ``h_max`` and never across ``breakpoints``.  A query earlier than the
    current time restarts the integration from ``t0``.
    """

    def __init__(self, H: Callable, dim: int, h_max: float = math.inf, order: int = 4,
                 t0: float = 0.0, breakpoints=()):
        self.H = H
        self.dim = dim
        self.h_max = h_max
        self.order = order
        self.t0 = t0
        self.breakpoints = sorted(float(b) for b in breakpoints)
        self.steps = 0
        self._reset()

    def _reset(self):
        self._t = self.t0
        self._U = np.eye(self.dim, dtype=complex)

    def __call__(self, t: float) -> np.ndarray:
        if t < self._t:
            self._reset()
        while self._t < t:
            nxt = min(t, self._t + self.h_max)
            for b in self.breakpoints:
                if self._t < b < nxt:
                    nxt = b
                    break
            self._U = _step(self.H, self._t, nxt - self._t, self.order) @ self._U
            self._t = nxt
            self.steps += 1
        return self._U


# --------------------------------------------------------------------------
# rotation and axial factors
# --------------------------------------------------------------------------

def rotation_generator(ops: OperatorSet, frame: TransportedFrame) -> Callable[[float], np.ndarray]:
    """``t -> (n x ndot).J`` with ``n x ndot`` in initial-frame coordinates."""
    E0 = frame.initial
    path = frame.path

    def G(t):
        n, nd = path.evaluate(t, 1)
        w = E0 @ np.cross(n, nd)
        return w[0] * ops.J1 + w[1] * ops.J2 + w[2] * ops.J3

    return G


def rotation_propagator(ops: OperatorSet, frame: TransportedFrame, grid, tol: float = 1e-10,
                        order: int = 4, projector=None, h_init: float | None = None) -> PropagatorResult:
    """``R`` on ``grid`` by the time-ordered oracle."""
    grid = np.asarray(grid, dtype=float)
    if grid[-1] > frame.duration * (1 + 1e-12) + 1e-12:
        raise ValueError("grid extends beyond the frame")
    if h_init is None:
        speed = max(frame.path.max_speed(), 1e-300)
        h_init = min(grid[-1] - grid[0], 0.25 / speed) if grid.size > 1 else 1.0
    return time_ordered_propagator(
        rotation_generator(ops, frame), grid, tol=tol, order=order, projector=projector,
        h_init=h_init, breakpoints=frame.path.breakpoints(),
    )


def rotation_operator(ops: OperatorSet, frame: TransportedFrame, t: float, tol: float = 1e-10,
                      order: int = 4, projector=None) -> np.ndarray:
    if t == 0 or frame.path.max_speed() == 0:
        return np.eye(ops.dim, dtype=complex)
    return rotation_propagator(ops, frame, [0.0, t], tol=tol, order=order, projector=projector).final


def axial_generator(ops: OperatorSet) -> np.ndarray:
    """``p_3^2/2m + V(x_3 - L)`` on the axial factor alone."""
    f = ops.axial_factors
    p = ops.params
    return f["p3"] @ f["p3"] / (2 * p.m) + potential_operator(ops, p, f["xi"])


def axial_propagator(ops: OperatorSet, params: PhysicalParams, frame: TransportedFrame, t: float,
                     space: str = "full") -> np.ndarray:
    """``U_1d(t) = exp[-i (p_3^2/2m + V) t] exp[+i (m/2) L^2 int |ndot|^2]``."""
    phase = 0.5 * params.m * params.L**2 * frame.path.speed_sq_integral(t) if params.L else 0.0
    Uc = expm_hermitian(axial_generator(ops), t) * np.exp(1j * phase)
    if space == "axial":
        return Uc
    return ops.embed_axial(Uc)


# --------------------------------------------------------------------------
# magnetic translation and cyclotron displacement
# --------------------------------------------------------------------------

def translation_operator(ops: OperatorSet, d1: float, d2: float, beta: float = 0.0) -> np.ndarray:
    """``exp[-i(eta_1 d_1 + eta_2 d_2)] e^{i beta}`` on the full space of ``ops``.

    ``eta`` acts on the b mode only, so the exponential is taken there.
    """
    b = ops.mode_ladder("b")
    s = math.sqrt(-2.0 * ops.params.e * ops.params.B)
    gen = 0.5 * s * (d1 * (b + dagger(b)) + 1j * d2 * (dagger(b) - b))
    Mb = expm_hermitian(0.5 * (gen + dagger(gen)), 1.0) * np.exp(1j * beta)
    return ops.embed_mode(Mb, "b")


def magnetic_translation(ops: OperatorSet, params: PhysicalParams, dpath: DisplacementPath,
                         t: float) -> tuple[np.ndarray, float]:
    """``M(t)`` and ``beta(t) = -e B S_d(t)``."""
    d1, d2, Sd = dpath.at(t)
    beta = -params.e * params.B * Sd
    return translation_operator(ops, d1, d2, beta), beta


@dataclass
class DeltaPath:
    """Cumulative ``delta(t)`` and ``gamma(t)`` on a fine grid."""

    grid: np.ndarray
    delta: np.ndarray
    gamma: np.ndarray
    rate: np.ndarray  # d delta / dt at the nodes
    error_estimate: float

    def at(self, t: float) -> tuple[complex, float]:
        g = self.grid
        k = int(np.searchsorted(g, t, side="right")) - 1
        k = min(max(k, 0), g.size - 2)
        h = g[k + 1] - g[k]
        s = (t - g[k]) / h
        h00, h10 = 2 * s**3 - 3 * s**2 + 1, s**3 - 2 * s**2 + s
        h01, h11 = -2 * s**3 + 3 * s**2, s**3 - s**2
        dz = (h00 * self.delta[k] + h10 * h * self.rate[k]
              + h01 * self.delta[k + 1] + h11 * h * self.rate[k + 1])
        gr = -(np.conj(self.delta) * self.rate).imag
        gm = (h00 * self.gamma[k] + h10 * h * gr[k] + h01 * self.gamma[k + 1] + h11 * h * gr[k + 1])
        return complex(dz), float(gm)

    @property
    def area(self) -> np.ndarray:
        """Chord-closed signed area ``S_delta`` of the delta trajectory."""
        return -0.5 * self.gamma


def _fine_grid(frame: TransportedFrame, t_end: float, h_max: float) -> np.ndarray:
    """Uniform pieces between breakpoints, each with an even number of intervals."""
    stops = [0.0] + [b for b in frame.path.breakpoints() if 0 < b < t_end] + [t_end]
    pieces = []
    for lo, hi in zip(stops[:-1], stops[1:]):
        n = max(2, int(math.ceil((hi - lo) / h_max)))
        n += n % 2
        pieces.append(np.linspace(lo, hi, n + 1)[:-1])
    pieces.append(np.array([t_end]))
    return np.concatenate(pieces)


def delta_path(frame: TransportedFrame, params: PhysicalParams, t_end: float | None = None,
               h_max: float | None = None, tol: float = 1e-8) -> DeltaPath:
    """``delta(t) = (L / 4 l_B) int alpha e^{-i omega tau}`` and ``gamma(t)``.

    Composite Simpson on a grid with spacing at most
    ``min(1/omega, 1/eps)/20``; the error estimate compares against the same
    rule at twice the spacing.
    """
    t_end = frame.duration if t_end is None else t_end
    eps = max(frame.path.max_speed(), 1e-300)
    if h_max is None:
        h_max = min(1.0 / params.omega, 1.0 / eps) / 20.0
    g = _fine_grid(frame, t_end, h_max)
    c = params.L / (4.0 * params.l_B)
    w = params.omega

    def f(s, side):
        return c * frame.signals(s, side).alpha * np.exp(-1j * w * s)

    fL = np.array([f(s, 1) for s in g[:-1]])
    fR = np.array([f(s, -1) for s in g[1:]])
    fM = np.array([f(0.5 * (a + b), 1) for a, b in zip(g[:-1], g[1:])])
    h = np.diff(g)
    inc = h / 6.0 * (fL + 4 * fM + fR)
    delta = np.concatenate([[0j], np.cumsum(inc)])
    # coarse rule on interval pairs inside each smooth piece
    coarse = 0j
    k = 0
    brk = set(frame.path.breakpoints())
    while k < h.size:
        if k + 1 < h.size and g[k + 1] not in brk and abs(h[k] - h[k + 1]) < 1e-12 * max(1.0, h[k]):
            coarse += 2 * h[k] / 6.0 * (fL[k] + 4 * fR[k] + fR[k + 1])
            k += 2
        else:
            coarse += inc[k]
            k += 1
    err = abs(coarse - delta[-1]) / 15.0
    if err > tol * max(1.0, abs(delta[-1])):
        raise QuadratureError(f"delta quadrature error {err:.2e} above {tol:.1e}; reduce h_max")
    # gamma = -int Im(delta^* delta-dot)
    dM = hermite_midpoints(delta, fL, fR, h)
    gL = -(np.conj(delta[:-1]) * fL).imag
    gM = -(np.conj(dM) * fM).imag
    gR = -(np.conj(delta[1:]) * fR).imag
    gamma = np.concatenate([[0.0], np.cumsum(h / 6.0 * (gL + 4 * gM + gR))])
    rate = np.concatenate([fL, fR[-1:]])
    return DeltaPath(g, delta, gamma, rate, float(err))


def _cyclotron_displacement(ops: OperatorSet, delta: complex, gamma: float) -> np.ndarray:
    a = ops.mode_ladder("a")
    gen = delta * a + np.conj(delta) * dagger(a)
    Ua = expm_hermitian(0.5 * (gen + dagger(gen)), 1.0) * np.exp(1j * gamma)
    return ops.embed_mode(Ua, "a")


def _landau_phase(ops: OperatorSet):
    """``t -> exp(-i H_B t)`` on the full space of ``ops`` (H_B acts on the a mode)."""
    a = ops.mode_ladder("a")
    p = ops.params
    s2 = -2.0 * p.e * p.B
    pi1 = math.sqrt(s2) * (a + dagger(a)) / 2
    pi2 = 1j * math.sqrt(s2) * (a - dagger(a)) / 2
    w, V = np.linalg.eigh((pi1 @ pi1 + pi2 @ pi2) / (2 * p.m))

    def UB(t):
        return ops.embed_mode((V * np.exp(-1j * t * w)) @ V.conj().T, "a")

    return UB


def displacement_factor(ops: OperatorSet, params: PhysicalParams, frame: TransportedFrame, t: float,
                        dpath_delta: DeltaPath | None = None) -> tuple[np.ndarray, complex, float]:
    """``Ut_eps(t) = exp[-i(delta a + delta^* a^dagger)] e^{i gamma}`` with ``delta``, ``gamma``."""
    if dpath_delta is None:
        dpath_delta = delta_path(frame, params, t_end=t)
    delta, gamma = dpath_delta.at(t)
    return _cyclotron_displacement(ops, delta, gamma), delta, gamma


# --------------------------------------------------------------------------
# first-order U_eps
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PerturbationCoefficients:
    """Coefficients of the first-order expansion of ``U_eps``.

    ``U_eps ~ (1 - i c1) I + c2 b - c2^* b^dagger + c3 bb - c3^* b^dagger b^dagger
    + c4 b^dagger b + c5 a^dagger a``.
    """

    c1: float
    c2: complex
    c3: complex
    c4: complex
    c5: complex

    def as_dict(self) -> dict:
        return {k: (v.real, v.imag) if isinstance(v, complex) else v for k, v in self.__dict__.items()}


def perturbation_coefficients(params: PhysicalParams, frame: TransportedFrame, dpath: DisplacementPath,
                              t: float, quad_tol: float = 1e-11) -> PerturbationCoefficients:
    """Quadrature of the ``c1 ... c5`` integrands over ``[0, t]``.

    ``c1 = int [m L alpha-dot.d - (m/2)(alpha.d)^2 - m l_B^2 |ndot|^2]``,
    ``c2 = int m l_B [L alpha-dot^* - (alpha.d) alpha^*]``,
    ``c3 = -i int (m/2) l_B^2 alpha^{*2}``, ``c4 = c5 = i int m l_B^2 |ndot|^2``.
    """
    m, L, lB = params.m, params.L, params.l_B

    def pieces(s):
        sig = frame.signals(s)
        d1, d2, _ = dpath.at(s)
        ad = sig.alpha1 * d1 + sig.alpha2 * d2
        dad = sig.dalpha1 * d1 + sig.dalpha2 * d2
        a = sig.alpha
        return (
            m * L * dad - 0.5 * m * ad**2 - m * lB**2 * sig.ndot_sq,
            m * lB * (L * np.conj(sig.dalpha) - ad * np.conj(a)),
            -0.5j * m * lB**2 * np.conj(a) ** 2,
            1j * m * lB**2 * sig.ndot_sq,
        )

    def integral(fn):
        total = 0.0
        stops = [0.0] + [b for b in frame.path.breakpoints() if 0 < b < t] + [t]
        for lo, hi in zip(stops[:-1], stops[1:]):
            val, err = integrate.quad(fn, lo, hi, epsabs=1e-14, epsrel=quad_tol, limit=500)
            if err > 1e3 * max(quad_tol * abs(val), 1e-14):
                raise QuadratureError(f"coefficient quadrature error {err:.2e}")
            total += val
        return total

    if t <= 0:
        return PerturbationCoefficients(0.0, 0j, 0j, 0j, 0j)
    c1 = integral(lambda s: pieces(s)[0])
    c2 = complex(integral(lambda s: pieces(s)[1].real), integral(lambda s: pieces(s)[1].imag))
    c3 = complex(integral(lambda s: pieces(s)[2].real), integral(lambda s: pieces(s)[2].imag))
    c4 = 1j * integral(lambda s: m * lB**2 * frame.signals(s).ndot_sq)
    return PerturbationCoefficients(float(c1), c2, c3, c4, c4)


def perturbative_u_eps(ops: OperatorSet, params: PhysicalParams, frame: TransportedFrame,
                       dpath: DisplacementPath, t: float) -> tuple[PerturbationCoefficients, np.ndarray]:
    """Coefficients and the first-order ``U_eps`` matrix on the full space of ``ops``."""
    c = perturbation_coefficients(params, frame, dpath, t)
    a, b = ops.a, ops.b
    ad, bd = dagger(a), dagger(b)
    U = ((1 - 1j * c.c1) * ops.identity + c.c2 * b - np.conj(c.c2) * bd
         + c.c3 * b @ b - np.conj(c.c3) * bd @ bd + c.c4 * bd @ b + c.c5 * ad @ a)
    return c, U


# --------------------------------------------------------------------------
# planar propagators
# --------------------------------------------------------------------------

def _planar_step(params: PhysicalParams, frame: TransportedFrame) -> float:
    return min(2 * math.pi / params.omega / 16.0, 0.05 / max(frame.path.max_speed(), 1e-300))


def planar_propagator(ops: OperatorSet, params: PhysicalParams, frame: TransportedFrame, grid,
                      which: str = "H2d", tol: float = 1e-9, order: int = 4, projector=None,
                      h_init: float | None = None) -> PropagatorResult:
    """Brute-force ``U_2d`` (``which='H2d'``) or ``Ut_2d`` (``'H2d_tilde'``) on ``ops.landau_slice``."""
    sl = ops.landau_slice
    builder = {"H2d": build_h2d, "H2d_tilde": build_h2d_tilde}[which]

    def H(t):
        return builder(sl, params, frame.signals(t))

    return time_ordered_propagator(
        H, grid, tol=tol, order=order, projector=projector,
        h_init=h_init or _planar_step(params, frame), breakpoints=frame.path.breakpoints(),
    )


def closed_u2d_tilde(ops: OperatorSet, params: PhysicalParams, dpath: DisplacementPath,
                     dlt: DeltaPath) -> Callable[[float], np.ndarray]:
    """``t -> M(t) e^{-i H_B t} Ut_eps(t)`` on ``ops.landau_slice``."""
    sl = ops.landau_slice
    UB = _landau_phase(sl)

    def U(t):
        M, _ = magnetic_translation(sl, params, dpath, t)
        delta, gamma = dlt.at(t)
        return M @ UB(t) @ _cyclotron_displacement(sl, delta, gamma)

    return U


def _u_eps_generator(ops, params, frame, Ut2d: Callable):
    sl = ops.landau_slice

    def G(t):
        U = Ut2d(t)
        return U.conj().T @ build_s_eps2(sl, params, frame.signals(t)) @ U

    return G


def solve_u_eps(ops: OperatorSet, params: PhysicalParams, frame: TransportedFrame, grid,
                dpath: DisplacementPath | None = None, dlt: DeltaPath | None = None,
                tol: float = 1e-9, order: int = 4, projector=None,
                h_init: float | None = None) -> PropagatorResult:
    """``U_eps`` from ``i dU/dt = Ut_2d^{-1} S Ut_2d U`` with the closed-form ``Ut_2d``."""
    grid = np.asarray(grid, dtype=float)
    dpath = dpath or displacement_path(frame, params.L)
    dlt = dlt or delta_path(frame, params, t_end=grid[-1])
    G = _u_eps_generator(ops, params, frame, closed_u2d_tilde(ops, params, dpath, dlt))
    return time_ordered_propagator(
        G, grid, tol=tol, order=order, projector=projector,
        h_init=h_init or _planar_step(params, frame), breakpoints=frame.path.breakpoints(),
    )


def brute_u_eps(ops: OperatorSet, params: PhysicalParams, frame: TransportedFrame, grid,
                tol: float = 1e-9, order: int = 4, projector=None,
                h_init: float | None = None) -> list[np.ndarray]:
    """``U_eps = Ut_2d^{-1} U_2d`` with both factors from the brute-force oracle."""
    U2 = planar_propagator(ops, params, frame, grid, "H2d", tol, order, projector, h_init)
    Ut = planar_propagator(ops, params, frame, grid, "H2d_tilde", tol, order, projector, h_init)
    return [b.conj().T @ a for a, b in zip(U2.U, Ut.U)]


# --------------------------------------------------------------------------
# U_xi
# --------------------------------------------------------------------------

def _u2d_source(ops, params, frame, source, h_max, dpath=None, dlt=None, t_end=None):
    sl = ops.landau_slice
    if callable(source):
        return source
    if source == "brute":
        return ForwardPropagator(lambda t: build_h2d(sl, params, frame.signals(t)), sl.dim,
                                 h_max=h_max, breakpoints=frame.path.breakpoints())
    if source == "factorized":
        dpath = dpath or displacement_path(frame, params.L)
        dlt = dlt or delta_path(frame, params, t_end=t_end)
        Ut = closed_u2d_tilde(ops, params, dpath, dlt)
        Ueps = ForwardPropagator(_u_eps_generator(ops, params, frame, Ut), sl.dim,
                                 h_max=h_max, breakpoints=frame.path.breakpoints())
        return lambda t: Ut(t) @ Ueps(t)
    raise ValueError(f"unknown U_2d source {source!r}")


def solve_u_xi(ops: OperatorSet, params: PhysicalParams, frame: TransportedFrame,
               U2d="brute", grid=None, tol: float = 1e-8, order: int = 4, projector=None,
               h_init: float | None = None, u2d_h_max: float = math.inf,
               dpath: DisplacementPath | None = None, dlt: DeltaPath | None = None) -> PropagatorResult:
    """``U_xi`` from ``i dU/dt = U_2d^{-1} H_xi U_2d U``.

    ``U2d`` is ``'brute'`` (integrate ``H_2d``), ``'factorized'`` (closed-form
    ``M e^{-iH_B t} Ut_eps`` times an integrated ``U_eps``) or a callable
    ``t -> U_2d(t)`` on the planar factor.  The brute and factorized sources
    are integrated along with ``U_xi``: they are queried at the ``U_xi`` nodes
    so their step follows the ``U_xi`` step refinement.
    """
    grid = np.asarray(grid if grid is not None else [0.0, frame.duration], dtype=float)
    sl = ops.landau_slice
    src = _u2d_source(ops, params, frame, U2d, u2d_h_max, dpath, dlt, grid[-1])
    wc, Vc = np.linalg.eigh(axial_generator(ops))
    xic = ops.axial_factors["xi"]
    I2 = np.eye(sl.dim)

    def G(t):
        sig = frame.signals(t)
        O, q = xi_coupling(sl, params, sig)
        U = src(t)
        Ot = U.conj().T @ O @ U
        Uc = (Vc * np.exp(-1j * t * wc)) @ Vc.conj().T
        xi = Uc.conj().T @ xic @ Uc
        return np.kron(Ot, xi) + q * np.kron(I2, xi @ xi)

    if h_init is None:
        gap = max(params.axial_gap, params.omega)
        h_init = min(2 * math.pi / gap / 8.0, 0.05 / max(frame.path.max_speed(), 1e-300))
    return time_ordered_propagator(
        G, grid, tol=tol, order=order, projector=projector, h_init=h_init,
        breakpoints=frame.path.breakpoints(),
    )


# --------------------------------------------------------------------------
# factorization bundle and assembly
# --------------------------------------------------------------------------

@dataclass(eq=False)
class FactorizationBundle:
    """All factors of ``U(t)`` on the full space, plus the scalar data."""

    t: float
    R: np.ndarray
    g_t: np.ndarray
    g_0: np.ndarray
    U1d: np.ndarray
    M: np.ndarray
    UB: np.ndarray
    Utilde_eps: np.ndarray
    U_eps: np.ndarray | None
    U_xi: np.ndarray | None
    beta: float
    d: tuple
    delta: complex
    gamma: float
    coeffs: PerturbationCoefficients | None = None
    U_eps_1st: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def D(self) -> np.ndarray:
        return self.UB @ self.U1d

    @property
    def U2d(self) -> np.ndarray:
        if self.U_eps is None:
            raise ValueError("U_eps missing")
        return self.M @ self.UB @ self.Utilde_eps @ self.U_eps

    def unitarity(self) -> dict:
        out = {}
        for name in ("R", "g_t", "g_0", "U1d", "M", "UB", "Utilde_eps", "U_eps", "U_xi", "U_eps_1st"):
            val = getattr(self, name)
            if val is not None:
                out[name] = unitarity_residual(val)
        return out


def factorize(ops: OperatorSet, params: PhysicalParams, frame: TransportedFrame, t: float,
              tol: float = 1e-9, order: int = 4, projector=None, with_u_xi: bool = True,
              with_first_order: bool = True, u2d_source="brute", h_init: float | None = None,
              u_xi_method: str = "columns") -> FactorizationBundle:
    """Compute every factor of ``U(t)``; ``U_eps`` and ``U_xi`` are ODE solutions.

    ``u_xi_method='columns'`` integrates ``U_xi`` by applying its generator
    matrix-free to the identity columns (much cheaper for the full space);
    ``'dense'`` uses :func:`solve_u_xi` with dense step exponentials.
    """
    if u_xi_method not in ("columns", "dense"):
        raise ValueError(f"unknown u_xi_method {u_xi_method!r}")
    sl = ops.landau_slice
    dpath = displacement_path(frame, params.L)
    dlt = delta_path(frame, params, t_end=t)
    R = rotation_operator(ops, frame, t, tol=min(tol, 1e-10), projector=projector)
    g_t, _ = build_gauge_unitary(ops, params, frame.signals(t))
    g_0, _ = build_gauge_unitary(ops, params, frame.signals(0.0))
    U1d = axial_propagator(ops, params, frame, t)
    M, beta = magnetic_translation(ops, params, dpath, t)
    UB = _landau_phase(ops)(t)
    Ut, delta, gamma = displacement_factor(ops, params, frame, t, dlt)
    grid = [0.0, t]
    if t > 0:
        Ue2 = solve_u_eps(ops, params, frame, grid, dpath, dlt, tol=tol, order=order).final
    else:
        Ue2 = np.eye(sl.dim, dtype=complex)
    U_eps = ops.embed_landau(Ue2)
    U_xi = None
    if with_u_xi:
        if t > 0 and ops.basis.Nc > 0 and u_xi_method == "columns":
            U_xi = xi_columns(ops, params, frame, t, np.eye(ops.dim, dtype=complex), U2d=u2d_source,
                              tol=tol, h_init=h_init, dpath=dpath, dlt=dlt).V
        elif t > 0 and ops.basis.Nc > 0:
            U_xi = solve_u_xi(ops, params, frame, u2d_source, grid, tol=tol, order=order,
                              projector=projector, h_init=h_init, dpath=dpath, dlt=dlt).final
        else:
            U_xi = np.eye(ops.dim, dtype=complex)
    coeffs = U1st = None
    if with_first_order:
        coeffs, U1st = perturbative_u_eps(ops, params, frame, dpath, t)
    d1, d2, _ = dpath.at(t)
    return FactorizationBundle(
        t=float(t), R=R, g_t=g_t, g_0=g_0, U1d=U1d, M=M, UB=UB, Utilde_eps=Ut, U_eps=U_eps, U_xi=U_xi,
        beta=float(beta), d=(d1, d2), delta=delta, gamma=gamma, coeffs=coeffs, U_eps_1st=U1st,
        meta={"tol": tol, "order": order, "u_xi_method": u_xi_method,
              "u2d_source": u2d_source if isinstance(u2d_source, str) else "callable"},
    )


def assemble_evolution(bundle: FactorizationBundle, mode: str = "full") -> np.ndarray:
    """Ordered product of the factors.

    ``full``: ``R g U_1d U_2d U_xi g(0)^{-1}``; ``strong_confinement`` drops
    ``U_xi``; ``adiabatic``: ``R M e^{-i H_B t} U_1d``.
    """
    b = bundle
    if mode == "adiabatic":
        return b.R @ b.M @ b.D
    if mode not in ("full", "strong_confinement"):
        raise ValueError(f"unknown mode {mode!r}")
    U = b.R @ b.g_t @ b.U1d @ b.U2d
    if mode == "full":
        if b.U_xi is None:
            raise ValueError("full assembly needs U_xi")
        U = U @ b.U_xi
    return U @ b.g_0.conj().T


# --------------------------------------------------------------------------
# column propagation for large bases
# --------------------------------------------------------------------------

def _generator_exp(G, V: np.ndarray, h: float, trace=None) -> np.ndarray:
    """``exp(-i h G) V`` for a sparse matrix or Hermitian ``LinearOperator`` ``G``."""
    if isinstance(G, spla.LinearOperator):
        return spla.expm_multiply(G * (-1j * h), V, traceA=-1j * h * trace)
    return spla.expm_multiply((-1j * h) * G, V)


def _column_step(H: Callable, t: float, h: float, V: np.ndarray) -> np.ndarray:
    """Fourth-order commutator-free step applied to columns."""
    H1 = H(t + _GAUSS[0] * h)
    H2 = H(t + _GAUSS[1] * h)
    tr = None
    if isinstance(H1, spla.LinearOperator):
        tr = (getattr(H1, "trace", 0.0), getattr(H2, "trace", 0.0))
    for w1, w2 in (_CF4, _CF4[::-1]):
        V = _generator_exp(w1 * H1 + w2 * H2, V, h, None if tr is None else w1 * tr[0] + w2 * tr[1])
    return V


def _run_columns(H, V, t0, t1, h, breakpoints):
    stops = _stops(np.array([t0, t1]), breakpoints)
    steps = 0
    for lo, hi in zip(stops[:-1], stops[1:]):
        n = max(1, int(math.ceil((hi - lo) / h - 1e-9)))
        hk = (hi - lo) / n
        for j in range(n):
            V = _column_step(H, lo + j * hk, hk, V)
        steps += n
    return V, steps


@dataclass
class ColumnResult:
    """``U(t1, t0) V`` with its step-halving history."""

    V: np.ndarray
    step_count: int
    refinement_diffs: list
    error_estimate: float


def propagate_columns(H: Callable, V: np.ndarray, t1: float, t0: float = 0.0, tol: float = 1e-8,
                      h_init: float | None = None, rows=None, breakpoints=(),
                      max_steps: int = 20_000) -> ColumnResult:
    """Apply the time-ordered exponential of ``H`` to the columns ``V``.

    ``H(t)`` returns a sparse matrix or a Hermitian ``LinearOperator``;
    exponentials act on the columns through ``expm_multiply`` so no dense
    propagator is formed.  The step is halved until two refinements differ by
    less than ``tol`` in relative Frobenius norm on ``rows`` (all rows by
    default).
    """
    V = np.asarray(V, dtype=complex)
    if t1 == t0:
        return ColumnResult(V.copy(), 0, [], 0.0)
    sel = slice(None) if rows is None else np.asarray(rows)
    h = h_init if h_init is not None else (t1 - t0) / 8.0
    out, steps = _run_columns(H, V, t0, t1, h, breakpoints)
    diffs: list[float] = []
    while True:
        if _count_steps(_stops(np.array([t0, t1]), breakpoints), h / 2) > max_steps:
            last = diffs[-1] if diffs else float("nan")
            raise ConvergenceError(f"column propagation did not reach tol={tol:.1e} (last {last:.2e})")
        h /= 2
        new, steps = _run_columns(H, V, t0, t1, h, breakpoints)
        num = np.linalg.norm(new[sel] - out[sel])
        diff = float(num / max(np.linalg.norm(new[sel]), 1e-300))
        diffs.append(diff)
        out = new
        if diff < tol:
            break
    return ColumnResult(out, steps, diffs, diffs[-1] / 15.0)


def lab_columns(ops: OperatorSet, params: PhysicalParams, frame: TransportedFrame, t: float,
                V: np.ndarray | None = None, tol: float = 1e-6, h_init: float | None = None) -> ColumnResult:
    """Lab-frame oracle ``U(t) V`` for a sparse operator set (interior columns by default)."""
    if not ops.sparse:
        raise ValueError("lab_columns needs an operator set built with sparse=True")
    V = ops.interior_states() if V is None else V

    def H(s):
        return build_lab_hamiltonian(ops, params, frame.path, s, frame).tocsr()

    if h_init is None:
        gap = max(params.axial_gap, params.omega)
        h_init = min(2 * math.pi / gap / 4.0, 0.05 / max(frame.path.max_speed(), 1e-300))
    return propagate_columns(H, V, t, tol=tol, h_init=h_init, rows=ops.interior_index,
                             breakpoints=frame.path.breakpoints())


def _split(ops: OperatorSet, V: np.ndarray) -> np.ndarray:
    return V.reshape(ops.landau_dim, ops.axial_dim, -1)


def _left(U: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Contract ``U`` with the leading axis of ``Y``."""
    return (U @ Y.reshape(Y.shape[0], -1)).reshape(Y.shape)


def _apply_planar(ops: OperatorSet, U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """``(U (x) I) V`` for ``U`` on the (a, b) factor."""
    return _left(U, _split(ops, V)).reshape(V.shape)


def _apply_axial(ops: OperatorSet, U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """``(I (x) U) V`` for ``U`` on the c factor."""
    return (U @ _split(ops, V)).reshape(V.shape)


def _gauge_columns(ops: OperatorSet, params: PhysicalParams, sig, V: np.ndarray,
                   inverse: bool = False) -> np.ndarray:
    """``g V`` (or ``g^{-1} V``) with ``g = exp(-i m W (x) X)`` applied factorwise."""
    W, X = _w_factors(ops, sig.alpha1, sig.alpha2)
    lw, Vw = np.linalg.eigh(W)
    lx, Vx = np.linalg.eigh(X)
    sign = 1.0 if inverse else -1.0
    Y = _split(ops, V)
    Y = Vx.conj().T @ _left(Vw.conj().T, Y)
    Y = Y * np.exp(sign * 1j * params.m * np.outer(lw, lx))[:, :, None]
    Y = Vx @ _left(Vw, Y)
    return Y.reshape(V.shape)


class KronSumOperator(spla.LinearOperator):
    """Matrix-free ``sum_k A_k (x) B_k`` on the (a, b) x c product space.

    ``terms`` holds ``(A, B)`` pairs of dense factors; ``None`` stands for the
    identity on that factor.  Used for generators that are dense on both
    factors but would be dense and large as full matrices.
    """

    def __init__(self, ops: OperatorSet, terms):
        self.ops = ops
        self.terms = [(A, B) for A, B in terms]
        nab, nc = ops.landau_dim, ops.axial_dim
        tr = 0j
        for A, B in self.terms:
            tr += (nab if A is None else np.trace(A)) * (nc if B is None else np.trace(B))
        self.trace = complex(tr)
        super().__init__(dtype=complex, shape=(ops.dim, ops.dim))

    def _matmat(self, V):
        Y = _split(self.ops, V)
        out = np.zeros_like(Y, dtype=complex)
        for A, B in self.terms:
            Z = Y if B is None else B @ Y
            out += Z if A is None else _left(A, Z)
        return out.reshape(V.shape)

    def _matvec(self, v):
        return self._matmat(v.reshape(-1, 1)).ravel()

    def _rmatvec(self, v):
        Y = _split(self.ops, v.reshape(-1, 1))
        out = np.zeros_like(Y, dtype=complex)
        for A, B in self.terms:
            Z = Y if B is None else B.conj().T @ Y
            out += Z if A is None else _left(A.conj().T, Z)
        return out.ravel()


def xi_generator(ops: OperatorSet, O: np.ndarray, q: float, xi: np.ndarray,
                 planar: np.ndarray | None = None) -> KronSumOperator:
    """``O (x) xi + q I (x) xi^2`` plus an optional ``planar (x) I`` term."""
    terms = [(O, xi), (None, q * (xi @ xi))]
    if planar is not None:
        terms.append((planar, None))
    return KronSumOperator(ops, terms)


def xi_columns(ops: OperatorSet, params: PhysicalParams, frame: TransportedFrame, t: float,
               V: np.ndarray, U2d="factorized", tol: float = 1e-8, h_init: float | None = None,
               dpath: DisplacementPath | None = None, dlt: DeltaPath | None = None) -> ColumnResult:
    """``U_xi(t) V`` by column propagation of its interaction-picture equation."""
    sl = ops.landau_slice
    src = _u2d_source(ops, params, frame, U2d, math.inf if h_init is None else h_init,
                      dpath, dlt, t)
    wc, Vc = np.linalg.eigh(axial_generator(ops))
    xic = ops.axial_factors["xi"]

    def G(s):
        O, q = xi_coupling(sl, params, frame.signals(s))
        U = src(s)
        Uc = (Vc * np.exp(-1j * s * wc)) @ Vc.conj().T
        return xi_generator(ops, U.conj().T @ O @ U, q, Uc.conj().T @ xic @ Uc)

    if h_init is None:
        gap = max(params.axial_gap, params.omega)
        h_init = min(2 * math.pi / gap / 4.0, 0.05 / max(frame.path.max_speed(), 1e-300))
    return propagate_columns(G, V, t, tol=tol, h_init=h_init, rows=ops.interior_index,
                             breakpoints=frame.path.breakpoints())


def factorized_columns(ops: OperatorSet, params: PhysicalParams, frame: TransportedFrame, t: float,
                       V: np.ndarray | None = None, tol: float = 1e-8, mode: str = "full") -> tuple[np.ndarray, dict]:
    """``R g(t) U_1d U_2d U_xi g(0)^{-1} V`` assembled factor by factor on columns.

    Only the rotation and ``U_xi`` are propagated on the full space; the other
    factors act on one tensor factor.  Returns the columns and a diagnostics
    dictionary (step counts and error estimates).
    """
    if mode not in ("full", "strong_confinement"):
        raise ValueError(f"unknown mode {mode!r}")
    V = ops.interior_states() if V is None else np.asarray(V, dtype=complex)
    sl = ops.landau_slice
    dpath = displacement_path(frame, params.L)
    dlt = delta_path(frame, params, t_end=t)
    info: dict = {}
    Y = _gauge_columns(ops, params, frame.signals(0.0), V, inverse=True)
    if mode == "full" and t > 0 and ops.basis.Nc > 0:
        res = xi_columns(ops, params, frame, t, Y, tol=tol, dpath=dpath, dlt=dlt)
        Y = res.V
        info["U_xi"] = {"steps": res.step_count, "error": res.error_estimate}
    if t > 0:
        ue = solve_u_eps(ops, params, frame, [0.0, t], dpath, dlt, tol=tol)
        U2 = closed_u2d_tilde(ops, params, dpath, dlt)(t) @ ue.final
        info["U_eps"] = {"steps": ue.step_count, "error": ue.error_estimate}
    else:
        U2 = np.eye(sl.dim, dtype=complex)
    Y = _apply_planar(ops, U2, Y)
    Y = _apply_axial(ops, axial_propagator(ops, params, frame, t, space="axial"), Y)
    Y = _gauge_columns(ops, params, frame.signals(t), Y)
    if t > 0 and frame.path.max_speed() > 0:
        G = rotation_generator(ops, frame)
        speed = max(frame.path.max_speed(), 1e-300)
        res = propagate_columns(lambda s: G(s).tocsr() if ops.sparse else G(s), Y, t, tol=tol,
                                h_init=min(t, 0.25 / speed), rows=ops.interior_index,
                                breakpoints=frame.path.breakpoints())
        Y = res.V
        info["R"] = {"steps": res.step_count, "error": res.error_estimate}
    return Y, info
