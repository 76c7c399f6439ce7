"""Metrics, identity suites, scaling scans and phase extraction.

Every identity is evaluated on the interior of the truncated basis (states
away from the cutoffs, where the ladder algebra is exact).  Full-space
residuals are reported next to the interior ones as truncation diagnostics.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from ._linalg import relative_distance
from .geometry import TransportedFrame, displacement_path, shoelace_area, solid_angle
from .hamiltonians import (
    build_h0,
    build_h2d,
    build_rotating_hamiltonian,
    potential_operator,
    xi_coupling,
)
from .hilbert import BasisConfig, OperatorSet, PhysicalParams, build_operator_set, dagger
from .propagators import (
    _apply_axial,
    _gauge_columns,
    _landau_phase,
    axial_generator,
    axial_propagator,
    delta_path,
    displacement_factor,
    factorized_columns,
    lab_columns,
    magnetic_translation,
    perturbative_u_eps,
    propagate_columns,
    rotation_operator,
    solve_u_eps,
    solve_u_xi,
    xi_generator,
)

__all__ = [
    "projected_distance",
    "PhaseReport",
    "phase_extract",
    "IdentityReport",
    "ScalingResult",
    "fit_power_law",
    "identity_deviation",
    "isotropic_operator_set",
    "check_h1_forms",
    "check_h0_forms",
    "check_rotation_conjugation",
    "check_potential_conjugation",
    "check_gauge_relation",
    "check_splitting",
    "check_translation_action",
    "check_translation_commutation",
    "check_translation_phase",
    "check_full_factorization",
    "identity_suite",
    "holonomy_phases",
    "scan_response",
    "scaling_scan",
]


def projected_distance(A: np.ndarray, B: np.ndarray, projector=None) -> float:
    """``|P(A - B)P|_F / max(|PAP|_F, 1e-300)``.

    ``projector`` is ``None``, a square projector matrix, a column basis or an
    index array of basis states.
    """
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape != B.shape or A.ndim != 2:
        raise ValueError(f"dimension mismatch {A.shape} vs {B.shape}")
    if projector is not None:
        P = np.asarray(projector)
        if P.ndim == 2 and P.shape[0] != A.shape[0]:
            raise ValueError(f"projector shape {P.shape} does not match {A.shape}")
    return relative_distance(A, B, projector)


def identity_deviation(U: np.ndarray, projector=None) -> float:
    """RMS interior deviation ``|P(U - I)P|_F / sqrt(rank P)``."""
    U = np.asarray(U)
    I = np.eye(U.shape[0])
    if projector is None:
        return float(np.linalg.norm(U - I) / math.sqrt(U.shape[0]))
    P = np.asarray(projector)
    if P.ndim == 1:
        X = (U - I)[np.ix_(P, P)]
        return float(np.linalg.norm(X) / math.sqrt(P.size))
    X = P.conj().T @ (U - I) @ P
    return float(np.linalg.norm(X) / math.sqrt(max(np.linalg.matrix_rank(P), 1)))


# --------------------------------------------------------------------------
# phases
# --------------------------------------------------------------------------

@dataclass
class PhaseReport:
    """Phases ``arg <psi|U|psi>`` with the eigenvector residual of each state."""

    phases: np.ndarray
    residuals: np.ndarray
    threshold: float

    @property
    def flagged(self) -> np.ndarray:
        """States that are not approximate eigenvectors (phase not meaningful)."""
        return self.residuals > self.threshold

    @property
    def ok(self) -> bool:
        return not bool(np.any(self.flagged))


def phase_extract(Uop: np.ndarray, states: Sequence, threshold: float = 1e-4) -> PhaseReport:
    """Phase of ``Uop`` on each (normalized) state.

    The residual ``|U psi - e^{i phi} psi|`` measures how far the state is
    from an eigenvector; states above ``threshold`` are flagged, not rejected.
    """
    U = np.asarray(Uop)
    phases, res = [], []
    for psi in states:
        v = np.asarray(psi, dtype=complex).ravel()
        if v.shape[0] != U.shape[0]:
            raise ValueError(f"state of length {v.shape[0]} does not match operator {U.shape}")
        nrm = np.linalg.norm(v)
        if nrm == 0:
            raise ValueError("zero state vector")
        v = v / nrm
        w = U @ v
        z = np.vdot(v, w)
        phi = float(np.angle(z))
        phases.append(phi)
        res.append(float(np.linalg.norm(w - np.exp(1j * phi) * v)))
    return PhaseReport(np.array(phases), np.array(res), threshold)


# --------------------------------------------------------------------------
# identity reports
# --------------------------------------------------------------------------

@dataclass
class IdentityReport:
    """Residuals of one identity at the sampled times.

    The verdict is ``pass`` iff the largest interior residual is within
    ``tolerance``.
    """

    name: str
    times: list
    interior: list
    full: list
    tolerance: float
    detail: dict = field(default_factory=dict)

    @property
    def max_interior(self) -> float:
        return float(max(self.interior)) if self.interior else 0.0

    @property
    def passed(self) -> bool:
        return bool(np.all(np.isfinite(self.interior))) and self.max_interior <= self.tolerance

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["max_interior"] = self.max_interior
        d["verdict"] = self.verdict
        return d


def _full_distance(A, B) -> float:
    return relative_distance(np.asarray(A), np.asarray(B))


def _frame_times(frame: TransportedFrame, times) -> list[float]:
    out = [float(t) for t in times]
    if any(t < 0 or t > frame.duration * (1 + 1e-12) for t in out):
        raise ValueError("sample times must lie inside the frame")
    return out


def check_h1_forms(ops: OperatorSet, params: PhysicalParams, frame: TransportedFrame, times,
                   tol: float = 1e-8) -> IdentityReport:
    """Angular and kinematic forms of the rotating-frame Hamiltonian."""
    times = _frame_times(frame, times)
    inner, full = [], []
    for t in times:
        s = frame.signals(t)
        A = build_rotating_hamiltonian(ops, params, s, form="angular")
        B = build_rotating_hamiltonian(ops, params, s, form="kinematic")
        inner.append(projected_distance(A, B, ops.interior_index))
        full.append(_full_distance(A, B))
    return IdentityReport("H1 two-form", times, inner, full, tol)


def check_h0_forms(ops: OperatorSet, params: PhysicalParams, frame: TransportedFrame, times,
                   tol: float = 1e-8) -> IdentityReport:
    """Conjugated, closed and decomposed forms of ``H_0`` (largest pairwise residual)."""
    times = _frame_times(frame, times)
    inner, full = [], []
    pairs = {}
    for t in times:
        s = frame.signals(t)
        forms = {f: build_h0(ops, params, s, form=f) for f in ("conjugated", "closed", "decomposed")}
        worst_i = worst_f = 0.0
        for a, b in (("conjugated", "closed"), ("closed", "decomposed"), ("conjugated", "decomposed")):
            r = projected_distance(forms[a], forms[b], ops.interior_index)
            pairs.setdefault(f"{a}-{b}", []).append(r)
            worst_i = max(worst_i, r)
            worst_f = max(worst_f, _full_distance(forms[a], forms[b]))
        inner.append(worst_i)
        full.append(worst_f)
    return IdentityReport("H0 three-form", times, inner, full, tol, {"pairwise": pairs})


def isotropic_operator_set(params: PhysicalParams, cutoff: int, margin: int = 1) -> OperatorSet:
    """Origin-centred basis in which the angular momenta preserve the shells.

    With ``L = 0`` and the axial oscillator at half the cyclotron frequency
    the three modes share one length scale, so ``J`` commutes with
    ``N = n_a + n_b + n_c``.  The box ``(cutoff, cutoff, cutoff)`` holds every
    shell ``N <= cutoff`` completely, so rotations act exactly there.  The
    interior is ``N <= cutoff - margin``.
    """
    p = replace(params, L=0.0)
    basis = BasisConfig(cutoff, cutoff, cutoff, buffer=1, axial_ref_freq=0.5 * p.omega)
    ops = build_operator_set(p, basis)
    N = basis.occupations().sum(axis=1)
    return replace(ops, interior_index=np.flatnonzero(N <= cutoff - margin))


def _frame_coefficients(frame: TransportedFrame, t: float) -> np.ndarray:
    """``C[i, j] = e_i(t) . e_j(0)``."""
    return frame.at(t) @ frame.initial.T


def check_rotation_conjugation(params: PhysicalParams, frame: TransportedFrame, times,
                               cutoff: int = 4, tol: float = 1e-7) -> IdentityReport:
    """``R^{-1} (e_i(t).v) R = v_i`` for ``v`` in ``{x, p}``, in the isotropic basis."""
    ops = isotropic_operator_set(params, cutoff, margin=1)
    times = _frame_times(frame, times)
    inner, full = [], []
    for t in times:
        R = rotation_operator(ops, frame, t)
        C = _frame_coefficients(frame, t)
        wi = wf = 0.0
        for v in ((ops.x1, ops.x2, ops.x3), (ops.p1, ops.p2, ops.p3)):
            for i in range(3):
                lhs = dagger(R) @ sum(C[i, j] * v[j] for j in range(3)) @ R
                wi = max(wi, projected_distance(lhs, v[i], ops.interior_index))
                wf = max(wf, _full_distance(lhs, v[i]))
        inner.append(wi)
        full.append(wf)
    return IdentityReport("R vector conjugation", times, inner, full, tol, {"cutoff": cutoff})


def check_potential_conjugation(params: PhysicalParams, frame: TransportedFrame, times,
                                cutoff: int = 5, tol: float = 1e-7) -> IdentityReport:
    """``R^{-1} V(r.n - L) R = V(x_3 - L)`` in the isotropic basis."""
    degree = max(k for k, c in enumerate(params.potential_coeffs) if c != 0)
    ops = isotropic_operator_set(params, cutoff, margin=degree)
    times = _frame_times(frame, times)
    E0 = frame.initial
    I = ops.identity
    x = (ops.x1, ops.x2, ops.x3)
    rhs = potential_operator(ops, params, ops.x3 - params.L * I)
    inner, full = [], []
    for t in times:
        R = rotation_operator(ops, frame, t)
        n = E0 @ frame.path.evaluate(t)[0]
        u = sum(n[j] * x[j] for j in range(3)) - params.L * I
        lhs = dagger(R) @ potential_operator(ops, params, u) @ R
        inner.append(projected_distance(lhs, rhs, ops.interior_index))
        full.append(_full_distance(lhs, rhs))
    return IdentityReport("V conjugation", times, inner, full, tol, {"cutoff": cutoff})


def _column_distance(A: np.ndarray, B: np.ndarray, rows) -> tuple[float, float]:
    num = np.linalg.norm(A[rows] - B[rows])
    den = max(np.linalg.norm(B[rows]), 1e-300)
    full = np.linalg.norm(A - B) / max(np.linalg.norm(B), 1e-300)
    return float(num / den), float(full)


def _sparse_ops(ops_or_basis, params) -> OperatorSet:
    if isinstance(ops_or_basis, OperatorSet):
        if ops_or_basis.sparse:
            return ops_or_basis
        ops_or_basis = ops_or_basis.basis
    return build_operator_set(params, ops_or_basis, sparse=True)


def _h_init(params: PhysicalParams, frame: TransportedFrame) -> float:
    gap = max(params.axial_gap, params.omega)
    return min(2 * math.pi / gap / 4.0, 0.05 / max(frame.path.max_speed(), 1e-300))


def _u0_columns(s: OperatorSet, params, frame, t, tol):
    """``g(0)^{-1} P`` and ``U_0(t) g(0)^{-1} P`` for the interior columns ``P``."""
    W = _gauge_columns(s, params, frame.signals(0.0), s.interior_states(), inverse=True)
    res = propagate_columns(lambda x: build_h0(s, params, frame.signals(x), form="closed").tocsr(),
                            W, t, tol=tol, h_init=_h_init(params, frame), rows=s.interior_index,
                            breakpoints=frame.path.breakpoints())
    return W, res


def check_gauge_relation(ops_or_basis, params: PhysicalParams, frame: TransportedFrame, t: float,
                         tol: float = 1e-6, integ_tol: float = 1e-8) -> IdentityReport:
    """``U_1(t) = g(t) U_0(t) g(0)^{-1}`` on the interior columns.

    ``U_1`` and ``U_0`` are integrated from ``H_1`` and the closed form of
    ``H_0`` by column propagation.
    """
    s = _sparse_ops(ops_or_basis, params)
    idx = s.interior_index
    U1 = propagate_columns(lambda x: build_rotating_hamiltonian(s, params, frame.signals(x)).tocsr(),
                           s.interior_states(), t, tol=integ_tol, h_init=_h_init(params, frame),
                           rows=idx, breakpoints=frame.path.breakpoints())
    _, U0 = _u0_columns(s, params, frame, t, integ_tol)
    G = _gauge_columns(s, params, frame.signals(t), U0.V)
    inner, full = _column_distance(G, U1.V, idx)
    detail = {"oracle_error": max(U1.error_estimate, U0.error_estimate),
              "steps": U1.step_count + U0.step_count}
    return IdentityReport("gauge relation U1 = g U0 g(0)^-1", [float(t)], [inner], [full], tol, detail)


def check_splitting(ops_or_basis, params: PhysicalParams, frame: TransportedFrame, t: float,
                    tol: float = 1e-6, integ_tol: float = 1e-8) -> IdentityReport:
    """``U_0 = U_1d U_h`` with ``U_h`` integrated from ``H_2d + H_xi(t)``."""
    s = _sparse_ops(ops_or_basis, params)
    idx = s.interior_index
    sl = s.landau_slice
    W, U0 = _u0_columns(s, params, frame, t, integ_tol)
    wc, Vc = np.linalg.eigh(axial_generator(s))
    xic = s.axial_factors["xi"]

    def H(x):
        sig = frame.signals(x)
        O, q = xi_coupling(sl, params, sig)
        Uc = (Vc * np.exp(-1j * x * wc)) @ Vc.conj().T
        return xi_generator(s, O, q, Uc.conj().T @ xic @ Uc, planar=build_h2d(sl, params, sig))

    F = propagate_columns(H, W, t, tol=integ_tol, h_init=_h_init(params, frame), rows=idx,
                          breakpoints=frame.path.breakpoints())
    lhs = _apply_axial(s, axial_propagator(s, params, frame, t, space="axial"), F.V)
    inner, full = _column_distance(lhs, U0.V, idx)
    detail = {"oracle_error": max(F.error_estimate, U0.error_estimate)}
    return IdentityReport("splitting U0 = U1d U_h", [float(t)], [inner], [full], tol, detail)


def check_translation_action(ops: OperatorSet, params: PhysicalParams, frame: TransportedFrame, times,
                             tol: float = 1e-8) -> IdentityReport:
    """``M^{-1} x_mu M = x_mu + d_mu`` on the planar slice."""
    sl = ops.landau_slice
    dpath = displacement_path(frame, params.L)
    times = _frame_times(frame, times)
    inner, full = [], []
    for t in times:
        M, _ = magnetic_translation(sl, params, dpath, t)
        d1, d2, _ = dpath.at(t)
        wi = wf = 0.0
        for x, d in ((sl.x1, d1), (sl.x2, d2)):
            lhs = dagger(M) @ x @ M
            rhs = x + d * sl.identity
            wi = max(wi, projected_distance(lhs, rhs, sl.interior_index))
            wf = max(wf, _full_distance(lhs, rhs))
        inner.append(wi)
        full.append(wf)
    return IdentityReport("M translation action", times, inner, full, tol)


def check_translation_commutation(ops: OperatorSet, params: PhysicalParams, frame: TransportedFrame,
                                  times, tol: float = 1e-10) -> IdentityReport:
    """``[M, e^{-i H_B t}] = 0``: eta-generated and pi-generated unitaries commute."""
    sl = ops.landau_slice
    dpath = displacement_path(frame, params.L)
    UB = _landau_phase(sl)
    times = _frame_times(frame, times)
    inner, full = [], []
    for t in times:
        M, _ = magnetic_translation(sl, params, dpath, t)
        A, B = M @ UB(t), UB(t) @ M
        inner.append(projected_distance(A, B, sl.interior_index))
        full.append(_full_distance(A, B))
    return IdentityReport("[M, exp(-i H_B t)] = 0", times, inner, full, tol)


def check_translation_phase(params: PhysicalParams, frame: TransportedFrame, times,
                            tol: float = 1e-8, refine: int = 4) -> IdentityReport:
    """``beta = -eB S_d`` against the shoelace area of the sampled ``d`` curve.

    The polygon through ``d`` at ``refine`` points per frame interval, closed
    by the chord, is an independent estimate of the signed area (only ``d``
    is sampled, never ``S_d``).  The chord polygon undercounts a curved arc
    by ``O(h^2)``, hence the refinement.  The residual is absolute.
    """
    dpath = displacement_path(frame, params.L)
    times = _frame_times(frame, times)
    inner = []
    for t in times:
        _, beta = magnetic_translation_phase(params, dpath, t)
        k = int(np.searchsorted(dpath.grid, t, side="right"))
        nodes = dpath.grid[:k]
        sub = (nodes[:-1, None] + np.diff(nodes)[:, None] * np.arange(refine)[None, :] / refine).ravel()
        ts = np.append(np.append(sub, nodes[-1:]), t) if nodes.size else np.array([t])
        pts = np.array([dpath.at(s)[:2] for s in ts])
        oracle = -params.e * params.B * shoelace_area(pts[:, 0], pts[:, 1])
        inner.append(abs(beta - oracle))
    return IdentityReport("beta = -eB S_d (shoelace)", times, inner, list(inner), tol)


def magnetic_translation_phase(params: PhysicalParams, dpath, t: float) -> tuple[tuple, float]:
    """``(d(t), beta(t))`` without building the translation matrix."""
    d1, d2, Sd = dpath.at(t)
    return (d1, d2), -params.e * params.B * Sd


def check_full_factorization(ops_or_basis, params: PhysicalParams, frame: TransportedFrame, t: float,
                             tol: float = 1e-4, integ_tol: float = 1e-6,
                             mode: str = "full") -> IdentityReport:
    """Factorized ``U(t)`` against the lab-frame oracle on the interior columns.

    Both sides act on the interior columns only (column propagation), which
    allows bases large enough for the lab oracle to converge.
    """
    s = _sparse_ops(ops_or_basis, params)
    idx = s.interior_index
    lab = lab_columns(s, params, frame, t, tol=integ_tol)
    fac, info = factorized_columns(s, params, frame, t, tol=integ_tol, mode=mode)
    inner, full = _column_distance(fac, lab.V, idx)
    info = {k: v for k, v in info.items()}
    info["lab"] = {"steps": lab.step_count, "error": lab.error_estimate}
    info["basis"] = list(s.basis.cutoffs)
    return IdentityReport(f"{mode} factorization vs lab oracle", [float(t)], [inner], [full], tol, info)


def identity_suite(config, names: Sequence[str] | None = None,
                   progress: Callable[[str], None] | None = None) -> list[IdentityReport]:
    """Run the identity suite of a scenario (all identities by default)."""
    params = config.physical
    path = config.build_path()
    frame = config.frame(path=path)
    times = config.sample_times(path)
    t_end = times[-1]
    ops = build_operator_set(params, config.basis)
    tol = config.integrator.tol
    oracle_basis = config.oracle_basis or config.basis
    checks = {
        "h1_forms": lambda: check_h1_forms(ops, params, frame, times),
        "h0_forms": lambda: check_h0_forms(ops, params, frame, times),
        "rotation_conjugation": lambda: check_rotation_conjugation(params, frame, times),
        "potential_conjugation": lambda: check_potential_conjugation(params, frame, times),
        "gauge_relation": lambda: check_gauge_relation(config.basis, params, frame, t_end, integ_tol=tol),
        "splitting": lambda: check_splitting(config.basis, params, frame, t_end, integ_tol=tol),
        "translation_action": lambda: check_translation_action(ops, params, frame, times),
        "translation_commutation": lambda: check_translation_commutation(ops, params, frame, times),
        "translation_phase": lambda: check_translation_phase(params, frame, times),
        "full_factorization": lambda: check_full_factorization(
            oracle_basis, params, frame, t_end, integ_tol=max(tol, 1e-7),
            mode="full" if config.run.mode == "adiabatic" else config.run.mode),
    }
    selected = list(checks) if names is None else list(names)
    unknown = sorted(set(selected) - set(checks))
    if unknown:
        raise ValueError(f"unknown identities {unknown}")
    out = []
    for name in selected:
        if progress:
            progress(name)
        out.append(checks[name]())
    return out


# --------------------------------------------------------------------------
# holonomy
# --------------------------------------------------------------------------

def holonomy_phases(params: PhysicalParams, frame: TransportedFrame, cutoff: int = 3,
                    m_values=(-2, -1, 0, 1, 2), t: float | None = None) -> dict:
    """Phases of ``R(t)`` on ``J_3`` eigenstates against ``-m Omega``.

    Uses :func:`isotropic_operator_set`; the states are ``|n_a, n_b, 0>`` with
    ``m = n_a - n_b`` (``J_3 = a^dagger a - b^dagger b`` for ``e < 0``) and the
    lowest shell for each ``m``.  ``Omega`` is the
    solid angle of the closed loop (or ``None`` for an open path).
    """
    ops = isotropic_operator_set(params, cutoff, margin=1)
    t = frame.duration if t is None else t
    R = rotation_operator(ops, frame, t)
    states = []
    for m in m_values:
        na, nb = (m, 0) if m >= 0 else (0, -m)
        if na + nb > cutoff - 1:
            raise ValueError(f"m={m} needs cutoff >= {abs(m) + 1}")
        v = np.zeros(ops.dim, dtype=complex)
        v[ops.basis.index(na, nb, 0)] = 1.0
        states.append(v)
    rep = phase_extract(R, states)
    closed = frame.path.is_closed() and abs(t - frame.duration) <= 1e-9 * max(1.0, t)
    omega = solid_angle(frame.path) if closed else None
    rows = []
    for m, phi, r in zip(m_values, rep.phases, rep.residuals):
        row = {"m": int(m), "phase": float(phi), "eigen_residual": float(r)}
        if omega is not None:
            expected = float(np.angle(np.exp(-1j * m * omega)))
            row["expected"] = expected
            row["error"] = float(abs(np.angle(np.exp(1j * (phi - expected)))))
        rows.append(row)
    return {"omega": omega, "t": float(t), "cutoff": cutoff, "rows": rows, "flagged": bool(not rep.ok),
            "holonomy_angle": float(frame.holonomy_angle())}


# --------------------------------------------------------------------------
# scaling scans
# --------------------------------------------------------------------------

@dataclass
class ScalingResult:
    """Power-law fit ``response ~ value^exponent`` of a scan."""

    control: str
    response: str
    values: list
    responses: list
    exponent: float
    intercept: float
    fit_residual: float
    expected: float | None = None
    band: float | None = None
    monotone: bool = True

    @property
    def within_band(self) -> bool | None:
        if self.expected is None or self.band is None:
            return None
        return bool(abs(self.exponent - self.expected) <= self.band)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["within_band"] = self.within_band
        return d


def fit_power_law(x, y) -> tuple[float, float, float]:
    """Least-squares line through ``(log x, log y)``.

    Returns ``(exponent, intercept, rms residual)``; deterministic.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size or x.size < 2:
        raise ValueError("need at least two matching points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(resid**2)))


def _slice_ops(params: PhysicalParams, basis: BasisConfig) -> OperatorSet:
    return build_operator_set(params, basis).landau_slice


def scan_response(config, response: str, control: str, value: float, t_fraction: float = 1.0,
                  tol: float | None = None) -> float:
    """One scan point: the response norm for ``control = value``.

    ``u_xi``: interior ``|U_xi - I|`` (brute-force ``U_2d``).
    ``utilde_eps``: interior ``|Ut_eps - I|`` on the planar slice, maximized
    over the last cyclotron period before the end time.  ``delta`` carries a
    boundary term rotating at ``omega``, so its value at one instant depends
    on the erratic phase ``omega t``; the envelope does not.
    ``u_eps_first_order``: interior ``|U_eps - U_eps_1st|`` on the planar
    slice, with ``U_eps`` from its interaction-picture equation.
    The end time is ``t_fraction * T1``, clipped to the path duration.
    """
    tol = config.integrator.tol if tol is None else tol
    params = config.physical
    if control == "stiffness_k":
        params = replace(params, potential=(0.5 * value, 0.0, 0.0))
    elif control == "rotation_eps":
        params = replace(params, eps=value)
    else:
        raise ValueError(f"unknown control {control!r}")
    path = config.path.build(params.eps)
    frame = config.frame(path=path)
    t = min(t_fraction / params.eps, path.duration)
    if response == "u_xi":
        ops = build_operator_set(params, config.basis)
        U = solve_u_xi(ops, params, frame, "brute", [0.0, t], tol=tol).final
        return identity_deviation(U, ops.interior_index)
    sl = _slice_ops(params, config.basis)
    if response == "utilde_eps":
        dlt = delta_path(frame, params, t_end=t)
        period = 2 * math.pi / params.omega
        window = np.linspace(max(t - period, 0.0), t, 17)
        return max(identity_deviation(displacement_factor(sl, params, frame, s, dlt)[0], sl.interior_index)
                   for s in window)
    if response == "u_eps_first_order":
        dpath = displacement_path(frame, params.L)
        Ue = solve_u_eps(sl, params, frame, [0.0, t], dpath, tol=tol).final
        _, U1 = perturbative_u_eps(sl, params, frame, dpath, t)
        return identity_deviation(Ue - U1 + np.eye(sl.dim), sl.interior_index)
    raise ValueError(f"unknown response {response!r}")


def scaling_scan(config, control: str, values, response: str = "u_xi", t_fraction: float = 1.0,
                 expected: float | None = None, band: float | None = None, threads: int = 1,
                 tol: float | None = None) -> ScalingResult:
    """Response norms over ``values`` of ``control`` with a log-log fit.

    Points run concurrently on ``threads`` workers and are merged by index,
    so the result does not depend on the thread count.
    """
    vals = [float(v) for v in values]
    if len(vals) < 4:
        raise ValueError("a scaling scan needs at least 4 control values")
    if np.any(np.diff(vals) <= 0):
        raise ValueError("control values must increase strictly")
    if vals[-1] / vals[0] < 10 * (1 - 1e-12):
        raise ValueError("control values must span at least one decade")

    def point(v):
        return scan_response(config, response, control, v, t_fraction, tol)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            ys = list(pool.map(point, vals))
    else:
        ys = [point(v) for v in vals]
    d = np.diff(ys)
    monotone = bool(np.all(d > 0) or np.all(d < 0))
    slope, icpt, res = fit_power_law(vals, ys)
    return ScalingResult(control, response, vals, [float(y) for y in ys], slope, icpt, res,
                         expected, band, monotone)
