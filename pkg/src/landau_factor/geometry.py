"""Curves on the unit sphere, parallel-transported frames and path functionals.

Every path family exposes ``derivatives(t, side)`` returning ``n``, its first
and second time derivatives.  ``side`` selects the one-sided limit at corner
times (``+1`` right limit, ``-1`` left limit); away from corners it is ignored.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate
from scipy.interpolate import make_interp_spline

__all__ = [
    "PathError",
    "FrameDriftError",
    "QuadratureError",
    "SpherePath",
    "PrecessingCone",
    "GreatCircleArc",
    "PolarTriangle",
    "SampledWaypoints",
    "FrameSignals",
    "TransportedFrame",
    "DisplacementPath",
    "evaluate_path",
    "initial_frame",
    "transport_frame",
    "solid_angle",
    "displacement_path",
    "shoelace_area",
    "wrap_angle",
]


class PathError(ValueError):
    """Invalid path construction or evaluation outside the path's domain."""


class FrameDriftError(RuntimeError):
    """Orthonormality of the transported frame drifted beyond tolerance."""


class QuadratureError(RuntimeError):
    """A path integral could not be evaluated to the requested accuracy."""


def _unit(v):
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise PathError("zero vector cannot be normalized")
    return v / norm


def _any_perpendicular(u):
    u = _unit(u)
    trial = np.array([1.0, 0.0, 0.0]) if abs(u[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    return _unit(trial - u * np.dot(trial, u))


def wrap_angle(x, period=2 * math.pi):
    """Wrap ``x`` into ``(-period/2, period/2]``."""
    half = period / 2
    y = math.fmod(x + half, period)
    if y <= 0.0:
        y += period
    y -= half
    # snap values one rounding error above the lower edge onto the upper edge
    if y <= -half + 1e-12 * period:
        y += period
    return y


class SpherePath:
    """Base class for unit-vector curves ``n(t)``, ``0 <= t <= duration``."""

    duration: float

    def breakpoints(self) -> tuple[float, ...]:
        """Interior times where the first derivative may jump."""
        return ()

    def derivatives(self, t: float, side: int = 1):
        raise NotImplementedError

    def evaluate(self, t: float, side: int = 1):
        n, ndot, _ = self.derivatives(t, side)
        return n, ndot

    def speed(self, t: float, side: int = 1) -> float:
        return float(np.linalg.norm(self.derivatives(t, side)[1]))

    def max_speed(self) -> float:
        ts = np.linspace(0.0, self.duration, 513)
        return max(self.speed(t) for t in ts)

    def segments(self) -> list[tuple[float, float]]:
        edges = [0.0, *self.breakpoints(), self.duration]
        return list(zip(edges[:-1], edges[1:]))

    def _check_time(self, t):
        slack = 1e-12 * max(1.0, self.duration)
        if not (-slack <= t <= self.duration + slack):
            raise PathError(f"t={t!r} outside [0, {self.duration!r}]")
        return min(max(float(t), 0.0), self.duration)

    def length(self) -> float:
        """Spherical arc length of the whole curve."""
        total = 0.0
        for lo, hi in self.segments():
            val, _ = integrate.quad(lambda s: self.speed(s, 1), lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)
            total += val
        return total

    def speed_sq_integral(self, t: float) -> float:
        """``int_0^t |ndot|^2 dtau``."""
        t = self._check_time(t)
        total = 0.0
        for lo, hi in self.segments():
            if lo >= t:
                break
            hi = min(hi, t)
            val, _ = integrate.quad(lambda s: self.speed(s, 1) ** 2, lo, hi, epsabs=1e-15, epsrel=1e-12, limit=200)
            total += val
        return total

    def is_closed(self, atol: float = 1e-9) -> bool:
        n0 = self.evaluate(0.0)[0]
        n1 = self.evaluate(self.duration, -1)[0]
        return bool(np.linalg.norm(n1 - n0) <= atol)


@dataclass(frozen=True)
class PrecessingCone(SpherePath):
    """Uniform precession about the z axis at polar angle ``theta``.

    ``n(t) = (sin(theta) cos(eps t), sin(theta) sin(eps t), cos(theta))``.
    The default duration is one period ``2 pi / eps``.
    """

    theta: float
    eps: float
    duration: float = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.eps <= 0:
            raise PathError("eps must be positive")
        if self.duration is None:
            object.__setattr__(self, "duration", 2 * math.pi / self.eps)
        if self.duration <= 0:
            raise PathError("duration must be positive")

    def derivatives(self, t, side=1):
        t = self._check_time(t)
        st, ct = math.sin(self.theta), math.cos(self.theta)
        phi = self.eps * t
        cp, sp = math.cos(phi), math.sin(phi)
        n = np.array([st * cp, st * sp, ct])
        ndot = self.eps * st * np.array([-sp, cp, 0.0])
        nddot = -self.eps**2 * st * np.array([cp, sp, 0.0])
        return n, ndot, nddot

    def speed(self, t, side=1):
        return abs(self.eps * math.sin(self.theta))

    def max_speed(self):
        return abs(self.eps * math.sin(self.theta))


@dataclass(frozen=True)
class GreatCircleArc(SpherePath):
    """Rotation of ``start`` about ``axis`` through ``arc`` radians at rate ``eps``."""

    axis: tuple
    arc: float
    eps: float
    start: tuple = None  # type: ignore[assignment]
    duration: float = field(init=False)

    def __post_init__(self):
        if self.eps <= 0 or self.arc <= 0:
            raise PathError("arc and eps must be positive")
        u = _unit(self.axis)
        start = _any_perpendicular(u) if self.start is None else _unit(self.start)
        if abs(np.dot(start, u)) > 1e-12:
            raise PathError("start must be perpendicular to the rotation axis")
        object.__setattr__(self, "axis", tuple(u))
        object.__setattr__(self, "start", tuple(start))
        object.__setattr__(self, "duration", self.arc / self.eps)

    def derivatives(self, t, side=1):
        t = self._check_time(t)
        u, n0 = np.array(self.axis), np.array(self.start)
        w = np.cross(u, n0)
        c, s = math.cos(self.eps * t), math.sin(self.eps * t)
        n = n0 * c + w * s
        ndot = self.eps * (-n0 * s + w * c)
        return n, ndot, -self.eps**2 * n

    def speed(self, t, side=1):
        return self.eps

    def max_speed(self):
        return self.eps


@dataclass(frozen=True)
class PolarTriangle(SpherePath):
    """Closed loop: pole -> down meridian phi=0 to colatitude ``theta`` ->
    along the latitude circle through ``dphi`` -> back up to the pole.

    Every leg is traversed at constant arc speed ``eps``.  Encloses the
    solid angle ``dphi (1 - cos theta)``, counterclockwise about +z.
    """

    theta: float
    dphi: float
    eps: float
    duration: float = field(init=False)

    def __post_init__(self):
        if not (0.0 < self.theta < math.pi):
            raise PathError("theta must lie in (0, pi)")
        if self.eps <= 0 or self.dphi <= 0:
            raise PathError("eps and dphi must be positive")
        t1 = self.theta / self.eps
        t2 = t1 + self.dphi * math.sin(self.theta) / self.eps
        object.__setattr__(self, "duration", t2 + self.theta / self.eps)

    def breakpoints(self):
        t1 = self.theta / self.eps
        return (t1, t1 + self.dphi * math.sin(self.theta) / self.eps)

    def derivatives(self, t, side=1):
        t = self._check_time(t)
        eps = self.eps
        t1, t2 = self.breakpoints()
        leg = 0 if (t < t1 or (t == t1 and side < 0)) else 1 if (t < t2 or (t == t2 and side < 0)) else 2
        if leg == 0:
            v = eps * t
            n = np.array([math.sin(v), 0.0, math.cos(v)])
            ndot = eps * np.array([math.cos(v), 0.0, -math.sin(v)])
            return n, ndot, -eps**2 * n
        if leg == 1:
            st, ct = math.sin(self.theta), math.cos(self.theta)
            phi = eps * (t - t1) / st
            cp, sp = math.cos(phi), math.sin(phi)
            n = np.array([st * cp, st * sp, ct])
            ndot = eps * np.array([-sp, cp, 0.0])
            nddot = -(eps**2 / st) * np.array([cp, sp, 0.0])
            return n, ndot, nddot
        v = self.theta - eps * (t - t2)
        cp, sp = math.cos(self.dphi), math.sin(self.dphi)
        n = np.array([math.sin(v) * cp, math.sin(v) * sp, math.cos(v)])
        ndot = -eps * np.array([math.cos(v) * cp, math.cos(v) * sp, -math.sin(v)])
        return n, ndot, -eps**2 * n

    def speed(self, t, side=1):
        return self.eps

    def max_speed(self):
        return self.eps


@dataclass(frozen=True)
class SampledWaypoints(SpherePath):
    """Spline through unit-vector waypoints, projected back onto the sphere.

    Derivatives are those of the projected interpolant, so the path is only
    as faithful as the waypoint density allows.
    """

    times: tuple
    points: tuple
    order: int = 3
    duration: float = field(init=False)

    def __post_init__(self):
        ts = np.asarray(self.times, dtype=float)
        pts = np.asarray(self.points, dtype=float)
        if ts.ndim != 1 or pts.shape != (ts.size, 3):
            raise PathError("need matching (time, 3-vector) waypoints")
        if ts.size < 4:
            raise PathError("at least 4 waypoints are required")
        if self.order not in (3, 5) or ts.size <= self.order:
            raise PathError("interpolation order must be 3 or 5 and below the waypoint count")
        if np.any(np.diff(ts) <= 0) or ts[0] != 0.0:
            raise PathError("waypoint times must start at 0 and increase strictly")
        pts = pts / np.linalg.norm(pts, axis=1)[:, None]
        object.__setattr__(self, "times", tuple(ts))
        object.__setattr__(self, "points", tuple(map(tuple, pts)))
        object.__setattr__(self, "duration", float(ts[-1]))

    @cached_property
    def _spline(self):
        return make_interp_spline(np.asarray(self.times), np.asarray(self.points), k=self.order)

    def derivatives(self, t, side=1):
        t = self._check_time(t)
        sp = self._spline
        s, s1, s2 = sp(t), sp(t, 1), sp(t, 2)
        r = np.linalg.norm(s)
        n = s / r
        rdot = n @ s1
        ndot = (s1 - n * rdot) / r
        nddot = (s2 - ndot * rdot - n * (ndot @ s1 + n @ s2)) / r - ndot * (rdot / r)
        return n, ndot, nddot


def evaluate_path(path: SpherePath, t: float):
    """Return ``(n, ndot)`` of ``path`` at time ``t``."""
    return path.evaluate(t)


def initial_frame(path: SpherePath, initial_e1=None) -> np.ndarray:
    """Rows ``e1(0), e2(0), e3(0)`` with ``e1(0) = n'(0)`` and ``e3(0) = n(0)``."""
    n0, ndot0 = path.evaluate(0.0)
    if initial_e1 is None:
        speed = np.linalg.norm(ndot0)
        if speed == 0.0:
            raise PathError("|ndot(0)| = 0: supply an explicit initial e1")
        e1 = ndot0 / speed
    else:
        e1 = np.asarray(initial_e1, dtype=float)
        e1 = _unit(e1 - n0 * np.dot(e1, n0))
    return np.array([e1, np.cross(n0, e1), n0])


@dataclass(frozen=True)
class FrameSignals:
    """Frame-derived scalars at a single time."""

    t: float
    n: np.ndarray
    ndot: np.ndarray
    frame: np.ndarray  # rows e1, e2, e3
    alpha1: float
    alpha2: float
    dalpha1: float
    dalpha2: float
    ndot_sq: float

    @property
    def alpha(self) -> complex:
        return complex(self.alpha1, self.alpha2)

    @property
    def dalpha(self) -> complex:
        return complex(self.dalpha1, self.dalpha2)


def _rk4_step(path, E, t, h):
    """One classical RK4 step of ``e_i' = (n x ndot) x e_i`` inside a smooth segment."""

    def rhs(s, side, M):
        n, nd = path.evaluate(s, side)
        w = np.cross(n, nd)
        return np.cross(w, M)

    k1 = rhs(t, 1, E)
    k2 = rhs(t + h / 2, 1, E + h / 2 * k1)
    k3 = rhs(t + h / 2, 1, E + h / 2 * k2)
    k4 = rhs(t + h, -1, E + h * k3)
    return E + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


@dataclass
class TransportedFrame:
    """Parallel-transported frame sampled on ``grid``.

    ``alpha1``/``alpha2`` hold ``ndot . e_mu`` at the nodes (right limits at
    corners).  ``at`` and ``signals`` reach off-grid times by a partial RK4
    step from the preceding node.
    """

    path: SpherePath
    grid: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    e3: np.ndarray
    alpha1: np.ndarray
    alpha2: np.ndarray
    drift: float

    @property
    def alpha(self) -> np.ndarray:
        return self.alpha1 + 1j * self.alpha2

    @property
    def duration(self) -> float:
        return float(self.grid[-1])

    @property
    def initial(self) -> np.ndarray:
        return np.array([self.e1[0], self.e2[0], self.e3[0]])

    def body(self, vec) -> np.ndarray:
        """Components of a lab vector along ``e_i(0)``."""
        return self.initial @ np.asarray(vec, dtype=float)

    def _node(self, t, side):
        g = self.grid
        slack = 1e-12 * max(1.0, g[-1])
        if t < g[0] - slack or t > g[-1] + slack:
            raise PathError(f"t={t!r} outside frame grid [{g[0]}, {g[-1]}]")
        t = min(max(t, g[0]), g[-1])
        k = int(np.searchsorted(g, t, side="right")) - 1
        k = min(max(k, 0), g.size - 1)
        return k, t

    def at(self, t: float, side: int = 1) -> np.ndarray:
        k, t = self._node(t, side)
        E = np.array([self.e1[k], self.e2[k], self.e3[k]])
        h = t - self.grid[k]
        if h > 0.0:
            E = _rk4_step(self.path, E, self.grid[k], h)
        return E

    def signals(self, t: float, side: int = 1) -> FrameSignals:
        E = self.at(t, side)
        n, nd, ndd = self.path.derivatives(t, side)
        return FrameSignals(
            t=float(t),
            n=n,
            ndot=nd,
            frame=E,
            alpha1=float(nd @ E[0]),
            alpha2=float(nd @ E[1]),
            dalpha1=float(ndd @ E[0]),
            dalpha2=float(ndd @ E[1]),
            ndot_sq=float(nd @ nd),
        )

    @cached_property
    def _interval_data(self):
        """Per-interval one-sided and midpoint samples of ``alpha`` and ``alpha-dot``."""
        g = self.grid
        m = g.size - 1
        out = {key: np.empty(m, dtype=complex) for key in ("aL", "aM", "aR", "daL", "daM", "daR")}
        out["nsqL"], out["nsqM"], out["nsqR"] = np.empty(m), np.empty(m), np.empty(m)
        for k in range(m):
            tl, tr = g[k], g[k + 1]
            for tag, s, side in (("L", tl, 1), ("M", 0.5 * (tl + tr), 1), ("R", tr, -1)):
                if tag == "M":
                    sig = self.signals(s, side)
                else:
                    j = k if tag == "L" else k + 1
                    E = np.array([self.e1[j], self.e2[j], self.e3[j]])
                    n, nd, ndd = self.path.derivatives(s, side)
                    sig = FrameSignals(s, n, nd, E, nd @ E[0], nd @ E[1], ndd @ E[0], ndd @ E[1], nd @ nd)
                out["a" + tag][k] = sig.alpha
                out["da" + tag][k] = sig.dalpha
                out["nsq" + tag][k] = sig.ndot_sq
        return out

    def holonomy_angle(self) -> float:
        """Rotation angle of ``e1`` about ``e3(0)`` accumulated over the grid.

        Positive when ``e1(T)`` has turned from ``e1(0)`` towards ``e2(0)``.
        """
        e1T = self.e1[-1]
        return math.atan2(float(e1T @ self.e2[0]), float(e1T @ self.e1[0]))

    def orthonormality_residual(self) -> float:
        E = np.stack([self.e1, self.e2, self.e3], axis=1)
        gram = np.einsum("kia,kja->kij", E, E)
        return float(np.max(np.abs(gram - np.eye(3))))

    def transport_residual(self) -> float:
        """Max of ``|e1-dot . e2|`` over nodes, using the transport ODE."""
        worst = 0.0
        for k, t in enumerate(self.grid):
            n, nd = self.path.evaluate(t, 1)
            de1 = np.cross(np.cross(n, nd), self.e1[k])
            worst = max(worst, abs(float(de1 @ self.e2[k])))
        return worst


def _build_grid(path: SpherePath, grid, h_max: float) -> np.ndarray:
    anchors = {0.0, float(path.duration), *map(float, path.breakpoints())}
    if grid is not None:
        g = np.asarray(grid, dtype=float)
        if g.size and (g.min() < 0 or g.max() > path.duration * (1 + 1e-12)):
            raise PathError("grid must lie inside [0, duration]")
        anchors.update(min(float(x), path.duration) for x in g)
    anchors = np.array(sorted(anchors))
    nodes = [anchors[:1]]
    for lo, hi in zip(anchors[:-1], anchors[1:]):
        if hi - lo <= 1e-14 * max(1.0, path.duration):
            continue
        n = max(1, math.ceil((hi - lo) / h_max - 1e-9))
        nodes.append(np.linspace(lo, hi, n + 1)[1:])
    return np.concatenate(nodes)


def transport_frame(
    path: SpherePath,
    grid=None,
    tol: float = 1e-10,
    step: float | None = None,
    initial_e1=None,
) -> TransportedFrame:
    """Integrate ``e_i' = (n x ndot) x e_i`` with classical RK4.

    Parameters
    ----------
    path : SpherePath
    grid : array_like, optional
        Times that must appear as nodes.  Corners and both end points are
        always included.
    tol : float
        Maximum accepted orthonormality drift; larger drift raises
        :class:`FrameDriftError`.  The frame is never re-orthonormalized.
    step : float, optional
        Maximum internal step.  Defaults to ``1e-3 / max|ndot|``.
    initial_e1 : array_like, optional
        Required when ``ndot(0) = 0``.
    """
    E = initial_frame(path, initial_e1)
    vmax = path.max_speed()
    h_max = step if step is not None else (1e-3 / vmax if vmax > 0 else path.duration)
    h_max = min(h_max, path.duration)
    nodes = _build_grid(path, grid, h_max)
    frames = np.empty((nodes.size, 3, 3))
    frames[0] = E
    for k in range(nodes.size - 1):
        E = _rk4_step(path, E, nodes[k], nodes[k + 1] - nodes[k])
        frames[k + 1] = E
    ndots = np.array([path.evaluate(t, 1 if k < nodes.size - 1 else -1)[1] for k, t in enumerate(nodes)])
    alpha1 = np.einsum("ka,ka->k", ndots, frames[:, 0])
    alpha2 = np.einsum("ka,ka->k", ndots, frames[:, 1])
    frame = TransportedFrame(path, nodes, frames[:, 0].copy(), frames[:, 1].copy(), frames[:, 2].copy(), alpha1, alpha2, 0.0)
    ns = np.array([path.evaluate(t, 1)[0] for t in nodes])
    drift = max(frame.orthonormality_residual(), float(np.max(np.abs(frames[:, 2] - ns))))
    frame.drift = drift
    if drift > tol:
        raise FrameDriftError(f"frame drift {drift:.3e} exceeds tol {tol:.1e}")
    return frame


def _choose_pole(path: SpherePath) -> np.ndarray:
    ts = np.linspace(0.0, path.duration, 1025)
    pts = np.array([path.evaluate(t)[0] for t in ts])
    candidates = [pts[0], -pts[0], np.eye(3)[0], np.eye(3)[1], np.eye(3)[2], -np.eye(3)[0], -np.eye(3)[1], -np.eye(3)[2]]
    mean = pts.mean(axis=0)
    if np.linalg.norm(mean) > 1e-6:
        candidates.insert(0, mean / np.linalg.norm(mean))
    return max(candidates, key=lambda u: float(np.min(pts @ u)))


def solid_angle(path: SpherePath, closure_tol: float = 1e-9) -> float:
    """Signed solid angle of a closed path, wrapped to ``(-2 pi, 2 pi]``.

    Uses the monopole line integral ``oint u.(n x dn) / (1 + u.n)`` with a
    pole ``u`` chosen far from the curve.  Counterclockwise circulation about
    the outward normal is positive.
    """
    if not path.is_closed(closure_tol):
        raise PathError("solid angle requires a closed path")
    u = _choose_pole(path)

    def integrand(t):
        n, nd = path.evaluate(t, 1)
        return float(u @ np.cross(n, nd)) / (1.0 + float(u @ n))

    total = 0.0
    for lo, hi in path.segments():
        val, _ = integrate.quad(integrand, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=400)
        total += val
    return wrap_angle(total, 4 * math.pi)


def shoelace_area(x, y) -> float:
    """Signed area of the polygon through ``(x, y)`` closed back to its start."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _cumulative_simpson(fL, fM, fR, h):
    out = np.zeros(h.size + 1, dtype=np.result_type(fL, fM, fR, float))
    out[1:] = np.cumsum(h / 6.0 * (fL + 4.0 * fM + fR))
    return out


def hermite_midpoints(y, dyL, dyR, h):
    """Cubic Hermite value at interval midpoints from end values and one-sided slopes."""
    return 0.5 * (y[:-1] + y[1:]) + h / 8.0 * (dyL - dyR)


@dataclass
class DisplacementPath:
    """Translation path ``d(t) = -(L/2) int alpha dt`` and its enclosed area."""

    grid: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    Sd: np.ndarray
    total_length: float
    L: float
    _slopes: tuple = field(repr=False, default=None)

    def at(self, t: float):
        """``(d1, d2, Sd)`` at ``t``; off-grid times use cubic Hermite interpolation."""
        g = self.grid
        k = int(np.searchsorted(g, t, side="right")) - 1
        k = min(max(k, 0), g.size - 2)
        h = g[k + 1] - g[k]
        s = (t - g[k]) / h
        dL, dR, sL, sR = (arr[k] for arr in self._slopes)

        def herm(y0, y1, m0, m1):
            return ((2 * s**3 - 3 * s**2 + 1) * y0 + (s**3 - 2 * s**2 + s) * h * m0
                    + (-2 * s**3 + 3 * s**2) * y1 + (s**3 - s**2) * h * m1)

        z = herm(self.d1[k] + 1j * self.d2[k], self.d1[k + 1] + 1j * self.d2[k + 1], dL, dR)
        S = herm(self.Sd[k], self.Sd[k + 1], sL, sR)
        return float(z.real), float(z.imag), float(S)

    @property
    def final(self):
        return float(self.d1[-1]), float(self.d2[-1]), float(self.Sd[-1])


def displacement_path(frame: TransportedFrame, L: float, tol: float = 1e-9) -> DisplacementPath:
    """Cumulative ``d_mu(t)`` and the chord-closed area ``S_d(t)``.

    ``S_d = int d1 (-(L/2) alpha2) dtau - d1 d2 / 2``.  Integration is
    composite Simpson on the frame grid; the final value of ``d`` is checked
    against adaptive quadrature and :class:`QuadratureError` is raised when
    they disagree by more than ``tol`` (relative to ``max(1, |d|)``).
    """
    if L < 0:
        raise ValueError("L must be non-negative")
    g = frame.grid
    h = np.diff(g)
    iv = frame._interval_data
    c = -0.5 * L
    dz = _cumulative_simpson(c * iv["aL"], c * iv["aM"], c * iv["aR"], h)
    dzL, dzR = c * iv["aL"], c * iv["aR"]
    dzM = hermite_midpoints(dz, dzL, dzR, h)
    # integrand d1 * d(d2)/dt
    fL = dz[:-1].real * dzL.imag
    fM = dzM.real * (c * iv["aM"]).imag
    fR = dz[1:].real * dzR.imag
    area = _cumulative_simpson(fL, fM, fR, h).real - 0.5 * dz.real * dz.imag
    # slope of area: d1 d2' - (d1' d2 + d1 d2')/2 = (d1 d2' - d2 d1')/2
    sL = 0.5 * (dz[:-1].real * dzL.imag - dz[:-1].imag * dzL.real)
    sR = 0.5 * (dz[1:].real * dzR.imag - dz[1:].imag * dzR.real)
    speedL, speedM, speedR = (np.abs(c * iv[k]) for k in ("aL", "aM", "aR"))
    length = float(np.sum(h / 6.0 * (speedL + 4 * speedM + speedR)))

    if L > 0 and frame.path.max_speed() > 0:
        ref = _reference_displacement(frame, c)
        err = abs(ref - dz[-1]) / max(1.0, abs(ref))
        if err > tol:
            raise QuadratureError(f"displacement quadrature error {err:.2e} above tol {tol:.1e}; refine the frame grid")
    return DisplacementPath(g.copy(), dz.real.copy(), dz.imag.copy(), area, length, L, (dzL, dzR, sL, sR))


def _reference_displacement(frame: TransportedFrame, c: float) -> complex:
    g = frame.grid
    total = 0j
    for lo, hi in frame.path.segments():
        lo, hi = max(lo, g[0]), min(hi, g[-1])
        if hi <= lo:
            continue
        re, _ = integrate.quad(lambda s: frame.signals(s).alpha1, lo, hi, epsabs=1e-13, epsrel=1e-11, limit=400)
        im, _ = integrate.quad(lambda s: frame.signals(s).alpha2, lo, hi, epsabs=1e-13, epsrel=1e-11, limit=400)
        total += complex(re, im)
    return c * total
