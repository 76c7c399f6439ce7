"""Truncated tensor-product Hilbert space |n_a> x |n_b> x |n_c> and its operators.

The a and b ladders are the cyclotron and guiding-centre modes built from the
kinetic momenta ``pi_mu = p_mu - e A_mu`` and the magnetic-translation
generators ``eta_mu = p_mu + e A_mu`` (symmetric gauge, field along e3).  The c
ladder is an axial oscillator centred at ``x3 = L``.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import scipy.sparse as sp

__all__ = [
    "DimensionCapError",
    "PhysicalParams",
    "BasisConfig",
    "OperatorSet",
    "build_operator_set",
    "operator_polynomial",
    "ladder",
    "dagger",
]

DEFAULT_DIM_CAP = 20_000


class DimensionCapError(ValueError):
    """Requested basis exceeds the configured dimension cap."""


def dagger(A):
    return A.conj().T


def ladder(n_max: int) -> np.ndarray:
    """Annihilation operator on occupations ``0..n_max``."""
    return np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), k=1).astype(complex)


@dataclass(frozen=True)
class PhysicalParams:
    """Particle, field and confinement parameters (hbar = 1).

    ``potential`` holds ``(v2, v3, v4)`` for ``V(u) = v2 u^2 + v3 u^3 + v4 u^4``.
    """

    m: float = 1.0
    e: float = -1.0
    B: float = 1.0
    L: float = 1.0
    potential: tuple = (12.5, 0.0, 0.0)
    eps: float = 0.01

    def __post_init__(self):
        pot = tuple(float(v) for v in self.potential)
        if len(pot) == 0 or len(pot) > 3:
            raise ValueError("potential needs 1 to 3 coefficients (v2, v3, v4)")
        pot = pot + (0.0,) * (3 - len(pot))
        object.__setattr__(self, "potential", pot)
        if self.e >= 0:
            raise ValueError("charge e must be negative")
        if self.B <= 0 or self.m <= 0:
            raise ValueError("B and m must be positive")
        if pot[0] <= 0:
            raise ValueError("quadratic coefficient v2 must be positive")
        if self.L < 0:
            raise ValueError("L must be non-negative")
        if self.eps <= 0:
            raise ValueError("eps must be positive")

    @classmethod
    def harmonic(cls, k: float, **kw) -> "PhysicalParams":
        """Parameters with ``V(u) = k u^2 / 2``."""
        return cls(potential=(0.5 * k, 0.0, 0.0), **kw)

    @property
    def omega(self) -> float:
        """Cyclotron frequency ``-eB/m``."""
        return -self.e * self.B / self.m

    @property
    def l_B(self) -> float:
        return 1.0 / math.sqrt(-2.0 * self.e * self.B)

    @property
    def stiffness(self) -> float:
        return 2.0 * self.potential[0]

    @property
    def harmonic_frequency(self) -> float:
        return math.sqrt(2.0 * self.potential[0] / self.m)

    @property
    def is_harmonic(self) -> bool:
        return self.potential[1] == 0.0 and self.potential[2] == 0.0

    @property
    def potential_coeffs(self) -> list[float]:
        return [0.0, 0.0, *self.potential]

    @cached_property
    def axial_gap(self) -> float:
        """Minimum level spacing of ``p^2/2m + V`` (exact for harmonic V)."""
        if self.is_harmonic:
            return self.harmonic_frequency
        n = 80
        w = self.harmonic_frequency
        c = ladder(n)
        u = (c + dagger(c)) / math.sqrt(2 * self.m * w)
        p = 1j * math.sqrt(self.m * w / 2) * (dagger(c) - c)
        H = p @ p / (2 * self.m) + operator_polynomial(u, self.potential_coeffs)
        levels = np.linalg.eigvalsh(H)[:8]
        return float(np.min(np.diff(levels)))

    def time_scales(self, eps: float | None = None) -> tuple[float, float, float]:
        """``(T1, T2, T3) = (1/eps, 2 pi/omega, 1/Delta)``."""
        eps = self.eps if eps is None else eps
        return 1.0 / eps, 2 * math.pi / self.omega, 1.0 / self.axial_gap


@dataclass(frozen=True)
class BasisConfig:
    """Occupation cutoffs and the interior margin.

    A sector with cutoff 0 is frozen in its vacuum and is not buffered.
    ``buffer`` may be a single int or one int per sector ``(a, b, c)``.
    """

    Na: int = 6
    Nb: int = 6
    Nc: int = 8
    buffer: int | tuple = 2
    axial_ref_freq: float | None = None
    dim_cap: int | None = None

    def __post_init__(self):
        for name in ("Na", "Nb", "Nc"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.dim < 8:
            raise ValueError("total dimension must be at least 8")
        bufs = self.buffers
        for n, b in zip(self.cutoffs, bufs):
            if n > 0 and not (1 <= b < n):
                raise ValueError(f"buffer {b} invalid for cutoff {n}: need 1 <= buffer < cutoff")
        cap = self.cap
        if self.dim > cap:
            raise DimensionCapError(f"dimension {self.dim} exceeds cap {cap}")

    @property
    def cutoffs(self) -> tuple[int, int, int]:
        return (self.Na, self.Nb, self.Nc)

    @property
    def buffers(self) -> tuple[int, int, int]:
        if isinstance(self.buffer, (tuple, list)):
            if len(self.buffer) != 3:
                raise ValueError("per-sector buffer needs three entries")
            return tuple(int(b) for b in self.buffer)
        return (int(self.buffer),) * 3

    @property
    def dim(self) -> int:
        return (self.Na + 1) * (self.Nb + 1) * (self.Nc + 1)

    @property
    def cap(self) -> int:
        if self.dim_cap is not None:
            return int(self.dim_cap)
        return int(os.environ.get("LANDAU_FACTOR_DIM_CAP", DEFAULT_DIM_CAP))

    def interior_mask(self) -> np.ndarray:
        na, nb, nc = np.meshgrid(*(np.arange(n + 1) for n in self.cutoffs), indexing="ij")
        mask = np.ones(na.shape, dtype=bool)
        for occ, n, b in zip((na, nb, nc), self.cutoffs, self.buffers):
            if n > 0:
                mask &= occ <= n - b
        return mask.ravel()

    def occupations(self) -> np.ndarray:
        """``(dim, 3)`` array of ``(n_a, n_b, n_c)`` per basis index."""
        grids = np.meshgrid(*(np.arange(n + 1) for n in self.cutoffs), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def index(self, na: int, nb: int, nc: int = 0) -> int:
        return (na * (self.Nb + 1) + nb) * (self.Nc + 1) + nc


@dataclass(frozen=True, eq=False)
class OperatorSet:
    """Matrices of the elementary operators on one truncated basis.

    Matrices are dense arrays unless the set was built with ``sparse=True``,
    in which case they are CSR matrices (for column propagation in large
    bases).  The planar slice and the single-mode factors are always dense.
    """

    params: PhysicalParams
    basis: BasisConfig
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    p3: np.ndarray
    J1: np.ndarray
    J2: np.ndarray
    J3: np.ndarray
    pi1: np.ndarray
    pi2: np.ndarray
    eta1: np.ndarray
    eta2: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    xi0: np.ndarray
    interior_index: np.ndarray = field(repr=False)
    axial_ref_freq: float = 0.0
    sparse: bool = False

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    @property
    def identity(self):
        if self.sparse:
            return sp.identity(self.dim, dtype=complex, format="csr")
        return np.eye(self.dim, dtype=complex)

    @property
    def interior(self):
        """Diagonal projector onto the interior basis states."""
        mask = np.zeros(self.dim)
        mask[self.interior_index] = 1.0
        if self.sparse:
            return sp.diags(mask).astype(complex).tocsr()
        return np.diag(mask).astype(complex)

    @property
    def landau_dim(self) -> int:
        return (self.basis.Na + 1) * (self.basis.Nb + 1)

    @property
    def axial_dim(self) -> int:
        return self.basis.Nc + 1

    def embed_landau(self, op2d: np.ndarray) -> np.ndarray:
        """Lift an operator on the (a, b) factor to the full space."""
        return np.kron(op2d, np.eye(self.axial_dim))

    def embed_axial(self, op1d: np.ndarray) -> np.ndarray:
        """Lift an operator on the c factor to the full space."""
        return np.kron(np.eye(self.landau_dim), op1d)

    def embed_mode(self, op: np.ndarray, mode: str) -> np.ndarray:
        """Lift a single-mode operator (``mode`` in ``'a'``, ``'b'``, ``'c'``) to the full space."""
        sizes = [n + 1 for n in self.basis.cutoffs]
        k = "abc".index(mode)
        if op.shape != (sizes[k], sizes[k]):
            raise ValueError(f"operator shape {op.shape} does not match mode {mode!r}")
        out = np.ones((1, 1))
        for j, n in enumerate(sizes):
            out = np.kron(out, op if j == k else np.eye(n))
        return out

    def mode_ladder(self, mode: str) -> np.ndarray:
        """Annihilation operator of one mode on that mode's factor alone."""
        return ladder(self.basis.cutoffs["abc".index(mode)])

    @cached_property
    def axial_factors(self) -> dict:
        """Single-mode matrices on the c factor: ``xi``, ``p3``."""
        n = self.basis.Nc
        c = ladder(n)
        w = self.axial_ref_freq
        if n == 0:
            zero = np.zeros((1, 1), dtype=complex)
            return {"xi": zero, "p3": zero}
        m = self.params.m
        return {
            "xi": (c + dagger(c)) / math.sqrt(2 * m * w),
            "p3": 1j * math.sqrt(m * w / 2) * (dagger(c) - c),
        }

    @cached_property
    def landau_slice(self) -> "OperatorSet":
        """Same (a, b) cutoffs with the axial mode removed (``Nc = 0``)."""
        if self.basis.Nc == 0 and not self.sparse:
            return self
        nb = replace(self.basis, Nc=0)
        return build_operator_set(self.params, nb)

    def interior_states(self) -> np.ndarray:
        """Columns of the identity restricted to interior indices."""
        V = np.zeros((self.dim, self.interior_index.size), dtype=complex)
        V[self.interior_index, np.arange(self.interior_index.size)] = 1.0
        return V


def build_operator_set(params: PhysicalParams, basis: BasisConfig, sparse: bool = False) -> OperatorSet:
    """Matrices of ``a, b, c``, positions, momenta, angular momenta, ``pi``, ``eta``.

    ``a = (pi1 - i pi2)/sqrt(-2eB)``, ``b = (eta1 + i eta2)/sqrt(-2eB)``;
    positions follow from ``x1 = (eta2 - pi2)/(eB)``, ``x2 = (pi1 - eta1)/(eB)``
    and momenta from ``p_mu = (pi_mu + eta_mu)/2``.
    """
    if basis.dim > basis.cap:
        raise DimensionCapError(f"dimension {basis.dim} exceeds cap {basis.cap}")
    Na, Nb, Nc = basis.cutoffs
    if sparse:
        Ia, Ib, Ic = (sp.identity(n + 1, dtype=complex, format="csr") for n in (Na, Nb, Nc))

        def kron3(A, B, C):
            return sp.kron(sp.kron(A, B), C, format="csr")

        def lad(n):
            return sp.csr_matrix(ladder(n))
    else:
        Ia, Ib, Ic = (np.eye(n + 1, dtype=complex) for n in (Na, Nb, Nc))
        lad = ladder

        def kron3(A, B, C):
            return np.kron(np.kron(A, B), C)

    a = kron3(lad(Na), Ib, Ic)
    b = kron3(Ia, lad(Nb), Ic)
    c = kron3(Ia, Ib, lad(Nc))
    ad, bd, cd = dagger(a), dagger(b), dagger(c)

    s = math.sqrt(-2.0 * params.e * params.B)
    eB = params.e * params.B
    pi1 = s * (a + ad) / 2
    pi2 = 1j * s * (a - ad) / 2
    eta1 = s * (b + bd) / 2
    eta2 = 1j * s * (bd - b) / 2
    x1 = (eta2 - pi2) / eB
    x2 = (pi1 - eta1) / eB
    p1 = (pi1 + eta1) / 2
    p2 = (pi2 + eta2) / 2

    w = basis.axial_ref_freq if basis.axial_ref_freq is not None else params.harmonic_frequency
    dim = basis.dim
    eye = sp.identity(dim, dtype=complex, format="csr") if sparse else np.eye(dim, dtype=complex)
    if Nc > 0:
        xi0 = (c + cd) / math.sqrt(2 * params.m * w)
        p3 = 1j * math.sqrt(params.m * w / 2) * (cd - c)
    else:
        xi0 = 0 * eye
        p3 = 0 * eye
    x3 = params.L * eye + xi0

    J1 = x2 @ p3 - x3 @ p2
    J2 = x3 @ p1 - x1 @ p3
    J3 = x1 @ p2 - x2 @ p1
    # Hermitian parts: truncation can spoil exact symmetry at the boundary
    J1, J2, J3 = ((J + dagger(J)) / 2 for J in (J1, J2, J3))
    A1 = -params.B * x2 / 2
    A2 = params.B * x1 / 2

    if sparse:
        J1, J2, J3, A1, A2, x3 = (M.tocsr() for M in (J1, J2, J3, A1, A2, x3))
    mask = basis.interior_mask()
    return OperatorSet(
        params=params,
        basis=basis,
        a=a, b=b, c=c,
        x1=x1, x2=x2, x3=x3,
        p1=p1, p2=p2, p3=p3,
        J1=J1, J2=J2, J3=J3,
        pi1=pi1, pi2=pi2, eta1=eta1, eta2=eta2,
        A1=A1, A2=A2,
        xi0=xi0,
        interior_index=np.flatnonzero(mask),
        axial_ref_freq=float(w),
        sparse=sparse,
    )


def operator_polynomial(X: np.ndarray, coeffs) -> np.ndarray:
    """``sum_k coeffs[k] X^k`` by Horner's rule (dense or sparse ``X``)."""
    if not sp.issparse(X):
        X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError("operator must be a square matrix")
    coeffs = list(coeffs)
    if not coeffs or len(coeffs) > 5:
        raise ValueError("between 1 and 5 coefficients are supported")
    if sp.issparse(X):
        eye = sp.identity(X.shape[0], dtype=complex, format="csr")
    else:
        eye = np.eye(X.shape[0], dtype=np.result_type(X, complex))
    out = coeffs[-1] * eye
    for ck in reversed(coeffs[:-1]):
        out = out @ X + ck * eye
    return out
