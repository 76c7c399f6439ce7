"""Dense linear-algebra helpers shared by the builders and propagators."""
from __future__ import annotations

import numpy as np
from scipy import linalg as sla


class ExponentialError(RuntimeError):
    """Matrix exponential failed its accuracy check."""


def hermitian_part(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.conj().T)


def hermiticity_residual(A: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(A))), 1e-300)
    return float(np.max(np.abs(A - A.conj().T))) / scale


def unitarity_residual(U: np.ndarray) -> float:
    """``max |U^dagger U - I|``."""
    return float(np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0]))))


def expm_hermitian(H: np.ndarray, dt: float = 1.0) -> np.ndarray:
    """``exp(-i dt H)`` for Hermitian ``H`` through its eigendecomposition."""
    w, V = np.linalg.eigh(H)
    return (V * np.exp(-1j * dt * w)) @ V.conj().T


def expm_general(A: np.ndarray, check: bool = True) -> np.ndarray:
    """``exp(A)`` by scaling and squaring (Pade), with a finiteness check."""
    E = sla.expm(A)
    if check and not np.all(np.isfinite(E)):
        raise ExponentialError(f"non-finite matrix exponential (|A|_1 = {np.linalg.norm(A, 1):.3e})")
    return E


def kron_expm(W: np.ndarray, X: np.ndarray, scale: float) -> np.ndarray:
    """``exp(-i scale W (x) X)`` for Hermitian ``W`` and ``X``.

    The eigenvectors of ``W (x) X`` are products of the factors' eigenvectors,
    so two small diagonalizations replace one large one.
    """
    lw, Vw = np.linalg.eigh(W)
    lx, Vx = np.linalg.eigh(X)
    V = np.kron(Vw, Vx)
    phases = np.exp(-1j * scale * np.outer(lw, lx).ravel())
    return (V * phases) @ V.conj().T


def project(A: np.ndarray, P: np.ndarray | None) -> np.ndarray:
    """``P^dagger A P`` for a column basis ``P``.

    ``P`` may also be an integer index array (basis-state selection) or
    ``None`` (no projection).
    """
    if P is None:
        return A
    P = np.asarray(P)
    if P.ndim == 1:
        return A[np.ix_(P, P)]
    return P.conj().T @ A @ P


def relative_distance(A: np.ndarray, B: np.ndarray, P: np.ndarray | None = None) -> float:
    """``|P(A - B)P|_F / max(|PAP|_F, 1e-300)``."""
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch {A.shape} vs {B.shape}")
    num = np.linalg.norm(project(A - B, P))
    den = max(float(np.linalg.norm(project(A, P))), 1e-300)
    return float(num) / den
