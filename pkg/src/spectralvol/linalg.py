"""vec/Kronecker algebra and symmetric matrix functions."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


class SingularMatrixError(np.linalg.LinAlgError):
    """A negative power was requested of a (numerically) singular matrix."""


def vec(A) -> np.ndarray:
    """Stack the columns of a square matrix."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"vec expects a square matrix, got shape {A.shape}")
    return A.reshape(-1, order="F")


def unvec(v, d: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if d is None:
        d = int(round(np.sqrt(v.size)))
    if v.shape != (d * d,):
        raise ValueError(f"cannot unvec a vector of length {v.size} into {d}x{d}")
    return v.reshape((d, d), order="F")


def kronecker(A, B) -> np.ndarray:
    """``(A (x) B)[d(p-1)+q, d(p'-1)+q'] = A[p,p'] B[q,q']``."""
    return np.kron(np.asarray(A), np.asarray(B))


@lru_cache(maxsize=None)
def _commutation(d: int) -> np.ndarray:
    C = np.zeros((d * d, d * d))
    for p in range(d):
        for q in range(d):
            C[q * d + p, p * d + q] = 1.0
    C.flags.writeable = False
    return C


def commutation_matrix(d: int) -> np.ndarray:
    """Permutation ``C`` with ``C vec(A) = vec(A^T)``."""
    return _commutation(int(d))


def symmetrizer(d: int) -> np.ndarray:
    """``Z = E_{d^2} + C_{d,d}``, the covariance of ``vec(Z Z^T)`` for standard Gaussian ``Z``."""
    return np.eye(d * d) + commutation_matrix(d)


@dataclass(frozen=True)
class MatrixOpsContext:
    """Dimension-bound cache of the commutation matrix and ``Z``."""

    d: int
    C: np.ndarray = field(init=False, repr=False)
    Z: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "C", commutation_matrix(self.d))
        Z = symmetrizer(self.d)
        Z.flags.writeable = False
        object.__setattr__(self, "Z", Z)


def _sym_eig(A, tol: float = 1e-10):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expected a square matrix")
    scale = max(1.0, float(np.abs(A).max()))
    if np.abs(A - A.T).max() > tol * scale:
        raise ValueError("matrix is not symmetric")
    w, v = np.linalg.eigh(0.5 * (A + A.T))
    if w.min() < -tol * scale:
        raise ValueError(f"matrix is not positive semidefinite (eigenvalue {w.min():.3g})")
    return np.clip(w, 0.0, None), v


def symmetric_matrix_power(A, power: float) -> np.ndarray:
    """``A^power`` through the eigendecomposition of a symmetric PSD matrix.

    Small negative eigenvalues (above ``-1e-10``) are clipped to zero;
    negative powers of singular matrices raise ``SingularMatrixError``.
    """
    w, v = _sym_eig(A)
    if power < 0:
        if w.min() < 1e-12:
            raise SingularMatrixError(f"cannot take power {power} of a singular matrix")
    wp = np.where(w > 0, w, 0.0) ** power if power > 0 else w**power
    out = (v * wp) @ v.T
    return 0.5 * (out + out.T)


def noise_adjusted_root(Sigma, H_diag) -> np.ndarray:
    """``(Sigma^H)^{1/2} = H (H^{-1} Sigma H^{-1})^{1/2} H`` for diagonal ``H``."""
    H = np.asarray(H_diag, dtype=float)
    if np.any(H <= 0):
        raise ValueError("noise levels must be positive")
    inner = np.asarray(Sigma, dtype=float) / np.outer(H, H)
    return np.outer(H, H) * symmetric_matrix_power(inner, 0.5)


def noise_adjusted_quarter(Sigma, H_diag) -> np.ndarray:
    """Square root of ``(Sigma^H)^{1/2}``."""
    return symmetric_matrix_power(noise_adjusted_root(Sigma, H_diag), 0.5)


def psd_project(A, floor: float) -> np.ndarray:
    """Symmetrize and lift eigenvalues below ``floor`` up to ``floor``."""
    A = 0.5 * (A + np.swapaxes(A, -1, -2))
    w, v = np.linalg.eigh(A)
    w = np.maximum(w, np.asarray(floor)[..., None] if np.ndim(floor) else floor)
    out = (v * w[..., None, :]) @ np.swapaxes(v, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))
