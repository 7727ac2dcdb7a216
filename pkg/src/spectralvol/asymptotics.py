"""Asymptotic variance targets and the noise-free realized covariance baseline.

All integrals are trapezoidal on the supplied time grid.  Local noise
intensities enter through ``alpha_p(t) = eta_p^2 nu_p / F_p'(t)``, so that
the local noise level of component ``p`` is ``H_p(t) = alpha_p(t) / n``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .basis import BinGrid, phi_norms
from .linalg import noise_adjusted_root, symmetrizer
from .observations import ObservationSet

log = logging.getLogger(__name__)


class NumericDomainError(ArithmeticError):
    """A closed-form expression left its real domain (negative radicand, non-PSD input)."""


@dataclass
class AsymptoticTarget:
    """An integrated asymptotic variance together with its integrand on the grid."""

    value: float | np.ndarray
    integrand: np.ndarray
    times: np.ndarray
    rule: str = "trapezoid"
    label: str = ""
    reconciled: bool = True
    meta: dict = field(default_factory=dict)

    def __float__(self) -> float:
        return float(self.value)


def integrate(times, values, t: float | None = None) -> np.ndarray:
    """Trapezoidal ``int_0^t values ds`` on ``times`` (first axis), linear in the last cell."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.ndim != 1 or times.size != values.shape[0]:
        raise ValueError("times and values disagree in length")
    if t is None:
        t = times[-1]
    if t < times[0] or t > times[-1] + 1e-12:
        raise ValueError(f"t={t} outside [{times[0]}, {times[-1]}]")
    m = int(np.searchsorted(times, t, side="right")) - 1
    m = min(m, times.size - 1)
    dt = np.diff(times[: m + 1])
    mid = 0.5 * (values[1 : m + 1] + values[:m])
    total = np.tensordot(dt, mid, axes=(0, 0)) if m > 0 else np.zeros(values.shape[1:])
    rest = t - times[m]
    if rest > 1e-15 and m < times.size - 1:
        frac = rest / (times[m + 1] - times[m])
        end = values[m] + frac * (values[m + 1] - values[m])
        total = total + 0.5 * rest * (values[m] + end)
    return np.asarray(total)


def _grid(times, n: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, n) if times is None else np.asarray(times, dtype=float)


def avar_iv(sigma, eta: float, t: float = 1.0, times=None) -> AsymptoticTarget:
    """``int_0^t 8 eta |sigma_s|^3 ds`` for a volatility path on ``times`` (default: uniform on [0, 1])."""
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    times = _grid(times, sigma.size)
    if eta < 0:
        raise ValueError("eta must be non-negative")
    f = 8.0 * eta * np.abs(sigma) ** 3
    return AsymptoticTarget(float(integrate(times, f, t)), f, times, label="iv")


def noise_intensity(eta, nu, density: Sequence[Callable] | None, times, d: int) -> np.ndarray:
    """``alpha[s, p] = eta_p^2 nu_p / F_p'(t_s)``; ``density=None`` means uniform sampling."""
    times = np.asarray(times, dtype=float)
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (d,))
    nu = np.broadcast_to(np.asarray(nu, dtype=float), (d,))
    out = np.empty((times.size, d))
    for p in range(d):
        fp = np.ones_like(times) if density is None else np.asarray(density[p](times), dtype=float)
        fp = np.broadcast_to(fp, times.shape)
        if np.any(fp <= 0):
            raise NumericDomainError(f"sampling density of component {p} is not positive on the grid")
        out[:, p] = eta[p] ** 2 * nu[p] / fp
    return out


def _icv_polynomial(Sigma, alpha, p: int, q: int):
    """Coefficients of ``(C_pp C_qq + C_pq^2)(u) = c4 u^4 + c2 u^2 + c0`` with ``C = Sigma + u^2 diag(alpha)``."""
    a, b, c = Sigma[..., p, p], Sigma[..., q, q], Sigma[..., p, q]
    ap, aq = alpha[..., p], alpha[..., q]
    if p == q:
        return 2.0 * ap**2, 4.0 * a * ap, 2.0 * a**2
    return ap * aq, a * aq + b * ap, a * b + c**2


def icv_spot_variance(Sigma, alpha, p: int, q: int) -> np.ndarray:
    """Limit of ``h sqrt(n) / sum_j I_jk`` as a function of time.

    ``pi / int_0^inf du / P(u)`` with ``P`` from ``_icv_polynomial``, which
    evaluates to ``2 sqrt(c0) sqrt(c2 + 2 sqrt(c4 c0))``.
    """
    c4, c2, c0 = _icv_polynomial(np.asarray(Sigma, dtype=float), np.asarray(alpha, dtype=float), p, q)
    if np.any(c0 <= 0) or np.any(c4 <= 0):
        raise NumericDomainError("covolatility and noise intensities must be non-degenerate")
    return 2.0 * np.sqrt(c0) * np.sqrt(c2 + 2.0 * np.sqrt(c4 * c0))


def avar_icv(spot_cov, alpha, p: int = 0, q: int = 1, t: float = 1.0, times=None) -> AsymptoticTarget:
    """Asymptotic variance of the ``(p, q)`` spectral covolatility estimator (``n^{1/4}`` scale).

    Limit of the Riemann form ``h^2 sqrt(n) sum_k (I_k^{(p,q)})^{-1}``;
    reduces to ``8 eta |sigma|^3`` for ``p == q`` and ``4 eta |sigma|^3``
    for uncorrelated components with equal variances and noise.
    """
    spot_cov = np.asarray(spot_cov, dtype=float)
    times = _grid(times, spot_cov.shape[0])
    f = icv_spot_variance(spot_cov, np.asarray(alpha, dtype=float), p, q)
    return AsymptoticTarget(float(integrate(times, f, t)), f, times, label=f"icv({p},{q})")


def avar_icv_riemann(Sigma_bins, H_bins, grid: BinGrid, n: int, p: int = 0, q: int = 1,
                     j_max: int | None = None) -> float:
    """``sqrt(n) h^2 sum_k (sum_j I_jk)^{-1}`` with continuous norms and bin-wise ``Sigma``, ``H``."""
    if j_max is None:
        j_max = int(np.floor(n * grid.width + 1e-9)) - 1
    norms = phi_norms(j_max, grid, mode="continuous")
    S = np.asarray(Sigma_bins, dtype=float)[:, None]
    H = np.asarray(H_bins, dtype=float)
    gp = norms[None, :] * H[:, None, p]
    gq = norms[None, :] * H[:, None, q]
    cpp = S[..., p, p] + gp
    cqq = S[..., q, q] + gq
    cpq = S[..., p, q] + (gp if p == q else 0.0)
    info = np.sum(1.0 / (cpp * cqq + cpq**2), axis=1)
    return float(np.sqrt(n) * grid.width**2 * np.sum(1.0 / info))


def avar_icv_closed_form(spot_cov, density_p, density_q, nu_p: float = 1.0, nu_q: float = 1.0,
                         p: int = 0, q: int = 1, t: float = 1.0, times=None) -> AsymptoticTarget:
    """Closed-form variance as printed in the source, kept for reference.

    ``v^2 = 2 (r_p r_q (A^2 - B) B)^{1/2} (sqrt(A + sqrt(A^2 - B)) - sgn(A^2 - B) sqrt(A - sqrt(A^2 - B)))``
    with local spacing factors ``r_p = nu_p / F_p'(t)``,
    ``A = Sigma_pp r_q / r_p + Sigma_qq r_p / r_q``,
    ``B = 4 (Sigma_pp Sigma_qq + Sigma_pq^2)`` and ``sgn(0) = -1``.  The
    expression vanishes when ``A^2 = B`` and does not agree with
    ``avar_icv``; the result is flagged ``reconciled=False``.  A negative
    radicand raises ``NumericDomainError``.  Densities may be arrays on
    ``times`` or callables.
    """
    spot_cov = np.asarray(spot_cov, dtype=float)
    times = _grid(times, spot_cov.shape[0])
    dens = [np.broadcast_to(np.asarray(f(times) if callable(f) else f, dtype=float), times.shape)
            for f in (density_p, density_q)]
    if np.any(dens[0] <= 0) or np.any(dens[1] <= 0):
        raise NumericDomainError("sampling densities must be positive")
    rp, rq = nu_p / dens[0], nu_q / dens[1]
    A = spot_cov[..., p, p] * rq / rp + spot_cov[..., q, q] * rp / rq
    B = 4.0 * (spot_cov[..., p, p] * spot_cov[..., q, q] + spot_cov[..., p, q] ** 2)
    disc = A**2 - B
    sgn = np.where(disc > 0, 1.0, -1.0)
    outer = rp * rq * disc * B
    with np.errstate(invalid="ignore"):
        root = np.sqrt(disc.astype(complex))
        plus = A + root
        minus = A - root
    if np.any(outer < -1e-14 * np.maximum(1.0, np.abs(rp * rq * B)) * np.maximum(1.0, A**2)):
        i = int(np.argmin(outer))
        raise NumericDomainError(
            f"negative radicand r_p r_q (A^2 - B) B = {outer[i]:.3g} at t={times[i]:.4g} (A={A[i]:.4g}, B={B[i]:.4g})")
    val = 2.0 * np.sqrt(np.clip(outer, 0.0, None)) * (np.sqrt(plus) - sgn * np.sqrt(minus))
    if np.any(np.abs(val.imag) > 1e-12 * np.maximum(1.0, np.abs(val.real))):
        raise NumericDomainError("closed form is not real on the grid")
    f = val.real
    return AsymptoticTarget(float(integrate(times, f, t)), f, times, label=f"icv_closed({p},{q})",
                            reconciled=False)


def noise_matrix(alpha_row) -> np.ndarray:
    """``H(t) = diag(sqrt(alpha_p(t)))`` (the matrix noise level of the LMM limit)."""
    return np.sqrt(np.asarray(alpha_row, dtype=float))


def acov_lmm_integrand(Sigma, alpha_row) -> np.ndarray:
    """``2 (Sigma (x) (Sigma^H)^{1/2} + (Sigma^H)^{1/2} (x) Sigma)`` at one time point."""
    Sigma = np.asarray(Sigma, dtype=float)
    try:
        root = noise_adjusted_root(Sigma, noise_matrix(alpha_row))
    except ValueError as exc:
        raise NumericDomainError(str(exc)) from exc
    return 2.0 * (np.kron(Sigma, root) + np.kron(root, Sigma))


def _batched_root(spot_cov: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """``(Sigma^H)^{1/2}`` for stacks of ``Sigma`` and noise intensities."""
    if np.any(alpha <= 0):
        raise NumericDomainError("noise intensities must be positive")
    Hm = np.sqrt(alpha)
    outer = Hm[:, :, None] * Hm[:, None, :]
    inner = spot_cov / outer
    inner = 0.5 * (inner + np.swapaxes(inner, 1, 2))
    w, v = np.linalg.eigh(inner)
    scale = np.maximum(1.0, np.abs(inner).max(axis=(1, 2)))
    if np.any(w.min(axis=1) < -1e-10 * scale):
        raise NumericDomainError("covolatility path is not positive semidefinite")
    root = (v * np.sqrt(np.clip(w, 0.0, None))[:, None, :]) @ np.swapaxes(v, 1, 2)
    return outer * root


def acov_lmm(spot_cov, alpha, t: float = 1.0, times=None) -> AsymptoticTarget:
    """``I^{-1} = 2 int_0^t (Sigma (x) (Sigma^H)^{1/2} + (Sigma^H)^{1/2} (x) Sigma) ds``.

    The limiting covariance of ``n^{1/4}(LMM - vec(int Sigma))`` is ``I^{-1} Z``.
    """
    spot_cov = np.asarray(spot_cov, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    times = _grid(times, spot_cov.shape[0])
    m, d = spot_cov.shape[0], spot_cov.shape[-1]
    root = _batched_root(spot_cov, alpha)
    kron = lambda A, B: np.einsum("sac,sbe->sabce", A, B).reshape(m, d * d, d * d)  # noqa: E731
    f = 2.0 * (kron(spot_cov, root) + kron(root, spot_cov))
    val = integrate(times, f, t)
    val = 0.5 * (val + val.T)
    w_min = float(np.linalg.eigvalsh(val).min())
    if w_min < -1e-10 * max(1.0, float(np.abs(val).max())):
        raise NumericDomainError(f"integrated LMM covariance is not PSD (eigenvalue {w_min:.3g})")
    return AsymptoticTarget(val, f, times, label="lmm")


def realized_covariance(obs: ObservationSet) -> np.ndarray:
    """``sum_i dX_i dX_i^T`` for synchronous observations."""
    if not obs.is_synchronous():
        raise ValueError("realized covariance needs synchronous observations")
    dx = np.column_stack([obs.increments(p) for p in range(obs.d)])
    return dx.T @ dx


def realized_covariance_avar(spot_cov, t: float = 1.0, times=None) -> AsymptoticTarget:
    """``int_0^t (Sigma_s (x) Sigma_s) Z ds``; ``Cov(vec(RC)) ~ n^{-1}`` times this on a regular grid."""
    spot_cov = np.asarray(spot_cov, dtype=float)
    times = _grid(times, spot_cov.shape[0])
    d = spot_cov.shape[-1]
    Z = symmetrizer(d)
    f = np.einsum("sab,scd->sacbd", spot_cov, spot_cov).reshape(-1, d * d, d * d) @ Z
    return AsymptoticTarget(integrate(times, f, t), f, times, label="realized_covariance")


def realized_covariance_baseline(obs: ObservationSet, spot_cov, times=None,
                                 t: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Realized covariance of noise-free data and its asymptotic covariance ``int (Sigma (x) Sigma) Z``."""
    return realized_covariance(obs), realized_covariance_avar(spot_cov, t, times).value
