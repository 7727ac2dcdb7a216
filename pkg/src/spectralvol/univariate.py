"""Spectral estimation of integrated volatility in one dimension.

Local volatility on bin ``k`` is estimated by a weighted sum of
bias-corrected squared spectral statistics,

    sigma2_k = sum_j w_jk (S_jk^2 - [phi_jk, phi_jk]_n eta^2 / n),

and the integrated volatility by the Riemann sum ``h sum_k sigma2_k``.  With
Fisher-information weights ``w_jk = I_jk / I_k`` the variance of the
estimator is ``sum_k h^2 / I_k``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BinGrid, SpectralArray, max_frequency, phi_norms, spectral_statistics
from .observations import ObservationSet
from .report import EstimateReport, InvalidReportError, normal_quantile

PILOT_J = 100


def estimate_noise_variance(obs: ObservationSet, p: int = 0) -> float:
    """``(2n)^{-1} sum_i (dY_i)^2``.

    Consistent at rate ``n^{-1/2}``; its bias is ``(2n)^{-1}`` times the
    quadratic variation of the signal.
    """
    dy = obs.increments(p)
    return float(np.dot(dy, dy) / (2 * dy.size))


def debiased_noise_variance(obs: ObservationSet, integrated_vol: float, p: int = 0) -> float:
    """Noise variance with the signal contribution ``IV / (2n)`` removed, floored at 0."""
    n = obs.n_obs(p)
    return max(estimate_noise_variance(obs, p) - integrated_vol / (2 * n), 0.0)


def autocovariance_noise_variance(obs: ObservationSet, p: int = 0) -> float:
    """``-(n-1)^{-1} sum_i dY_i dY_{i+1}``, unbiased for i.i.d. noise; floored at 0."""
    dy = obs.increments(p)
    return max(-float(np.dot(dy[1:], dy[:-1])) / (dy.size - 1), 0.0)


def moment_noise_variance(obs: ObservationSet, spectral: SpectralArray, J_n: int, p: int = 0) -> float:
    """Noise variance with the signal part of ``sum dY^2`` removed by a spectral moment.

    Solves ``eta2 = (sum dY^2 - IV(eta2)) / (2n)`` where ``IV(eta2) = B - eta2 D``
    is the equal-weight spectral estimate over the first ``J_n`` frequencies.
    Falls back to the plain estimator when the system is ill-conditioned.
    """
    dy = obs.increments(p)
    n = dy.size
    grid = spectral.grid
    S = spectral.component(p)[:, :J_n]
    B = grid.width * float(np.sum(np.mean(S**2, axis=1)))
    D = grid.t_end * float(np.mean(phi_norms(J_n, grid, n))) / n
    if 2 * n - D < 0.5 * n:
        return estimate_noise_variance(obs, p)
    return max((float(np.dot(dy, dy)) - B) / (2 * n - D), 0.0)


def default_window(n: int) -> int:
    """Pilot smoothing half-width ``K_n = round(n^{1/4} / 2)``."""
    return int(round(n**0.25 / 2))


def default_bins(n: int) -> int:
    """Bin count following ``h ~ n^{-1/2} log n``, calibrated to 25 bins at n = 30000."""
    ref = np.sqrt(30000) / np.log(30000)
    return max(1, int(round(25 * (np.sqrt(n) / np.log(n)) / ref)))


def _as_spectral(data, grid: BinGrid, j_max: int) -> SpectralArray:
    if isinstance(data, SpectralArray):
        if data.j_max < j_max:
            raise ValueError(f"spectral array holds {data.j_max} < {j_max} frequencies")
        return data
    return spectral_statistics(data, grid, j_max)


def floor_pilot(values: np.ndarray) -> np.ndarray:
    """Clamp pilots below at ``max(1e-8, 0.05 * median)``."""
    floor = max(1e-8, 0.05 * float(np.median(values)))
    return np.maximum(values, floor)


def window_average(local: np.ndarray, K_n: int) -> np.ndarray:
    """Average of ``local[m]`` over ``|m - k| <= K_n``, truncated at both ends.

    Near the boundaries the average runs over the bins that exist.
    """
    K = local.shape[0]
    cums = np.concatenate((np.zeros((1,) + local.shape[1:]), np.cumsum(local, axis=0)))
    k = np.arange(K)
    lo = np.clip(k - K_n, 0, K)
    hi = np.clip(k + K_n + 1, 0, K)
    counts = (hi - lo).reshape((K,) + (1,) * (local.ndim - 1))
    return (cums[hi] - cums[lo]) / counts


def pilot_spot_volatility(data, grid: BinGrid, J_n: int, K_n: int, eta2: float,
                          floor: bool = True) -> np.ndarray:
    """Rate-suboptimal local volatility pilots, one per bin.

    Uses the first ``J_n`` frequencies with equal weights and averages the
    bias-corrected local estimates over ``2 K_n + 1`` neighbouring bins.
    """
    sa = _as_spectral(data, grid, J_n)
    n = sa.n[0]
    S = sa.component(0)[:, :J_n]
    norms = phi_norms(J_n, sa.grid, n)
    local = np.mean(S**2 - norms[None, :] * eta2 / n, axis=1)
    pilot = window_average(local, int(K_n))
    return floor_pilot(pilot) if floor else pilot


@dataclass(frozen=True)
class WeightTable1D:
    """Weights ``w[k, j-1]`` with the Fisher informations ``info_j[k, j-1]`` and ``info[k]``."""

    weights: np.ndarray
    info_j: np.ndarray
    info: np.ndarray
    mode: str = "oracle"


def optimal_weights_1d(sigma2, eta2: float, n: int, grid: BinGrid, j_max: int,
                       mode: str = "oracle") -> WeightTable1D:
    """Variance-minimizing weights for each bin.

    ``I_jk = (1/2) (sigma2_k + eta2 [phi_jk, phi_jk]_n / n)^{-2}`` is the
    inverse variance of ``S_jk^2`` under Gaussian noise.
    """
    sigma2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (grid.n_bins,))
    if np.any(sigma2 <= 0) or not np.all(np.isfinite(sigma2)):
        raise ValueError("local volatilities must be positive; floor the pilots first")
    if eta2 < 0:
        raise ValueError("noise variance must be non-negative")
    norms = phi_norms(j_max, grid, n)
    c = sigma2[:, None] + eta2 * norms[None, :] / n
    info_j = 0.5 / c**2
    info = info_j.sum(axis=1)
    return WeightTable1D(info_j / info[:, None], info_j, info, mode)


def spectral_iv(data, weights: WeightTable1D, eta2: float, grid: BinGrid | None = None,
                p: int = 0) -> EstimateReport:
    """Weighted spectral estimate of the integrated volatility path and its variance."""
    j_max = weights.weights.shape[1]
    if isinstance(data, SpectralArray):
        sa = data
    else:
        if grid is None:
            raise ValueError("a grid is required for raw observations")
        sa = spectral_statistics(data, grid, j_max)
    grid = sa.grid
    if weights.weights.shape[0] != grid.n_bins or sa.j_max < j_max:
        raise ValueError("weights do not cover the spectral array")
    n = sa.n[p]
    S = sa.component(p)[:, :j_max]
    norms = phi_norms(j_max, grid, n)
    local = np.sum(weights.weights * (S**2 - eta2 * norms[None, :] / n), axis=1)
    h = grid.width
    est = np.concatenate(([0.0], np.cumsum(h * local)))
    var = np.concatenate(([0.0], np.cumsum(h**2 / weights.info)))
    return EstimateReport(grid.edges, est, var, weights.mode, "iv", eta2, local,
                          {"j_max": j_max, "n": n, "n_bins": grid.n_bins})


def confidence_interval(report: EstimateReport, level: float = 0.95, t: float | None = None):
    """``estimate +- z_{(1+level)/2} sqrt(V)`` at time ``t`` (default: end of horizon)."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    i = -1 if t is None else report.index_at(t)
    v = float(report.variance[i])
    if not v > 0:
        raise InvalidReportError(f"variance estimate {v} is not positive")
    z = normal_quantile(level)
    est = float(report.estimate[i])
    return est - z * np.sqrt(v), est + z * np.sqrt(v)


def default_j_max(n: int, grid: BinGrid) -> int:
    """All frequencies up to ``floor(nh) - 1``."""
    return max_frequency(n, grid)


def oracle_iv(obs: ObservationSet, grid: BinGrid, sigma2_left, eta2: float,
              j_max: int | None = None) -> EstimateReport:
    """IV estimate with weights from the true spot volatility at the bin left edges."""
    n = obs.n_obs(0)
    j_max = default_j_max(n, grid) if j_max is None else j_max
    sa = spectral_statistics(obs, grid, j_max)
    w = optimal_weights_1d(sigma2_left, eta2, n, grid, j_max, "oracle")
    return spectral_iv(sa, w, eta2)


def adaptive_iv(obs: ObservationSet, grid: BinGrid, j_max: int | None = None,
                pilot_j: int = PILOT_J, K_n: int | None = None,
                noise: str = "moment", spectral: SpectralArray | None = None) -> EstimateReport:
    """Two-stage IV estimate: noise variance and pilots first, then plug-in weights.

    ``noise`` picks the noise variance estimate: ``"raw"`` is
    ``(2n)^{-1} sum dY^2`` as is, ``"moment"`` removes its signal
    contribution (see ``moment_noise_variance``), ``"autocov"`` uses the
    first-order autocovariance of the increments.
    """
    n = obs.n_obs(0)
    j_max = default_j_max(n, grid) if j_max is None else j_max
    pilot_j = min(pilot_j, j_max)
    K_n = default_window(n) if K_n is None else K_n
    sa = spectral if spectral is not None else spectral_statistics(obs, grid, max(j_max, pilot_j))
    if noise == "moment":
        eta2 = moment_noise_variance(obs, sa, pilot_j)
    elif noise == "raw":
        eta2 = estimate_noise_variance(obs)
    elif noise == "autocov":
        eta2 = autocovariance_noise_variance(obs)
    else:
        raise ValueError(f"unknown noise treatment {noise!r}")
    pilot = pilot_spot_volatility(sa, grid, pilot_j, K_n, eta2, floor=True)
    w = optimal_weights_1d(pilot, eta2, n, grid, j_max, "adaptive")
    rep = spectral_iv(sa, w, eta2)
    rep.meta.update(pilot_j=pilot_j, K_n=K_n, noise=noise)
    rep.meta["pilot"] = pilot
    return rep
