"""Spectral covolatility estimation for non-synchronous noisy observations.

Two estimators share the local building blocks (noise levels ``H_k``,
pilot covolatilities ``Sigma_k``):

* the bivariate spectral covolatility estimator, which combines cross
  products ``S_jk^(p) S_jk^(q)`` with scalar Fisher weights, and
* the local method of moments (LMM), which combines ``vec(S_jk S_jk^T)``
  with ``d^2 x d^2`` weight matrices ``W_jk = I_k^{-1} I_jk`` where
  ``I_jk = (Sigma_k + [phi_jk, phi_jk] H_k)^{-1 (x) 2}``.

Here ``[phi_jk, phi_jk] = pi^2 j^2 / h^2``.  The product
``[phi_jk, phi_jk] H_k`` approximates the noise variance of ``S_jk``; the
adaptive pipelines use that variance exactly (``basis.noise_norms``) unless
``convention="continuous"`` is requested.  The exact convention also uses
the signal loadings ``c_jk^(pq)`` of ``basis.signal_loadings``: on
non-synchronous grids ``E[S^(p) S^(q)] = c Sigma_pq`` with ``c < 1`` at high
frequencies, and the moment equations are solved with that design.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .asymptotics import NumericDomainError
from .basis import (BinGrid, SpectralArray, frequency_limits, max_frequency, noise_norms, phi_norms,
                    signal_loadings, spectral_statistics)
from .linalg import psd_project, symmetric_matrix_power, symmetrizer, vec
from .observations import ObservationSet
from .report import EstimateReport
from .univariate import PILOT_J, default_window, window_average

log = logging.getLogger(__name__)

REGULARIZATION = 1e-10


@dataclass
class LocalNoise:
    """Per-bin noise levels ``H[k, p]`` with flags for values borrowed from a neighbour."""

    H: np.ndarray
    borrowed: np.ndarray
    eta2: np.ndarray


@dataclass
class LocalEstimates:
    """Per-bin spot covolatility ``Sigma[k]`` (PSD) and diagonal noise levels ``H[k]``."""

    Sigma: np.ndarray
    H: np.ndarray
    raw: np.ndarray | None = None


def time_variation(times: np.ndarray, grid: BinGrid) -> tuple[np.ndarray, np.ndarray]:
    """Per-bin ``sum (t_v - t_{v-1})^2 / h`` and observation counts.

    The increment ending at ``t_v`` belongs to the bin ``((k-1)h, kh]`` holding ``t_v``.
    """
    dt2 = np.diff(times) ** 2
    b = np.ceil(times[1:] / grid.width - 1e-9).astype(int) - 1
    keep = (b >= 0) & (b < grid.n_bins)
    q = np.bincount(b[keep], weights=dt2[keep], minlength=grid.n_bins) / grid.width
    counts = np.bincount(b[keep], minlength=grid.n_bins)
    return q, counts


def estimate_local_noise_levels(obs: ObservationSet, grid: BinGrid, eta2=None) -> LocalNoise:
    """``H_p^k = eta2_p * sum_{t_v in bin k} (t_v - t_{v-1})^2 / h``.

    Without ``eta2`` the plain ``(2 n_p)^{-1} sum (dY^(p))^2`` is used.
    Bins with fewer than two observations borrow the nearest populated bin.
    """
    d = obs.d
    if eta2 is None:
        eta2 = np.array([np.dot(obs.increments(p), obs.increments(p)) / (2 * obs.n_obs(p)) for p in range(d)])
    eta2 = np.broadcast_to(np.asarray(eta2, dtype=float), (d,)).copy()
    H = np.empty((grid.n_bins, d))
    borrowed = np.zeros((grid.n_bins, d), dtype=bool)
    for p in range(d):
        q, counts = time_variation(obs.times[p], grid)
        good = np.flatnonzero(counts >= 2)
        if good.size == 0:
            raise ValueError(f"component {p}: no bin holds two observations")
        vals = eta2[p] * q
        for k in np.flatnonzero(counts < 2):
            src = good[np.argmin(np.abs(good - k))]
            vals[k] = vals[src]
            borrowed[k, p] = True
            log.warning("noise level of bin %d, component %d borrowed from bin %d", k + 1, p, src + 1)
        H[:, p] = vals
    return LocalNoise(H, borrowed, eta2)


def noise_terms(noise, grid: BinGrid, j_max: int) -> np.ndarray:
    """Noise part ``G[k, j-1, p]`` of ``Var(S_jk^(p))`` as a ``(K, J, d)`` array.

    ``noise`` is either a ``(K, d)`` array of local noise levels, expanded
    with the continuous norms ``pi^2 j^2 / h^2``, or already a ``(K, >=J, d)``
    array (e.g. ``eta2 * noise_norms(...)``).
    """
    noise = np.asarray(noise, dtype=float)
    if noise.ndim == 3:
        if noise.shape[1] < j_max:
            raise ValueError(f"noise terms cover {noise.shape[1]} < {j_max} frequencies")
        return noise[:, :j_max, :]
    if noise.ndim != 2 or noise.shape[0] != grid.n_bins:
        raise ValueError(f"noise levels of shape {noise.shape} do not match {grid.n_bins} bins")
    norms = phi_norms(j_max, grid, mode="continuous")
    return norms[None, :, None] * noise[:, None, :]


def moment_noise_variances(obs: ObservationSet, sa: SpectralArray, J_n: int,
                           norms: np.ndarray | None = None) -> np.ndarray:
    """Per-component noise variances with the signal part of ``sum dY^2`` removed.

    Solves ``eta2 (2 n_p - D_p) = sum dY^2 - B_p`` where ``B_p - eta2 D_p``
    is the equal-weight spectral estimate of the integrated volatility over
    the first ``J_n`` frequencies.  ``norms`` are the exact noise loadings
    (``noise_norms``); they are computed when missing.
    """
    grid = sa.grid
    if norms is None:
        norms = noise_norms(obs, grid, J_n)
    out = np.empty(obs.d)
    for p in range(obs.d):
        dy = obs.increments(p)
        n = dy.size
        B = grid.width * float(np.sum(np.mean(sa.component(p)[:, :J_n] ** 2, axis=1)))
        D = grid.width * float(np.sum(np.mean(norms[:, :J_n, p], axis=1)))
        raw = float(np.dot(dy, dy))
        out[p] = raw / (2 * n) if 2 * n - D < 0.5 * n else max((raw - B) / (2 * n - D), 0.0)
    return out


def _frequency_mask(j_limit, n_bins: int, j_max: int) -> np.ndarray:
    """``mask[k, j-1] = j <= j_limit[k]``; all true without limits."""
    if j_limit is None:
        return np.ones((n_bins, j_max), dtype=bool)
    return np.arange(1, j_max + 1)[None, :] <= np.asarray(j_limit)[:, None]


def pilot_covolatility(sa: SpectralArray, J_n: int, K_n: int, noise,
                       floor_rel: float = 1e-8, loadings: np.ndarray | None = None,
                       j_limit: np.ndarray | None = None) -> LocalEstimates:
    """Window-averaged, bias-corrected ``S_jm S_jm^T`` over the first ``J_n`` frequencies.

    ``noise`` is ``H`` (``(K, d)``) or noise terms ``(K, J, d)``, see
    ``noise_terms``.  With signal ``loadings`` the bias-corrected sum is
    divided entrywise by the summed loadings instead of ``J_n``.  Bins with
    a frequency limit ``j_limit`` below ``J_n`` use only their first
    ``j_limit`` frequencies.  The result is symmetrized and its eigenvalues
    are lifted to at least ``floor_rel * trace / d``.
    """
    G = noise_terms(noise, sa.grid, J_n)
    mask = _frequency_mask(j_limit, sa.grid.n_bins, J_n).astype(float)
    S = sa.values[:, :J_n, :] * mask[..., None]
    excess = np.einsum("kjp,kjq->kpq", S, S) - np.einsum("kp,pq->kpq", (G * mask[..., None]).sum(axis=1),
                                                         np.eye(sa.d))
    if loadings is None:
        norm = mask.sum(axis=1)[:, None, None]
    else:
        norm = (loadings[:, :J_n] * mask[..., None, None]).sum(axis=1)
    local = excess / norm
    raw = window_average(local, int(K_n))
    raw = 0.5 * (raw + np.swapaxes(raw, 1, 2))
    tr = np.trace(raw, axis1=1, axis2=2) / sa.d
    # a non-positive trace would give no floor at all; fall back to a scale from the other bins
    scale = np.where(tr > 0, tr, max(float(np.median(np.abs(tr))), 1e-300))
    H = np.asarray(noise, dtype=float)
    H = H if H.ndim == 2 else G.mean(axis=1)
    return LocalEstimates(psd_project(raw, floor_rel * scale), H, raw)


def bivariate_fisher_info(Sigma, H, j, grid: BinGrid, p: int = 0, q: int = 1):
    """Inverse variance of ``S_jk^(p) S_jk^(q)`` for bin-wise constant ``Sigma`` and noise ``H``.

    With ``C = Sigma + [phi_jk, phi_jk] diag(H)`` this is
    ``(C_pp C_qq + C_pq^2)^{-1}``; for ``p != q`` it expands to
    ``(S_pp S_qq + S_pq^2 + H_p H_q [phi]^2 + (S_pp H_q + S_qq H_p) [phi])^{-1}``.
    """
    Sigma = np.asarray(Sigma, dtype=float)
    H = np.asarray(H, dtype=float)
    norm = (np.pi * np.asarray(j, dtype=float) / grid.width) ** 2
    return _pair_info(Sigma, norm * H[..., p], norm * H[..., q], p, q)


def _pair_variance(Sigma, gp, gq, p, q, c=None):
    """``Var(S^(p) S^(q))`` for Gaussian ``S`` with covariance ``c Sigma + diag(G)``."""
    signal = Sigma if c is None else c * Sigma
    cpp = signal[..., p, p] + gp
    cqq = signal[..., q, q] + gq
    cpq = signal[..., p, q] + (gp if p == q else 0.0)
    var = cpp * cqq + cpq**2
    if np.any(var <= 0):
        raise NumericDomainError(f"degenerate ({p}, {q}) covariance: zero volatility and zero noise")
    return var


def _pair_info(Sigma, gp, gq, p, q):
    return 1.0 / _pair_variance(Sigma, gp, gq, p, q)


@dataclass(frozen=True)
class WeightTableICV:
    weights: np.ndarray
    info_j: np.ndarray
    info: np.ndarray
    p: int
    q: int
    mode: str = "oracle"


def icv_weights(Sigma: np.ndarray, noise, grid: BinGrid, j_max: int,
                p: int, q: int, mode: str = "oracle", loadings: np.ndarray | None = None,
                j_limit: np.ndarray | None = None) -> WeightTableICV:
    """Scalar Fisher weights ``w_jk = I_jk / I_k`` of the ``(p, q)`` covolatility estimator.

    With signal ``loadings`` ``c`` the products have mean ``c Sigma_pq``; then
    ``I_jk = c^2 / Var`` and the weights ``c / (Var I_k)`` apply to the raw
    products, so that ``sum_j w_jk c_jk = 1``.  Frequencies above
    ``j_limit[k]`` get zero weight and carry no information.
    """
    G = noise_terms(noise, grid, j_max)
    Sigma = np.asarray(Sigma, dtype=float)[:, None]
    mask = _frequency_mask(j_limit, grid.n_bins, j_max)
    if loadings is None:
        info_j = _pair_info(Sigma, G[..., p], G[..., q], p, q) * mask
        info = info_j.sum(axis=1)
        return WeightTableICV(info_j / info[:, None], info_j, info, p, q, mode)
    c = loadings[:, :j_max]
    var = _pair_variance(Sigma, G[..., p], G[..., q], p, q, c)
    info_j = c[..., p, q] ** 2 / var * mask
    info = info_j.sum(axis=1)
    return WeightTableICV(c[..., p, q] / var / info[:, None] * mask, info_j, info, p, q, mode)


def spectral_icv(sa: SpectralArray, p: int, q: int, weights: WeightTableICV, noise) -> EstimateReport:
    """Weighted cross products ``sum_k h sum_j w_jk S_jk^(p) S_jk^(q)``.

    For ``p == q`` each square is bias-corrected by its noise term.
    """
    grid = sa.grid
    j_max = weights.weights.shape[1]
    prod = sa.component(p)[:, :j_max] * sa.component(q)[:, :j_max]
    if p == q:
        prod = prod - noise_terms(noise, grid, j_max)[..., p]
    local = np.sum(weights.weights * prod, axis=1)
    h = grid.width
    est = np.concatenate(([0.0], np.cumsum(h * local)))
    var = np.concatenate(([0.0], np.cumsum(h**2 / weights.info)))
    return EstimateReport(grid.edges, est, var, weights.mode, f"icv({p},{q})", None, local,
                          {"j_max": j_max, "p": p, "q": q})


@dataclass
class LmmWeightTable:
    """Per-bin information ``I_k = sum_j I_jk`` and the inverse local covariances.

    ``cov_inv[k, j-1] = (Sigma_k + G_jk)^{-1}`` with the diagonal noise term
    ``G_jk`` (``[phi_jk, phi_jk] H_k`` in the continuous convention), so that
    ``I_jk = cov_inv (x) cov_inv``; weight matrices are formed on demand.
    """

    cov_inv: np.ndarray
    info: np.ndarray
    regularized: int = 0
    mode: str = "oracle"
    loadings: np.ndarray | None = None
    _info_factor: list = field(default_factory=list, repr=False)

    @property
    def d(self) -> int:
        return self.cov_inv.shape[-1]

    @property
    def j_max(self) -> int:
        return self.cov_inv.shape[1]

    def info_j(self, k: int, j: int) -> np.ndarray:
        A = self.cov_inv[k, j - 1]
        return np.kron(A, A)

    def design(self, k: int) -> np.ndarray:
        """Diagonals of ``D_jk = diag(vec c_jk)``, shape ``(J, d^2)``; ones without loadings."""
        if self.loadings is None:
            return np.ones((self.j_max, self.d**2))
        return self.loadings[k].reshape(self.j_max, self.d**2)

    def weight(self, k: int, j: int) -> np.ndarray:
        """``W_jk = I_k^{-1} D_jk I_jk`` (0-based bin ``k``, frequency ``j >= 1``)."""
        return cho_solve(self._factor(k), self.design(k)[j - 1][:, None] * self.info_j(k, j))

    def weights(self, k: int) -> np.ndarray:
        """All ``W_jk`` of bin ``k`` stacked along the first axis; ``sum_j W_jk D_jk = E``."""
        A = self.cov_inv[k]
        Ij = np.einsum("jac,jbe->jabce", A, A).reshape(A.shape[0], self.d**2, self.d**2)
        Ij = self.design(k)[:, :, None] * Ij
        return np.array([cho_solve(self._factor(k), m) for m in Ij])

    def info_inverse(self, k: int) -> np.ndarray:
        return cho_solve(self._factor(k), np.eye(self.d**2))

    def _factor(self, k: int):
        if not self._info_factor:
            self._info_factor.extend(cho_factor(I) for I in self.info)
        return self._info_factor[k]


def lmm_weight_matrices(Sigma: np.ndarray, noise, grid: BinGrid, j_max: int,
                        mode: str = "oracle", loadings: np.ndarray | None = None,
                        j_limit: np.ndarray | None = None) -> LmmWeightTable:
    """Fisher-information weight matrices of the local method of moments.

    With signal ``loadings`` the local covariance is ``c_jk o Sigma_k + G_jk``
    and the information becomes ``I_k = sum_j D_jk I_jk D_jk`` with
    ``D_jk = diag(vec c_jk)``.  Frequencies above ``j_limit[k]`` are
    dropped by zeroing their inverse covariances.  Local covariances that are
    numerically singular get ``1e-10 E_d`` added (logged and counted in
    ``regularized``).
    """
    Sigma = np.asarray(Sigma, dtype=float)
    G = noise_terms(noise, grid, j_max)
    K, _, d = G.shape
    c = None if loadings is None else np.asarray(loadings, dtype=float)[:, :j_max]
    signal = Sigma[:, None, :, :] if c is None else c * Sigma[:, None, :, :]
    C = signal + G[..., :, None] * np.eye(d)
    w_min = np.linalg.eigvalsh(C).min(axis=-1)
    bad = w_min < REGULARIZATION
    regularized = int(bad.sum())
    if regularized:
        log.warning("regularizing %d singular local covariances", regularized)
        C = C + np.where(bad[..., None, None], REGULARIZATION * np.eye(d), 0.0)
    cov_inv = np.linalg.inv(C)
    cov_inv = 0.5 * (cov_inv + np.swapaxes(cov_inv, -1, -2))
    cov_inv *= _frequency_mask(j_limit, K, j_max)[..., None, None]
    # kron index (a*d + b, c*d + e) holds A[a, c] A[b, e]
    if c is None:
        info = np.einsum("kjac,kjbe->kabce", cov_inv, cov_inv)
    else:
        info = np.einsum("kjab,kjce,kjac,kjbe->kabce", c, c, cov_inv, cov_inv)
    info = info.reshape(K, d * d, d * d)
    info = 0.5 * (info + np.swapaxes(info, 1, 2))
    return LmmWeightTable(cov_inv, info, regularized, mode, c)


def lmm_estimate(sa: SpectralArray, table: LmmWeightTable, noise) -> EstimateReport:
    """``sum_k h sum_j W_jk vec(S_jk S_jk^T - G_jk)``.

    The reported covariance is ``(sum_k h^2 I_k^{-1}) Z``; the plain
    ``sum_k h^2 I_k^{-1}`` is kept as ``meta["info_inverse"]``.  The loadings
    leave this form intact because every ``D_jk`` commutes with ``Z``.
    """
    grid = sa.grid
    K, J = table.cov_inv.shape[:2]
    d = sa.d
    S = sa.values[:, :J, :]
    G = noise_terms(noise, grid, J)
    M = np.einsum("kjp,kjq->kjpq", S, S) - G[..., :, None] * np.eye(d)
    A = table.cov_inv
    # I_jk vec(M) = (A (x) A) vec(M) = vec(A M A) for symmetric A, and D vec(X) = vec(c o X)
    AMA = np.einsum("kjab,kjbc,kjce->kjae", A, M, A)
    summed = AMA.sum(axis=1) if table.loadings is None else np.sum(table.loadings * AMA, axis=1)
    local = np.empty((K, d * d))
    cov = np.empty((K, d * d, d * d))
    for k in range(K):
        local[k] = cho_solve(table._factor(k), vec(summed[k]))
        cov[k] = table.info_inverse(k)
    h = grid.width
    est = np.vstack((np.zeros((1, d * d)), np.cumsum(h * local, axis=0)))
    info_inv = np.concatenate((np.zeros((1, d * d, d * d)), np.cumsum(h**2 * cov, axis=0)))
    # Cov(vec(S S^T)) = (C (x) C) Z and Z commutes with every A (x) A
    var = info_inv @ symmetrizer(d)
    return EstimateReport(grid.edges, est, var, table.mode, "lmm", None, local,
                          {"j_max": J, "d": d, "info_inverse": info_inv})


def studentize(report: EstimateReport, truth_vec, t: float | None = None) -> np.ndarray:
    """``I^{1/2} (LMM - vec(truth))``; asymptotically ``N(0, Z)``.

    ``I^{-1}`` is ``report.meta["info_inverse"]``; the reported variance is ``I^{-1} Z``.
    """
    i = -1 if t is None else report.index_at(t)
    info_half = symmetric_matrix_power(report.meta["info_inverse"][i], -0.5)
    return info_half @ (report.estimate[i] - np.asarray(truth_vec))


# ---------------------------------------------------------------------------
# pipelines


def multivariate_grid(obs: ObservationSet, n_bins: int) -> BinGrid:
    """Bins for ``obs``: exact per-bin counts when all components share a regular grid."""
    if obs.is_synchronous() and obs.is_regular(0):
        return BinGrid.for_sample(n_bins, obs.n_obs(0))
    return BinGrid.for_sample(n_bins)


def default_j_max_md(obs: ObservationSet, grid: BinGrid) -> int:
    return max_frequency(min(obs.n_obs(p) for p in range(obs.d)), grid)


@dataclass
class AdaptiveInputs:
    """First-stage quantities shared by the adaptive estimators.

    ``noise`` holds the ``(K, J, d)`` noise terms used for bias correction
    and weights; ``levels`` the local noise levels ``H``.
    """

    spectral: SpectralArray
    levels: LocalNoise
    noise: np.ndarray
    pilots: LocalEstimates
    pilot_j: int
    K_n: int
    convention: str
    loadings: np.ndarray | None = None
    j_limit: np.ndarray | None = None


def adaptive_inputs(obs: ObservationSet, grid: BinGrid, j_max: int | None = None,
                    pilot_j: int = PILOT_J, K_n: int | None = None,
                    noise: str = "moment", convention: str = "exact",
                    norms: np.ndarray | None = None, loadings: np.ndarray | None = None) -> AdaptiveInputs:
    """First stage: noise variances and levels, then pilot covolatilities.

    ``convention="exact"`` uses the noise loadings of ``noise_norms`` and
    the signal loadings of ``signal_loadings`` (``norms`` and ``loadings``
    may be passed in precomputed); ``"continuous"`` uses
    ``pi^2 j^2 h^-2 H_k`` and unit signal loadings.  ``noise`` picks the
    noise variance estimate: ``"moment"`` (signal part removed) or ``"raw"``.
    """
    j_max = default_j_max_md(obs, grid) if j_max is None else j_max
    pilot_j = min(pilot_j, j_max)
    n = min(obs.n_obs(p) for p in range(obs.d))
    K_n = default_window(n) if K_n is None else K_n
    sa = spectral_statistics(obs, grid, j_max, argument="midpoint")
    if norms is None:
        norms = noise_norms(obs, grid, j_max)
    if noise == "moment":
        eta2 = moment_noise_variances(obs, sa, pilot_j, norms)
    elif noise == "raw":
        eta2 = None
    else:
        raise ValueError(f"unknown noise treatment {noise!r}")
    levels = estimate_local_noise_levels(obs, grid, eta2)
    if convention == "exact":
        G = levels.eta2[None, None, :] * norms[:, :j_max, :]
        if loadings is None:
            loadings = signal_loadings(obs, grid, j_max)
        loadings = loadings[:, :j_max]
    elif convention == "continuous":
        G = noise_terms(levels.H, grid, j_max)
        loadings = None
    else:
        raise ValueError(f"unknown noise convention {convention!r}")
    j_limit = frequency_limits(obs, grid, j_max)
    pil = pilot_covolatility(sa, pilot_j, K_n, G, loadings=loadings, j_limit=j_limit)
    pil.H = levels.H
    return AdaptiveInputs(sa, levels, G, pil, pilot_j, K_n, convention, loadings, j_limit)


def _stamp(rep: EstimateReport, inputs: AdaptiveInputs) -> EstimateReport:
    rep.eta2 = inputs.levels.eta2
    rep.meta.update(pilot_j=inputs.pilot_j, K_n=inputs.K_n, convention=inputs.convention,
                    borrowed_bins=int(inputs.levels.borrowed.sum()))
    return rep


def adaptive_icv(obs: ObservationSet, grid: BinGrid, p: int = 0, q: int = 1,
                 inputs: AdaptiveInputs | None = None, **kw) -> EstimateReport:
    """Two-stage ``(p, q)`` covolatility estimate with pilot-based weights."""
    inputs = inputs or adaptive_inputs(obs, grid, **kw)
    sa = inputs.spectral
    w = icv_weights(inputs.pilots.Sigma, inputs.noise, grid, sa.j_max, p, q, "adaptive", inputs.loadings,
                    inputs.j_limit)
    return _stamp(spectral_icv(sa, p, q, w, inputs.noise), inputs)


def adaptive_lmm(obs: ObservationSet, grid: BinGrid, inputs: AdaptiveInputs | None = None,
                 **kw) -> EstimateReport:
    """Two-stage local method of moments estimate of ``vec`` of the integrated covolatility."""
    inputs = inputs or adaptive_inputs(obs, grid, **kw)
    sa = inputs.spectral
    table = lmm_weight_matrices(inputs.pilots.Sigma, inputs.noise, grid, sa.j_max, "adaptive", inputs.loadings,
                                inputs.j_limit)
    rep = _stamp(lmm_estimate(sa, table, inputs.noise), inputs)
    rep.meta["regularized"] = table.regularized
    return rep


def oracle_noise(obs: ObservationSet, grid: BinGrid, eta2, j_max: int,
                 norms: np.ndarray | None = None) -> np.ndarray:
    """Exact noise terms ``eta2_p N[k, j, p]`` for known noise variances."""
    if norms is None:
        norms = noise_norms(obs, grid, j_max)
    eta2 = np.broadcast_to(np.asarray(eta2, dtype=float), (obs.d,))
    return eta2[None, None, :] * norms[:, :j_max, :]


def oracle_icv(obs: ObservationSet, grid: BinGrid, Sigma_left: np.ndarray, noise,
               p: int = 0, q: int = 1, j_max: int | None = None,
               spectral: SpectralArray | None = None, loadings: np.ndarray | None = None) -> EstimateReport:
    """ICV with weights from the true ``Sigma`` at the bin left edges.

    ``noise`` is ``H`` (``(K, d)``) or exact noise terms (``oracle_noise``);
    ``loadings`` are optional signal loadings (``signal_loadings``).
    """
    j_max = default_j_max_md(obs, grid) if j_max is None else j_max
    sa = spectral if spectral is not None else spectral_statistics(obs, grid, j_max, argument="midpoint")
    w = icv_weights(Sigma_left, noise, grid, j_max, p, q, "oracle", loadings, frequency_limits(obs, grid, j_max))
    return spectral_icv(sa, p, q, w, noise)


def oracle_lmm(obs: ObservationSet, grid: BinGrid, Sigma_left: np.ndarray, noise,
               j_max: int | None = None, spectral: SpectralArray | None = None,
               loadings: np.ndarray | None = None) -> EstimateReport:
    j_max = default_j_max_md(obs, grid) if j_max is None else j_max
    sa = spectral if spectral is not None else spectral_statistics(obs, grid, j_max, argument="midpoint")
    table = lmm_weight_matrices(Sigma_left, noise, grid, j_max, "oracle", loadings,
                                frequency_limits(obs, grid, j_max))
    return lmm_estimate(sa, table, noise)
