"""Bin-wise sine bases, empirical scalar products and spectral statistics.

On bin ``k`` of width ``h`` the basis functions are

    Phi_jk(t) = sqrt(2/h) sin(j pi (t - (k-1)h) / h)

and the spectral statistic of component ``p`` is the increment-weighted sum
``S_jk = sum_i dY_i Phi_jk(s_i)``, where ``s_i`` is ``i/n`` on a regular grid
or the midpoint of the observation interval otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Literal, Union

import numba
import numpy as np

from .observations import ObservationSet

ArrayLike = Union[np.ndarray, float]


@dataclass(frozen=True)
class BinGrid:
    """Equidistant bins ``[(k-1)h, kh]``, ``k = 1..n_bins``.

    When built for a sample size ``n`` with ``n h`` not integral, the bin width
    is shrunk to ``floor(n h) / n`` so that every bin holds the same number of
    grid points and the bins cover ``[0, t_end]`` with ``t_end < 1``.
    """

    n_bins: int
    width: float
    per_bin: int | None = None

    def __post_init__(self):
        if int(self.n_bins) != self.n_bins or self.n_bins < 1:
            raise ValueError(f"n_bins must be a positive integer, got {self.n_bins}")
        if not (0 < self.width <= 1.0 / self.n_bins + 1e-15):
            raise ValueError(f"invalid bin width {self.width} for {self.n_bins} bins")

    @classmethod
    def for_sample(cls, n_bins: int, n: int | None = None) -> "BinGrid":
        if n is None:
            return cls(int(n_bins), 1.0 / n_bins)
        per_bin = int(n) // int(n_bins)
        if per_bin < 2:
            raise ValueError(f"{n} observations cannot fill {n_bins} bins")
        return cls(int(n_bins), per_bin / n, per_bin)

    @property
    def h(self) -> float:
        return self.width

    @property
    def t_end(self) -> float:
        return self.n_bins * self.width

    @property
    def edges(self) -> np.ndarray:
        """Bin edges ``0, h, ..., n_bins h``."""
        return np.arange(self.n_bins + 1) * self.width

    @property
    def left_edges(self) -> np.ndarray:
        return self.edges[:-1]

    def check_bin(self, k: int) -> None:
        if int(k) != k or not 1 <= k <= self.n_bins:
            raise ValueError(f"bin index {k} outside 1..{self.n_bins}")


def max_frequency(n: int, grid: BinGrid) -> int:
    """Largest usable frequency ``floor(n h) - 1``."""
    return int(np.floor(n * grid.width + 1e-9)) - 1


def check_j_max(j_max: int, n: int, grid: BinGrid) -> int:
    top = max_frequency(n, grid)
    if int(j_max) != j_max or not 1 <= j_max <= top:
        raise ValueError(f"j_max={j_max} outside 1..{top} (floor(nh)-1)")
    return int(j_max)


def sine_basis_value(j, k: int, grid: BinGrid, t) -> ArrayLike:
    """``Phi_jk(t)``; zero outside the closed bin ``[(k-1)h, kh]``."""
    grid.check_bin(k)
    j = np.asarray(j)
    if np.any(j < 1):
        raise ValueError("frequency j must be >= 1")
    t = np.asarray(t, dtype=float)
    h = grid.width
    u = t - (k - 1) * h
    inside = (u >= 0) & (u <= h)
    out = np.sqrt(2.0 / h) * np.sin(j * np.pi * u / h)
    out = np.where(inside, out, 0.0)
    return out[()] if out.ndim == 0 else out


def weight_basis_value(j, k: int, grid: BinGrid, t, n: int | None = None,
                       mode: Literal["discrete", "continuous"] = "discrete") -> ArrayLike:
    """Cosine companion ``phi_jk`` of the sine basis.

    ``discrete`` is the exact discrete derivative on the grid ``i/n``,
    ``2n sqrt(2/h) sin(j pi / (2nh)) cos(j pi (t-(k-1)h)/h)``; ``continuous``
    is the plain derivative ``Phi'_jk``.
    """
    grid.check_bin(k)
    j = np.asarray(j)
    if np.any(j < 1):
        raise ValueError("frequency j must be >= 1")
    t = np.asarray(t, dtype=float)
    h = grid.width
    u = t - (k - 1) * h
    inside = (u >= 0) & (u <= h)
    if mode == "discrete":
        if n is None:
            raise ValueError("discrete mode requires n")
        if np.any(j > max_frequency(n, grid)):
            raise ValueError(f"discrete weight basis requires j < floor(nh) = {max_frequency(n, grid) + 1}")
        amp = 2.0 * n * np.sqrt(2.0 / h) * np.sin(j * np.pi / (2.0 * n * h))
    elif mode == "continuous":
        amp = np.sqrt(2.0 / h) * j * np.pi / h
    else:
        raise ValueError(f"unknown mode {mode!r}")
    out = np.where(inside, amp * np.cos(j * np.pi * u / h), 0.0)
    return out[()] if out.ndim == 0 else out


def empirical_scalar_product(a, b, n: int, variant: Literal["plain", "shifted"] = "plain") -> float:
    """``<a, b>_n`` (arguments ``i/n``) or ``[a, b]_n`` (arguments ``(i - 1/2)/n``).

    Either argument may be a length-``n`` sequence or a callable on ``[0, 1]``.
    """
    if variant == "plain":
        s = np.arange(1, n + 1) / n
    elif variant == "shifted":
        s = (np.arange(1, n + 1) - 0.5) / n
    else:
        raise ValueError(f"unknown variant {variant!r}")

    def _eval(f):
        if callable(f):
            return np.asarray(f(s), dtype=float)
        f = np.asarray(f, dtype=float)
        if f.shape != (n,):
            raise ValueError(f"sequence of length {f.shape} does not match n={n}")
        return f

    return float(np.dot(_eval(a), _eval(b)) / n)


@lru_cache(maxsize=64)
def _phi_norms_discrete(j_max: int, n: int, per_bin: float) -> np.ndarray:
    j = np.arange(1, j_max + 1)
    out = 4.0 * n**2 * np.sin(j * np.pi / (2.0 * per_bin)) ** 2
    out.flags.writeable = False
    return out


def phi_norms(j_max: int, grid: BinGrid, n: int | None = None,
              mode: Literal["discrete", "continuous"] = "discrete") -> np.ndarray:
    """``[phi_jk, phi_jk]`` for ``j = 1..j_max``; identical for every bin.

    ``discrete``: ``4 n^2 sin^2(j pi / (2nh))``.  ``continuous``: ``pi^2 j^2 / h^2``.
    """
    if mode == "discrete":
        if n is None:
            raise ValueError("discrete norms need n")
        return _phi_norms_discrete(int(j_max), int(n), round(n * grid.width, 9))
    j = np.arange(1, j_max + 1)
    return (np.pi * j / grid.width) ** 2


@dataclass(frozen=True)
class SpectralArray:
    """Spectral statistics ``values[k, j-1, p]`` with their bin grid."""

    values: np.ndarray
    grid: BinGrid
    j_max: int
    n: tuple[int, ...]
    argument: str

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n_bins, self.j_max, len(self.n)):
            raise ValueError(f"shape {v.shape} inconsistent with grid/j_max/d")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite spectral statistics")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def d(self) -> int:
        return self.values.shape[2]

    def component(self, p: int) -> np.ndarray:
        """``(n_bins, j_max)`` block of component ``p``."""
        return self.values[:, :, p]


@lru_cache(maxsize=16)
def _regular_basis(per_bin: int, j_max: int, shift: float) -> np.ndarray:
    # rows: position m = 1..per_bin within the bin, columns: j = 1..j_max;
    # scaled so that the sqrt(2/h) factor is applied later
    m = np.arange(1, per_bin + 1) - shift
    j = np.arange(1, j_max + 1)
    out = np.sin(np.pi * np.outer(m, j) / per_bin)
    if shift == 0.0:
        out[-1, :] = 0.0  # sin(j pi) at the right bin edge
    out.flags.writeable = False
    return out


def regular_spectral_statistics(increments: np.ndarray, grid: BinGrid, j_max: int,
                                shift: float = 0.0) -> np.ndarray:
    """Spectral statistics for increments on the grid ``i/n``.

    ``increments`` has shape ``(..., n)``; the result has shape
    ``(..., n_bins, j_max)``.  ``shift=0`` evaluates the basis at ``i/n``,
    ``shift=0.5`` at the interval midpoints ``(i - 1/2)/n``.
    """
    increments = np.asarray(increments, dtype=float)
    n = increments.shape[-1]
    per_bin = int(round(n * grid.width))
    if abs(per_bin - n * grid.width) > 1e-8 or per_bin * grid.n_bins > n:
        raise ValueError("grid does not match the sample size; build it with BinGrid.for_sample")
    check_j_max(j_max, n, grid)
    used = increments[..., : per_bin * grid.n_bins]
    blocks = used.reshape(used.shape[:-1] + (grid.n_bins, per_bin))
    return np.sqrt(2.0 / grid.width) * (blocks @ _regular_basis(per_bin, int(j_max), float(shift)))


@numba.njit(cache=True, nogil=True)
def _irregular_kernel(mid, dy, width, n_bins, j_max, out):
    scale = np.sqrt(2.0 / width)
    for i in range(mid.size):
        b = int(np.floor(mid[i] / width))
        if b < 0 or b >= n_bins:
            continue
        theta = np.pi * (mid[i] - b * width) / width
        c1 = np.cos(theta)
        s1 = np.sin(theta)
        c = c1
        s = s1
        for j in range(j_max):
            out[b, j] += dy[i] * scale * s
            c, s = c * c1 - s * s1, s * c1 + c * s1


def _irregular_statistics(times: np.ndarray, values: np.ndarray, grid: BinGrid, j_max: int) -> np.ndarray:
    mid = 0.5 * (times[1:] + times[:-1])
    dy = np.diff(values)
    out = np.zeros((grid.n_bins, j_max))
    # bin k takes midpoints in [(k-1)h, kh); anything past t_end is dropped
    _irregular_kernel(mid, dy, grid.width, grid.n_bins, j_max, out)
    return out


@numba.njit(cache=True, nogil=True)
def _noise_norm_kernel(mid, width, n_bins, j_max, out):
    scale = np.sqrt(2.0 / width)
    prev = np.zeros(j_max)
    cur = np.zeros(j_max)
    prev_bin = -1
    for i in range(mid.size):
        b = int(np.floor(mid[i] / width))
        if b < 0 or b >= n_bins:
            b = -1
        if b >= 0:
            theta = np.pi * (mid[i] - b * width) / width
            c1 = np.cos(theta)
            s1 = np.sin(theta)
            c = c1
            s = s1
            for j in range(j_max):
                cur[j] = scale * s
                c, s = c * c1 - s * s1, s * c1 + c * s1
        if b >= 0 and b == prev_bin:
            for j in range(j_max):
                out[b, j] += (cur[j] - prev[j]) ** 2
        else:
            if prev_bin >= 0:
                for j in range(j_max):
                    out[prev_bin, j] += prev[j] ** 2
            if b >= 0:
                for j in range(j_max):
                    out[b, j] += cur[j] ** 2
        for j in range(j_max):
            prev[j] = cur[j]
        prev_bin = b
    if prev_bin >= 0:
        for j in range(j_max):
            out[prev_bin, j] += prev[j] ** 2


def noise_norms(obs: ObservationSet, grid: BinGrid, j_max: int) -> np.ndarray:
    """Exact noise loadings ``N[k, j-1, p]`` of midpoint spectral statistics.

    With i.i.d. noise of variance ``eta_p^2`` the noise part of ``S_jk^(p)``
    has variance ``eta_p^2 N[k, j-1, p]``, where
    ``N = sum_v (Phi_jk(tbar_v) - Phi_jk(tbar_{v+1}))^2`` and ``Phi_jk`` is
    taken as zero off bin ``k``.  For large samples
    ``eta_p^2 N ~ [phi_jk, phi_jk] H_p^k``.
    """
    out = np.zeros((grid.n_bins, int(j_max), obs.d))
    for p in range(obs.d):
        t = obs.times[p]
        mid = 0.5 * (t[1:] + t[:-1])
        block = np.zeros((grid.n_bins, int(j_max)))
        _noise_norm_kernel(mid, grid.width, grid.n_bins, int(j_max), block)
        out[:, :, p] = block
    return out


@numba.njit(cache=True, nogil=True)
def _loading_kernel(length, mid_p, mid_q, width, n_bins, j_max, out):
    scale = 2.0 / width
    for i in range(length.size):
        b = int(np.floor(mid_p[i] / width))
        if b < 0 or b >= n_bins or int(np.floor(mid_q[i] / width)) != b:
            continue
        tp = np.pi * (mid_p[i] - b * width) / width
        tq = np.pi * (mid_q[i] - b * width) / width
        cp1, sp1, cq1, sq1 = np.cos(tp), np.sin(tp), np.cos(tq), np.sin(tq)
        cp, sp, cq, sq = cp1, sp1, cq1, sq1
        for j in range(j_max):
            out[b, j] += length[i] * scale * sp * sq
            cp, sp = cp * cp1 - sp * sp1, sp * cp1 + cp * sp1
            cq, sq = cq * cq1 - sq * sq1, sq * cq1 + cq * sq1


def _pair_segments(tp: np.ndarray, tq: np.ndarray):
    """Common refinement of two observation grids: lengths and the midpoints of the enclosing intervals."""
    u = np.union1d(tp, tq)
    u = u[(u >= max(tp[0], tq[0])) & (u <= min(tp[-1], tq[-1]))]
    centre = 0.5 * (u[1:] + u[:-1])
    out = [np.diff(u)]
    for t in (tp, tq):
        v = np.clip(np.searchsorted(t, centre), 1, t.size - 1)
        out.append(0.5 * (t[v - 1] + t[v]))
    return out


def signal_loadings(obs: ObservationSet, grid: BinGrid, j_max: int) -> np.ndarray:
    """Exact signal loadings ``c[k, j-1, p, q]`` of midpoint spectral statistics.

    With constant covolatility on bin ``k`` the signal part of
    ``S_jk^(p) S_jk^(q)`` has mean ``c Sigma_pq`` where
    ``c = int Phi~_p Phi~_q`` and ``Phi~_p`` is the step function equal to
    ``Phi_jk(tbar_v)`` on the ``v``-th observation interval of component ``p``.
    On a common regular grid ``c = 1``; across non-synchronous grids the
    cross loadings fall well below one at frequencies comparable to the
    observation spacing.
    """
    j_max = int(j_max)
    d = obs.d
    if obs.is_synchronous() and obs.is_regular(0) and abs(obs.n_obs(0) * grid.width
                                                           - round(obs.n_obs(0) * grid.width)) < 1e-8:
        return np.ones((grid.n_bins, j_max, d, d))
    out = np.zeros((grid.n_bins, j_max, d, d))
    for p in range(d):
        for q in range(p, d):
            if q > p and obs.is_synchronous():
                out[:, :, p, q] = out[:, :, q, p] = out[:, :, 0, 0]
                continue
            length, mid_p, mid_q = _pair_segments(obs.times[p], obs.times[q])
            block = np.zeros((grid.n_bins, j_max))
            _loading_kernel(length, mid_p, mid_q, grid.width, grid.n_bins, j_max, block)
            out[:, :, p, q] = out[:, :, q, p] = block
    return out


def frequency_limits(obs: ObservationSet, grid: BinGrid, j_max: int) -> np.ndarray:
    """Per-bin frequency cutoffs ``min_p(m_pk) - 1``, clipped to ``[1, j_max]``.

    ``m_pk`` counts the increments of component ``p`` whose midpoint lies in
    bin ``k``.  The statistics ``S_1k, ..., S_Jk`` of a bin are linear in its
    ``m_pk`` increments, so frequencies beyond that count add no information;
    on a common regular grid the limit is ``nh - 1`` in every bin.
    """
    counts = np.empty((grid.n_bins, obs.d), dtype=int)
    for p in range(obs.d):
        t = obs.times[p]
        b = np.floor(0.5 * (t[1:] + t[:-1]) / grid.width).astype(int)
        counts[:, p] = np.bincount(b[(b >= 0) & (b < grid.n_bins)], minlength=grid.n_bins)
    return np.clip(counts.min(axis=1) - 1, 1, int(j_max))


def spectral_statistics(obs: ObservationSet, grid: BinGrid, j_max: int,
                        argument: Literal["auto", "grid", "midpoint"] = "auto") -> SpectralArray:
    """Spectral statistics of every component on every bin.

    ``auto`` uses grid points ``i/n`` for one-dimensional regular data and
    interval midpoints otherwise.
    """
    if argument == "auto":
        argument = "grid" if (obs.d == 1 and obs.is_regular(0)) else "midpoint"
    if argument not in ("grid", "midpoint"):
        raise ValueError(f"unknown argument rule {argument!r}")
    n_min = min(obs.n_obs(p) for p in range(obs.d))
    check_j_max(j_max, n_min, grid)
    out = np.empty((grid.n_bins, j_max, obs.d))
    for p in range(obs.d):
        if obs.is_regular(p) and abs(obs.n_obs(p) * grid.width - round(obs.n_obs(p) * grid.width)) < 1e-8:
            shift = 0.0 if argument == "grid" else 0.5
            out[:, :, p] = regular_spectral_statistics(obs.increments(p), grid, j_max, shift)
        else:
            if argument == "grid":
                raise ValueError("grid-point evaluation requires regular observations")
            out[:, :, p] = _irregular_statistics(obs.times[p], obs.values[p], grid, j_max)
    return SpectralArray(out, grid, int(j_max), tuple(obs.n_obs(p) for p in range(obs.d)), argument)


def basis_function(j: int, k: int, grid: BinGrid) -> Callable[[np.ndarray], np.ndarray]:
    """``Phi_jk`` as a callable, handy for scalar products."""
    return lambda t: sine_basis_value(j, k, grid, t)
