"""Monte Carlo experiments: replications, efficiency, coverage and the efficiency table.

One volatility path is drawn per experiment and frozen; every replication
draws fresh price increments conditionally on it and fresh noise.  The
frozen path comes from ``stream_generators(master_seed)["paths"]``;
replication ``r`` uses ``SeedSequence(master_seed, spawn_key=(1, r))``, so
results do not depend on the number of worker threads.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.stats import binomtest

from . import asymptotics as asy
from .basis import BinGrid, noise_norms, signal_loadings, spectral_statistics
from .linalg import symmetrizer
from .multivariate import (adaptive_icv, adaptive_inputs, adaptive_lmm, default_j_max_md,
                           multivariate_grid, oracle_icv, oracle_lmm, oracle_noise, studentize)
from .observations import ObservationSet
from .report import normal_quantile
from .simulation import (ConditionalSampler, ScenarioConfig, simulate_paths, stream_generators,
                         true_integrated_covolatility)
from .univariate import adaptive_iv, default_j_max, oracle_iv

log = logging.getLogger(__name__)

ESTIMATORS = ("iv_oracle", "iv_adaptive", "icv", "icv_oracle", "lmm", "lmm_oracle")


class ScenarioMismatchError(ValueError):
    """The estimator cannot be applied to the scenario's dimension."""


@dataclass
class McRecord:
    """One replication: estimate at the end of the horizon, its variance estimate and the truth.

    For the LMM estimators ``estimate``/``truth`` are ``vec`` vectors,
    ``variance`` the diagonal of the reported covariance and ``z`` the
    studentized error vector.
    """

    rep: int
    estimate: Any
    variance: Any
    truth: Any
    hit: Any
    z: Any = None


@dataclass
class McReport:
    scenario: dict
    estimator: str
    reps: int
    master_seed: int
    level: float
    records: list[McRecord]
    aggregates: dict
    wall_clock: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def is_vector(self) -> bool:
        return np.ndim(self.records[0].estimate) > 0

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def to_dict(self, records: bool = True) -> dict:
        out = {
            "scenario": self.scenario,
            "estimator": self.estimator,
            "reps": self.reps,
            "master_seed": self.master_seed,
            "level": self.level,
            "aggregates": _plain(self.aggregates),
            "wall_clock": self.wall_clock,
            "meta": _plain(self.meta),
        }
        if records:
            out["records"] = [_plain(r.__dict__) for r in self.records]
        return out

    def summary_rows(self) -> list[tuple[str, str]]:
        a = self.aggregates
        keys = ("mean", "truth", "bias", "variance", "rmse", "re", "coverage", "coverage_lo", "coverage_hi")
        return [(k, _fmt(a[k])) for k in keys if k in a]


def _fmt(v) -> str:
    if np.ndim(v) == 0:
        return f"{float(v):.6g}"
    return "[" + ", ".join(f"{float(x):.4g}" for x in np.ravel(v)) + "]"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def rep_generator(master_seed: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(1, rep)))


def _fsum_mean(values: np.ndarray) -> np.ndarray:
    """Entrywise ``math.fsum`` mean over the first axis (exact, order-independent)."""
    values = np.asarray(values, dtype=float)
    flat = values.reshape(values.shape[0], -1)
    out = np.array([math.fsum(flat[:, i]) for i in range(flat.shape[1])]) / values.shape[0]
    return out.reshape(values.shape[1:]) if values.ndim > 1 else out[0]


def aggregate(estimates, truth, variances, hits, n_ref: int, avar=None) -> dict:
    """Mean, bias, population variance, RMSE, RE and coverage of the replications.

    The variance uses ``ddof=0`` so that ``RMSE^2 = bias^2 + variance`` holds exactly.
    """
    est = np.asarray(estimates, dtype=float)
    mean = _fsum_mean(est)
    bias = mean - np.asarray(truth, dtype=float)
    var = _fsum_mean((est - mean) ** 2)
    mse = bias**2 + var
    hits = np.asarray(hits, dtype=float)
    out = {"mean": mean, "truth": np.asarray(truth, dtype=float), "bias": bias, "variance": var,
           "rmse": np.sqrt(mse), "mean_variance_estimate": _fsum_mean(np.asarray(variances, dtype=float)),
           "coverage": _fsum_mean(hits)}
    if avar is not None:
        out["avar"] = np.asarray(avar, dtype=float)
        if np.all(out["avar"] > 0):
            out["re"] = relative_efficiency_from_mse(mse, n_ref, avar)
        else:
            log.info("asymptotic variance not positive (noise-free scenario?); RE omitted")
    return out


def relative_efficiency_from_mse(mse, n: int, avar) -> np.ndarray:
    """``sqrt(MSE sqrt(n) / avar)``."""
    avar = np.asarray(avar, dtype=float)
    if np.any(avar <= 0):
        raise ValueError("asymptotic variance must be positive")
    return np.sqrt(np.asarray(mse) * np.sqrt(n) / avar)


def relative_efficiency(report: McReport, avar_denominator=None) -> float | np.ndarray:
    """Realized relative efficiency ``sqrt(RMSE^2 sqrt(n) / avar)`` at ``t = 1``.

    The denominator defaults to the asymptotic variance stored in the report.
    """
    a = report.aggregates
    avar = a["avar"] if avar_denominator is None else avar_denominator
    n = report.meta["n_ref"]
    return relative_efficiency_from_mse(a["rmse"] ** 2, n, avar)


@dataclass(frozen=True)
class CoverageResult:
    level: float
    rate: float
    hits: int
    reps: int
    ci_low: float
    ci_high: float


def coverage_analysis(report: McReport, level: float = 0.95, entry: int | None = None) -> CoverageResult:
    """Fraction of replications whose ``level`` interval covers the truth, with a 95% Wilson interval.

    ``level = 0`` gives zero-width intervals and hence coverage 0.  For
    vector reports ``entry`` picks the ``vec`` coordinate (default 1, the
    off-diagonal of a bivariate report).
    """
    z = normal_quantile(level)
    est, var, truth = report.column("estimate"), report.column("variance"), report.column("truth")
    if report.is_vector:
        e = 1 if entry is None else entry
        est, var, truth = est[:, e], var[:, e], truth[:, e]
    if np.any(var <= 0):
        raise ValueError("coverage needs positive variance estimates")
    hit = (np.abs(est - truth) < z * np.sqrt(var)) if level > 0 else np.zeros(est.size, dtype=bool)
    k = int(hit.sum())
    ci = binomtest(k, est.size).proportion_ci(confidence_level=0.95, method="wilson")
    return CoverageResult(level, k / est.size, k, est.size, float(ci.low), float(ci.high))


# ---------------------------------------------------------------------------
# experiment


class Experiment:
    """Frozen volatility path and everything that stays fixed across replications."""

    def __init__(self, config: ScenarioConfig, estimator: str, master_seed: int, level: float = 0.95,
                 j_max: int | None = None, pilot_j: int = 100, K_n: int | None = None,
                 noise: str = "moment", pair: tuple[int, int] = (0, 1)):
        if estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {estimator!r}; choose from {', '.join(ESTIMATORS)}")
        if estimator.startswith("iv") and config.d != 1:
            raise ScenarioMismatchError(f"{estimator} needs a one-dimensional scenario, got d={config.d}")
        if estimator.startswith("icv") and config.d < 2:
            raise ScenarioMismatchError(f"{estimator} needs d >= 2")
        self.config = config
        self.estimator = estimator
        self.level = level
        self.j_max = j_max
        self.pilot_j = pilot_j
        self.K_n = K_n
        self.noise = noise
        self.pair = pair
        self.paths = simulate_paths(config, stream_generators(master_seed)["paths"])
        self.sampler = ConditionalSampler(self.paths, config)
        self.fixed_times = not any(s.random for s in config.schemes)
        self._cache: dict = {}
        if self.paths.clamp_count:
            log.warning("volatility floor hit on %.3g%% of the fine grid", 100 * self.paths.clamp_fraction)

    # -- fixed quantities
    def grid_for(self, obs: ObservationSet) -> BinGrid:
        if "grid" in self._cache and self.fixed_times:
            return self._cache["grid"]
        grid = multivariate_grid(obs, self.config.h_inv)
        if self.fixed_times:
            self._cache["grid"] = grid
        return grid

    def truth(self, grid: BinGrid) -> np.ndarray:
        key = ("truth", grid.t_end)
        if key not in self._cache:
            self._cache[key] = true_integrated_covolatility(self.paths, grid.t_end)
        return self._cache[key]

    def alpha(self, times) -> np.ndarray:
        c = self.config
        return asy.noise_intensity(c.eta, c.nu, [s.density for s in c.schemes], times, c.d)

    def avar(self, grid: BinGrid):
        """Asymptotic variance (``n^{1/4}`` scale) matching the estimator.

        ``None`` when the noise intensity is not finite and positive on the
        whole fine grid (no noise, or a sampling density vanishing somewhere).
        """
        p = self.paths
        t = grid.t_end
        if self.estimator.startswith("iv"):
            return asy.avar_iv(np.sqrt(p.spot_cov[:, 0, 0]), float(self.config.eta[0]), t, p.t).value
        try:
            alpha = self.alpha(p.t)
        except asy.NumericDomainError as exc:
            log.info("no asymptotic variance: %s", exc)
            return None
        if np.any(alpha <= 0):
            return None
        if self.estimator.startswith("icv"):
            return asy.avar_icv(p.spot_cov, alpha, *self.pair, t, p.t).value
        info_inv = asy.acov_lmm(p.spot_cov, alpha, t, p.t).value
        return np.diag(info_inv @ symmetrizer(self.config.d))

    def _cached(self, key, fn, obs, grid, j_max):
        if self.fixed_times and key in self._cache:
            return self._cache[key]
        out = fn(obs, grid, j_max)
        if self.fixed_times:
            self._cache[key] = out
        return out

    def _norms(self, obs, grid, j_max):
        return self._cached("norms", noise_norms, obs, grid, j_max)

    def _loadings(self, obs, grid, j_max):
        return self._cached("loadings", signal_loadings, obs, grid, j_max)

    # -- one replication
    def run_one(self, rep: int, master_seed: int) -> McRecord:
        obs = self.sampler.draw(rep_generator(master_seed, rep))
        grid = self.grid_for(obs)
        truth = self.truth(grid)
        z = normal_quantile(self.level)
        est = self.estimator
        left = self.paths.value_at(grid.left_edges)
        if est.startswith("iv"):
            n = obs.n_obs(0)
            j_max = default_j_max(n, grid) if self.j_max is None else self.j_max
            if est == "iv_oracle":
                rep_ = oracle_iv(obs, grid, left[:, 0, 0], float(self.config.eta[0] ** 2), j_max)
            else:
                rep_ = adaptive_iv(obs, grid, j_max, self.pilot_j, self.K_n, self.noise)
            e, v, tr = float(rep_.final), float(rep_.final_variance), float(truth[0, 0])
            return McRecord(rep, e, v, tr, bool(abs(e - tr) < z * math.sqrt(max(v, 0.0))))
        j_max = default_j_max_md(obs, grid) if self.j_max is None else self.j_max
        norms = self._norms(obs, grid, j_max)
        loadings = self._loadings(obs, grid, j_max)
        if est.endswith("oracle"):
            sa = spectral_statistics(obs, grid, j_max, argument="midpoint")
            G = oracle_noise(obs, grid, self.config.eta**2, j_max, norms)
        else:
            inputs = adaptive_inputs(obs, grid, j_max, self.pilot_j, self.K_n, self.noise, norms=norms,
                                    loadings=loadings)
        if est.startswith("icv"):
            p, q = self.pair
            if est == "icv":
                rep_ = adaptive_icv(obs, grid, p, q, inputs=inputs)
            else:
                rep_ = oracle_icv(obs, grid, left, G, p, q, j_max, spectral=sa, loadings=loadings)
            e, v, tr = float(rep_.final), float(rep_.final_variance), float(truth[p, q])
            return McRecord(rep, e, v, tr, bool(abs(e - tr) < z * math.sqrt(max(v, 0.0))))
        if est == "lmm":
            rep_ = adaptive_lmm(obs, grid, inputs=inputs)
        else:
            rep_ = oracle_lmm(obs, grid, left, G, j_max, sa, loadings)
        tv = truth.reshape(-1, order="F")
        e = np.asarray(rep_.final, dtype=float)
        v = np.diag(rep_.final_variance).copy()
        hit = np.abs(e - tv) < z * np.sqrt(np.clip(v, 0.0, None))
        return McRecord(rep, e, v, tv, hit, studentize(rep_, tv))


def run_monte_carlo(config: ScenarioConfig, estimator: str = "iv_oracle", reps: int = 1000,
                    master_seed: int | None = None, threads: int = 1, level: float = 0.95,
                    **options) -> McReport:
    """Run ``reps`` replications of ``estimator`` on ``config`` with a frozen volatility path.

    ``options`` go to ``Experiment`` (``j_max``, ``pilot_j``, ``K_n``,
    ``noise``, ``pair``).  ``master_seed`` defaults to ``config.seed``.
    """
    if reps < 2:
        raise ValueError("at least two replications are needed")
    master_seed = config.seed if master_seed is None else int(master_seed)
    start = time.perf_counter()
    exp = Experiment(config, estimator, master_seed, level, **options)
    # the first replication fills the caches shared by all others
    first = exp.run_one(0, master_seed)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rest = list(pool.map(lambda r: exp.run_one(r, master_seed), range(1, reps)))
    else:
        rest = [exp.run_one(r, master_seed) for r in range(1, reps)]
    records = [first] + rest
    grid = exp._cache.get("grid") or BinGrid.for_sample(config.h_inv)
    avar = exp.avar(grid)
    agg = aggregate([r.estimate for r in records], records[0].truth, [r.variance for r in records],
                    [r.hit for r in records], config.n_ref, avar)
    if records[0].z is not None:
        zs = np.array([r.z for r in records])
        agg["z_mean"] = _fsum_mean(zs)
        agg["z_cov"] = _fsum_mean(np.einsum("ri,rj->rij", zs - agg["z_mean"], zs - agg["z_mean"]))
    meta = {"n_ref": config.n_ref, "clamp_fraction": exp.paths.clamp_fraction,
            "options": {k: v for k, v in options.items()}}
    return McReport(config.to_dict(), estimator, reps, master_seed, level, records, agg,
                    time.perf_counter() - start, meta)


# ---------------------------------------------------------------------------
# efficiency table

TABLE1_ROWS = [
    # n, sigma (None: seasonal stochastic), h_inv, eta, leverage, printed RE oracle, printed RE adaptive
    (30000, 1.0, 25, 0.01, None, 1.01, 1.43),
    (5000, 1.0, 25, 0.01, None, 1.02, 1.47),
    (30000, None, 25, 0.01, 0.5, 1.09, 1.75),
    (30000, None, 25, 0.01, 0.2, 1.06, 1.77),
    (30000, None, 25, 0.01, 0.8, 1.09, 1.75),
    (30000, None, 25, 0.001, 0.5, 1.62, 1.88),
    (30000, None, 25, 0.1, 0.5, 1.20, 1.69),
    (30000, None, 50, 0.01, 0.5, 1.09, 1.84),
    (30000, None, 10, 0.01, 0.5, 1.16, 1.86),
    (5000, None, 25, 0.01, 0.5, 1.13, 1.92),
    (5000, None, 50, 0.01, 0.5, 1.08, 1.75),
    (5000, None, 10, 0.01, 0.5, 1.09, 1.87),
]


@dataclass
class Table1Row:
    n: int
    sigma: str
    h_inv: int
    eta: float
    leverage: float | None
    printed_oracle: float
    printed_adaptive: float
    re_oracle: float = float("nan")
    re_adaptive: float = float("nan")
    coverage_oracle: float = float("nan")
    coverage_adaptive: float = float("nan")

    def as_list(self) -> list[str]:
        lev = "-" if self.leverage is None else f"{self.leverage:g}"
        return [str(self.n), self.sigma, str(self.h_inv), f"{self.eta:g}", lev, f"{self.re_oracle:.3f}",
                f"{self.printed_oracle:.2f}", f"{self.re_adaptive:.3f}", f"{self.printed_adaptive:.2f}"]


def table1_config(row, seed: int = 0) -> ScenarioConfig:
    n, sigma, h_inv, eta, lev = row[:5]
    vol = {"model": "constant", "sigma": sigma} if sigma is not None else \
        {"model": "stochvol_seasonal", "leverage": lev}
    return ScenarioConfig(n=n, d=1, h_inv=h_inv, volatility=vol, noise={"eta": eta, "distribution": "gaussian"},
                          seed=seed)


def run_table1(reps: int = 1000, master_seed: int = 0, threads: int = 1, rows=None,
               **options) -> list[Table1Row]:
    """All configurations of the efficiency table, oracle and adaptive, side by side with the printed values."""
    out = []
    for i, row in enumerate(TABLE1_ROWS if rows is None else rows):
        cfg = table1_config(row, master_seed + i)
        res = Table1Row(row[0], "1" if row[1] is not None else "seasonal SV", row[2], row[3], row[4], row[5], row[6])
        for est in ("iv_oracle", "iv_adaptive"):
            rep = run_monte_carlo(cfg, est, reps, master_seed + i, threads, **options)
            if est == "iv_oracle":
                res.re_oracle, res.coverage_oracle = float(rep.aggregates["re"]), float(rep.aggregates["coverage"])
            else:
                res.re_adaptive, res.coverage_adaptive = float(rep.aggregates["re"]), float(rep.aggregates["coverage"])
        log.info("row %d: RE oracle %.3f (printed %.2f), adaptive %.3f (printed %.2f)",
                 i + 1, res.re_oracle, res.printed_oracle, res.re_adaptive, res.printed_adaptive)
        out.append(res)
    return out


TABLE1_HEADER = ["n", "sigma", "h_inv", "eta", "lambda", "RE_oracle", "printed_oracle",
                 "RE_adaptive", "printed_adaptive"]


def format_table(rows: list[list], header: list[str]) -> str:
    """Right-aligned plain-text table."""
    cells = [header] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)
