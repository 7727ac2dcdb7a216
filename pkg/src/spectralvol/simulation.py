"""Ground-truth paths, sampling schemes and noisy observations.

The latent log-price is an Euler-Maruyama path on a fine grid

    X_{m+1} = X_m + b dt + sigma_m L dW_m,

with spot covolatility ``Sigma_m = sigma_m^2 L L^T`` (or a user-supplied
covolatility path).  In the seasonal stochastic volatility model

    sigma_t^2 = f(t) (1 + sigma_tilde B_t),   B = lambda W^(1) + sqrt(1 - lambda^2) W_perp,
    f(t) = 0.1 (1 - t^(1/3) + 0.5 t^2),

so ``sigma_0^2 = f(0) = 0.1`` and ``lambda`` is the leverage between the
volatility driver and the first Brownian motion of the price.

Observation times are quantile transforms ``t_i = F^{-1}(i / n_l)`` or Poisson
arrivals, and the noise is i.i.d., independent across components and of X.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .observations import ObservationSet

SIGMA2_FLOOR = 1e-6


def seasonality(t):
    """Deterministic intraday pattern ``0.1 (1 - t^{1/3} + t^2 / 2)``."""
    t = np.asarray(t, dtype=float)
    return 0.1 * (1.0 - np.cbrt(t) + 0.5 * t**2)


# ---------------------------------------------------------------------------
# sampling schemes


@dataclass(frozen=True)
class SamplingScheme:
    """Observation-time design of one component.

    ``identity``: ``t_i = i/n``; ``power``: ``F(x) = x^a`` so ``t_i = (i/n)^{1/a}``;
    ``poisson``: order statistics of ``n - 1`` uniforms plus the end points.
    """

    kind: str = "identity"
    a: float = 1.0

    @classmethod
    def parse(cls, spec) -> "SamplingScheme":
        if isinstance(spec, SamplingScheme):
            return spec
        if isinstance(spec, dict):
            return cls(**spec)
        kind, _, arg = str(spec).partition(":")
        if kind == "power":
            return cls("power", float(arg or 1.0))
        if kind in ("identity", "poisson"):
            return cls(kind)
        raise ValueError(f"unknown sampling scheme {spec!r}")

    def __post_init__(self):
        if self.kind not in ("identity", "power", "poisson"):
            raise ValueError(f"unknown sampling scheme {self.kind!r}")
        if self.kind == "power" and not self.a > 0:
            raise ValueError("power sampling needs a > 0")

    def label(self) -> str:
        return f"power:{self.a:g}" if self.kind == "power" else self.kind

    @property
    def random(self) -> bool:
        return self.kind == "poisson"

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return x**self.a if self.kind == "power" else x

    def density(self, x):
        """``F'(x)``; the inverse local observation density up to the factor n."""
        x = np.asarray(x, dtype=float)
        if self.kind == "power":
            return self.a * x ** (self.a - 1.0)
        return np.ones_like(x)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        return u ** (1.0 / self.a) if self.kind == "power" else u

    def times(self, n: int, rng: np.random.Generator | None = None) -> np.ndarray:
        if self.kind == "poisson":
            if rng is None:
                raise ValueError("random sampling needs a generator")
            inner = np.sort(rng.uniform(0.0, 1.0, n - 1))
            return np.concatenate(([0.0], inner, [1.0]))
        t = self.quantile(np.arange(n + 1) / n)
        t[0], t[-1] = 0.0, 1.0
        return t


# ---------------------------------------------------------------------------
# volatility models


@dataclass(frozen=True)
class ConstantVol:
    """Constant covolatility: scalar ``sigma`` (times identity) or full ``cov``."""

    sigma: float = 1.0
    cov: tuple | None = None
    model: str = field(default="constant", init=False)

    def matrix(self, d: int) -> np.ndarray:
        if self.cov is not None:
            c = np.asarray(self.cov, dtype=float).reshape(d, d)
            return c
        return self.sigma**2 * np.eye(d)


@dataclass(frozen=True)
class StochVolSeasonal:
    """Seasonal stochastic volatility with leverage; ``correlation`` couples components."""

    sigma_tilde: float = 0.01
    leverage: float = 0.5
    correlation: tuple | None = None
    model: str = field(default="stochvol_seasonal", init=False)

    def corr(self, d: int) -> np.ndarray:
        if self.correlation is None:
            return np.eye(d)
        return np.asarray(self.correlation, dtype=float).reshape(d, d)


@dataclass(frozen=True)
class GridVol:
    """Spot covolatility given on a time grid, linearly interpolated."""

    times: tuple
    spot_cov: tuple
    model: str = field(default="grid", init=False)


def _vol_from_dict(spec: dict) -> Any:
    spec = dict(spec)
    model = spec.pop("model", "constant")
    if model == "constant":
        return ConstantVol(**spec)
    if model == "stochvol_seasonal":
        return StochVolSeasonal(**spec)
    if model == "grid":
        return GridVol(**spec)
    raise ValueError(f"unknown volatility model {model!r}")


# ---------------------------------------------------------------------------
# scenario


@dataclass
class ScenarioConfig:
    """Everything needed to generate one replication.

    ``n`` is the per-component observation count (a list for non-equal
    ``n_l``); ``noise`` holds ``eta`` (scalar or per component) and a
    ``distribution`` among gaussian, uniform and two_point.
    """

    n: int | list[int] = 30000
    d: int = 1
    h_inv: int = 25
    drift: float | list[float] = 0.0
    volatility: Any = field(default_factory=ConstantVol)
    noise: dict = field(default_factory=lambda: {"eta": 0.01, "distribution": "gaussian"})
    sampling: Any = "identity"
    seed: int = 0
    fine_grid_steps: int | None = None

    def __post_init__(self):
        if isinstance(self.volatility, dict):
            self.volatility = _vol_from_dict(self.volatility)
        self.validate()

    # -- derived quantities
    @property
    def n_list(self) -> list[int]:
        if isinstance(self.n, (list, tuple)):
            return [int(v) for v in self.n]
        return [int(self.n)] * self.d

    @property
    def n_ref(self) -> int:
        return max(self.n_list)

    @property
    def nu(self) -> np.ndarray:
        """Ratios ``n / n_l`` with ``n = max_l n_l``."""
        return self.n_ref / np.asarray(self.n_list, dtype=float)

    @property
    def eta(self) -> np.ndarray:
        eta = self.noise.get("eta", 0.0)
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        return np.broadcast_to(eta, (self.d,)).copy()

    @property
    def noise_distribution(self) -> str:
        return self.noise.get("distribution", "gaussian")

    @property
    def drift_vector(self) -> np.ndarray:
        return np.broadcast_to(np.atleast_1d(np.asarray(self.drift, dtype=float)), (self.d,)).copy()

    @property
    def schemes(self) -> list[SamplingScheme]:
        s = self.sampling
        if isinstance(s, (list, tuple)):
            if len(s) != self.d:
                raise ValueError("one sampling scheme per component required")
            return [SamplingScheme.parse(x) for x in s]
        return [SamplingScheme.parse(s)] * self.d

    @property
    def steps(self) -> int:
        return int(self.fine_grid_steps or 10 * self.n_ref)

    def validate(self) -> None:
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if len(self.n_list) != self.d or min(self.n_list) < 2:
            raise ValueError("n must be >= 2 per component")
        if int(self.h_inv) != self.h_inv or self.h_inv < 1:
            raise ValueError("h_inv must be a positive integer")
        if np.any(self.eta < 0):
            raise ValueError("noise levels must be non-negative")
        if self.noise_distribution not in ("gaussian", "uniform", "two_point"):
            raise ValueError(f"unknown noise distribution {self.noise_distribution!r}")
        if self.steps < 10 * self.n_ref:
            raise ValueError("fine_grid_steps must be at least 10 * n")
        self.schemes  # noqa: B018 - parse check
        if isinstance(self.volatility, ConstantVol):
            c = self.volatility.matrix(self.d)
            if not np.allclose(c, c.T) or np.linalg.eigvalsh(c).min() < -1e-12:
                raise ValueError("constant covolatility must be symmetric PSD")
        elif isinstance(self.volatility, StochVolSeasonal):
            if not -1 <= self.volatility.leverage <= 1:
                raise ValueError("leverage must lie in [-1, 1]")
        elif not isinstance(self.volatility, GridVol):
            raise ValueError(f"unsupported volatility model {self.volatility!r}")

    # -- serialization
    def to_dict(self) -> dict:
        vol = asdict(self.volatility)
        vol = {"model": vol.pop("model"), **{k: v for k, v in vol.items() if v is not None}}
        sampling = self.sampling
        if isinstance(sampling, (list, tuple)):
            sampling = [SamplingScheme.parse(s).label() for s in sampling]
        else:
            sampling = SamplingScheme.parse(sampling).label()
        return {
            "n": self.n, "d": self.d, "h_inv": self.h_inv, "drift": self.drift,
            "volatility": _jsonable(vol), "noise": _jsonable(dict(self.noise)),
            "sampling": sampling, "seed": self.seed, "fine_grid_steps": self.fine_grid_steps,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {"n", "d", "h_inv", "drift", "volatility", "noise", "sampling", "seed", "fine_grid_steps"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        if "volatility" in data and isinstance(data["volatility"], dict):
            data["volatility"] = _vol_from_dict(_tupleize(data["volatility"]))
        return cls(**data)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _tupleize(obj):
    if isinstance(obj, dict):
        return {k: _tupleize(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return tuple(_tupleize(v) for v in obj)
    return obj


# ---------------------------------------------------------------------------
# paths


@dataclass
class PathBundle:
    """Fine-grid truth of one replication.

    ``spot_cov[m] = sigma[m]^2 * L L^T`` for the parametric models.  The
    volatility driver increments and the leverage direction are kept so that
    fresh price noise can be drawn conditionally on a frozen volatility path.
    """

    t: np.ndarray
    X: np.ndarray
    spot_cov: np.ndarray
    sigma: np.ndarray
    vol_driver: np.ndarray
    leverage: float
    lev_direction: np.ndarray
    clamp_count: int = 0

    @property
    def steps(self) -> int:
        return self.t.size - 1

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def clamp_fraction(self) -> float:
        return self.clamp_count / self.steps

    def spot_variance(self, p: int = 0) -> np.ndarray:
        return self.spot_cov[:, p, p]

    def value_at(self, t) -> np.ndarray:
        """``Sigma`` at the grid point nearest to ``t``."""
        idx = np.clip(np.rint(np.asarray(t) * self.steps).astype(int), 0, self.steps)
        return self.spot_cov[idx]

    def to_csv(self, path, every: int = 1) -> None:
        d = self.d
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"X{p}" for p in range(d)]
                       + [f"Sigma{p}{q}" for p in range(d) for q in range(d)])
            for m in range(0, self.t.size, every):
                w.writerow([self.t[m], *self.X[m], *self.spot_cov[m].ravel()])


def _correlation_factor(corr: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (corr + corr.T))
    if w.min() < -1e-12:
        raise ValueError("correlation matrix must be PSD")
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        return v * np.sqrt(np.clip(w, 0, None))


def simulate_volatility(config: ScenarioConfig, rng: np.random.Generator):
    """Spot covolatility on the fine grid.

    Returns ``(t, spot_cov, sigma, vol_driver_increments, L, clamp_count)``.
    """
    M, d = config.steps, config.d
    t = np.arange(M + 1) / M
    vol = config.volatility
    if isinstance(vol, ConstantVol):
        cov = vol.matrix(d)
        L = _correlation_factor(cov)
        sigma = np.ones(M + 1)
        return t, np.broadcast_to(cov, (M + 1, d, d)).copy(), sigma, np.zeros(M), L, 0
    if isinstance(vol, GridVol):
        gt = np.asarray(vol.times, dtype=float)
        gc = np.asarray(vol.spot_cov, dtype=float).reshape(gt.size, d, d)
        spot = np.empty((M + 1, d, d))
        for p in range(d):
            for q in range(d):
                spot[:, p, q] = np.interp(t, gt, gc[:, p, q])
        return t, spot, np.ones(M + 1), np.zeros(M), np.eye(d), 0
    # seasonal stochastic volatility; driver B = lambda W1 + sqrt(1-lambda^2) W_perp
    dB = rng.standard_normal(M) / np.sqrt(M)
    B = np.concatenate(([0.0], np.cumsum(dB)))
    raw = seasonality(t) * (1.0 + vol.sigma_tilde * B)
    clamped = raw < SIGMA2_FLOOR
    sigma2 = np.where(clamped, SIGMA2_FLOOR, raw)
    L = _correlation_factor(vol.corr(d))
    spot = sigma2[:, None, None] * (L @ L.T)[None]
    return t, spot, np.sqrt(sigma2), dB, L, int(clamped[:-1].sum())


def simulate_paths(config: ScenarioConfig, rng: np.random.Generator | None = None) -> PathBundle:
    """Euler-Maruyama simulation of X together with its spot covolatility."""
    if rng is None:
        rng = stream_generators(config.seed)["paths"]
    t, spot, sigma, dB, L, clamps = simulate_volatility(config, rng)
    M, d = config.steps, config.d
    lam = config.volatility.leverage if isinstance(config.volatility, StochVolSeasonal) else 0.0
    dt = 1.0 / M
    dW = rng.standard_normal((M, d)) * np.sqrt(dt)
    dW[:, 0] = lam * dB + np.sqrt(1.0 - lam**2) * dW[:, 0]
    if isinstance(config.volatility, GridVol):
        factors = np.array([_correlation_factor(c) for c in spot[:-1]])
        dX = np.einsum("mpq,mq->mp", factors, dW)
    else:
        dX = sigma[:-1, None] * (dW @ L.T)
    dX += config.drift_vector * dt
    X = np.vstack((np.zeros((1, d)), np.cumsum(dX, axis=0)))
    return PathBundle(t, X, spot, sigma, dB, lam, L[:, 0].copy(), clamps)


def stream_generators(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators for the volatility/path and observation stages."""
    path_ss, obs_ss = np.random.SeedSequence(seed).spawn(2)
    return {"paths": np.random.default_rng(path_ss), "obs": np.random.default_rng(obs_ss)}


def draw_noise(size: int, eta: float, distribution: str, rng: np.random.Generator) -> np.ndarray:
    """Centered i.i.d. noise with variance ``eta^2``."""
    if distribution == "gaussian":
        return eta * rng.standard_normal(size)
    if distribution == "uniform":
        return eta * np.sqrt(3.0) * rng.uniform(-1.0, 1.0, size)
    if distribution == "two_point":
        return eta * rng.choice(np.array([-1.0, 1.0]), size)
    raise ValueError(f"unknown noise distribution {distribution!r}")


def observation_times(config: ScenarioConfig, rng: np.random.Generator) -> list[np.ndarray]:
    return [s.times(n, rng) for s, n in zip(config.schemes, config.n_list)]


def _grid_index(times: np.ndarray, steps: int) -> np.ndarray:
    return np.clip(np.rint(times * steps).astype(np.int64), 0, steps)


def sample_noisy_observations(paths: PathBundle, config: ScenarioConfig,
                              rng: np.random.Generator | None = None) -> ObservationSet:
    """Read X at the observation times (nearest fine-grid point) and add noise."""
    if rng is None:
        rng = stream_generators(config.seed)["obs"]
    times = observation_times(config, rng)
    eta, dist = config.eta, config.noise_distribution
    vals = []
    for p, tp in enumerate(times):
        x = paths.X[_grid_index(tp, paths.steps), p]
        vals.append(x + draw_noise(tp.size, eta[p], dist, rng))
    return ObservationSet(tuple(times), tuple(vals), {"config": config.to_dict()})


def simulate(config: ScenarioConfig) -> tuple[PathBundle, ObservationSet]:
    """One replication from ``config.seed``: truth and noisy observations."""
    gens = stream_generators(config.seed)
    paths = simulate_paths(config, gens["paths"])
    return paths, sample_noisy_observations(paths, config, gens["obs"])


def true_integrated_covolatility(paths: PathBundle, t: float = 1.0) -> np.ndarray:
    """Trapezoidal ``int_0^t Sigma_s ds`` on the fine grid."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    m = int(np.floor(t * paths.steps + 1e-9))
    dt = 1.0 / paths.steps
    s = paths.spot_cov
    full = dt * (0.5 * s[0] + s[1:m].sum(axis=0) + 0.5 * s[m]) if m > 0 else np.zeros_like(s[0])
    rest = t - m * dt
    if rest > 1e-15 and m < paths.steps:
        full = full + rest * s[m]
    return full


def integrated_path(paths: PathBundle, values: np.ndarray) -> np.ndarray:
    """Cumulative trapezoidal integral of a fine-grid path (first axis = time)."""
    dt = 1.0 / paths.steps
    inc = 0.5 * dt * (values[1:] + values[:-1])
    return np.concatenate((np.zeros((1,) + values.shape[1:]), np.cumsum(inc, axis=0)))


class ConditionalSampler:
    """Fresh replications given a frozen volatility path.

    Conditionally on the volatility driver, the price increments of the
    Euler scheme between two fine-grid points are Gaussian with mean
    ``b dt + lambda sigma_m dB_m l`` and covariance ``Sigma_m - lambda^2
    sigma_m^2 l l^T`` per step.  Summing them over the intervals between
    consecutive observation grid points reproduces the law of
    ``sample_noisy_observations(simulate_paths(...))`` exactly while drawing
    only one Gaussian vector per interval.
    """

    def __init__(self, paths: PathBundle, config: ScenarioConfig):
        self.paths = paths
        self.config = config
        M = paths.steps
        dt = 1.0 / M
        lam, ell = paths.leverage, paths.lev_direction
        cond = paths.spot_cov[:-1] - (lam**2) * (paths.sigma[:-1] ** 2)[:, None, None] * np.outer(ell, ell)[None]
        self._cum_cov = np.concatenate((np.zeros((1, paths.d, paths.d)), np.cumsum(cond * dt, axis=0)))
        mean = lam * (paths.sigma[:-1] * paths.vol_driver)[:, None] * ell[None, :]
        mean = mean + config.drift_vector[None, :] * dt
        self._cum_mean = np.vstack((np.zeros((1, paths.d)), np.cumsum(mean, axis=0)))
        self._fixed_times = None
        if not any(s.random for s in config.schemes):
            self._fixed_times = observation_times(config, None)
            self._fixed_plan = self._plan(self._fixed_times)

    def _plan(self, times):
        idx = [_grid_index(t, self.paths.steps) for t in times]
        union = np.unique(np.concatenate(idx + [np.array([0])]))
        cov = self._cum_cov[union[1:]] - self._cum_cov[union[:-1]]
        factors = np.empty_like(cov)
        for i, c in enumerate(cov):
            w, v = np.linalg.eigh(0.5 * (c + c.T))
            factors[i] = v * np.sqrt(np.clip(w, 0.0, None))
        mean = self._cum_mean[union[1:]] - self._cum_mean[union[:-1]]
        pos = [np.searchsorted(union, ix) for ix in idx]
        if self.paths.d == 1:
            factors = factors[:, 0, 0]
        return union, factors, mean, pos

    def signal(self, rng: np.random.Generator):
        """Observation times and noise-free values of one replication."""
        times = self._fixed_times if self._fixed_times is not None else observation_times(self.config, rng)
        union, factors, mean, pos = self._fixed_plan if self._fixed_times is not None else self._plan(times)
        z = rng.standard_normal((union.size - 1, self.paths.d))
        if self.paths.d == 1:
            inc = mean + factors[:, None] * z
        else:
            inc = mean + np.einsum("ipq,iq->ip", factors, z)
        X = np.vstack((np.zeros((1, self.paths.d)), np.cumsum(inc, axis=0)))
        return times, [X[pos[p], p] for p in range(self.paths.d)]

    def draw(self, rng: np.random.Generator) -> ObservationSet:
        times, clean = self.signal(rng)
        eta, dist = self.config.eta, self.config.noise_distribution
        vals = tuple(x + draw_noise(x.size, eta[p], dist, rng) for p, x in enumerate(clean))
        return ObservationSet(tuple(times), vals)


def previous_tick_synchronize(obs: ObservationSet, reference: int | None = None) -> ObservationSet:
    """Put every component on the observation times of ``reference``.

    Values are previous-tick interpolated; by default the reference is the
    component with the fewest observations.
    """
    if reference is None:
        reference = int(np.argmin([obs.n_obs(p) for p in range(obs.d)]))
    grid = obs.times[reference]
    vals = []
    for p in range(obs.d):
        idx = np.searchsorted(obs.times[p], grid, side="right") - 1
        vals.append(obs.values[p][np.clip(idx, 0, None)])
    return ObservationSet(tuple(grid for _ in range(obs.d)), tuple(vals), dict(obs.meta))


def local_noise_truth(config: ScenarioConfig, t) -> np.ndarray:
    """Exact local noise levels ``eta_l^2 nu_l / (n F_l'(t))`` per component (rows: times).

    Where the sampling density vanishes the level is ``inf``.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    n = config.n_ref
    out = np.empty((t.size, config.d))
    for p, (s, nu, eta) in enumerate(zip(config.schemes, config.nu, config.eta)):
        with np.errstate(divide="ignore"):
            out[:, p] = eta**2 * nu / (n * s.density(t))
    return out
