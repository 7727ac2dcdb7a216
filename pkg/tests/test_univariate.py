import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectralvol.basis import BinGrid, phi_norms, regular_spectral_statistics, spectral_statistics
from spectralvol.observations import ObservationSet
from spectralvol.report import EstimateReport, InvalidReportError, normal_quantile
from spectralvol.univariate import (WeightTable1D, adaptive_iv, autocovariance_noise_variance, confidence_interval,
                                    debiased_noise_variance, default_bins, default_window, estimate_noise_variance,
                                    floor_pilot, moment_noise_variance, optimal_weights_1d, oracle_iv,
                                    pilot_spot_volatility, spectral_iv, window_average)


def brownian_obs(rng, n, sigma=1.0, eta=0.01):
    x = np.concatenate(([0.0], np.cumsum(sigma * rng.standard_normal(n) / np.sqrt(n))))
    return ObservationSet.regular(x + eta * rng.standard_normal(n + 1))


# --- noise variance -------------------------------------------------------------

def test_noise_variance_of_constant_is_zero():
    assert estimate_noise_variance(ObservationSet.regular(np.full(11, 3.0))) == 0.0


def test_noise_variance_pure_noise_unbiased():
    rng = np.random.default_rng(1)
    n, eta, reps = 30000, 0.01, 1000
    est = np.array([estimate_noise_variance(ObservationSet.regular(eta * rng.standard_normal(n + 1)))
                    for _ in range(reps)])
    assert abs(est.mean() - eta**2) < 3 * est.std(ddof=1) / np.sqrt(reps)


def test_noise_variance_signal_bias():
    rng = np.random.default_rng(2)
    n, reps = 30000, 1000
    est = np.array([estimate_noise_variance(brownian_obs(rng, n)) for _ in range(reps)])
    target = 1e-4 + 1 / (2 * n)  # 1.1667e-4
    assert abs(est.mean() - target) < 3 * est.std(ddof=1) / np.sqrt(reps)
    # and the bias is clearly resolved
    assert abs(est.mean() - 1e-4) > 10 * est.std(ddof=1) / np.sqrt(reps)


def test_alternative_noise_estimators():
    rng = np.random.default_rng(3)
    n = 30000
    est_moment, est_auto, est_deb = [], [], []
    grid = BinGrid.for_sample(25, n)
    for _ in range(300):
        obs = brownian_obs(rng, n)
        sa = spectral_statistics(obs, grid, 100)
        est_moment.append(moment_noise_variance(obs, sa, 100))
        est_auto.append(autocovariance_noise_variance(obs))
        est_deb.append(debiased_noise_variance(obs, 1.0))
    for e in (est_moment, est_auto, est_deb):
        e = np.asarray(e)
        assert abs(e.mean() - 1e-4) < 4 * e.std(ddof=1) / np.sqrt(e.size)


# --- moment identity ------------------------------------------------------------

@pytest.mark.parametrize("j", [1, 5, 20])
def test_gaussian_moment_identity(j):
    rng = np.random.default_rng(j)
    n, eta = 30000, 0.01
    grid = BinGrid.for_sample(25, n)
    samples = []
    for _ in range(2):  # 2 x 1000 paths x 25 bins = 5e4 bin draws
        dx = rng.standard_normal((1000, n)) / np.sqrt(n)
        eps = eta * rng.standard_normal((1000, n + 1))
        S = regular_spectral_statistics(dx + np.diff(eps, axis=1), grid, j)[:, :, j - 1]
        samples.append((S**2).ravel())
    s2 = np.concatenate(samples)
    target = 1.0 + eta**2 * phi_norms(j, grid, n)[-1] / n
    assert abs(s2.mean() - target) < 4 * s2.std(ddof=1) / np.sqrt(s2.size)


# --- pilots ---------------------------------------------------------------------

def test_window_average_truncates_at_boundaries():
    x = np.arange(6, dtype=float)
    np.testing.assert_allclose(window_average(x, 1), [0.5, 1, 2, 3, 4, 4.5])
    np.testing.assert_allclose(window_average(x, 0), x)
    np.testing.assert_allclose(window_average(x, 10), np.full(6, 2.5))


def test_floor_pilot():
    v = np.array([-1.0, 1.0, 2.0, 3.0])
    out = floor_pilot(v)
    assert out[0] == pytest.approx(0.05 * 1.5) and np.all(out[1:] == v[1:])
    assert np.all(floor_pilot(np.full(3, -1.0)) == 1e-8)


def test_pilot_degenerate_window(rng):
    n, grid = 3000, BinGrid.for_sample(10, 3000)
    obs = brownian_obs(rng, n)
    sa = spectral_statistics(obs, grid, 5)
    eta2 = 1e-4
    out = pilot_spot_volatility(sa, grid, 1, 0, eta2, floor=False)
    expected = sa.component(0)[:, 0] ** 2 - phi_norms(1, grid, n)[0] * eta2 / n
    np.testing.assert_allclose(out, expected, rtol=1e-14)
    no_noise = pilot_spot_volatility(sa, grid, 5, 0, 0.0, floor=False)
    np.testing.assert_allclose(no_noise, np.mean(sa.component(0) ** 2, axis=1), rtol=1e-14)


def test_pilot_unbiased_constant_vol():
    rng = np.random.default_rng(4)
    n = 30000
    grid = BinGrid.for_sample(25, n)
    pilots = []
    for _ in range(1000):
        obs = brownian_obs(rng, n)
        pilots.append(pilot_spot_volatility(obs, grid, 100, default_window(n), estimate_noise_variance(obs)))
    mean = np.mean(pilots, axis=0)
    assert np.all((0.9 <= mean) & (mean <= 1.1))


# --- weights --------------------------------------------------------------------

@pytest.fixture
def grid30k():
    return BinGrid.for_sample(25, 30000)


def test_weights_normalized_and_monotone(grid30k):
    sigma2 = np.linspace(0.05, 2.0, 25)
    w = optimal_weights_1d(sigma2, 1e-4, 30000, grid30k, 1199)
    np.testing.assert_allclose(w.weights.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(np.diff(w.weights, axis=1) <= 1e-18)
    assert np.all(w.info_j > 0) and np.all(w.weights >= 0)
    np.testing.assert_allclose(w.info, w.info_j.sum(axis=1))


def test_weights_uniform_without_noise(grid30k):
    w = optimal_weights_1d(1.0, 0.0, 30000, grid30k, 1199)
    np.testing.assert_allclose(w.weights, 1 / 1199, rtol=1e-12)
    w = optimal_weights_1d(1.0, 1e-16, 30000, grid30k, 1199)
    np.testing.assert_allclose(w.weights, 1 / 1199, rtol=1e-6)


@pytest.mark.parametrize("bad", [0.0, -1.0, np.nan])
def test_weights_reject_nonpositive_vol(grid30k, bad):
    with pytest.raises(ValueError):
        optimal_weights_1d(bad, 1e-4, 30000, grid30k, 100)


def test_weights_minimize_variance(grid30k):
    rng = np.random.default_rng(0)
    w = optimal_weights_1d(0.7, 1e-4, 30000, grid30k, 300)
    wk, Ik = w.weights[0], w.info_j[0]
    base = np.sum(wk**2 / Ik)
    assert base == pytest.approx(1 / w.info[0], rel=1e-12)
    for _ in range(100):
        u = rng.standard_normal(wk.size)
        u -= u.mean()  # tangent to the simplex
        u *= 1e-3 / np.linalg.norm(u)
        assert np.sum((wk + u) ** 2 / Ik) >= base - 1e-12


# --- the estimator ----------------------------------------------------------------

def test_iv_brute_force_uniform_weights(rng):
    n, grid = 2000, BinGrid.for_sample(5, 2000)
    obs = brownian_obs(rng, n, eta=0.0)
    J = 399
    w = optimal_weights_1d(1.0, 0.0, n, grid, J)
    rep = spectral_iv(obs, w, 0.0, grid)
    dY = obs.increments().tolist()
    h = 0.2
    amp = math.sqrt(2 / h)
    total = 0.0
    for k in range(1, 6):
        for j in range(1, J + 1):
            s = 0.0
            for i in range((k - 1) * 400, k * 400):
                s += dY[i] * amp * math.sin(j * math.pi * ((i + 1) / n - (k - 1) * h) / h)
            total += s * s
    assert rep.final == pytest.approx(grid.width * total / J, rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(a=st.floats(0.1, 10.0))
def test_iv_scales_quadratically(a):
    rng = np.random.default_rng(8)
    n, grid = 2000, BinGrid.for_sample(5, 2000)
    obs = brownian_obs(rng, n)
    w = optimal_weights_1d(1.0, 1e-4, n, grid, 100)
    base = spectral_iv(obs, w, 1e-4, grid).final
    scaled = ObservationSet.regular(a * obs.values[0])
    assert spectral_iv(scaled, w, 1e-4 * a**2, grid).final == pytest.approx(a**2 * base, rel=1e-10)


def test_report_path_and_variance(rng):
    n, grid = 30000, BinGrid.for_sample(25, 30000)
    rep = oracle_iv(brownian_obs(rng, n), grid, np.ones(25), 1e-4)
    assert rep.estimate.shape == (26,) and rep.times[-1] == pytest.approx(1.0)
    assert rep.estimate[0] == 0.0 and np.all(np.diff(rep.variance) > 0)
    np.testing.assert_allclose(np.diff(rep.estimate), grid.width * rep.local)
    assert rep.at(0.5) == rep.estimate[12 if grid.width * 12 <= 0.5 else 11]
    assert rep.mode == "oracle"


def test_variance_estimate_targets_bound():
    # sqrt(n) V with oracle weights approaches 8 eta sigma^3; the discrete norms sit below
    # the continuous ones at high frequencies, so the finite-sample value undershoots
    gaps = []
    for n in (5000, 30000, 120000):
        grid = BinGrid.for_sample(default_bins(n), n)
        w = optimal_weights_1d(1.0, 1e-4, n, grid, grid.per_bin - 1)
        gaps.append(abs(np.sqrt(n) * np.sum(grid.width**2 / w.info) / (0.08 * grid.t_end) - 1))
    assert gaps[0] > gaps[1] > gaps[2] and gaps[2] < 0.1


def test_adaptive_close_to_oracle_and_gap_shrinks():
    diffs = {}
    for n in (5000, 30000):
        rng = np.random.default_rng(n)
        grid = BinGrid.for_sample(25, n)
        d = []
        for _ in range(100):
            obs = brownian_obs(rng, n)
            d.append(adaptive_iv(obs, grid).final - oracle_iv(obs, grid, np.ones(25), 1e-4).final)
        diffs[n] = np.sqrt(np.mean(np.square(d)))
    assert diffs[30000] < diffs[5000]


def test_adaptive_report_meta(rng):
    n, grid = 30000, BinGrid.for_sample(25, 30000)
    rep = adaptive_iv(brownian_obs(rng, n), grid)
    assert rep.mode == "adaptive" and rep.meta["pilot_j"] == 100 and rep.meta["K_n"] == 7
    assert rep.meta["pilot"].shape == (25,)
    assert rep.final == pytest.approx(1.0, abs=0.1)
    with pytest.raises(ValueError):
        adaptive_iv(brownian_obs(rng, n), grid, noise="bogus")


def test_defaults():
    assert default_bins(30000) == 25
    assert default_window(30000) == 7
    assert default_window(5000) == 4


# --- confidence intervals and export -----------------------------------------------

def toy_report(var=0.01):
    return EstimateReport(np.array([0.0, 1.0]), np.array([0.0, 1.0]), np.array([0.0, var]), "oracle", "iv")


def test_normal_quantile():
    assert normal_quantile(0.95) == pytest.approx(1.959963984540054, abs=1e-12)
    assert normal_quantile(0.0) == 0.0


def test_confidence_interval_arithmetic():
    lo, hi = confidence_interval(toy_report(), 0.95)
    assert lo == pytest.approx(0.804, abs=5e-4) and hi == pytest.approx(1.196, abs=5e-4)
    with pytest.raises(InvalidReportError):
        confidence_interval(toy_report(0.0))
    with pytest.raises(ValueError):
        confidence_interval(toy_report(), 1.0)


def test_report_json_and_csv(tmp_path):
    rep = toy_report()
    data = json.loads(rep.to_json(tmp_path / "r.json"))
    assert data["ci_hi"][1] == pytest.approx(1.196, abs=5e-4)
    rep.to_csv(tmp_path / "r.csv")
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["t", "estimate", "variance", "ci_lo", "ci_hi"]
    assert float(rows[2][3]) == pytest.approx(0.804, abs=5e-4)
    buf = io.StringIO()
    rep.to_csv(buf, 0.5)
    assert buf.getvalue().count("\n") == 3


def test_weight_table_is_frozen():
    w = WeightTable1D(np.ones((1, 1)), np.ones((1, 1)), np.ones(1))
    with pytest.raises(AttributeError):
        w.mode = "adaptive"
