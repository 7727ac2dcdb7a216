import json

import numpy as np
import pytest

from spectralvol.observations import ObservationSet
from spectralvol.simulation import (ConditionalSampler, ConstantVol, GridVol, SamplingScheme, ScenarioConfig,
                                    StochVolSeasonal, draw_noise, integrated_path, local_noise_truth,
                                    previous_tick_synchronize, sample_noisy_observations, seasonality,
                                    simulate, simulate_paths, stream_generators,
                                    true_integrated_covolatility)


def small(**kw):
    base = dict(n=200, h_inv=4, noise={"eta": 0.01})
    base.update(kw)
    return ScenarioConfig(**base)


def test_seasonality_values():
    assert seasonality(0.0) == pytest.approx(0.1)
    assert seasonality(1.0) == pytest.approx(0.05)


def test_stochvol_starts_at_pattern():
    cfg = small(volatility={"model": "stochvol_seasonal", "leverage": 0.5})
    paths = simulate_paths(cfg)
    assert paths.spot_cov[0, 0, 0] == pytest.approx(0.1)
    assert paths.clamp_count == 0


def test_constant_vol_variance_of_endpoint():
    ends = np.empty(10_000)
    cfg = ScenarioConfig(n=10, noise={"eta": 0.0}, fine_grid_steps=100)
    for s in range(ends.size):
        cfg.seed = s
        ends[s] = simulate_paths(cfg).X[-1, 0]
    assert 0.94 <= ends.var() <= 1.06


def test_identity_sampling_and_noise_free_values():
    cfg = small(noise={"eta": 0.0})
    paths, obs = simulate(cfg)
    np.testing.assert_array_equal(obs.times[0], np.arange(201) / 200)
    np.testing.assert_array_equal(obs.values[0], paths.X[::10, 0])


def test_power_sampling_times():
    s = SamplingScheme.parse("power:2")
    t = s.times(100)
    np.testing.assert_allclose(t, np.sqrt(np.arange(101) / 100))
    assert s.density(0.25) == pytest.approx(0.5)
    assert s.label() == "power:2"


def test_poisson_sampling(rng):
    t = SamplingScheme.parse("poisson").times(500, rng)
    assert t[0] == 0.0 and t[-1] == 1.0 and t.size == 501
    assert np.all(np.diff(t) > 0)
    with pytest.raises(ValueError):
        SamplingScheme.parse("poisson").times(10)


@pytest.mark.parametrize("bad", ["bogus", "power:-1"])
def test_bad_schemes(bad):
    with pytest.raises(ValueError):
        SamplingScheme.parse(bad)


def test_integrated_covolatility_constant():
    paths = simulate_paths(small(volatility={"model": "constant", "sigma": 1.0}))
    assert true_integrated_covolatility(paths, 1.0)[0, 0] == pytest.approx(1.0)
    assert true_integrated_covolatility(paths, 0.5)[0, 0] == pytest.approx(0.5)
    assert true_integrated_covolatility(paths, 0.0)[0, 0] == 0.0
    with pytest.raises(ValueError):
        true_integrated_covolatility(paths, 1.5)


def test_integrated_covolatility_matches_realized_variance():
    cfg = ScenarioConfig(n=30000, volatility={"model": "stochvol_seasonal", "leverage": 0.5},
                         fine_grid_steps=300_000, seed=3)
    paths = simulate_paths(cfg)
    rv = np.sum(np.diff(paths.X[:, 0]) ** 2)
    iv = true_integrated_covolatility(paths)[0, 0]
    assert abs(rv / iv - 1) < 1e-2
    np.testing.assert_allclose(integrated_path(paths, paths.spot_cov)[-1], true_integrated_covolatility(paths))


def test_reproducible_bit_identical():
    cfg = small(d=2, volatility={"model": "stochvol_seasonal", "leverage": 0.3}, sampling=["identity", "poisson"],
                seed=11)
    _, a = simulate(cfg)
    _, b = simulate(cfg)
    for p in range(2):
        assert np.array_equal(a.times[p], b.times[p]) and np.array_equal(a.values[p], b.values[p])
    cfg.seed = 12
    _, c = simulate(cfg)
    assert not np.array_equal(a.values[0], c.values[0])


def test_noise_independent_of_signal():
    cfg = ScenarioConfig(n=10_000, noise={"eta": 0.01}, seed=1)
    paths, obs = simulate(cfg)
    dx = np.diff(paths.X[::10, 0])
    eps = obs.values[0] - paths.X[::10, 0]
    r = np.corrcoef(dx, np.diff(eps))[0, 1]
    assert abs(r) < 3 / np.sqrt(dx.size)
    assert eps.std() == pytest.approx(0.01, rel=0.05)


@pytest.mark.parametrize("dist", ["gaussian", "uniform", "two_point"])
def test_noise_distributions_have_variance_eta2(dist, rng):
    e = draw_noise(200_000, 0.02, dist, rng)
    assert abs(e.mean()) < 4 * 0.02 / np.sqrt(e.size)
    assert e.var() == pytest.approx(4e-4, rel=0.02)


def test_spot_covolatility_psd():
    corr = [[1.0, 0.6, 0.2], [0.6, 1.0, 0.1], [0.2, 0.1, 1.0]]
    cfg = small(d=3, volatility={"model": "stochvol_seasonal", "leverage": 0.5, "correlation": corr})
    paths = simulate_paths(cfg)
    assert np.linalg.eigvalsh(paths.spot_cov).min() >= -1e-12
    np.testing.assert_allclose(paths.spot_cov, np.swapaxes(paths.spot_cov, 1, 2))


def test_clamp_diagnostic():
    cfg = small(volatility={"model": "stochvol_seasonal", "sigma_tilde": 50.0, "leverage": 0.0}, seed=2)
    paths = simulate_paths(cfg)
    assert paths.clamp_count > 0
    assert paths.spot_cov[:, 0, 0].min() == pytest.approx(1e-6)
    assert 0 < paths.clamp_fraction < 1


def test_grid_volatility_interpolates():
    vol = GridVol(times=(0.0, 1.0), spot_cov=((1.0,), (3.0,)))
    paths = simulate_paths(ScenarioConfig(n=100, volatility=vol))
    assert true_integrated_covolatility(paths)[0, 0] == pytest.approx(2.0)


def test_config_round_trip(tmp_path):
    cfg = ScenarioConfig(n=[300, 200], d=2, h_inv=5, drift=0.1,
                         volatility=StochVolSeasonal(leverage=0.2, correlation=(1.0, 0.5, 0.5, 1.0)),
                         noise={"eta": [0.01, 0.02], "distribution": "uniform"},
                         sampling=["identity", "power:2"], seed=9)
    path = tmp_path / "cfg.json"
    cfg.save(path)
    back = ScenarioConfig.load(path)
    assert back.to_dict() == cfg.to_dict()
    np.testing.assert_allclose(back.nu, [1.0, 1.5])
    assert json.loads(path.read_text())["volatility"]["model"] == "stochvol_seasonal"


@pytest.mark.parametrize("bad", [
    {"d": 0}, {"n": 1}, {"h_inv": 0}, {"noise": {"eta": -1}}, {"noise": {"eta": 0.1, "distribution": "cauchy"}},
    {"fine_grid_steps": 10}, {"volatility": {"model": "stochvol_seasonal", "leverage": 2.0}},
    {"volatility": {"model": "constant", "cov": (1.0, 2.0, 2.0, 1.0)}, "d": 2},
])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        small(**bad)


def test_unknown_config_keys():
    with pytest.raises(ValueError):
        ScenarioConfig.from_dict({"n": 100, "colour": "red"})


def test_constant_cov_matrix():
    assert np.array_equal(ConstantVol(sigma=2.0).matrix(2), 4 * np.eye(2))


def test_conditional_sampler_law():
    # given the frozen volatility path, X_1 is Gaussian with the accumulated conditional moments
    cfg = ScenarioConfig(n=500, volatility={"model": "stochvol_seasonal", "leverage": 0.8}, noise={"eta": 0.0},
                         seed=4)
    paths = simulate_paths(cfg)
    sampler = ConditionalSampler(paths, cfg)
    ends = np.array([sampler.draw(np.random.default_rng(r)).values[0][-1] for r in range(4000)])
    mean, var = sampler._cum_mean[-1, 0], sampler._cum_cov[-1, 0, 0]
    euler_iv = paths.spot_cov[:-1, 0, 0].sum() / paths.steps  # left-point sum of the Euler scheme
    assert var == pytest.approx(euler_iv * (1 - 0.8**2), rel=1e-10)
    assert abs(ends.mean() - mean) < 4 * np.sqrt(var / ends.size)
    assert ends.var() == pytest.approx(var, rel=4 * np.sqrt(2 / ends.size))


def test_conditional_sampler_matches_direct_simulation_without_leverage():
    cfg = ScenarioConfig(n=100, d=2, volatility={"model": "constant", "cov": (1.0, 0.3, 0.3, 0.5)},
                         noise={"eta": 0.0}, sampling=["identity", "power:2"])
    sampler = ConditionalSampler(simulate_paths(cfg), cfg)
    draws = np.array([[v[-1] for v in sampler.draw(np.random.default_rng(r)).values] for r in range(4000)])
    np.testing.assert_allclose(np.cov(draws.T), [[1.0, 0.3], [0.3, 0.5]], atol=0.06)


def test_previous_tick_synchronize():
    obs = ObservationSet((np.array([0.0, 0.3, 0.6, 1.0]), np.array([0.0, 0.5, 1.0])),
                         (np.array([1.0, 2.0, 3.0, 4.0]), np.array([10.0, 20.0, 30.0])))
    sync = previous_tick_synchronize(obs)
    assert sync.is_synchronous()
    np.testing.assert_array_equal(sync.times[0], [0.0, 0.5, 1.0])
    np.testing.assert_array_equal(sync.values[0], [1.0, 2.0, 4.0])
    np.testing.assert_array_equal(sync.values[1], [10.0, 20.0, 30.0])


def test_local_noise_truth():
    cfg = ScenarioConfig(n=[1000, 500], d=2, noise={"eta": [0.1, 0.2]}, sampling=["identity", "power:2"])
    H = local_noise_truth(cfg, [0.25, 0.5])
    np.testing.assert_allclose(H[:, 0], 0.01 / 1000)
    # nu = 2, F'(t) = 2t
    np.testing.assert_allclose(H[:, 1], 0.04 * 2 / (1000 * np.array([0.5, 1.0])))


def test_stream_generators_are_independent():
    g = stream_generators(0)
    assert g["paths"].standard_normal() != g["obs"].standard_normal()


def test_sample_noisy_observations_uses_observation_stream():
    cfg = small(seed=5)
    paths = simulate_paths(cfg)
    a = sample_noisy_observations(paths, cfg)
    b = sample_noisy_observations(paths, cfg)
    assert np.array_equal(a.values[0], b.values[0])
