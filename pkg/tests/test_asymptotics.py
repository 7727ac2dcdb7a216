import numpy as np
import pytest

from spectralvol.asymptotics import (NumericDomainError, acov_lmm, acov_lmm_integrand, avar_icv,
                                     avar_icv_closed_form, avar_icv_riemann, avar_iv, icv_spot_variance,
                                     integrate, noise_intensity, realized_covariance, realized_covariance_avar,
                                     realized_covariance_baseline)
from spectralvol.basis import BinGrid
from spectralvol.linalg import symmetrizer
from spectralvol.observations import ObservationSet
from spectralvol.simulation import ScenarioConfig, simulate_paths

from conftest import random_psd


def const_path(S, m=11):
    S = np.atleast_2d(np.asarray(S, dtype=float))
    return np.broadcast_to(S, (m,) + S.shape).copy()


# --- integration -----------------------------------------------------------------

def test_integrate_partial_cell():
    t = np.array([0.0, 0.5, 1.0])
    v = np.array([0.0, 1.0, 2.0])  # f(t) = 2t
    assert integrate(t, v) == pytest.approx(1.0)
    assert integrate(t, v, 0.75) == pytest.approx(0.75**2)
    assert integrate(t, v, 0.0) == 0.0
    with pytest.raises(ValueError):
        integrate(t, v, 1.5)
    with pytest.raises(ValueError):
        integrate(t, v[:2])


# --- integrated volatility -------------------------------------------------------------

def test_avar_iv_constant():
    assert float(avar_iv(np.ones(101), 0.01)) == pytest.approx(0.08)
    assert float(avar_iv(np.ones(101), 0.01, t=0.5)) == pytest.approx(0.04)
    with pytest.raises(ValueError):
        avar_iv(np.ones(3), -1.0)


def test_avar_iv_stochastic_path_grid_refinement():
    cfg = ScenarioConfig(n=30000, volatility={"model": "stochvol_seasonal", "leverage": 0.5}, seed=7)
    paths = simulate_paths(cfg)
    sigma = paths.sigma
    fine = avar_iv(sigma, 0.01, times=paths.t).value
    coarse = avar_iv(sigma[::2], 0.01, times=paths.t[::2]).value
    assert abs(coarse / fine - 1) < 1e-3


def test_avar_smooth_path_stable_under_doubling():
    for m in (20001,):
        t1, t2 = np.linspace(0, 1, m), np.linspace(0, 1, 2 * m - 1)
        s = lambda t: 1 + 0.5 * np.sin(2 * np.pi * t)  # noqa: E731
        a, b = avar_iv(s(t1), 0.01, times=t1).value, avar_iv(s(t2), 0.01, times=t2).value
        assert abs(a / b - 1) < 1e-6
        S1 = np.einsum("s,ab->sab", s(t1) ** 2, [[1.0, 0.3], [0.3, 1.0]])
        S2 = np.einsum("s,ab->sab", s(t2) ** 2, [[1.0, 0.3], [0.3, 1.0]])
        al1, al2 = np.full((m, 2), 1e-4), np.full((2 * m - 1, 2), 1e-4)
        A, B = acov_lmm(S1, al1, times=t1).value, acov_lmm(S2, al2, times=t2).value
        np.testing.assert_allclose(A, B, rtol=1e-6, atol=1e-12)
        c1, c2 = avar_icv(S1, al1, times=t1).value, avar_icv(S2, al2, times=t2).value
        assert abs(c1 / c2 - 1) < 1e-6


# --- covolatility ------------------------------------------------------------------------

def test_icv_limit_special_cases():
    eta, sigma = 0.01, 1.3
    alpha = np.full(2, eta**2)
    S = sigma**2 * np.eye(2)
    assert icv_spot_variance(S, alpha, 0, 1) == pytest.approx(4 * eta * sigma**3, rel=1e-12)
    assert icv_spot_variance(S, alpha, 0, 0) == pytest.approx(8 * eta * sigma**3, rel=1e-12)
    with pytest.raises(NumericDomainError):
        icv_spot_variance(np.zeros((2, 2)), alpha, 0, 1)


@pytest.mark.parametrize("p,q", [(0, 1), (0, 0)])
def test_icv_riemann_form_converges_to_limit(p, q):
    Sigma = np.array([[1.0, 0.5], [0.5, 0.8]])
    eta2 = np.array([1e-4, 4e-4])
    limit = avar_icv(const_path(Sigma), const_path(eta2)[:, 0], p, q).value
    gaps = []
    for n in (5000, 30000, 120000):
        grid = BinGrid.for_sample(25, n)
        r = avar_icv_riemann(np.broadcast_to(Sigma, (25, 2, 2)), np.broadcast_to(eta2 / n, (25, 2)), grid, n, p, q)
        gaps.append(abs(r / (limit * grid.t_end) - 1))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 0.02


def test_closed_form_reference_values():
    # Sigma = E_2 and equal sampling: B = 4, A = 2, so A^2 - B = 0 and the printed prefactor vanishes
    tgt = avar_icv_closed_form(const_path(np.eye(2)), lambda t: np.ones_like(t), lambda t: np.ones_like(t))
    assert tgt.reconciled is False
    assert tgt.value == 0.0
    assert float(avar_icv(const_path(np.eye(2)), const_path([1e-4, 1e-4])[:, 0])) > 0


def test_closed_form_domain_error():
    S = np.array([[1.0, 0.5], [0.5, 1.0]])
    with pytest.raises(NumericDomainError):
        avar_icv_closed_form(const_path(S), np.ones(11), np.ones(11))
    with pytest.raises(NumericDomainError):
        avar_icv_closed_form(const_path(S), np.zeros(11), np.ones(11))


def test_closed_form_positive_when_unbalanced():
    S = np.diag([4.0, 1.0])
    val = avar_icv_closed_form(const_path(S), np.ones(11), np.ones(11)).value
    assert val > 0 and np.isfinite(val)


def test_noise_intensity():
    t = np.linspace(0.1, 1, 5)
    a = noise_intensity([0.1, 0.2], [1.0, 2.0], [lambda s: np.ones_like(s), lambda s: 2 * s], t, 2)
    np.testing.assert_allclose(a[:, 0], 0.01)
    np.testing.assert_allclose(a[:, 1], 0.04 * 2 / (2 * t))
    np.testing.assert_allclose(noise_intensity(0.1, 1.0, None, t, 3), 0.01)
    with pytest.raises(NumericDomainError):
        noise_intensity(0.1, 1.0, [lambda s: 0 * s], t, 1)


# --- local method of moments ------------------------------------------------------------

def test_lmm_one_dimensional_reduces_to_iv_bound():
    rng = np.random.default_rng(0)
    for sigma, eta in zip(rng.uniform(0.1, 3.0, 20), rng.uniform(1e-4, 0.1, 20)):
        info_inv = acov_lmm(const_path([[sigma**2]]), np.full((11, 1), eta**2)).value
        total = (info_inv @ symmetrizer(1))[0, 0]
        assert total == pytest.approx(8 * eta * sigma**3, rel=1e-10)
        assert float(avar_iv(np.full(11, sigma), eta)) == pytest.approx(total, rel=1e-10)


def test_lmm_diagonal_case():
    a = np.array([0.5, 2.0])
    alpha = np.array([1e-4, 9e-4])
    info_inv = acov_lmm(const_path(np.diag(a)), np.broadcast_to(alpha, (11, 2))).value
    r = np.sqrt(alpha * a)  # (Sigma^H)^{1/2} is diagonal
    expected = 2 * (np.kron(np.diag(a), np.diag(r)) + np.kron(np.diag(r), np.diag(a)))
    np.testing.assert_allclose(info_inv, expected, rtol=1e-12, atol=1e-18)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_lmm_output_symmetric_psd_and_matches_pointwise(d):
    rng = np.random.default_rng(d)
    m = 31
    t = np.linspace(0, 1, m)
    S = np.array([random_psd(rng, d) * (1 + 0.5 * np.sin(3 * s)) for s in t])
    alpha = rng.uniform(1e-5, 1e-3, (m, d))
    tgt = acov_lmm(S, alpha, times=t)
    np.testing.assert_allclose(tgt.value, tgt.value.T)
    assert np.linalg.eigvalsh(tgt.value).min() >= -1e-10
    pointwise = np.array([acov_lmm_integrand(S[i], alpha[i]) for i in range(m)])
    np.testing.assert_allclose(tgt.integrand, pointwise, rtol=1e-10, atol=1e-15)


def test_lmm_rejects_bad_inputs():
    with pytest.raises(NumericDomainError):
        acov_lmm(const_path(np.eye(2)), np.zeros((11, 2)))
    with pytest.raises(NumericDomainError):
        acov_lmm(const_path(np.diag([1.0, -1.0])), np.full((11, 2), 1e-4))


# --- realized covariance baseline ---------------------------------------------------------

def test_realized_covariance_avar_scalar():
    assert realized_covariance_avar(const_path([[1.0]])).value[0, 0] == pytest.approx(2.0)


def test_realized_covariance_monte_carlo():
    rng = np.random.default_rng(13)
    n, reps = 10_000, 500
    cov = np.array([[1.0, 0.4], [0.4, 0.5]])
    L = np.linalg.cholesky(cov)
    est = []
    for _ in range(reps):
        X = np.vstack((np.zeros((1, 2)), np.cumsum(rng.standard_normal((n, 2)) @ L.T / np.sqrt(n), axis=0)))
        rc, avar = realized_covariance_baseline(ObservationSet.regular(X), const_path(cov))
        est.append(rc.reshape(-1, order="F"))
    est = np.array(est)
    se = est.std(axis=0, ddof=1) / np.sqrt(reps)
    assert np.all(np.abs(est.mean(axis=0) - cov.reshape(-1, order="F")) < 3 * se)
    emp = np.cov(np.sqrt(n) * est.T)
    nz = np.abs(avar) > 1e-12
    assert np.all(np.abs(emp[nz] / avar[nz] - 1) < 0.2)


def test_realized_covariance_needs_synchronous_data():
    obs = ObservationSet((np.array([0.0, 0.5, 1.0]), np.array([0.0, 1.0])), (np.zeros(3), np.zeros(2)))
    with pytest.raises(ValueError):
        realized_covariance(obs)
