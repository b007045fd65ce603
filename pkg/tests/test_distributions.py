import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from downcnp import diffcore as dc
from downcnp import distributions as D
from downcnp.config import HEADS
from downcnp.diffcore.gradcheck import check_gradients

from oracles import lgamma_lanczos

HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


def bg(rho, alpha, beta):
    return D.BernoulliGammaParams(np.asarray(rho, float), np.asarray(alpha, float), np.asarray(beta, float))


def gauss(mu, sigma):
    return D.GaussianParams(np.asarray(mu, float), np.asarray(sigma, float))


# -- parameter types ---------------------------------------------------------

def test_parameter_validation():
    with pytest.raises(ValueError):
        gauss(0.0, 0.0)
    with pytest.raises(ValueError):
        bg(1.2, 1.0, 1.0)
    with pytest.raises(ValueError):
        bg(0.5, -1.0, 1.0)
    with pytest.raises(ValueError):
        bg(0.5, 1.0, 0.0)


def test_columns_round_trip():
    p = bg([0.2, 0.8], [1.5, 2.0], [3.0, 0.5])
    q = D.params_from_columns("bernoulli_gamma", p.as_columns())
    np.testing.assert_array_equal(q.alpha, p.alpha)


# -- NLLs ---------------------------------------------------------------------

def test_gaussian_nll_known_values():
    assert D.gaussian_nll(gauss(2.0, 1.0), 2.0) == pytest.approx(0.918939, abs=1e-6)
    assert D.gaussian_nll(gauss(1.0, 1.0), 0.0) == pytest.approx(1.418939, abs=1e-6)


def test_gaussian_nll_matches_density_oracle():
    rng = np.random.default_rng(10)
    for _ in range(50):
        mu, sigma, y = rng.normal(0, 5), rng.uniform(0.2, 5), rng.normal(0, 5)
        dens = math.exp(-((y - mu) ** 2) / (2 * sigma ** 2)) / (sigma * math.sqrt(2 * math.pi))
        assert abs(float(D.gaussian_nll(gauss(mu, sigma), y)) + math.log(dens)) < 1e-12


def test_bg_nll_known_values():
    assert float(D.bernoulli_gamma_nll(bg(0.5, 2.0, 1.0), 0.0, False)) == pytest.approx(math.log(2), abs=1e-9)
    v = float(D.bernoulli_gamma_nll(bg(1.0 - 1e-12, 1.0, 1.0), 1.0, True))
    assert v == pytest.approx(1.0, abs=1e-9)


def test_bg_nll_matches_lanczos_oracle():
    rng = np.random.default_rng(11)
    for _ in range(50):
        rho, a, b = rng.uniform(0.05, 0.95), rng.uniform(0.2, 8), rng.uniform(0.2, 10)
        y = rng.uniform(0.01, 40)
        logpdf = (a - 1) * math.log(y) - y / b - a * math.log(b) - lgamma_lanczos(a)
        expect = -math.log(rho) - logpdf
        assert abs(float(D.bernoulli_gamma_nll(bg(rho, a, b), y, True)) - expect) < 1e-10
        assert abs(float(D.bernoulli_gamma_nll(bg(rho, a, b), 0.0, False)) + math.log(1 - rho)) < 1e-12


def test_bg_nll_rejects_non_positive_wet():
    with pytest.raises(ValueError):
        D.bernoulli_gamma_nll(bg(0.5, 1.0, 1.0), 0.0, True)


@settings(max_examples=40, deadline=None)
@given(st.floats(-20, 20), st.floats(0.1, 10))
def test_gaussian_nll_minimized_at_observation(y, sigma):
    grid = y + np.linspace(-2, 2, 81)
    vals = D.gaussian_nll(gauss(grid, sigma), y)
    assert np.argmin(vals) == 40


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.01, 50))
def test_bg_nll_monotone_in_rho(alpha, beta, y):
    rho = np.linspace(0.01, 0.99, 50)
    p = bg(rho, alpha, beta)
    assert np.all(np.diff(D.bernoulli_gamma_nll(p, y, True)) < 0)
    assert np.all(np.diff(D.bernoulli_gamma_nll(p, 0.0, False)) > 0)


def test_densities_integrate_to_one():
    rng = np.random.default_rng(12)
    for _ in range(20):
        mu, sigma = rng.normal(0, 10), rng.uniform(0.3, 6)
        mass, _ = integrate.quad(lambda y: math.exp(-float(D.gaussian_nll(gauss(mu, sigma), y))),
                                 mu - 40 * sigma, mu + 40 * sigma, points=[mu], limit=200)
        assert abs(mass - 1) < 1e-6

        rho, a, b = rng.uniform(0.1, 0.9), rng.uniform(1.0, 6), rng.uniform(0.5, 5)
        p = bg(rho, a, b)
        wet_mass, _ = integrate.quad(lambda y: math.exp(-float(D.bernoulli_gamma_nll(p, y, True))),
                                     0, np.inf, limit=200)
        dry_mass = math.exp(-float(D.bernoulli_gamma_nll(p, 0.0, False)))
        assert abs(wet_mass + dry_mass - 1) < 1e-6


def test_tensor_nll_agrees_with_numpy_and_has_gradients():
    rng = np.random.default_rng(13)
    pre = dc.Parameter(rng.normal(size=(6, 3)), name="pre")
    y = rng.gamma(2.0, 2.0, 6)
    wet = rng.random(6) < 0.6
    y = np.where(wet, y, 0.0)
    parts = D.link("bernoulli_gamma", pre)
    t = D.nll_tensor("bernoulli_gamma", parts, y, wet)
    p = D.link_numpy("bernoulli_gamma", pre.data)
    np.testing.assert_allclose(t.data, D.nll(p, y, wet), rtol=1e-12)
    errs = check_gradients(lambda: D.nll_tensor("bernoulli_gamma", D.link("bernoulli_gamma", pre), y, wet).sum(),
                           [pre])
    assert errs["pre"] < 1e-5

    g = dc.Parameter(rng.normal(size=(5, 2)), name="g")
    yt = rng.normal(size=5)
    errs = check_gradients(lambda: D.nll_tensor("gaussian", D.link("gaussian", g), yt).sum(), [g])
    assert errs["g"] < 1e-5


def test_links_keep_parameters_in_range():
    pre = np.array([[-800.0, -800.0, -800.0], [800.0, 800.0, 800.0]])
    p = D.link_numpy("bernoulli_gamma", pre)
    assert np.all((p.rho > 0) & (p.rho < 1))
    assert np.all(p.alpha >= D.FLOOR) and np.all(p.beta >= D.FLOOR)
    with pytest.raises(ValueError):
        D.link("poisson", pre)


# -- means and deterministic values ------------------------------------------

def test_means():
    assert float(D.mean(gauss(3.2, 5.0))) == 3.2
    assert float(D.mean(bg(1.0, 2.0, 3.0))) == pytest.approx(6.0)


def test_bg_mean_matches_monte_carlo():
    rng = np.random.default_rng(14)
    p = bg(0.6, 1.7, 2.3)
    draws = D.sample(p, rng, size=10 ** 6)
    se = draws.std() / math.sqrt(draws.size)
    assert abs(draws.mean() - float(D.mean(p))) < 3 * se


def test_det_value_modes():
    p = bg([0.4, 0.5], [2.0, 2.0], [3.0, 3.0])
    np.testing.assert_allclose(D.det_value(p), [0.0, 6.0])
    np.testing.assert_allclose(D.det_value(p, "mixture_mean"), [2.4, 3.0])
    with pytest.raises(ValueError):
        D.det_value(p, "median")


def test_classify_wet_threshold_inclusive():
    assert D.classify_wet(0.5) and D.classify_wet(0.9)
    assert not D.classify_wet(0.4999)


# -- sampling ---------------------------------------------------------------

def test_degenerate_samples():
    rng = np.random.default_rng(15)
    assert abs(float(D.sample(gauss(1.7, 1e-12), rng)) - 1.7) < 1e-9
    draws = D.sample(bg(1e-12, 2.0, 3.0), rng, size=10 ** 6)
    assert np.mean(draws == 0) >= 1 - 1e-5


def test_bg_sampling_law_of_large_numbers():
    rng = np.random.default_rng(16)
    draws = D.sample(bg(0.7, 2.0, 3.0), rng, size=10 ** 6)
    wet = draws[draws > 0]
    assert abs(wet.size / draws.size - 0.7) < 0.005
    assert abs(wet.mean() - 6.0) < 3 * wet.std() / math.sqrt(wet.size)


@pytest.mark.parametrize("alpha", [0.3, 0.9, 1.0, 4.5])
def test_marsaglia_tsang_matches_gamma_law(alpha):
    rng = np.random.default_rng(int(alpha * 100))
    draws = D.gamma_marsaglia_tsang(rng, alpha, size=20000)
    assert stats.kstest(draws, stats.gamma(alpha).cdf).statistic < 0.02


def test_sampling_is_reproducible_from_seed():
    p = bg([0.3, 0.8], [0.5, 3.0], [1.0, 2.0])
    a = D.sample(p, np.random.default_rng(5))
    b = D.sample(p, np.random.default_rng(5))
    np.testing.assert_array_equal(a, b)


# -- PIT and CDF --------------------------------------------------------------

def test_pit_known_values():
    assert float(D.pit(gauss(2.0, 3.0), 2.0)) == pytest.approx(0.5)
    assert float(D.gamma_cdf(math.log(2), 1.0, 1.0)) == pytest.approx(0.5, abs=1e-12)


def test_gamma_cdf_matches_quadrature():
    rng = np.random.default_rng(17)
    for _ in range(50):
        a, b = rng.uniform(1.0, 8), rng.uniform(0.2, 6)
        y = rng.uniform(0.05, 4) * a * b
        pdf = lambda t: math.exp((a - 1) * math.log(t) - t / b - a * math.log(b) - math.lgamma(a)) if t > 0 else 0.0
        ref, _ = integrate.quad(pdf, 0, y, epsabs=1e-13, epsrel=1e-13, limit=200)
        assert abs(float(D.gamma_cdf(y, a, b)) - ref) < 1e-8


@pytest.mark.parametrize("head", HEADS)
def test_self_sample_pit_is_uniform(head):
    rng = np.random.default_rng(18)
    n = 10 ** 4
    if head == "gaussian":
        p = gauss(rng.normal(0, 5, n), rng.uniform(0.5, 3, n))
        y = D.sample(p, rng)
    else:
        p = bg(np.ones(n) - 1e-9, rng.uniform(0.5, 5, n), rng.uniform(0.5, 5, n))
        y = D.sample(p, rng)
    u = D.pit(p, y)
    assert np.all((u >= 0) & (u <= 1))
    assert stats.kstest(u, "uniform").statistic < 0.02
