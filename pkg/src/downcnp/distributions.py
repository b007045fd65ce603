"""Predictive distributions: Gaussian for temperature, Bernoulli-Gamma for precipitation.

The Gamma component uses shape ``alpha`` and *scale* ``beta`` (mean
``alpha * beta``). All numpy-level functions are vectorised over their
parameter arrays.
"""

from dataclasses import dataclass

import numpy as np
from scipy import special

from . import diffcore as dc
from .config import HEADS

FLOOR = 1e-6
N_PARAMS = {"gaussian": 2, "bernoulli_gamma": 3}
HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GaussianParams:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.sigma) <= 0):
            raise ValueError("sigma must be positive")

    def as_columns(self):
        return np.stack(np.broadcast_arrays(self.mu, self.sigma), axis=-1)


@dataclass(frozen=True)
class BernoulliGammaParams:
    rho: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho)
        if np.any((rho < 0) | (rho > 1)):
            raise ValueError("rho must lie in [0, 1]")
        if np.any(np.asarray(self.alpha) <= 0) or np.any(np.asarray(self.beta) <= 0):
            raise ValueError("alpha and beta must be positive")

    def as_columns(self):
        return np.stack(np.broadcast_arrays(self.rho, self.alpha, self.beta), axis=-1)


def params_from_columns(head, cols):
    cols = np.asarray(cols, dtype=float)
    if head == "gaussian":
        return GaussianParams(cols[..., 0], cols[..., 1])
    return BernoulliGammaParams(cols[..., 0], cols[..., 1], cols[..., 2])


# -- link functions ----------------------------------------------------------

def _check_head(head):
    if head not in HEADS:
        raise ValueError(f"unknown head {head!r}")


def link(head, pre):
    """Map unconstrained pre-activations ``[..., n_p]`` to constrained tensors.

    Returns a tuple of diffcore tensors, ``(mu, sigma)`` or
    ``(rho, alpha, beta)``.
    """
    _check_head(head)
    pre = dc.as_tensor(pre)
    if head == "gaussian":
        return pre[..., 0], dc.softplus(pre[..., 1]) + FLOOR
    rho = dc.sigmoid(pre[..., 0]) * (1.0 - 2.0 * FLOOR) + FLOOR
    return rho, dc.softplus(pre[..., 1]) + FLOOR, dc.softplus(pre[..., 2]) + FLOOR


def link_numpy(head, pre):
    parts = link(head, np.asarray(pre, dtype=float))
    return params_from_columns(head, np.stack([p.data for p in parts], axis=-1))


# -- negative log-likelihoods -------------------------------------------------

def gaussian_nll(params, y):
    """``-log N(y; mu, sigma^2)``."""
    mu, sigma = np.asarray(params.mu), np.asarray(params.sigma)
    z = (np.asarray(y) - mu) / sigma
    return HALF_LOG_2PI + np.log(sigma) + 0.5 * z * z


def gamma_logpdf(y, alpha, beta):
    return (alpha - 1.0) * np.log(y) - y / beta - alpha * np.log(beta) - special.gammaln(alpha)


def bernoulli_gamma_nll(params, y, wet):
    """Negative log-likelihood of the Bernoulli-Gamma mixture.

    Wet points contribute ``-log rho - log Gamma(y; alpha, beta)``, dry
    points ``-log(1 - rho)``.
    """
    y = np.asarray(y, dtype=float)
    wet = np.asarray(wet, dtype=bool)
    if np.any(wet & (y <= 0)):
        raise ValueError("wet observations must be strictly positive")
    rho, alpha, beta = (np.asarray(v, dtype=float) for v in (params.rho, params.alpha, params.beta))
    y_safe = np.where(wet, y, 1.0)
    wet_term = -np.log(rho) - gamma_logpdf(y_safe, alpha, beta)
    dry_term = -np.log1p(-rho)
    return np.where(wet, wet_term, dry_term)


def nll(params, y, wet=None):
    if isinstance(params, GaussianParams):
        return gaussian_nll(params, y)
    return bernoulli_gamma_nll(params, y, wet)


def gaussian_nll_tensor(mu, sigma, y):
    z = (y - mu) / sigma
    return dc.log(sigma) + z * z * 0.5 + HALF_LOG_2PI


def bernoulli_gamma_nll_tensor(rho, alpha, beta, y, wet):
    """Per-point mixture NLL on diffcore tensors; ``y`` and ``wet`` are arrays."""
    wet = np.asarray(wet, dtype=float)
    y_safe = np.where(wet > 0, np.asarray(y, dtype=float), 1.0)
    log_y = np.log(y_safe)
    logpdf = (alpha - 1.0) * log_y - y_safe / beta - alpha * dc.log(beta) - dc.lgamma(alpha)
    wet_ll = dc.log(rho) + logpdf
    dry_ll = dc.log(1.0 - rho)
    return -(wet_ll * wet + dry_ll * (1.0 - wet))


def nll_tensor(head, parts, y, wet=None):
    if head == "gaussian":
        return gaussian_nll_tensor(parts[0], parts[1], np.asarray(y, dtype=float))
    return bernoulli_gamma_nll_tensor(*parts, y, wet)


# -- summaries -------------------------------------------------------------

def classify_wet(rho):
    """A day is wet when ``rho >= 0.5``."""
    return np.asarray(rho) >= 0.5


def mean(params):
    if isinstance(params, GaussianParams):
        return np.asarray(params.mu, dtype=float)
    return np.asarray(params.rho) * np.asarray(params.alpha) * np.asarray(params.beta)


def det_value(params, det_mode="gated_mean"):
    """Deterministic prediction.

    Temperature uses the mean. For precipitation, ``gated_mean`` returns
    the Gamma mean on days classified wet and 0 otherwise;
    ``mixture_mean`` returns ``rho * alpha * beta``.
    """
    if isinstance(params, GaussianParams):
        return mean(params)
    if det_mode == "mixture_mean":
        return mean(params)
    if det_mode != "gated_mean":
        raise ValueError(f"unknown det_mode {det_mode!r}")
    gamma_mean = np.asarray(params.alpha) * np.asarray(params.beta)
    return np.where(classify_wet(params.rho), gamma_mean, 0.0)


# -- sampling --------------------------------------------------------------

def box_muller(rng, size):
    u1 = 1.0 - rng.random(size)  # (0, 1]
    u2 = rng.random(size)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def gamma_marsaglia_tsang(rng, alpha, size=None):
    """Unit-scale Gamma(alpha) draws by Marsaglia-Tsang squeeze rejection.

    Shapes below 1 are boosted: ``G(a) = G(a + 1) * U^(1/a)``.
    """
    alpha = np.asarray(alpha, dtype=float)
    if size is None:
        size = alpha.shape
    alpha = np.broadcast_to(alpha, size).ravel()
    boost = alpha < 1.0
    a = np.where(boost, alpha + 1.0, alpha)
    d = a - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty(a.size)
    pending = np.arange(a.size)
    while pending.size:
        x = box_muller(rng, pending.size)
        v = (1.0 + c[pending] * x) ** 3
        u = rng.random(pending.size)
        ok = v > 0
        with np.errstate(invalid="ignore", divide="ignore"):
            logv = np.log(np.where(ok, v, 1.0))
        dp = d[pending]
        accept = ok & (np.log(1.0 - u) < 0.5 * x * x + dp - dp * v + dp * logv)
        out[pending[accept]] = dp[accept] * v[accept]
        pending = pending[~accept]
    if np.any(boost):
        u = 1.0 - rng.random(int(boost.sum()))
        out[boost] *= u ** (1.0 / alpha[boost])
    return out.reshape(size)


def sample(params, rng, size=None):
    """One draw per parameter element (or ``size`` draws for scalar params)."""
    if isinstance(params, GaussianParams):
        mu, sigma = np.broadcast_arrays(np.asarray(params.mu, float), np.asarray(params.sigma, float))
        shape = size if size is not None else mu.shape
        return mu + sigma * box_muller(rng, shape)
    rho, alpha, beta = np.broadcast_arrays(*(np.asarray(v, float) for v in
                                             (params.rho, params.alpha, params.beta)))
    shape = size if size is not None else rho.shape
    wet = rng.random(shape) < rho
    amount = gamma_marsaglia_tsang(rng, np.broadcast_to(alpha, shape)) * beta
    return np.where(wet, amount, 0.0)


# -- calibration -------------------------------------------------------------

def gamma_cdf(y, alpha, beta):
    """Regularised lower incomplete gamma ``P(alpha, y / beta)``."""
    return special.gammainc(alpha, np.maximum(np.asarray(y, float), 0.0) / beta)


def pit(params, y):
    """Predictive CDF at ``y``; for precipitation the Gamma (wet-day) CDF."""
    if isinstance(params, GaussianParams):
        return special.ndtr((np.asarray(y, float) - params.mu) / params.sigma)
    return gamma_cdf(y, params.alpha, params.beta)
