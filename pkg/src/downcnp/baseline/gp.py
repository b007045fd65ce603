"""Zero-mean Gaussian-process regression with an anisotropic EQ kernel."""

from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg

from .spline import ELEV_SCALE, scale_points


class GPError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class GPHyper:
    lengthscales: tuple = (2.0, 2.0, 500.0)   # degrees lon, degrees lat, metres
    signal_var: float = 1.0
    noise_var: float = 1e-6
    elev_scale: float = ELEV_SCALE

    def scaled_lengthscales(self):
        l = np.asarray(self.lengthscales, dtype=float).copy()
        l[2] /= self.elev_scale
        return l


@dataclass
class GPModel:
    hyper: GPHyper
    X: np.ndarray        # scaled training inputs
    y: np.ndarray
    chol: np.ndarray     # lower Cholesky factor of K + noise I
    alpha: np.ndarray    # (K + noise I)^-1 y
    noise_var: float     # nugget actually used


def eq_kernel(a, b, lengthscales, signal_var):
    d = (a[:, None, :] - b[None, :, :]) / lengthscales
    return signal_var * np.exp(-0.5 * (d ** 2).sum(-1))


def _factor(K, noise):
    try:
        return linalg.cholesky(K + noise * np.eye(len(K)), lower=True)
    except linalg.LinAlgError:
        return None


def gp_fit(points, values, hyper=GPHyper()):
    """Condition the GP on data; on a failed factorisation the nugget grows once by 10x."""
    X = scale_points(points, hyper.elev_scale)
    y = np.asarray(values, dtype=float)
    K = eq_kernel(X, X, hyper.scaled_lengthscales(), hyper.signal_var)
    noise = hyper.noise_var
    L = _factor(K, noise)
    if L is None:
        noise *= 10.0
        L = _factor(K, noise)
        if L is None:
            raise GPError("covariance is not positive definite even after raising the nugget")
    alpha = linalg.cho_solve((L, True), y)
    return GPModel(hyper, X, y, L, alpha, noise)


def gp_predict(model, points):
    """Posterior mean and variance (latent function, without the nugget)."""
    Xs = scale_points(points, model.hyper.elev_scale)
    ls, sv = model.hyper.scaled_lengthscales(), model.hyper.signal_var
    Ks = eq_kernel(Xs, model.X, ls, sv)
    mean = Ks @ model.alpha
    v = linalg.solve_triangular(model.chol, Ks.T, lower=True)
    var = np.maximum(sv - (v ** 2).sum(0), 0.0)
    if np.ndim(points) == 1:
        return float(mean[0]), float(var[0])
    return mean, var


def gp_mean_weights(model, point):
    """Weights ``w`` with posterior mean ``w @ y`` at one point, for any targets ``y``."""
    xs = scale_points(point, model.hyper.elev_scale)
    ks = eq_kernel(xs, model.X, model.hyper.scaled_lengthscales(), model.hyper.signal_var)[0]
    return linalg.cho_solve((model.chol, True), ks)


def log_marginal_likelihood(model):
    n = len(model.y)
    return float(-0.5 * model.y @ model.alpha - np.log(np.diag(model.chol)).sum()
                 - 0.5 * n * np.log(2 * np.pi))


def refine_lengthscales(points, values, hyper=GPHyper(), sweeps=3,
                        factors=(0.5, 0.7071, 1.0, 1.4142, 2.0)):
    """Coordinate-descent search over lengthscales maximising the marginal likelihood."""
    best = hyper
    best_ll = log_marginal_likelihood(gp_fit(points, values, best))
    for _ in range(sweeps):
        improved = False
        for k in range(3):
            for f in factors:
                ls = list(best.lengthscales)
                ls[k] *= f
                cand = replace(best, lengthscales=tuple(ls))
                try:
                    ll = log_marginal_likelihood(gp_fit(points, values, cand))
                except GPError:
                    continue
                if ll > best_ll + 1e-12:
                    best, best_ll, improved = cand, ll, True
        if not improved:
            break
    return best
