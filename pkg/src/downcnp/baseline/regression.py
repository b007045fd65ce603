"""Per-station regressions: linear, logistic and gamma GLM."""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import expit

MAX_ITER = 100
LL_TOL = 1e-10
SEPARATION_NORM = 1e3


class RankDeficientError(np.linalg.LinAlgError):
    def __init__(self, columns):
        super().__init__(f"design matrix is rank deficient; dependent columns: {columns}")
        self.columns = columns


@dataclass
class StationRegressor:
    kind: str
    coefficients: np.ndarray
    predictor_names: tuple = ()
    dispersion: float = None
    separated: bool = False
    n_iter: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        self.predictor_names = tuple(self.predictor_names)
        if self.coefficients.size != len(self.predictor_names) + 1:
            raise ValueError("need one coefficient per predictor plus an intercept")

    def linear_predictor(self, X):
        return _design(X) @ self.coefficients

    def predict(self, X):
        eta = self.linear_predictor(X)
        if self.kind == "mlr":
            return eta
        if self.kind == "logistic":
            return expit(eta)
        if self.kind == "gamma_glm":
            return np.exp(eta)
        raise ValueError(f"unknown regressor kind {self.kind!r}")


def _design(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return np.column_stack([np.ones(X.shape[0]), X])


def _names(X, names):
    p = np.asarray(X).reshape(len(X), -1).shape[1]
    return tuple(names) if names is not None else tuple(f"x{k}" for k in range(p))


def _lstsq_qr(A, y, names, w=None):
    """Weighted least squares by pivoted QR; raises on rank deficiency."""
    if w is not None:
        sw = np.sqrt(w)
        A, y = A * sw[:, None], y * sw
    Q, R, piv = linalg.qr(A, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    tol = max(A.shape) * np.finfo(float).eps * (d[0] if d.size else 0.0)
    rank = int(np.sum(d > tol))
    if rank < A.shape[1]:
        labels = ("intercept",) + tuple(names)
        raise RankDeficientError([labels[k] for k in sorted(piv[rank:])])
    beta = np.empty(A.shape[1])
    beta[piv] = linalg.solve_triangular(R, Q.T @ y)
    return beta


def fit_mlr(X, y, names=None):
    """Least-squares linear regression with intercept, via orthogonal factorisation."""
    A, y = _design(X), np.asarray(y, dtype=float)
    names = _names(X, names)
    if A.shape[0] <= A.shape[1]:
        raise ValueError(f"need more than {A.shape[1]} rows, got {A.shape[0]}")
    return StationRegressor("mlr", _lstsq_qr(A, y, names), names)


def _bernoulli_ll(eta, y):
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def fit_logistic(X, wet, names=None):
    """Logistic regression by IRLS.

    Iteration stops once the log-likelihood improves by less than 1e-10 or
    after 100 steps. A coefficient norm above 1e3 signals complete
    separation; the model is then returned with ``separated=True``. A fit
    that stalls with a log-likelihood indistinguishable from 0 is
    separated too: its coefficients would grow without bound.
    """
    A, y = _design(X), np.asarray(wet, dtype=float)
    names = _names(X, names)
    if y.min() == y.max():
        raise ValueError("logistic regression needs both classes present")
    beta = np.zeros(A.shape[1])
    ll = _bernoulli_ll(A @ beta, y)
    separated = False
    it = 0
    for it in range(1, MAX_ITER + 1):
        eta = A @ beta
        p = expit(eta)
        w = np.maximum(p * (1 - p), 1e-12)
        z = eta + (y - p) / w
        new = _lstsq_qr(A, z, names, w)
        new_ll = _bernoulli_ll(A @ new, y)
        beta = new
        if np.linalg.norm(beta) > SEPARATION_NORM:
            separated = True
            break
        if new_ll - ll < LL_TOL:
            break
        ll = new_ll
    if new_ll > -1e-6:
        separated = True
    return StationRegressor("logistic", beta, names, separated=separated, n_iter=it)


def fit_gamma_glm(X, y, names=None):
    """Gamma GLM with log link by IRLS, plus a Pearson moment dispersion estimate."""
    A, y = _design(X), np.asarray(y, dtype=float)
    names = _names(X, names)
    if np.any(y <= 0):
        raise ValueError("gamma GLM responses must be positive")
    if A.shape[0] <= A.shape[1]:
        raise ValueError(f"need more than {A.shape[1]} rows, got {A.shape[0]}")
    beta = np.zeros(A.shape[1])
    beta[0] = np.log(y.mean())

    def deviance(b):
        mu = np.exp(A @ b)
        return 2.0 * float(np.sum((y - mu) / mu - np.log(y / mu)))

    dev = deviance(beta)
    it = 0
    for it in range(1, MAX_ITER + 1):
        eta = A @ beta
        mu = np.exp(eta)
        # log link with V(mu) = mu^2 gives unit IRLS weights
        beta = _lstsq_qr(A, eta + (y - mu) / mu, names)
        new_dev = deviance(beta)
        if abs(dev - new_dev) < LL_TOL * max(1.0, abs(new_dev)):
            break
        dev = new_dev
    mu = np.exp(A @ beta)
    dof = max(A.shape[0] - A.shape[1], 1)
    phi = float(np.sum(((y - mu) / mu) ** 2) / dof)
    return StationRegressor("gamma_glm", beta, names, dispersion=phi, n_iter=it)
