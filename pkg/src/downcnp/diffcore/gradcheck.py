"""Central finite-difference gradient checks."""

import numpy as np

from .tensor import backward


def relative_error(a, b):
    """``||a - b|| / max(||a||, ||b||)``; zero when both vanish."""
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


def numerical_gradient(loss_fn, param, step=1e-5):
    """Central differences of the scalar ``loss_fn()`` w.r.t. ``param.data``."""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + step
        up = loss_fn().item()
        flat[k] = orig - step
        down = loss_fn().item()
        flat[k] = orig
        gflat[k] = (up - down) / (2.0 * step)
    return grad


def check_gradients(loss_fn, params, step=1e-5):
    """Compare reverse-mode and finite-difference gradients.

    ``loss_fn`` must rebuild the graph on every call. Returns a dict of
    per-parameter relative errors keyed by parameter name (or index).
    """
    analytic = backward(loss_fn())
    errors = {}
    for k, p in enumerate(params):
        fd = numerical_gradient(loss_fn, p, step)
        key = getattr(p, "name", None) or k
        errors[key] = relative_error(analytic.get(p, np.zeros_like(p.data)), fd)
    return errors
