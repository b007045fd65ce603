"""Exact thin-plate spline interpolation over (lon, lat, elevation).

The 3-D polyharmonic kernel is ``phi(r) = -r`` with an affine polynomial
tail. Elevation is divided by ``elev_scale`` metres so one unit of
scaled elevation weighs the same as one degree.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

ELEV_SCALE = 1000.0


class SplineError(np.linalg.LinAlgError):
    pass


def scale_points(points, elev_scale=ELEV_SCALE):
    p = np.array(points, dtype=float, ndmin=2)
    if p.shape[1] != 3:
        raise ValueError("points must be (lon, lat, elev) triples")
    p[:, 2] /= elev_scale
    return p


def _kernel(a, b):
    return -np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))


def _poly(p):
    return np.column_stack([np.ones(len(p)), p])


@dataclass
class SplineModel:
    centers: np.ndarray       # scaled coordinates
    weights: np.ndarray
    polynomial: np.ndarray    # [c0, c_lon, c_lat, c_elev] in scaled units
    elev_scale: float = ELEV_SCALE

    @property
    def side_residual(self):
        """Norm of ``P^T w``; zero when the orthogonality conditions hold."""
        return float(np.linalg.norm(_poly(self.centers).T @ self.weights))


def tps_fit(points, values, elev_scale=ELEV_SCALE):
    p = scale_points(points, elev_scale)
    v = np.asarray(values, dtype=float)
    n = len(p)
    if n < 5:
        raise SplineError(f"thin-plate fit needs at least 5 points, got {n}")
    if len(np.unique(p, axis=0)) < n:
        raise SplineError("coincident points make the spline system singular")
    P = _poly(p)
    if np.linalg.matrix_rank(P) < 4:
        raise SplineError("points are coplanar; the affine part is not identifiable")
    M = np.zeros((n + 4, n + 4))
    M[:n, :n] = _kernel(p, p)
    M[:n, n:] = P
    M[n:, :n] = P.T
    rhs = np.concatenate([v, np.zeros(4)])
    try:
        sol = linalg.solve(M, rhs)
    except linalg.LinAlgError as exc:
        raise SplineError(f"singular thin-plate system: {exc}") from exc
    return SplineModel(p, sol[:n], sol[n:], elev_scale)


def tps_eval(model, points):
    """Spline value at one (lon, lat, elev) point or an array of them."""
    q = scale_points(points, model.elev_scale)
    out = _kernel(q, model.centers) @ model.weights + _poly(q) @ model.polynomial
    return float(out[0]) if np.ndim(points) == 1 else out
