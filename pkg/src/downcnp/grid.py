"""Gridded context sets and off-grid target sites."""

from dataclasses import dataclass, field

import numpy as np


class GridError(ValueError):
    """A predictor grid violates its invariants."""


class SiteOutsideGridError(ValueError):
    """A target site lies outside the predictor grid's bounding box."""


def _uniform_step(axis, name):
    axis = np.asarray(axis, dtype=float)
    if axis.ndim != 1 or axis.size < 2:
        raise GridError(f"{name} axis needs at least two points")
    steps = np.diff(axis)
    if np.any(steps <= 0):
        raise GridError(f"{name} axis must be strictly ascending")
    step = steps.mean()
    if np.max(np.abs(steps - step)) > 1e-9 * abs(step):
        raise GridError(f"{name} axis is not uniformly spaced")
    return float(step)


@dataclass
class PredictorGrid:
    """One day of gridded predictors.

    ``values`` and ``mask`` are ``[n_lat, n_lon, n_channels]``; masked-out
    values are ignored by the encoder.
    """

    lons: np.ndarray
    lats: np.ndarray
    channels: tuple
    values: np.ndarray
    mask: np.ndarray = None
    date: object = None

    def __post_init__(self):
        self.lons = np.asarray(self.lons, dtype=float)
        self.lats = np.asarray(self.lats, dtype=float)
        self.channels = tuple(self.channels)
        self.values = np.asarray(self.values, dtype=float)
        shape = (self.lats.size, self.lons.size, len(self.channels))
        if self.values.shape != shape:
            raise GridError(f"values shape {self.values.shape} != {shape}")
        if self.mask is None:
            self.mask = np.ones(shape)
        self.mask = np.asarray(self.mask, dtype=float)
        if self.mask.shape != shape:
            raise GridError(f"mask shape {self.mask.shape} != {shape}")
        if not np.all((self.mask == 0) | (self.mask == 1)):
            raise GridError("mask entries must be 0 or 1")
        self.dlon = _uniform_step(self.lons, "lon")
        self.dlat = _uniform_step(self.lats, "lat")

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class TargetSite:
    lon: float
    lat: float
    elevation: float = 0.0
    elev_diff: float = 0.0
    mtpi: float = 0.0
    id: str = field(default="", compare=False)

    @property
    def topo(self):
        return np.array([self.elevation, self.elev_diff, self.mtpi], dtype=float)


def fractional_index(lons, lats, site_lon, site_lat, periodic=False, tol=1e-9):
    """Map coordinates in degrees to fractional (lat, lon) grid indices.

    With ``periodic`` the grid is treated as a torus and indices wrap;
    otherwise points outside the bounding box raise
    :class:`SiteOutsideGridError`.
    """
    lons, lats = np.asarray(lons, float), np.asarray(lats, float)
    dlon, dlat = lons[1] - lons[0], lats[1] - lats[0]
    fi = (np.asarray(site_lat, float) - lats[0]) / dlat
    fj = (np.asarray(site_lon, float) - lons[0]) / dlon
    if periodic:
        return np.mod(fi, lats.size), np.mod(fj, lons.size)
    bad = (fi < -tol) | (fi > lats.size - 1 + tol) | (fj < -tol) | (fj > lons.size - 1 + tol)
    if np.any(bad):
        k = int(np.flatnonzero(np.atleast_1d(bad))[0])
        lo = np.atleast_1d(site_lon)[k]
        la = np.atleast_1d(site_lat)[k]
        raise SiteOutsideGridError(
            f"site (lon={lo}, lat={la}) outside grid [{lons[0]}, {lons[-1]}] x [{lats[0]}, {lats[-1]}]")
    return fi, fj


def nearest_index(lons, lats, site_lon, site_lat):
    """Closest grid box; exact midpoints go to the lower index."""
    fi, fj = fractional_index(lons, lats, site_lon, site_lat)
    i = np.ceil(np.asarray(fi) - 0.5).astype(int)
    j = np.ceil(np.asarray(fj) - 0.5).astype(int)
    return np.clip(i, 0, len(lats) - 1), np.clip(j, 0, len(lons) - 1)
