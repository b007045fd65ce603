"""A small deterministic synthetic world for desk-scale experiments.

Large-scale weather is a sum of random Fourier features whose coefficients
follow an AR(1) process in time. Station truth is built from the gridded
fields so that a model seeing the grid plus site topography can recover it:

* temperature: bilinear interpolation of the grid ``TMAX`` field at the
  site, minus a 6.5 K/km lapse rate applied to the site's elevation
  difference from the grid, plus white noise;
* precipitation: a logistic occurrence gate driven by interpolated
  ``Q850`` humidity and site topography, with gamma-distributed amounts.
"""

import datetime as _dt
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..config import SynthConfig
from ..grid import fractional_index
from .gridio import GridSeries
from .schema import day_angle
from .stations import StationRecord

LAPSE_RATE = 6.5e-3  # K per m
CHANNELS = ("TMAX", "TMEAN", "U10", "V10", "PR", "Q850", "Z", "LAT", "LON", "COS_T", "SIN_T")
GRAVITY = 9.80665

TEMP_NOISE = 0.5
ELEV_DIFF_RANGE = 800.0
GAMMA_SHAPE = 2.5


class FourierField:
    """Random Fourier features with AR(1) coefficients: smooth, unit-variance fields."""

    def __init__(self, rng, n_features=16, lengthscale=4.0, persistence=0.7):
        self.omega = rng.normal(0.0, 1.0 / lengthscale, size=(n_features, 2))
        self.phase = rng.uniform(0.0, 2 * np.pi, size=n_features)
        self.persistence = persistence
        self.n_features = n_features

    def basis(self, lon, lat):
        arg = np.multiply.outer(lon, self.omega[:, 0]) + np.multiply.outer(lat, self.omega[:, 1])
        return np.sqrt(2.0 / self.n_features) * np.cos(arg + self.phase)

    def coefficients(self, rng, n_days):
        r = self.persistence
        a = np.empty((n_days, self.n_features))
        a[0] = rng.standard_normal(self.n_features)
        for t in range(1, n_days):
            a[t] = r * a[t - 1] + np.sqrt(1 - r * r) * rng.standard_normal(self.n_features)
        return a


def bilinear(plane, fi, fj):
    """Bilinear interpolation of ``plane[..., lat, lon]`` at fractional indices."""
    n_lat, n_lon = plane.shape[-2:]
    i0 = np.clip(np.floor(fi).astype(int), 0, n_lat - 2)
    j0 = np.clip(np.floor(fj).astype(int), 0, n_lon - 2)
    ti, tj = fi - i0, fj - j0
    return ((1 - ti) * (1 - tj) * plane[..., i0, j0] + (1 - ti) * tj * plane[..., i0, j0 + 1]
            + ti * (1 - tj) * plane[..., i0 + 1, j0] + ti * tj * plane[..., i0 + 1, j0 + 1])


@dataclass
class SynthWorld:
    """Grids, station records per variable and the noise-free truth used to build them."""

    grids: GridSeries
    stations: dict
    heldout: list
    wet_prob: np.ndarray
    tmax_plane: np.ndarray = field(repr=False)
    grid_elevation: np.ndarray = field(repr=False)

    def __iter__(self):
        return iter((self.grids, self.stations))

    def clean_tmax(self, day, lon, lat, elev_diff):
        """Noise-free station temperature on day index ``day``."""
        fi, fj = fractional_index(self.grids.lons, self.grids.lats, lon, lat)
        return bilinear(self.tmax_plane[day], fi, fj) - LAPSE_RATE * np.asarray(elev_diff)

    @property
    def train_ids(self):
        held = set(self.heldout)
        return [s.id for s in self.stations["tmax"] if s.id not in held]


def wet_logit(q, elev_diff, mtpi):
    return -0.3 + 2.0 * q + 0.8 * np.asarray(elev_diff) / 1000.0 + 0.5 * np.asarray(mtpi)


def gamma_scale(q, elev_diff):
    return 2.0 * np.exp(0.5 * q + 0.4 * np.asarray(elev_diff) / 1000.0)


def synth_generate(config=None, **overrides):
    """Build a :class:`SynthWorld`; identical configs give bit-identical worlds."""
    cfg = config or SynthConfig()
    if overrides:
        cfg = SynthConfig(**{**cfg.__dict__, **overrides})
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    start = _dt.date.fromisoformat(cfg.start_date)
    dates = [start + _dt.timedelta(days=k) for k in range(cfg.n_days)]
    lons = np.arange(cfg.n_lon, dtype=float)
    lats = 40.0 + np.arange(cfg.n_lat, dtype=float)
    LON, LAT = np.meshgrid(lons, lats)

    orography = FourierField(rng, lengthscale=3.0)
    elev = 600.0 + 300.0 * (orography.basis(LON, LAT) @ rng.standard_normal(orography.n_features))
    elev = np.maximum(elev, 0.0)

    fields_ = {name: FourierField(rng) for name in ("t", "q", "u", "v", "tm")}
    planes = {}
    for name, f in fields_.items():
        coef = f.coefficients(rng, cfg.n_days)
        planes[name] = np.einsum("hwk,dk->dhw", f.basis(LON, LAT), coef)

    angle = np.array([day_angle(d) for d in dates])
    season = np.sin(angle - 2 * np.pi * 105 / 365.25)[:, None, None]
    tmax = 12.0 + 8.0 * season + 4.0 * planes["t"] - LAPSE_RATE * (elev - 600.0)
    q = planes["q"] + 0.3 * season
    pr = expit(-0.3 + 2.0 * q) * GAMMA_SHAPE * gamma_scale(q, 0.0)

    values = np.zeros((cfg.n_days, cfg.n_lat, cfg.n_lon, len(CHANNELS)))
    stack = {
        "TMAX": tmax, "TMEAN": tmax - 5.0 + 0.5 * planes["tm"], "U10": 3.0 * planes["u"],
        "V10": 3.0 * planes["v"], "PR": pr, "Q850": q, "Z": GRAVITY * elev,
        "LAT": LAT, "LON": LON,
        "COS_T": np.cos(angle)[:, None, None], "SIN_T": np.sin(angle)[:, None, None],
    }
    for c, name in enumerate(CHANNELS):
        values[..., c] = stack[name]
    grids = GridSeries(lons, lats, CHANNELS, dates, values)

    # station placement avoids the outermost half cell
    n = cfg.n_stations
    s_lon = rng.uniform(lons[0] + 0.5, lons[-1] - 0.5, n)
    s_lat = rng.uniform(lats[0] + 0.5, lats[-1] - 0.5, n)
    fi, fj = fractional_index(lons, lats, s_lon, s_lat)
    g_elev = bilinear(elev, fi, fj)
    s_elev = np.maximum(g_elev + rng.uniform(-ELEV_DIFF_RANGE, ELEV_DIFF_RANGE, n), 0.0)
    s_diff = s_elev - g_elev
    s_mtpi = rng.uniform(-1.0, 1.0, n)

    t_site = bilinear(tmax, fi, fj) - LAPSE_RATE * s_diff
    t_obs = t_site + TEMP_NOISE * rng.standard_normal(t_site.shape)

    q_site = bilinear(q, fi, fj)
    p_wet = expit(wet_logit(q_site, s_diff, s_mtpi))
    wet = rng.uniform(size=p_wet.shape) < p_wet
    amounts = rng.gamma(GAMMA_SHAPE, gamma_scale(q_site, s_diff))
    p_obs = np.where(wet, amounts, 0.0)

    missing = {v: rng.uniform(size=(cfg.n_days, n)) < cfg.missing_fraction for v in ("tmax", "precip")}
    ids = [f"S{k:03d}" for k in range(n)]
    stations = {}
    for var, obs in (("tmax", t_obs), ("precip", p_obs)):
        recs = []
        for k, sid in enumerate(ids):
            keep = ~missing[var][:, k]
            recs.append(StationRecord(sid, float(s_lon[k]), float(s_lat[k]), float(s_elev[k]),
                                      float(s_diff[k]), float(s_mtpi[k]),
                                      [d for d, m in zip(dates, keep) if m], obs[keep, k]))
        stations[var] = recs
    heldout = ids[n - cfg.n_heldout:] if cfg.n_heldout else []
    return SynthWorld(grids, stations, heldout, p_wet, tmax, elev)
