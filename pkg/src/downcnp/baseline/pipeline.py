"""Station regressions interpolated to unseen sites.

Each contributing station gets its own regression on predictors from its
closest grid box. To predict at a new site, month by month:

* temperature: thin-plate spline of the stations' monthly means, plus a
  GP interpolation of the daily anomalies from those means;
* precipitation: thin-plate spline of monthly totals, times a GP
  interpolation of each day's fraction of the station's monthly total,
  clipped at zero.

The GP runs on each day's anomalies minus their cross-station mean, which
is added back afterwards, so spatially uniform anomalies pass through
unchanged.
"""

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from ..config import WET_THRESHOLD
from ..grid import nearest_index
from .gp import GPHyper, gp_fit, gp_mean_weights
from .regression import fit_gamma_glm, fit_logistic, fit_mlr
from .spline import tps_eval, tps_fit

MIN_STATIONS = 5
DEFAULT_PREDICTORS = {
    "tmax": ("TMAX", "TMEAN", "COS_T", "SIN_T"),
    "precip": ("PR", "Q850", "U10", "V10"),
}


class InsufficientStationsError(ValueError):
    pass


def closest_gridbox_predictors(grids, lon, lat, channels):
    """``[n_days, len(channels)]`` predictor matrix from the grid box nearest the site."""
    i, j = nearest_index(grids.lons, grids.lats, lon, lat)
    idx = [grids.channel_index(c) for c in channels]
    return grids.values[:, int(i), int(j)][:, idx]


@dataclass
class StationModel:
    variable: str
    models: dict
    channels: tuple
    wet_threshold: float = WET_THRESHOLD

    def predict(self, X):
        if self.variable == "tmax":
            return self.models["mlr"].predict(X)
        p = self.models["occurrence"].predict(X)
        amount = self.models["amount"].predict(X)
        return np.where(p >= 0.5, amount, 0.0)


def fit_station_model(X, y, variable, channels, wet_threshold=WET_THRESHOLD):
    ok = ~np.isnan(y)
    X, y = X[ok], y[ok]
    if variable == "tmax":
        return StationModel(variable, {"mlr": fit_mlr(X, y, channels)}, channels, wet_threshold)
    wet = y > wet_threshold
    occ = fit_logistic(X, wet, channels)
    amt = fit_gamma_glm(X[wet], y[wet], channels)
    return StationModel(variable, {"occurrence": occ, "amount": amt}, channels, wet_threshold)


def _month_groups(dates):
    groups = OrderedDict()
    for k, d in enumerate(dates):
        groups.setdefault((d.year, d.month), []).append(k)
    return groups


def _centred_gp(points, vals, target, hyper):
    """GP interpolation of each column of ``vals`` (stations x days) about its station mean."""
    centre = vals.mean(axis=0)
    resid = vals - centre
    var = float(resid.var())
    if var <= 0:
        return centre
    # the nugget is relative to the pooled signal variance, so one
    # factorisation serves every day of the month
    h = GPHyper(hyper.lengthscales, var, hyper.noise_var * var, hyper.elev_scale)
    weights = gp_mean_weights(gp_fit(points, resid[:, 0], h), target)
    return centre + weights @ resid


def baseline_predict_unseen(points, predictions, dates, variable, target, hyper=GPHyper()):
    """Daily series at ``target`` (lon, lat, elev) from station prediction series.

    ``points`` is ``[S, 3]`` station coordinates and ``predictions`` is
    ``[S, n_days]`` aligned with ``dates``.
    """
    points = np.asarray(points, dtype=float)
    predictions = np.asarray(predictions, dtype=float)
    if len(points) < MIN_STATIONS:
        raise InsufficientStationsError(
            f"need at least {MIN_STATIONS} contributing stations, got {len(points)}")
    target = np.asarray(target, dtype=float)
    out = np.zeros(len(dates))
    for idx in _month_groups(dates).values():
        block = predictions[:, idx]
        if variable == "tmax":
            means = block.mean(axis=1)
            m = tps_eval(tps_fit(points, means), target)
            out[idx] = m + _centred_gp(points, block - means[:, None], target, hyper)
        else:
            totals = block.sum(axis=1)
            total = max(tps_eval(tps_fit(points, totals), target), 0.0)
            if total <= 0:
                continue
            safe = np.where(totals > 0, totals, 1.0)
            frac = np.where(totals[:, None] > 0, block / safe[:, None], 0.0)
            out[idx] = np.maximum(total * _centred_gp(points, frac, target, hyper), 0.0)
    return out


def run_baseline(dataset, train_days, predict_days, station_idx, targets, channels=None,
                 hyper=GPHyper()):
    """Fit station models on ``train_days`` and interpolate their predictions to ``targets``.

    ``targets`` is a sequence of TargetSite-like objects. Returns an array
    ``[len(targets), len(predict_days)]``.
    """
    variable = dataset.variable
    if channels is None:
        channels = tuple(c for c in DEFAULT_PREDICTORS[variable] if c in dataset.grids.channels)
    station_idx = list(station_idx)
    if len(station_idx) < MIN_STATIONS:
        raise InsufficientStationsError(
            f"need at least {MIN_STATIONS} contributing stations, got {len(station_idx)}")
    train_days = np.asarray(train_days, dtype=int)
    predict_days = np.asarray(predict_days, dtype=int)
    points, preds = [], []
    for s in station_idx:
        st = dataset.stations[s]
        X = closest_gridbox_predictors(dataset.grids, st.lon, st.lat, channels)
        model = fit_station_model(X[train_days], dataset.obs[train_days, s], variable, channels,
                                  dataset.wet_threshold)
        preds.append(model.predict(X[predict_days]))
        points.append((st.lon, st.lat, st.elevation))
    dates = [dataset.dates[k] for k in predict_days]
    return np.array([baseline_predict_unseen(points, preds, dates, variable,
                                             (t.lon, t.lat, t.elevation), hyper)
                     for t in targets])
