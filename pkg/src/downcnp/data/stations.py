"""Station metadata and daily observation series as CSV files.

``stations.csv`` has header ``id,lon,lat,elev,elev_diff,mtpi``; each
station's series for a variable lives in ``series/<variable>/<id>.csv``
with header ``date,value``. Empty values mark missing days.
"""

import csv
import datetime as _dt
import math
import os
from dataclasses import dataclass

import numpy as np

from ..grid import TargetSite

STATION_FIELDS = ("id", "lon", "lat", "elev", "elev_diff", "mtpi")


@dataclass
class StationRecord:
    id: str
    lon: float
    lat: float
    elevation: float
    elev_diff: float
    mtpi: float
    dates: list
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(self.dates) != self.values.size:
            raise ValueError(f"station {self.id}: dates and values differ in length")
        if any(b <= a for a, b in zip(self.dates[:-1], self.dates[1:])):
            raise ValueError(f"station {self.id}: dates must be strictly increasing")

    @property
    def site(self):
        return TargetSite(self.lon, self.lat, self.elevation, self.elev_diff, self.mtpi, id=self.id)

    @property
    def topo(self):
        return np.array([self.elevation, self.elev_diff, self.mtpi])

    def series(self):
        return dict(zip(self.dates, self.values))


def check_unique(stations):
    seen = set()
    for s in stations:
        if s.id in seen:
            raise ValueError(f"duplicate station id {s.id!r}")
        seen.add(s.id)


def _fmt(x):
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def write_station_table(path, sites):
    """Write ``stations.csv`` from StationRecord or TargetSite objects."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATION_FIELDS)
        for s in sites:
            elev = s.elevation
            w.writerow([s.id, _fmt(s.lon), _fmt(s.lat), _fmt(elev), _fmt(s.elev_diff), _fmt(s.mtpi)])


def read_station_table(path, unique=True):
    """Return a list of :class:`TargetSite` (with ids) from a station CSV."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [f for f in STATION_FIELDS if f not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        sites = []
        for row in reader:
            sites.append(TargetSite(float(row["lon"]), float(row["lat"]), float(row["elev"]),
                                    float(row["elev_diff"]), float(row["mtpi"]), id=row["id"]))
    ids = [s.id for s in sites]
    if unique and len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate station ids")
    return sites


def write_series(path, dates, values):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("date", "value"))
        for d, v in zip(dates, values):
            w.writerow((d.isoformat(), _fmt(v)))


def read_series(path):
    dates, values = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            if row["value"] in ("", "nan", "NaN"):
                continue
            dates.append(_dt.date.fromisoformat(row["date"]))
            values.append(float(row["value"]))
    return dates, np.array(values)


def series_path(directory, variable, station_id):
    return os.path.join(directory, "series", variable, f"{station_id}.csv")


def save_stations(directory, stations, variable):
    os.makedirs(os.path.join(directory, "series", variable), exist_ok=True)
    write_station_table(os.path.join(directory, "stations.csv"), stations)
    for s in stations:
        write_series(series_path(directory, variable, s.id), s.dates, s.values)


def load_stations(directory, variable, ids=None):
    """Stations with their ``variable`` series; ``ids`` restricts and orders them."""
    sites = read_station_table(os.path.join(directory, "stations.csv"))
    by_id = {s.id: s for s in sites}
    order = ids if ids is not None else [s.id for s in sites]
    out = []
    for sid in order:
        s = by_id[sid]
        path = series_path(directory, variable, sid)
        dates, values = read_series(path) if os.path.exists(path) else ([], np.array([]))
        if variable == "precip" and np.any(values < 0):
            raise ValueError(f"{path}: negative precipitation")
        out.append(StationRecord(s.id, s.lon, s.lat, s.elevation, s.elev_diff, s.mtpi, dates, values))
    return out
