"""Grids and station observations aligned on a common day axis."""

import json
import os

import numpy as np

from ..config import WET_THRESHOLD
from ..convcnp import SiteBatch
from ..grid import fractional_index
from .gridio import GridSeries, load_grid, save_grid
from .stations import check_unique, load_stations, save_stations

GRID_FILE = "grid.dcgr"
SPLIT_FILE = "split.json"


class Dataset:
    """Immutable pairing of a :class:`GridSeries` with station records.

    ``obs[k, s]`` is station ``s``'s value on grid day ``k`` (NaN when
    missing). Station observations on dates absent from the grid are
    ignored.
    """

    def __init__(self, grids: GridSeries, stations, variable, wet_threshold=WET_THRESHOLD,
                 periodic=False):
        check_unique(stations)
        self.grids = grids
        self.stations = list(stations)
        self.variable = variable
        self.wet_threshold = wet_threshold
        self.ids = [s.id for s in self.stations]
        pos = grids.date_index()
        obs = np.full((len(grids), len(self.stations)), np.nan)
        for s_idx, s in enumerate(self.stations):
            for d, v in zip(s.dates, s.values):
                k = pos.get(d)
                if k is not None:
                    obs[k, s_idx] = v
        self.obs = obs
        self.obs.setflags(write=False)
        lon = np.array([s.lon for s in self.stations])
        lat = np.array([s.lat for s in self.stations])
        if self.stations:
            self.fi, self.fj = fractional_index(grids.lons, grids.lats, lon, lat, periodic=periodic)
        else:
            self.fi = self.fj = np.zeros(0)
        self.topo = np.array([s.topo for s in self.stations]).reshape(-1, 3)

    def __len__(self):
        return len(self.grids)

    @property
    def dates(self):
        return self.grids.dates

    def with_grids(self, grids):
        """Same stations against another grid series with identical dates (e.g. standardised)."""
        if grids.dates != self.grids.dates:
            raise ValueError("replacement grids must share the day axis")
        new = object.__new__(Dataset)
        new.__dict__.update(self.__dict__)
        new.grids = grids
        return new

    def station_subset(self, ids):
        index = {sid: k for k, sid in enumerate(self.ids)}
        return [index[sid] for sid in ids]

    def batch(self, day_indices, station_idx=None):
        """Grid tensors and targets for ``day_indices``.

        Every station in ``station_idx`` (default all) with a valid
        observation on a day becomes a target point for that day.
        """
        day_indices = np.asarray(day_indices, dtype=int)
        if station_idx is None:
            station_idx = np.arange(len(self.stations))
        station_idx = np.asarray(station_idx, dtype=int)
        obs = self.obs[np.ix_(day_indices, station_idx)]
        b, s = np.nonzero(~np.isnan(obs))
        st = station_idx[s]
        y = obs[b, s]
        wet = y > self.wet_threshold if self.variable == "precip" else None
        meta = list(zip(day_indices[b].tolist(), st.tolist()))
        batch = SiteBatch(day=b, fi=self.fi[st], fj=self.fj[st], topo=self.topo[st], y=y, wet=wet,
                          meta=meta)
        return self.grids.values[day_indices], self.grids.mask[day_indices], batch


def save_world(directory, world):
    """Write a synthetic world in the native on-disk layout."""
    os.makedirs(directory, exist_ok=True)
    save_grid(os.path.join(directory, GRID_FILE), world.grids)
    for variable, recs in world.stations.items():
        save_stations(directory, recs, variable)
    held = set(world.heldout)
    split = {"heldout": list(world.heldout),
             "train": [s.id for s in world.stations["tmax"] if s.id not in held]}
    with open(os.path.join(directory, SPLIT_FILE), "w") as fh:
        json.dump(split, fh, indent=2)
        fh.write("\n")


def read_split(directory):
    path = os.path.join(directory, SPLIT_FILE)
    if not os.path.exists(path):
        return None
    with open(path) as fh:
        return json.load(fh)


def load_dataset(directory, variable, ids=None, schema=None, wet_threshold=WET_THRESHOLD):
    path = os.path.join(directory, GRID_FILE)
    if not os.path.exists(path):
        raise FileNotFoundError(f"grid file not found: {path}")
    grids = load_grid(path, schema)
    stations = load_stations(directory, variable, ids)
    return Dataset(grids, stations, variable, wet_threshold)
