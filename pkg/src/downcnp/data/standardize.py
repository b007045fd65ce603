"""Per-channel standardisation with statistics from training days only."""

import hashlib
from dataclasses import dataclass

import numpy as np

from .gridio import GridSeries
from .schema import INVARIANT, TEMPORAL


@dataclass(frozen=True)
class StandardizationStats:
    channels: tuple
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.std) <= 0):
            raise ValueError("standard deviations must be positive")

    @property
    def fingerprint(self):
        h = hashlib.sha256()
        h.update("|".join(self.channels).encode())
        h.update(np.asarray(self.mean, "<f8").tobytes())
        h.update(np.asarray(self.std, "<f8").tobytes())
        return h.hexdigest()[:16]

    @classmethod
    def identity(cls, channels):
        n = len(channels)
        return cls(tuple(channels), np.zeros(n), np.ones(n))

    def to_dict(self):
        return {"channels": list(self.channels), "mean": [float(v) for v in self.mean],
                "std": [float(v) for v in self.std]}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["channels"]), np.array(d["mean"], float), np.array(d["std"], float))


def _masked_moments(values, mask):
    w = mask.sum()
    if w == 0:
        return 0.0, 1.0
    m = (values * mask).sum() / w
    s = np.sqrt((((values - m) * mask) ** 2).sum() / w)
    return float(m), float(s) if s > 0 else 1.0


def compute_stats(series: GridSeries, train_idx):
    """Channel moments over ``train_idx`` days.

    Invariant fields (orography, latitude, longitude) use every day since
    they carry no temporal information; the cyclic time channels are left
    as they are.
    """
    train_idx = np.asarray(train_idx, dtype=int)
    means, stds = [], []
    for c, name in enumerate(series.channels):
        if name in TEMPORAL:
            m, s = 0.0, 1.0
        elif name in INVARIANT:
            m, s = _masked_moments(series.values[..., c], series.mask[..., c])
        else:
            m, s = _masked_moments(series.values[train_idx, ..., c], series.mask[train_idx, ..., c])
        means.append(m)
        stds.append(s)
    return StandardizationStats(series.channels, np.array(means), np.array(stds))


def standardize(series: GridSeries, stats: StandardizationStats):
    """``(x - mean) / std`` channel-wise; masked cells stay 0."""
    if tuple(series.channels) != tuple(stats.channels):
        raise ValueError("statistics were computed for a different channel schema")
    values = (series.values - stats.mean) / stats.std * series.mask
    return GridSeries(series.lons, series.lats, series.channels, series.dates, values, series.mask)
