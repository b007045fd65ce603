"""Binary grid files holding a daily series of multi-channel predictor fields.

Layout, all little-endian::

    b"DCGR"                       magic
    u32 version, n_days, n_lat, n_lon, n_channels
    n_channels x (u16 length, utf-8 name)
    f64[n_lat] latitudes, f64[n_lon] longitudes
    i32[n_days] dates as days since 1970-01-01
    n_days x n_channels x f64[n_lat, n_lon] planes

Cells equal to :data:`SENTINEL` are masked.
"""

import datetime as _dt
import io
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from ..grid import GridError, PredictorGrid

MAGIC = b"DCGR"
VERSION = 1
SENTINEL = 9.969e36
EPOCH = _dt.date(1970, 1, 1)

log = logging.getLogger(__name__)


class GridFormatError(ValueError):
    """Malformed grid file; ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class UnknownChannelError(ValueError):
    pass


@dataclass
class GridSeries:
    """A stack of daily grids sharing axes and channel schema.

    ``values`` and ``mask`` are ``[n_days, n_lat, n_lon, n_channels]``;
    masked cells hold 0 in ``values``.
    """

    lons: np.ndarray
    lats: np.ndarray
    channels: tuple
    dates: list
    values: np.ndarray
    mask: np.ndarray = None
    gaps: list = field(default_factory=list)

    def __post_init__(self):
        self.lons = np.asarray(self.lons, dtype=float)
        self.lats = np.asarray(self.lats, dtype=float)
        self.channels = tuple(self.channels)
        self.dates = list(self.dates)
        self.values = np.asarray(self.values, dtype=float)
        if self.mask is None:
            self.mask = np.ones_like(self.values)
        expected = (len(self.dates), self.lats.size, self.lons.size, len(self.channels))
        if self.values.shape != expected or self.mask.shape != expected:
            raise GridError(f"grid series arrays must have shape {expected}")
        # validates axis spacing
        PredictorGrid(self.lons, self.lats, self.channels, self.values[0] if len(self.dates) else
                      np.zeros(expected[1:]))
        self.gaps = find_gaps(self.dates)

    def __len__(self):
        return len(self.dates)

    def __getitem__(self, k):
        return PredictorGrid(self.lons, self.lats, self.channels, self.values[k], self.mask[k],
                             date=self.dates[k])

    def channel_index(self, name):
        return self.channels.index(name)

    def date_index(self):
        return {d: k for k, d in enumerate(self.dates)}

    def subset(self, indices):
        idx = np.asarray(indices, dtype=int)
        return GridSeries(self.lons, self.lats, self.channels, [self.dates[k] for k in idx],
                          self.values[idx], self.mask[idx])


def find_gaps(dates):
    """Pairs ``(before, after)`` of consecutive dates more than one day apart."""
    return [(a, b) for a, b in zip(dates[:-1], dates[1:]) if (b - a).days != 1]


def grid_to_bytes(series):
    buf = io.BytesIO()
    n_days = len(series)
    buf.write(MAGIC)
    buf.write(struct.pack("<5I", VERSION, n_days, series.lats.size, series.lons.size,
                          len(series.channels)))
    for name in series.channels:
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
    buf.write(series.lats.astype("<f8").tobytes())
    buf.write(series.lons.astype("<f8").tobytes())
    buf.write(np.array([(d - EPOCH).days for d in series.dates], dtype="<i4").tobytes())
    planes = np.where(series.mask > 0, series.values, SENTINEL)
    # [day, lat, lon, channel] -> [day, channel, lat, lon]
    buf.write(np.ascontiguousarray(np.transpose(planes, (0, 3, 1, 2)), dtype="<f8").tobytes())
    return buf.getvalue()


def save_grid(path, series):
    with open(path, "wb") as fh:
        fh.write(grid_to_bytes(series))


def grid_from_bytes(buf, schema=None):
    """Parse a grid file; ``schema`` (channel names) is validated if given."""
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise GridFormatError("bad magic", 0)
    if len(buf) < 24:
        raise GridFormatError("truncated header", len(buf))
    version, n_days, n_lat, n_lon, n_ch = struct.unpack_from("<5I", buf, 4)
    if version != VERSION:
        raise GridFormatError(f"unsupported version {version}", 4)
    off = 24
    channels = []
    for _ in range(n_ch):
        if off + 2 > len(buf):
            raise GridFormatError("truncated channel table", off)
        (n,) = struct.unpack_from("<H", buf, off)
        off += 2
        if off + n > len(buf):
            raise GridFormatError("truncated channel name", off)
        try:
            channels.append(buf[off:off + n].decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise GridFormatError("channel name is not utf-8", off) from exc
        off += n
    need = 8 * (n_lat + n_lon) + 4 * n_days
    if off + need > len(buf):
        raise GridFormatError("truncated axis arrays", off)
    lats = np.frombuffer(buf, "<f8", n_lat, off).astype(float)
    off += 8 * n_lat
    lons = np.frombuffer(buf, "<f8", n_lon, off).astype(float)
    off += 8 * n_lon
    days = np.frombuffer(buf, "<i4", n_days, off)
    off += 4 * n_days
    n_vals = n_days * n_ch * n_lat * n_lon
    if len(buf) - off != 8 * n_vals:
        raise GridFormatError(f"expected {8 * n_vals} bytes of data, found {len(buf) - off}", off)
    planes = np.frombuffer(buf, "<f8", n_vals, off).reshape(n_days, n_ch, n_lat, n_lon)
    planes = np.transpose(planes, (0, 2, 3, 1)).astype(float)

    if schema is not None:
        unknown = [c for c in channels if c not in schema]
        if unknown:
            raise UnknownChannelError(f"channels not in configured schema: {unknown}")
    mask = (planes != SENTINEL).astype(float)
    values = np.where(mask > 0, planes, 0.0)
    dates = [EPOCH + _dt.timedelta(days=int(d)) for d in days]
    series = GridSeries(lons, lats, channels, dates, values, mask)
    if series.gaps:
        log.warning("grid has %d date gap(s); first at %s", len(series.gaps), series.gaps[0][0])
    return series


def load_grid(path, schema=None):
    with open(path, "rb") as fh:
        return grid_from_bytes(fh.read(), schema)
