"""Predictor channel names and the day-of-year encoding."""

import datetime as _dt
import math

SURFACE = ("TMAX", "TMEAN", "U10", "V10", "PR")
LEVELS = (850, 700, 500)
UPPER = tuple(f"{v}{lev}" for v in ("Q", "TA", "UA", "VA") for lev in LEVELS)
INVARIANT = ("ASO", "ANSO", "FSO", "SDO", "Z", "LAT", "LON")
TEMPORAL = ("COS_T", "SIN_T")

# Every channel name a grid file may carry. Order here is not normative;
# the name table in each file decides the channel order at runtime.
FULL_SCHEMA = SURFACE + UPPER + INVARIANT + TEMPORAL

YEAR_LENGTH = 365.25


def day_angle(date):
    return 2.0 * math.pi * (date.timetuple().tm_yday - 1) / YEAR_LENGTH


def encode_time(date):
    """``(cos t, sin t)`` with ``t = 2 pi (day_of_year - 1) / 365.25``."""
    if not isinstance(date, _dt.date):
        raise TypeError(f"expected a date, got {type(date).__name__}")
    t = day_angle(date)
    return math.cos(t), math.sin(t)
