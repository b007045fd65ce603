"""Predictor grids, station observations, folds, standardisation and a synthetic world."""

from .dataset import Dataset, load_dataset, read_split, save_world
from .folds import BlockFold, FoldSpec, folds_for_dates, make_block_folds, make_folds
from .gridio import (SENTINEL, GridFormatError, GridSeries, UnknownChannelError, grid_from_bytes,
                     grid_to_bytes, load_grid, save_grid)
from .schema import FULL_SCHEMA, encode_time
from .standardize import StandardizationStats, compute_stats, standardize
from .stations import StationRecord, load_stations, read_station_table, save_stations, write_station_table
from .synth import SynthWorld, bilinear, synth_generate

__all__ = [
    "Dataset", "load_dataset", "read_split", "save_world",
    "BlockFold", "FoldSpec", "folds_for_dates", "make_block_folds", "make_folds",
    "SENTINEL", "GridFormatError", "GridSeries", "UnknownChannelError", "grid_from_bytes",
    "grid_to_bytes", "load_grid", "save_grid",
    "FULL_SCHEMA", "encode_time",
    "StandardizationStats", "compute_stats", "standardize",
    "StationRecord", "load_stations", "read_station_table", "save_stations", "write_station_table",
    "SynthWorld", "bilinear", "synth_generate",
]
