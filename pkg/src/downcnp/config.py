"""Shared constants and JSON run configuration."""

import json
from dataclasses import asdict, dataclass, field, fields

# Wet-day threshold in mm/day shared by training targets and metrics.
WET_THRESHOLD = 1.0

HEADS = ("gaussian", "bernoulli_gamma")
TOPO_MODES = ("all", "elevation", "mtpi", "none")
HEAD_ALIASES = {"gaussian": "gaussian", "bg": "bernoulli_gamma", "bernoulli_gamma": "bernoulli_gamma"}


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


def head_for_variable(variable):
    if variable == "tmax":
        return "gaussian"
    if variable == "precip":
        return "bernoulli_gamma"
    raise ConfigError(f"unknown variable {variable!r}; expected 'tmax' or 'precip'")


def _from_mapping(cls, mapping, where):
    known = {f.name for f in fields(cls)}
    unknown = set(mapping) - known
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    return cls(**mapping)


@dataclass
class SynthConfig:
    seed: int = 0
    n_days: int = 200
    n_lat: int = 16
    n_lon: int = 16
    n_stations: int = 40
    n_heldout: int = 10
    start_date: str = "2000-01-01"
    missing_fraction: float = 0.0

    def validate(self):
        if self.n_stations < 1:
            raise ConfigError("synth.n_stations must be at least 1")
        if not 0 <= self.n_heldout < self.n_stations:
            raise ConfigError("synth.n_heldout must lie in [0, n_stations)")
        if self.n_days < 1 or self.n_lat < 2 or self.n_lon < 2:
            raise ConfigError("synth grid needs n_days >= 1 and at least 2x2 cells")
        if not 0 <= self.missing_fraction < 1:
            raise ConfigError("synth.missing_fraction must lie in [0, 1)")


@dataclass
class RunConfig:
    """Top-level JSON document: data locations plus per-module sections."""

    data_dir: str = "data"
    variable: str = "tmax"
    wet_threshold: float = WET_THRESHOLD
    det_mode: str = "gated_mean"
    n_samples: int = 1
    n_folds: int = 5
    heldout: list = field(default_factory=list)
    synth: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc):
        cfg = _from_mapping(cls, doc, "config")
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(doc)

    def synth_config(self):
        cfg = _from_mapping(SynthConfig, self.synth, "synth")
        cfg.validate()
        return cfg

    def validate(self):
        head_for_variable(self.variable)
        if self.det_mode not in ("gated_mean", "mixture_mean"):
            raise ConfigError(f"det_mode must be gated_mean or mixture_mean, got {self.det_mode!r}")
        if self.wet_threshold < 0:
            raise ConfigError("wet_threshold must be non-negative")
        if self.n_samples < 0:
            raise ConfigError("n_samples must be non-negative")
        if self.n_folds < 1:
            raise ConfigError("n_folds must be positive")

    def to_dict(self):
        return asdict(self)
