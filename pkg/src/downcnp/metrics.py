"""Station-level evaluation metrics and PIT summaries.

Any metric whose denominator is empty (no wet days, constant series, ...)
returns ``None`` rather than NaN.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .config import WET_THRESHOLD

HEAVY_THRESHOLD = 10.0
PIT_BINS = 20

TMAX_METRICS = ("mae", "mean_bias", "spearman", "p98_bias")
PRECIP_METRICS = ("mae", "mean_bias", "spearman", "r01", "sdii_pred", "sdii_obs", "p98_bias", "r10")


@dataclass
class SiteSeries:
    dates: list
    observed: np.ndarray
    predicted: np.ndarray
    variable: str = "tmax"
    station_id: str = ""

    def __post_init__(self):
        self.observed = np.asarray(self.observed, dtype=float)
        self.predicted = np.asarray(self.predicted, dtype=float)
        if not (len(self.dates) == self.observed.size == self.predicted.size):
            raise ValueError("dates, observed and predicted must have equal lengths")
        if any(b <= a for a, b in zip(self.dates[:-1], self.dates[1:])):
            raise ValueError("dates must be strictly increasing")
        if self.variable == "precip" and (np.any(self.observed < 0) or np.any(self.predicted < 0)):
            raise ValueError("precipitation values must be non-negative")

    def __len__(self):
        return self.observed.size


def _nonempty(s):
    if len(s) == 0:
        raise ValueError("metric needs a non-empty series")


def mae(s):
    _nonempty(s)
    return float(np.mean(np.abs(s.observed - s.predicted)))


def mean_bias(s):
    _nonempty(s)
    return float(np.mean(s.predicted) - np.mean(s.observed))


def spearman(s):
    """Pearson correlation of average ranks; ``None`` for short or constant series."""
    if len(s) < 3 or np.ptp(s.observed) == 0 or np.ptp(s.predicted) == 0:
        return None
    ro = stats.rankdata(s.observed)
    rp = stats.rankdata(s.predicted)
    return float(np.corrcoef(ro, rp)[0, 1])


def _ratio(num, den):
    return None if den == 0 else num / den


def r01(s, threshold=WET_THRESHOLD):
    return _ratio(int(np.sum(s.predicted > threshold)), int(np.sum(s.observed > threshold)))


def sdii(s, threshold=WET_THRESHOLD):
    """Mean wet-day amount as ``(predicted, observed)``; either may be ``None``."""
    def wet_mean(x):
        wet = x[x > threshold]
        return float(wet.mean()) if wet.size else None
    return wet_mean(s.predicted), wet_mean(s.observed)


def quantile(x, q):
    """Empirical quantile interpolating linearly between order statistics."""
    return float(np.quantile(np.asarray(x, dtype=float), q, method="linear"))


def p98_bias(s, wet_only=None, threshold=WET_THRESHOLD):
    """``Q98(pred) - Q98(obs)``.

    For precipitation each quantile is taken over that series' own wet
    days unless ``wet_only`` is False.
    """
    if wet_only is None:
        wet_only = s.variable == "precip"
    pred, obs = s.predicted, s.observed
    if wet_only:
        pred, obs = pred[pred > threshold], obs[obs > threshold]
    if pred.size == 0 or obs.size == 0:
        return None
    return quantile(pred, 0.98) - quantile(obs, 0.98)


def r10(s, threshold=HEAVY_THRESHOLD):
    return _ratio(int(np.sum(s.predicted > threshold)), int(np.sum(s.observed > threshold)))


def evaluate(s, threshold=WET_THRESHOLD, p98_wet_only=None):
    """All metrics applicable to the series' variable, keyed by name."""
    out = {"mae": mae(s), "mean_bias": mean_bias(s), "spearman": spearman(s)}
    if s.variable == "precip":
        out["r01"] = r01(s, threshold)
        out["sdii_pred"], out["sdii_obs"] = sdii(s, threshold)
    out["p98_bias"] = p98_bias(s, p98_wet_only, threshold)
    if s.variable == "precip":
        out["r10"] = r10(s)
    return out


@dataclass
class PitSummary:
    counts: np.ndarray
    edges: np.ndarray
    ks: float
    n: int


def pit_summary(pits, n_bins=PIT_BINS):
    """Histogram on [0, 1] plus the Kolmogorov-Smirnov distance to uniform."""
    pits = np.asarray(pits, dtype=float)
    if pits.size == 0:
        raise ValueError("no PIT values")
    counts, edges = np.histogram(pits, bins=n_bins, range=(0.0, 1.0))
    ks = stats.kstest(pits, "uniform").statistic
    return PitSummary(counts, edges, float(ks), pits.size)


@dataclass
class MetricReport:
    """Per-station metric values; ``None`` marks a missing value."""

    metrics: tuple
    rows: dict = field(default_factory=dict)

    @property
    def station_ids(self):
        return list(self.rows)

    def values(self, metric):
        return [r[metric] for r in self.rows.values() if r.get(metric) is not None]

    def quartiles(self):
        out = {}
        for m in self.metrics:
            v = self.values(m)
            if v:
                q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75], method="linear")
                out[m] = {"n": len(v), "q1": float(q1), "median": float(med), "q3": float(q3)}
            else:
                out[m] = {"n": 0, "q1": None, "median": None, "q3": None}
        return out

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("station_id", "metric", "value"))
            for sid, row in self.rows.items():
                for m in self.metrics:
                    v = row.get(m)
                    w.writerow((sid, m, "" if v is None else repr(float(v))))

    def summary(self):
        return {"n_stations": len(self.rows), "quartiles": self.quartiles()}

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def read_csv(cls, path):
        rows, metrics = {}, []
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                if rec["metric"] not in metrics:
                    metrics.append(rec["metric"])
                rows.setdefault(rec["station_id"], {})[rec["metric"]] = (
                    None if rec["value"] == "" else float(rec["value"]))
        return cls(tuple(metrics), rows)


def build_report(series, variable, missing_ids=(), threshold=WET_THRESHOLD, p98_wet_only=None):
    """Evaluate each :class:`SiteSeries`; ``missing_ids`` get all-missing rows."""
    names = PRECIP_METRICS if variable == "precip" else TMAX_METRICS
    report = MetricReport(names)
    for s in series:
        report.rows[s.station_id] = (evaluate(s, threshold, p98_wet_only) if len(s)
                                     else dict.fromkeys(names))
    for sid in missing_ids:
        report.rows[sid] = dict.fromkeys(names)
    return report
