"""Cross-validation folds over contiguous blocks of years or days."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FoldSpec:
    """One fold of a year-block partition."""

    fold_id: int
    train_years: tuple
    test_years: tuple

    def day_indices(self, dates):
        years = np.array([d.year for d in dates])
        test = np.isin(years, self.test_years)
        train = np.isin(years, self.train_years)
        return np.flatnonzero(train), np.flatnonzero(test)


@dataclass(frozen=True)
class BlockFold:
    """One fold of a contiguous day-block partition, for short records."""

    fold_id: int
    n_days: int
    test_start: int
    test_stop: int

    def day_indices(self, dates=None):
        idx = np.arange(self.n_days)
        test = (idx >= self.test_start) & (idx < self.test_stop)
        return idx[~test], idx[test]


def make_folds(years, n_folds=5):
    """Split consecutive years into ``n_folds`` equal contiguous test windows.

    With 30 years and 5 folds, fold ``k`` tests years ``[6(k-1), 6k)`` of
    the span and trains on the remaining 24.
    """
    years = sorted(int(y) for y in years)
    if not years or any(b - a != 1 for a, b in zip(years[:-1], years[1:])):
        raise ValueError("years must be a non-empty run of consecutive integers")
    if len(years) % n_folds:
        raise ValueError(f"{len(years)} years do not split into {n_folds} equal folds")
    width = len(years) // n_folds
    folds = []
    for k in range(n_folds):
        test = tuple(years[k * width:(k + 1) * width])
        train = tuple(y for y in years if y not in test)
        folds.append(FoldSpec(k + 1, train, test))
    return folds


def make_block_folds(n_days, n_folds=5):
    """Contiguous day blocks; block sizes differ by at most one day."""
    if n_days < n_folds:
        raise ValueError("need at least one day per fold")
    edges = np.linspace(0, n_days, n_folds + 1).round().astype(int)
    return [BlockFold(k + 1, n_days, int(edges[k]), int(edges[k + 1])) for k in range(n_folds)]


def folds_for_dates(dates, n_folds=5):
    """Year folds when the record spans whole multiples of ``n_folds`` years, else day blocks."""
    years = sorted({d.year for d in dates})
    whole_years = all(sum(1 for d in dates if d.year == y) >= 365 for y in years)
    if whole_years and len(years) % n_folds == 0:
        return make_folds(years, n_folds)
    return make_block_folds(len(dates), n_folds)
