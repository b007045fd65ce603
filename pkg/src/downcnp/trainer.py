"""Training loop, per-fold orchestration and the topography ablation sweep."""

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import diffcore as dc
from . import distributions as dist
from .config import TOPO_MODES, ConfigError, head_for_variable
from .convcnp import ConvCNP, ModelConfig, SiteBatch
from .data.standardize import compute_stats, standardize
from .metrics import SiteSeries, build_report

log = logging.getLogger(__name__)

VAL_FRACTION = 0.1


class TrainingDivergedError(FloatingPointError):
    def __init__(self, epoch, batch, detail=""):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}{': ' + detail if detail else ''}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class TrainConfig:
    lr: float = 5e-4
    epochs: int = 100
    batches_per_epoch: int = 456
    days_per_batch: int = 16
    patience: int = 10
    seed: int = 0
    head: str = None
    topo_mode: str = "all"
    fold_id: int = 1

    def validate(self):
        if self.lr < 0:
            raise ConfigError("lr must be non-negative")
        for name in ("epochs", "batches_per_epoch", "days_per_batch", "patience"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.patience > self.epochs:
            raise ConfigError("patience cannot exceed epochs")
        if self.topo_mode not in TOPO_MODES:
            raise ConfigError(f"unknown topo_mode {self.topo_mode!r}")
        return self

    @classmethod
    def from_dict(cls, d, **overrides):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown keys in train: {sorted(unknown)}")
        merged = {**d, **{k: v for k, v in overrides.items() if v is not None}}
        return cls(**merged).validate()


@dataclass
class TrainLog:
    """Per-epoch losses. Wall time is kept in memory but left out of the CSV
    so that reruns produce identical files."""

    train_nll: list = field(default_factory=list)
    val_nll: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0

    def __len__(self):
        return len(self.train_nll)

    @property
    def best_val(self):
        return min(self.val_nll)

    def to_csv(self, path, include_wall_time=False):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            head = ["epoch", "train_nll", "val_nll", "best"]
            w.writerow(head + (["wall_time"] if include_wall_time else []))
            for k, (tr, va) in enumerate(zip(self.train_nll, self.val_nll), start=1):
                row = [k, repr(tr), repr(va), int(k == self.best_epoch)]
                w.writerow(row + ([f"{self.wall_time[k - 1]:.3f}"] if include_wall_time else []))

    @classmethod
    def read_csv(cls, path):
        out = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                out.train_nll.append(float(row["train_nll"]))
                out.val_nll.append(float(row["val_nll"]))
                if row["best"] == "1":
                    out.best_epoch = int(row["epoch"])
                if "wall_time" in row:
                    out.wall_time.append(float(row["wall_time"]))
        out.stopped_epoch = len(out.train_nll)
        return out


def derive_seed(master, *keys):
    """Independent child seed for a (fold, arm, ...) key."""
    return int(np.random.SeedSequence([int(master), *map(int, keys)]).generate_state(1)[0])


def assemble_batch(dataset, rng, days_per_batch, train_days=None, station_idx=None):
    """Sample days uniformly with replacement; every valid station that day is a target.

    Returns ``(values, mask, batch, day_indices)``.
    """
    pool = np.arange(len(dataset)) if train_days is None else np.asarray(train_days, dtype=int)
    if pool.size == 0:
        raise ValueError("no training days to sample from")
    days = pool[rng.integers(0, pool.size, size=days_per_batch)]
    values, mask, batch = dataset.batch(days, station_idx)
    return values, mask, batch, days


def split_validation(train_days, seed, fraction=VAL_FRACTION):
    """Random day-wise split of training days into (fit, validation), both sorted."""
    train_days = np.asarray(train_days, dtype=int)
    if train_days.size < 2:
        raise ValueError("need at least two training days to hold out a validation set")
    rng = np.random.default_rng(derive_seed(seed, 0x5A11D))
    perm = rng.permutation(train_days)
    n_val = max(1, int(round(fraction * train_days.size)))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def set_training_statistics(model, dataset, train_days, station_idx):
    """Output scaling and topography standardisation from training data only."""
    idx = np.arange(len(dataset.stations)) if station_idx is None else np.asarray(station_idx)
    obs = dataset.obs[np.ix_(np.asarray(train_days), idx)]
    obs = obs[~np.isnan(obs)]
    if obs.size == 0:
        raise ValueError("no training observations")
    if model.config.head == "gaussian":
        model.output_shift = float(obs.mean())
        model.output_scale = float(obs.std()) or 1.0
    else:
        wet = obs[obs > dataset.wet_threshold]
        model.output_shift = 0.0
        model.output_scale = float(wet.mean()) if wet.size else 1.0
    topo = dataset.topo[idx]
    model.topo_mean = topo.mean(axis=0)
    std = topo.std(axis=0)
    model.topo_std = np.where(std > 0, std, 1.0)


def evaluate_nll(model, dataset, days, station_idx=None, chunk=16):
    """Mean per-point NLL over ``days`` (a float)."""
    total, count = 0.0, 0
    for start in range(0, len(days), chunk):
        values, mask, batch = dataset.batch(days[start:start + chunk], station_idx)
        if len(batch) == 0:
            continue
        total += float(model.batch_nll(values, mask, batch).data) * len(batch)
        count += len(batch)
    if count == 0:
        raise ValueError("no observations in the evaluation days")
    return total / count


def train(model, dataset, cfg, train_days=None, station_idx=None):
    """Fit ``model`` by Adam on the mean NLL with early stopping.

    A random 10% of ``train_days`` is held out for validation. Training
    stops once validation NLL has not strictly improved for ``patience``
    epochs and the best parameters are restored.
    """
    cfg.validate()
    expected = head_for_variable(dataset.variable)
    if model.config.head != expected:
        raise ConfigError(f"model head {model.config.head!r} does not suit variable "
                          f"{dataset.variable!r} (expected {expected!r})")
    if train_days is None:
        train_days = np.arange(len(dataset))
    fit_days, val_days = split_validation(train_days, cfg.seed)
    rng = np.random.default_rng(derive_seed(cfg.seed, 0xBA7C4))
    opt = dc.Adam(model.parameters(), lr=cfg.lr)
    tlog = TrainLog()
    best_state, best_val, wait = model.state_dict(), np.inf, 0

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        losses = []
        for b in range(cfg.batches_per_epoch):
            values, mask, batch, _ = assemble_batch(dataset, rng, cfg.days_per_batch, fit_days,
                                                    station_idx)
            if len(batch) == 0:
                continue
            try:
                loss = model.batch_nll(values, mask, batch)
                dc.backward(loss)
                opt.step()
            except dc.NonFiniteError as exc:
                raise TrainingDivergedError(epoch, b, str(exc)) from exc
            if not np.isfinite(loss.data):
                raise TrainingDivergedError(epoch, b)
            losses.append(float(loss.data))
        val = evaluate_nll(model, dataset, val_days, station_idx)
        tlog.train_nll.append(float(np.mean(losses)) if losses else float("nan"))
        tlog.val_nll.append(val)
        tlog.wall_time.append(time.perf_counter() - t0)
        log.info("epoch %d train %.5f val %.5f", epoch, tlog.train_nll[-1], val)
        if val < best_val:
            best_val, best_state, wait = val, model.state_dict(), 0
            tlog.best_epoch = epoch
        else:
            wait += 1
        tlog.stopped_epoch = epoch
        if wait >= cfg.patience:
            break
    model.load_state_dict(best_state)
    return model, tlog


# -- prediction -------------------------------------------------------------

def predict_params(model, dataset, days, station_idx=None, chunk=16):
    """Constrained parameter columns ``[len(days), n_stations, n_p]`` at every station."""
    idx = np.arange(len(dataset.stations)) if station_idx is None else np.asarray(station_idx)
    days = np.asarray(days, dtype=int)
    out = np.zeros((days.size, idx.size, model.config.n_params))
    for start in range(0, days.size, chunk):
        d = days[start:start + chunk]
        b = np.repeat(np.arange(d.size), idx.size)
        st = np.tile(idx, d.size)
        batch = SiteBatch(day=b, fi=dataset.fi[st], fj=dataset.fj[st], topo=dataset.topo[st])
        parts = model.predict_parts(dataset.grids.values[d], dataset.grids.mask[d], batch)
        cols = np.stack([p.data for p in parts], axis=-1)
        out[start:start + d.size] = cols.reshape(d.size, idx.size, -1)
    return out


def det_and_samples(head, cols, rng, det_mode="gated_mean", n_samples=1):
    """DET values and ``n_samples`` draws from parameter columns ``[..., n_p]``."""
    params = dist.params_from_columns(head, cols)
    det = dist.det_value(params, det_mode)
    draws = np.stack([dist.sample(params, rng) for _ in range(n_samples)], axis=-1) \
        if n_samples else np.zeros(det.shape + (0,))
    return det, draws


@dataclass
class FoldResult:
    fold_id: int
    det: dict
    sample: dict
    model: ConvCNP
    log: TrainLog
    stats: object
    test_days: np.ndarray


def build_model(dataset, model_cfg, topo_mode, seed):
    cfg = dict(model_cfg or {})
    cfg.update(head=head_for_variable(dataset.variable), channels=dataset.grids.channels,
               topo_mode=topo_mode)
    return ConvCNP(ModelConfig(**cfg), seed=seed)


def run_fold(dataset, fold, cfg, model_cfg=None, train_station_idx=None, eval_station_idx=None,
             det_mode="gated_mean", sample_seed=None):
    """Train on the fold's training days; DET and S series over its test days.

    Grid standardisation statistics come from the fold's training days.
    """
    train_days, test_days = fold.day_indices(dataset.dates)
    stats = compute_stats(dataset.grids, train_days)
    ds = dataset.with_grids(standardize(dataset.grids, stats))
    model = build_model(ds, model_cfg, cfg.topo_mode, cfg.seed)
    set_training_statistics(model, ds, train_days, train_station_idx)
    model, tlog = train(model, ds, cfg, train_days, train_station_idx)

    eval_idx = np.arange(len(ds.stations)) if eval_station_idx is None else np.asarray(eval_station_idx)
    cols = predict_params(model, ds, test_days, eval_idx)
    rng = np.random.default_rng(derive_seed(cfg.seed if sample_seed is None else sample_seed, 0x5EED))
    det, draws = det_and_samples(model.config.head, cols, rng, det_mode, 1)
    dates = [ds.dates[k] for k in test_days]
    det_series, s_series = {}, {}
    for j, s in enumerate(eval_idx):
        sid = ds.ids[s]
        det_series[sid] = (dates, det[:, j], ds.obs[test_days, s])
        s_series[sid] = (dates, draws[:, j, 0], ds.obs[test_days, s])
    return FoldResult(fold.fold_id, det_series, s_series, model, tlog, stats, test_days)


def map_jobs(fn, jobs, workers=1):
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def series_from_folds(results, variable, kind="det"):
    """Concatenate each station's fold test windows into one :class:`SiteSeries` (missing obs dropped)."""
    merged = {}
    for res in sorted(results, key=lambda r: r.test_days[0] if len(r.test_days) else 0):
        for sid, (dates, pred, obs) in getattr(res, kind).items():
            acc = merged.setdefault(sid, ([], [], []))
            ok = ~np.isnan(obs)
            acc[0].extend(d for d, m in zip(dates, ok) if m)
            acc[1].extend(np.asarray(pred)[ok])
            acc[2].extend(np.asarray(obs)[ok])
    return [SiteSeries(d, o, p, variable, sid) for sid, (d, p, o) in merged.items()]


def run_ablation(dataset, cfg, folds, model_cfg=None, train_station_idx=None, eval_station_idx=None,
                 arms=TOPO_MODES, workers=1, det_mode="gated_mean"):
    """Train one model per topography arm on the same folds and seeds.

    Returns ``{arm: (MetricReport, [FoldResult, ...])}``.
    """
    jobs = [(arm, fold) for arm in arms for fold in folds]

    def job(item):
        arm, fold = item
        c = replace(cfg, topo_mode=arm, fold_id=fold.fold_id,
                    seed=derive_seed(cfg.seed, fold.fold_id))
        return run_fold(dataset, fold, c, model_cfg, train_station_idx, eval_station_idx, det_mode)

    results = map_jobs(job, jobs, workers)
    out = {}
    for arm in arms:
        arm_results = [r for (a, _), r in zip(jobs, results) if a == arm]
        series = series_from_folds(arm_results, dataset.variable)
        out[arm] = (build_report(series, dataset.variable), arm_results)
    return out


def train_config_dict(cfg):
    return asdict(cfg)
