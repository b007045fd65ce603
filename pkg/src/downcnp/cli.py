"""Command-line entry point: ``downcnp <command> [options]``.

Exit codes: 0 success, 1 configuration or validation error, 2 numerical
failure at runtime.
"""

import argparse
import contextlib
import csv
import datetime as _dt
import json
import logging
import os
import sys
import zlib

import numpy as np

from .baseline import run_baseline
from .config import HEAD_ALIASES, TOPO_MODES, ConfigError, RunConfig, head_for_variable
from .convcnp import ConvCNP, SiteBatch
from .data import (StandardizationStats, folds_for_dates, load_dataset, load_grid,
                   load_stations, read_split, read_station_table, save_world, standardize,
                   synth_generate)
from .data.dataset import GRID_FILE
from .grid import SiteOutsideGridError, fractional_index
from .metrics import SiteSeries, build_report
from .trainer import TrainConfig, det_and_samples, derive_seed, run_ablation, run_fold

log = logging.getLogger("downcnp")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


# -- shared helpers ---------------------------------------------------------

def _load_config(args):
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if getattr(args, "head", None):
        head = HEAD_ALIASES[args.head]
        if head != head_for_variable(cfg.variable):
            raise ConfigError(f"--head {args.head} does not suit variable {cfg.variable!r}")
    return cfg


def _train_config(cfg, args):
    return TrainConfig.from_dict(cfg.train, seed=getattr(args, "seed", None),
                                 fold_id=getattr(args, "fold", None),
                                 topo_mode=getattr(args, "topo", None),
                                 head=head_for_variable(cfg.variable))


def _split(cfg, dataset):
    """Indices of (training, held-out) stations."""
    held = list(cfg.heldout)
    if not held:
        split = read_split(cfg.data_dir)
        held = split["heldout"] if split else []
    held = [h for h in held if h in dataset.ids]
    train = [k for k, sid in enumerate(dataset.ids) if sid not in set(held)]
    return train, dataset.station_subset(held)


def _fold(cfg, dataset, fold_id):
    folds = folds_for_dates(dataset.dates, cfg.n_folds)
    if not 1 <= fold_id <= len(folds):
        raise ConfigError(f"fold {fold_id} outside 1..{len(folds)}")
    return folds[fold_id - 1]


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(v):
    return repr(float(v))


PRED_FIXED = ("site_id", "date")


def write_predictions(path, rows, n_params, n_samples):
    """Rows are ``(site_id, date, params or None, det or None, samples, error)``."""
    header = list(PRED_FIXED) + [f"param{k + 1}" for k in range(n_params)] + ["det"] + \
        [f"sample_{k + 1}" for k in range(n_samples)] + ["error"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for sid, date, params, det, samples, err in rows:
            if err:
                w.writerow([sid, date] + [""] * (n_params + 1 + n_samples) + [err])
            else:
                w.writerow([sid, date] + [_fmt(v) for v in params] + [_fmt(det)] +
                           [_fmt(v) for v in samples] + [""])


def read_predictions(path, column="det"):
    """``{site_id: (dates, values)}`` from a predictions CSV, skipping error rows."""
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if column not in (reader.fieldnames or []):
            raise ConfigError(f"{path}: no column {column!r}")
        for row in reader:
            if row.get("error"):
                continue
            d, v = out.setdefault(row["site_id"], ([], []))
            d.append(_dt.date.fromisoformat(row["date"]))
            v.append(float(row[column]))
    return out


def _parse_dates(spec, available):
    if not spec:
        return list(available)
    if ":" in spec:
        a, b = (_dt.date.fromisoformat(x) for x in spec.split(":"))
        return [a + _dt.timedelta(days=k) for k in range((b - a).days + 1)]
    return [_dt.date.fromisoformat(x) for x in spec.split(",") if x]


# -- commands ---------------------------------------------------------------

def cmd_synth(args):
    cfg = _load_config(args)
    synth = cfg.synth_config()
    if args.seed is not None:
        synth.seed = args.seed
    out = args.out or cfg.data_dir
    world = synth_generate(synth)
    save_world(out, world)
    print(f"wrote synthetic world ({len(world.grids)} days, {synth.n_stations} stations) to {out}")
    return EXIT_OK


def cmd_train(args):
    cfg = _load_config(args)
    tcfg = _train_config(cfg, args)
    ds = load_dataset(cfg.data_dir, cfg.variable, wet_threshold=cfg.wet_threshold)
    train_idx, _ = _split(cfg, ds)
    fold = _fold(cfg, ds, tcfg.fold_id)
    res = run_fold(ds, fold, tcfg, cfg.model, train_idx, train_idx, cfg.det_mode)
    out = args.out or "run"
    os.makedirs(out, exist_ok=True)
    ckpt = os.path.join(out, "checkpoint")
    # relative to the checkpoint, so the manifest does not depend on where the run happened
    extra = {"standardization": res.stats.to_dict(), "train": tcfg.__dict__,
             "data_dir": os.path.relpath(cfg.data_dir, ckpt), "variable": cfg.variable}
    res.model.save(ckpt, fold_id=fold.fold_id, extra=extra)
    res.log.to_csv(os.path.join(out, "trainlog.csv"))
    summary = {"fold_id": fold.fold_id, "best_epoch": res.log.best_epoch,
               "stopped_epoch": res.log.stopped_epoch, "best_val_nll": res.log.best_val,
               "final_train_nll": res.log.train_nll[-1]}
    _write_json(os.path.join(out, "train_summary.json"), summary)
    print(f"best validation NLL {res.log.best_val:.6f} at epoch {res.log.best_epoch}")
    return EXIT_OK


def _row_seed(seed, site, date):
    key = f"{site.lon!r},{site.lat!r},{site.elevation!r},{site.elev_diff!r},{site.mtpi!r},{date}"
    return derive_seed(seed, zlib.crc32(key.encode()))


def cmd_predict(args):
    model = ConvCNP.load(args.checkpoint)
    extra = model.manifest.get("extra", {})
    data_dir = os.path.join(args.checkpoint, extra.get("data_dir", os.path.relpath(".", args.checkpoint)))
    grid_path = args.grid or os.path.join(data_dir, GRID_FILE)
    if not os.path.exists(grid_path):
        raise FileNotFoundError(f"grid file not found: {grid_path}")
    grids = load_grid(grid_path)
    if "standardization" in extra:
        grids = standardize(grids, StandardizationStats.from_dict(extra["standardization"]))
    sites = read_station_table(args.sites, unique=False)
    dates = _parse_dates(args.dates, grids.dates)
    pos = grids.date_index()
    n_p, k = model.config.n_params, args.samples
    seed = args.seed if args.seed is not None else model.seed

    fi = np.full(len(sites), np.nan)
    fj = np.full(len(sites), np.nan)
    site_err = [""] * len(sites)
    periodic = model.config.padding_mode == "circular"
    for s, site in enumerate(sites):
        try:
            a, b = fractional_index(grids.lons, grids.lats, site.lon, site.lat, periodic=periodic)
            fi[s], fj[s] = float(a), float(b)
        except SiteOutsideGridError as exc:
            site_err[s] = f"outside grid: {exc}"
    ok = [s for s in range(len(sites)) if not site_err[s]]
    topo = np.array([site.topo for site in sites]).reshape(-1, 3)

    rows = []
    for date in dates:
        day = pos.get(date)
        cols = None
        if day is not None and ok:
            batch = SiteBatch(day=np.zeros(len(ok), int), fi=fi[ok], fj=fj[ok], topo=topo[ok])
            parts = model.predict_parts(grids.values[day], grids.mask[day], batch)
            cols = np.stack([p.data for p in parts], axis=-1)
            det, _ = det_and_samples(model.config.head, cols, None, args.det_mode, 0)
            # one generator per (site, date) so duplicated rows draw identical samples
            draws = [det_and_samples(model.config.head, cols[j], np.random.default_rng(
                _row_seed(seed, sites[s], date)), args.det_mode, k)[1] for j, s in enumerate(ok)]
            where = {s: j for j, s in enumerate(ok)}
        for s, site in enumerate(sites):
            if day is None:
                rows.append((site.id, date.isoformat(), None, None, None, "date not in grid"))
            elif site_err[s]:
                rows.append((site.id, date.isoformat(), None, None, None, site_err[s]))
            else:
                j = where[s]
                rows.append((site.id, date.isoformat(), cols[j], det[j], draws[j], ""))
    write_predictions(args.out, rows, n_p, k)
    n_err = sum(1 for r in rows if r[5])
    print(f"wrote {len(rows)} rows to {args.out} ({n_err} flagged)")
    return EXIT_OK


def cmd_baseline(args):
    cfg = _load_config(args)
    ds = load_dataset(cfg.data_dir, cfg.variable, wet_threshold=cfg.wet_threshold)
    train_idx, held_idx = _split(cfg, ds)
    fold_id = args.fold or cfg.train.get("fold_id", 1)
    fold = _fold(cfg, ds, fold_id)
    train_days, test_days = fold.day_indices(ds.dates)
    targets = (read_station_table(args.sites, unique=False) if args.sites
               else [ds.stations[k] for k in held_idx])
    if not targets:
        raise ConfigError("no target sites: give --sites or configure held-out stations")
    pred = run_baseline(ds, train_days, test_days, train_idx, targets)
    rows = []
    for t, series in zip(targets, pred):
        for day, v in zip(test_days, series):
            rows.append((t.id, ds.dates[day].isoformat(), [], v, [], ""))
    out = args.out or "baseline_predictions.csv"
    write_predictions(out, rows, 0, 0)
    print(f"wrote baseline predictions for {len(targets)} sites to {out}")
    return EXIT_OK


def _series_against_obs(preds, data_dir, variable):
    series, missing = [], []
    table = {s.id for s in read_station_table(os.path.join(data_dir, "stations.csv"))}
    for sid, (dates, values) in preds.items():
        if sid not in table:
            missing.append(sid)
            continue
        rec = load_stations(data_dir, variable, [sid])[0]
        obs = rec.series()
        first = {}
        for d, v in zip(dates, values):
            first.setdefault(d, v)  # duplicated rows: keep the first
        pairs = sorted((d, v, obs[d]) for d, v in first.items() if d in obs)
        if not pairs:
            missing.append(sid)
            continue
        d, p, o = zip(*pairs)
        if variable == "precip":
            p = np.maximum(p, 0.0)
        series.append(SiteSeries(list(d), o, p, variable, sid))
    return series, missing


def cmd_evaluate(args):
    cfg = _load_config(args)
    preds = read_predictions(args.predictions, args.column)
    series, missing = _series_against_obs(preds, args.obs or cfg.data_dir, cfg.variable)
    report = build_report(series, cfg.variable, missing, cfg.wet_threshold)
    out = args.out or "report"
    os.makedirs(out, exist_ok=True)
    report.to_csv(os.path.join(out, "report.csv"))
    report.to_json(os.path.join(out, "summary.json"))
    print(f"evaluated {len(series)} stations ({len(missing)} missing) into {out}")
    return EXIT_OK


def cmd_ablate(args):
    cfg = _load_config(args)
    tcfg = _train_config(cfg, args)
    ds = load_dataset(cfg.data_dir, cfg.variable, wet_threshold=cfg.wet_threshold)
    train_idx, held_idx = _split(cfg, ds)
    eval_idx = held_idx or train_idx
    folds = folds_for_dates(ds.dates, cfg.n_folds) if args.all_folds else [_fold(cfg, ds, tcfg.fold_id)]
    arms = run_ablation(ds, tcfg, folds, cfg.model, train_idx, eval_idx, TOPO_MODES,
                        workers=args.workers, det_mode=cfg.det_mode)
    out = args.out or "ablation"
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "ablation.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("arm", "station_id", "metric", "value"))
        for arm, (report, _) in arms.items():
            for sid, row in report.rows.items():
                for m in report.metrics:
                    v = row.get(m)
                    w.writerow((arm, sid, m, "" if v is None else repr(float(v))))
    _write_json(os.path.join(out, "ablation.json"),
                {arm: report.summary() for arm, (report, _) in arms.items()})
    for arm, (report, _) in arms.items():
        med = report.quartiles()["mae"]["median"]
        print(f"{arm:10s} median MAE {med:.4f}")
    return EXIT_OK


# -- argument parsing -----------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="downcnp", description="convCNP statistical downscaling")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, fold=True, topo=True):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--seed", type=int, help="override the master seed")
        sp.add_argument("--head", choices=("gaussian", "bg"), help="assert the distribution head")
        sp.add_argument("--out", help="output directory or file")
        if fold:
            sp.add_argument("--fold", type=int, help="fold id (1-based)")
        if topo:
            sp.add_argument("--topo", choices=TOPO_MODES, help="topography arm")

    sp = sub.add_parser("synth", help="write a synthetic dataset")
    common(sp, fold=False, topo=False)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="train one fold and save a checkpoint")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("predict", help="predict at arbitrary sites from a checkpoint")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--sites", required=True, help="CSV with id,lon,lat,elev,elev_diff,mtpi")
    sp.add_argument("--dates", help="YYYY-MM-DD list (comma separated) or START:END range")
    sp.add_argument("--grid", help="grid file (defaults to the training data)")
    sp.add_argument("--samples", type=int, default=1, help="stochastic samples per row")
    sp.add_argument("--det-mode", default="gated_mean", choices=("gated_mean", "mixture_mean"))
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("baseline", help="regression + interpolation baseline at held-out sites")
    common(sp, topo=False)
    sp.add_argument("--sites", help="target sites CSV (default: held-out stations)")
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("evaluate", help="metric report for a predictions CSV")
    common(sp, fold=False, topo=False)
    sp.add_argument("--predictions", required=True)
    sp.add_argument("--obs", help="dataset directory with observations (default: config data_dir)")
    sp.add_argument("--column", default="det", help="prediction column to score, e.g. sample_1")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("ablate", help="train all four topography arms and report metrics")
    common(sp, topo=False)
    sp.add_argument("--all-folds", action="store_true", help="run every fold, not just --fold")
    sp.add_argument("--workers", type=int, default=1, help="arms/folds trained concurrently")
    sp.set_defaults(func=cmd_ablate)
    return p


@contextlib.contextmanager
def _thread_limit():
    n = os.environ.get("DCNP_THREADS")
    if not n:
        yield
        return
    from threadpoolctl import threadpool_limits
    with threadpool_limits(limits=int(n)):
        yield


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit():
            return args.func(args)
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
