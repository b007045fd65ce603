"""Acceptance suite: one marker per criterion; conftest prints the PASS/FAIL table."""

import json
import time
import zlib
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate, stats

from downcnp import diffcore as dc
from downcnp import distributions as D
from downcnp.baseline import GPHyper, gp_fit, gp_predict, run_baseline, tps_eval, tps_fit
from downcnp.baseline.spline import scale_points
from downcnp.cli import main
from downcnp.config import SynthConfig
from downcnp.convcnp import ConvCNP
from downcnp.data import Dataset, load_dataset, make_block_folds, make_folds, read_split, synth_generate
from downcnp.diffcore.gradcheck import check_gradients
from downcnp.grid import PredictorGrid, TargetSite
from downcnp.metrics import mae, r01, spearman
from downcnp.trainer import TrainConfig, run_fold, series_from_folds

from helpers import perturbed_model, random_problem, tiny_config
from oracles import conv2d_loop, gp_dense, lgamma_lanczos, readout_loop, tps_dense

GRAD_TOL = 1e-5


def criterion(n, title):
    return pytest.mark.criterion(n, title)


def param(rng, *shape, name="p", low=None):
    x = rng.standard_normal(shape) if low is None else rng.uniform(low, low + 2.0, shape)
    return dc.Parameter(x, name=name)


# -- 1: gradients --------------------------------------------------------------

def primitive_losses(rng):
    """(label, loss closure, parameters) for every differentiable primitive."""
    out = []
    for name, fn, low in [("exp", dc.exp, None), ("log", dc.log, 0.5), ("softplus", dc.softplus, None),
                          ("sigmoid", dc.sigmoid, None), ("lgamma", dc.lgamma, 0.5)]:
        p, w = param(rng, 3, 2, name=name, low=low), rng.standard_normal((3, 2))
        out.append((name, lambda fn=fn, p=p, w=w: (fn(p) * w).sum(), [p]))
    r = dc.Parameter(np.where(rng.random(6) < 0.5, -1, 1) * rng.uniform(0.2, 1.0, 6), name="relu")
    out.append(("relu", lambda: (dc.relu(r) * np.arange(1.0, 7.0)).sum(), [r]))
    a, b = param(rng, 2, 3, name="a"), param(rng, 2, 3, name="b", low=0.5)
    c = param(rng, 3, 2, name="c")
    out.append(("arithmetic", lambda: ((-(a - b) * a / b + b ** 2.0 + 1.0) @ c).mean(), [a, b, c]))
    x, y = param(rng, 4, 3, name="x"), param(rng, 4, 2, name="y")
    out.append(("concat/take/reshape/index", lambda: (dc.take(dc.concat([x, y], axis=-1), np.array([0, 2, 2]), 0)
                                                      [:, 1:].reshape((3, 4)) ** 2.0).sum() + x[1].sum(), [x, y]))
    n, d = param(rng, 5, name="num"), param(rng, 5, name="den", low=0.5)
    out.append(("safe_div", lambda: dc.safe_div(n * n, d).sum(), [n, d]))
    for mode in dc.PADDING_MODES:
        g = param(rng, 2, 5, 6, 2, name="x")
        k, dk = param(rng, 3, 3, 2, 3, name="k"), param(rng, 3, 5, 3, name="dk")
        pk, bias = param(rng, 3, 2, name="pk"), param(rng, 2, name="bias")
        w = rng.standard_normal((2, 5, 6, 2))

        def conv_loss(g=g, k=k, dk=dk, pk=pk, bias=bias, w=w, mode=mode):
            h = dc.conv2d(g, k, mode)
            h = dc.depthwise_separable_conv(h, dk, pk, mode, bias)
            h = dc.depthwise_conv2d(h, np.ones((3, 3, 1)) * 0.1 + 0.0, mode)
            return (dc.pad2d(h, 1, 2, mode)[:, 1:-1, 2:-2] * w).sum()

        out.append((f"conv family ({mode})", conv_loss, [g, k, dk, pk, bias]))
    x2, W, bb = param(rng, 5, 4, name="x"), param(rng, 4, 3, name="W"), param(rng, 3, name="b")
    P = param(rng, 3, 2, name="P")
    out.append(("dense/pointwise", lambda: (dc.dense(x2, W, bb) @ P).sum()
                + (dc.pointwise(x2.reshape((5, 1, 4)), W, bb) ** 2.0).sum(), [x2, W, bb, P]))
    for head, width in (("gaussian", 2), ("bernoulli_gamma", 3)):
        pre = param(rng, 6, width, name=f"{head} nll")
        yy, wet = np.abs(rng.normal(2, 1, 6)) + 0.1, np.array([1, 0, 1, 1, 0, 1], bool)
        w_arg = wet if head == "bernoulli_gamma" else None
        out.append((f"{head} nll", lambda head=head, pre=pre, yy=yy, w_arg=w_arg:
                    D.nll_tensor(head, D.link(head, pre), yy, w_arg).sum(), [pre]))
    return out


@criterion(1, "gradient suite (primitives and end-to-end NLL, both heads)")
def test_criterion_1_gradients():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = {}
    for label, loss, params in primitive_losses(rng):
        worst[label] = max(check_gradients(loss, params).values())
    for head in ("gaussian", "bernoulli_gamma"):
        m = perturbed_model(tiny_config(head=head), seed=21)
        values, mask, batch = random_problem(np.random.default_rng(22), 6, 6, 2, 3, head=head)
        worst[f"end-to-end {head}"] = max(check_gradients(lambda: m.batch_nll(values, mask, batch),
                                                          m.parameters()).values())
    elapsed = time.perf_counter() - t0
    print("max relative errors:", {k: f"{v:.1e}" for k, v in worst.items()}, f"in {elapsed:.1f}s")
    assert all(v < GRAD_TOL for v in worst.values()), worst
    assert elapsed < 120


# -- 2: equivariance -----------------------------------------------------------

@criterion(2, "cyclic shift equivariance over 20 random shifts")
def test_criterion_2_equivariance():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    errs = []
    for k in range(20):
        head = ("gaussian", "bernoulli_gamma")[k % 2]
        m = perturbed_model(tiny_config(head=head, padding_mode="circular"), seed=k)
        lons, lats = 0.5 * np.arange(7), 40 + 0.5 * np.arange(6)
        g = PredictorGrid(lons, lats, ("C0", "C1"), rng.standard_normal((6, 7, 2)))
        site = TargetSite(float(rng.uniform(0, 3)), float(40 + rng.uniform(0, 2.5)), 900.0, -60.0, 0.4)
        di, dj = int(rng.integers(1, 6)), int(rng.integers(1, 7))
        shifted = PredictorGrid(lons, lats, g.channels, np.roll(g.values, (di, dj), axis=(0, 1)))
        moved = TargetSite(site.lon + dj * g.dlon, site.lat + di * g.dlat, *site.topo)
        a = m.forward(g, [site]).as_columns()
        b = m.forward(shifted, [moved]).as_columns()
        errs.append(float(np.max(np.abs(a - b))))
    elapsed = time.perf_counter() - t0
    print(f"max equivariance error {max(errs):.2e} in {elapsed:.1f}s")
    assert max(errs) < 1e-9 and elapsed < 60


# -- 3: oracles ----------------------------------------------------------------

def random_points(rng, n):
    return np.column_stack([rng.uniform(0, 15, n), rng.uniform(40, 55, n), rng.uniform(0, 2000, n)])


@criterion(3, "oracle equivalence on >= 50 instances per operation")
def test_criterion_3_oracles():
    rng = np.random.default_rng(3)
    worst = dict.fromkeys(["conv2d", "readout", "gaussian nll", "bg nll", "gamma cdf", "gp", "tps"], 0.0)
    m = ConvCNP(tiny_config(), seed=0)
    for i in range(50):
        mode = dc.PADDING_MODES[i % len(dc.PADDING_MODES)]
        x, k = rng.standard_normal((5, 6, 2)), rng.standard_normal((3, 3, 2, 3))
        worst["conv2d"] = max(worst["conv2d"], np.max(np.abs(dc.conv2d(x, k, mode).data - conv2d_loop(x, k, mode))))

        m.params["readout.log_lengthscale"].data = np.log(rng.uniform(0.3, 3.0, 2))
        pg, fi, fj = rng.standard_normal((1, 6, 6, 2)), rng.uniform(0, 5, 1), rng.uniform(0, 5, 1)
        got = m.readout(dc.Tensor(pg), [0], fi, fj).data[0]
        ref = readout_loop(pg[0], fi[0], fj[0], *m.lengthscales)
        worst["readout"] = max(worst["readout"], np.max(np.abs(got - ref) / np.maximum(1, np.abs(ref))))

        mu, sigma, y = rng.normal(0, 5), rng.uniform(0.2, 5), rng.normal(0, 5)
        ref = 0.5 * np.log(2 * np.pi) + np.log(sigma) + (y - mu) ** 2 / (2 * sigma ** 2)
        err = abs(float(D.gaussian_nll(D.GaussianParams(np.array(mu), np.array(sigma)), y)) - ref)
        worst["gaussian nll"] = max(worst["gaussian nll"], err)

        rho, a, b, y = rng.uniform(0.05, 0.95), rng.uniform(0.2, 8), rng.uniform(0.2, 10), rng.uniform(0.01, 40)
        ref = -np.log(rho) - ((a - 1) * np.log(y) - y / b - a * np.log(b) - lgamma_lanczos(a))
        p = D.BernoulliGammaParams(np.array(rho), np.array(a), np.array(b))
        worst["bg nll"] = max(worst["bg nll"], abs(float(D.bernoulli_gamma_nll(p, y, True)) - ref))

        a, b = rng.uniform(1.0, 8), rng.uniform(0.2, 6)
        y = rng.uniform(0.05, 4) * a * b
        pdf = lambda t: np.exp((a - 1) * np.log(t) - t / b - a * np.log(b) - lgamma_lanczos(a)) if t > 0 else 0.0
        ref, _ = integrate.quad(pdf, 0, y, epsabs=1e-13, epsrel=1e-13, limit=200)
        worst["gamma cdf"] = max(worst["gamma cdf"], abs(float(D.gamma_cdf(y, a, b)) - ref))

        P, vals, Q = random_points(rng, 15), rng.normal(size=15), random_points(rng, 4)
        hyper = GPHyper((rng.uniform(1, 4), rng.uniform(1, 4), rng.uniform(200, 800)),
                        rng.uniform(0.5, 2), rng.uniform(1e-3, 1e-1))
        mean, var = gp_predict(gp_fit(P, vals, hyper), Q)
        rm, rv = gp_dense(scale_points(P), vals, scale_points(Q), hyper.scaled_lengthscales(),
                          hyper.signal_var, hyper.noise_var)
        worst["gp"] = max(worst["gp"], np.max(np.abs(mean - rm)), np.max(np.abs(var - rv)))

        n = int(rng.integers(5, 15))
        P, vals, Q = random_points(rng, n), rng.normal(size=n), random_points(rng, 3)
        ref = tps_dense(scale_points(P), vals, scale_points(Q))
        got = tps_eval(tps_fit(P, vals), Q)
        worst["tps"] = max(worst["tps"], np.max(np.abs(got - ref) / np.maximum(1, np.abs(ref))))
    tol = {"conv2d": 1e-12, "readout": 1e-10, "gaussian nll": 1e-12, "bg nll": 1e-10,
           "gamma cdf": 1e-8, "gp": 1e-8, "tps": 1e-8}
    print("worst deviations:", {k: f"{v:.1e}" for k, v in worst.items()})
    assert all(worst[k] < tol[k] for k in tol), worst


# -- 4: calibration ---------------------------------------------------------------

@criterion(4, "self-sample PIT is uniform (KS < 0.02) for both heads")
def test_criterion_4_calibration():
    rng = np.random.default_rng(4)
    n = 10 ** 4
    g = D.GaussianParams(rng.normal(0, 5, n), rng.uniform(0.5, 3, n))
    ks_g = stats.kstest(D.pit(g, D.sample(g, rng)), "uniform").statistic
    # wet-day PIT: the continuous part of the mixture, evaluated on wet self-samples
    m = 3 * n
    bg = D.BernoulliGammaParams(rng.uniform(0.2, 0.9, m), rng.uniform(0.5, 5, m), rng.uniform(0.5, 5, m))
    draws = D.sample(bg, rng)
    wet = np.flatnonzero(draws > 0)[:n]
    assert wet.size == n
    u = D.gamma_cdf(draws[wet], bg.alpha[wet], bg.beta[wet])
    ks_bg = stats.kstest(u, "uniform").statistic
    print(f"KS gaussian {ks_g:.4f}, bernoulli-gamma {ks_bg:.4f}")
    assert ks_g < 0.02 and ks_bg < 0.02


# -- 5 to 7: synthetic end-to-end ---------------------------------------------------

MODEL = dict(hidden_channels=32, n_resnet_blocks=4)


def train_cfg(arm):
    return TrainConfig(epochs=20, batches_per_epoch=10, patience=5, topo_mode=arm, seed=1)


@pytest.fixture(scope="module")
def synthetic():
    world = synth_generate(SynthConfig())
    fold = make_block_folds(len(world.grids.dates), 5)[-1]
    return world, fold


def held_out_run(synthetic, var, arm):
    world, fold = synthetic
    ds = Dataset(world.grids, world.stations[var], var)
    train_idx, held_idx = ds.station_subset(world.train_ids), ds.station_subset(world.heldout)
    t0 = time.perf_counter()
    res = run_fold(ds, fold, train_cfg(arm), MODEL, train_idx, held_idx)
    return ds, res, held_idx, time.perf_counter() - t0


@pytest.fixture(scope="module")
def tmax_runs(synthetic):
    return {arm: held_out_run(synthetic, "tmax", arm) for arm in ("all", "none")}


@pytest.fixture(scope="module")
def precip_run(synthetic):
    return held_out_run(synthetic, "precip", "all")


@criterion(5, "temperature: topo=all beats climatology and topo=none by >= 0.5 C")
def test_criterion_5_temperature(synthetic, tmax_runs):
    world, fold = synthetic
    ds, res, held, secs = tmax_runs["all"]
    _, res_none, _, secs_none = tmax_runs["none"]
    model_mae = np.mean([mae(s) for s in series_from_folds([res], "tmax")])
    none_mae = np.mean([mae(s) for s in series_from_folds([res_none], "tmax")])
    train_days, test_days = fold.day_indices()
    clim = []
    for k in held:
        o_train, o_test = ds.obs[train_days, k], ds.obs[test_days, k]
        o_test = o_test[np.isfinite(o_test)]
        clim.append(np.mean(np.abs(o_test - np.nanmean(o_train))))
    clim_mae = float(np.mean(clim))
    print(f"held-out MAE: all {model_mae:.3f}, none {none_mae:.3f}, climatology {clim_mae:.3f} "
          f"({secs + secs_none:.0f}s)")
    assert model_mae <= clim_mae - 0.5
    assert model_mae <= none_mae - 0.5
    assert secs + secs_none < 15 * 60


@criterion(6, "precipitation: held-out Spearman > 0.3 and R01 in [0.7, 1.3]")
def test_criterion_6_precipitation(precip_run):
    ds, res, held, secs = precip_run
    series = series_from_folds([res], "precip")
    rho = np.mean([v for v in map(spearman, series) if v is not None])
    ratio = np.mean([v for v in map(r01, series) if v is not None])
    print(f"held-out mean Spearman {rho:.3f}, mean R01 {ratio:.3f} ({secs:.0f}s)")
    assert rho > 0.3 and 0.7 <= ratio <= 1.3
    assert secs < 20 * 60


@criterion(7, "GP baseline runs end to end and loses to the convCNP on precipitation MAE")
def test_criterion_7_baseline(synthetic, precip_run):
    world, fold = synthetic
    ds, res, held, _ = precip_run
    train_days, test_days = fold.day_indices()
    train_idx = ds.station_subset(world.train_ids)
    pred = run_baseline(ds, train_days, test_days, train_idx, [ds.stations[k] for k in held])
    assert pred.shape == (len(held), len(test_days)) and np.all(pred >= 0)
    base = []
    for row, k in zip(pred, held):
        obs = ds.obs[test_days, k]
        ok = np.isfinite(obs)
        base.append(np.mean(np.abs(row[ok] - obs[ok])))
    base_mae = float(np.mean(base))
    model_mae = float(np.mean([mae(s) for s in series_from_folds([res], "precip")]))
    print(f"held-out precipitation MAE: convCNP {model_mae:.3f}, baseline {base_mae:.3f}")
    assert model_mae < base_mae


# -- 8: protocol -----------------------------------------------------------------

@criterion(8, "protocol: six-year folds over 1979-2008 and default hyperparameters")
def test_criterion_8_protocol():
    folds = make_folds(range(1979, 2009))
    expected = [tuple(range(1979 + 6 * k, 1985 + 6 * k)) for k in range(5)]
    assert [f.test_years for f in folds] == expected
    for f, test in zip(folds, expected):
        assert tuple(f.train_years) == tuple(y for y in range(1979, 2009) if y not in test)
    c = TrainConfig()
    assert (c.lr, c.epochs, c.batches_per_epoch, c.days_per_batch, c.patience) == (5e-4, 100, 456, 16, 10)


# -- 9: determinism -------------------------------------------------------------------

def full_run(root, monkeypatch):
    """synth, train, predict and evaluate, with the same relative paths on every run."""
    root.mkdir()
    monkeypatch.chdir(root)
    Path("config.json").write_text(json.dumps({
        "data_dir": "data", "variable": "precip",
        "synth": {"seed": 3, "n_days": 60, "n_lat": 8, "n_lon": 8, "n_stations": 12, "n_heldout": 3},
        "model": {"hidden_channels": 8, "n_resnet_blocks": 1},
        "train": {"epochs": 3, "batches_per_epoch": 3, "days_per_batch": 8, "patience": 3}}))
    assert main(["synth", "--config", "config.json"]) == 0
    assert main(["train", "--config", "config.json", "--out", "run"]) == 0
    ds = load_dataset("data", "precip")
    held = set(read_split("data")["heldout"])
    lines = ["id,lon,lat,elev,elev_diff,mtpi"] + [
        f"{s.id},{s.lon!r},{s.lat!r},{s.elevation!r},{s.elev_diff!r},{s.mtpi!r}"
        for s in ds.stations if s.id in held]
    Path("sites.csv").write_text("\n".join(lines) + "\n")
    assert main(["predict", "--checkpoint", "run/checkpoint", "--sites", "sites.csv",
                 "--dates", f"{ds.dates[0].isoformat()}:{ds.dates[-1].isoformat()}", "--samples", "2",
                 "--out", "run/predictions.csv"]) == 0
    assert main(["evaluate", "--config", "config.json", "--predictions", "run/predictions.csv",
                 "--out", "run/report"]) == 0
    return {str(p.relative_to(root / "run")): p.read_bytes() for p in (root / "run").rglob("*") if p.is_file()}


@criterion(9, "two seeded runs give byte-identical checkpoints, logs and reports")
def test_criterion_9_determinism(tmp_path, monkeypatch):
    a, b = full_run(tmp_path / "a", monkeypatch), full_run(tmp_path / "b", monkeypatch)
    assert {"trainlog.csv", "report/report.csv", "checkpoint/manifest.json"} <= set(a)
    assert sorted(a) == sorted(b)
    differing = [k for k in a if a[k] != b[k]]
    print(f"{len(a)} files compared, {len(differing)} differ; digest {zlib.crc32(b''.join(a[k] for k in sorted(a))):08x}")
    assert not differing
