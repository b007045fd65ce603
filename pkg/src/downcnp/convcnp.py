"""Convolutional conditional neural process for off-grid downscaling.

Data flow for one day: the gridded predictors go through a normalised
convolution (data + density channels), then a depthwise-separable ResNet
with a per-cell MLP produces unconstrained distribution parameters on the
grid. An exponentiated-quadratic (EQ) kernel reads those parameters out at
arbitrary sites, and a residual MLP over site topography corrects them.
"""

import json
import os
from collections import OrderedDict
from dataclasses import asdict, dataclass, field

import numpy as np

from . import diffcore as dc
from . import distributions as dist
from .config import HEADS, TOPO_MODES, ConfigError
from .grid import PredictorGrid, TargetSite, fractional_index

# Columns of the topographic vector (elevation, elevation difference, mTPI)
# fed to the correction MLP under each ablation arm.
TOPO_COLUMNS = {"all": (0, 1, 2), "elevation": (0, 1), "mtpi": (2,), "none": ()}
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    head: str = "gaussian"
    channels: tuple = ()
    hidden_channels: int = 128
    n_resnet_blocks: int = 6
    kernel_size: int = 5
    encoder_kernel_size: int = 5
    decoder_mlp: tuple = (64,)
    mlp_layers: tuple = (64, 64)
    topo_mode: str = "all"
    padding_mode: str = "zero"
    normalize_readout: bool = True
    init_lengthscale: float = 2.0  # grid cells

    def __post_init__(self):
        self.channels = tuple(self.channels)
        self.decoder_mlp = tuple(self.decoder_mlp)
        self.mlp_layers = tuple(self.mlp_layers)
        if self.head not in HEADS:
            raise ConfigError(f"unknown head {self.head!r}")
        if self.topo_mode not in TOPO_MODES:
            raise ConfigError(f"unknown topo_mode {self.topo_mode!r}")
        if self.padding_mode not in dc.PADDING_MODES:
            raise ConfigError(f"unknown padding_mode {self.padding_mode!r}")
        if not self.channels:
            raise ConfigError("model needs a non-empty channel schema")
        for k in (self.kernel_size, self.encoder_kernel_size):
            if k % 2 == 0 or k < 1:
                raise ConfigError("kernel sizes must be odd and positive")

    @property
    def n_params(self):
        return dist.N_PARAMS[self.head]

    def to_dict(self):
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def _inverse_softplus(y):
    return y + np.log(-np.expm1(-y))


@dataclass
class SiteBatch:
    """Flattened target points for a batch of days.

    ``day`` indexes the batch axis of the grid tensor; ``fi``/``fj`` are
    fractional (lat, lon) grid indices; ``topo`` is ``[T, 3]``.
    """

    day: np.ndarray
    fi: np.ndarray
    fj: np.ndarray
    topo: np.ndarray
    y: np.ndarray = None
    wet: np.ndarray = None
    meta: list = field(default_factory=list)

    def __len__(self):
        return len(self.day)


class ConvCNP:
    """The downscaling model.

    Parameters live in :attr:`params` under stable dotted names. Output
    scaling (``output_shift``, ``output_scale``) and topography
    standardisation (``topo_mean``, ``topo_std``) are fixed buffers set
    from training statistics before fitting.
    """

    def __init__(self, config, seed=0):
        self.config = config
        self.seed = seed
        self.output_shift = 0.0
        self.output_scale = 1.0
        self.topo_mean = np.zeros(3)
        self.topo_std = np.ones(3)
        self.params = OrderedDict()
        self._init_params(np.random.default_rng(seed))

    # -- parameters -----------------------------------------------------
    def _add(self, name, value):
        self.params[name] = dc.Parameter(np.asarray(value, dtype=float), name=name)

    def _init_params(self, rng):
        cfg = self.config
        c_in = 2 * len(cfg.channels)
        hid = cfg.hidden_channels
        k, ke = cfg.kernel_size, cfg.encoder_kernel_size
        n_p = cfg.n_params

        self._add("encoder.kernel", np.full((ke, ke, 1), _inverse_softplus(1.0 / (ke * ke))))
        self._add("decoder.lift.weight", dc.glorot_uniform(rng, (c_in, hid), c_in, hid))
        self._add("decoder.lift.bias", np.zeros(hid))
        for b in range(cfg.n_resnet_blocks):
            for s in (1, 2):
                pre = f"decoder.block{b}.conv{s}"
                self._add(f"{pre}.depth", dc.glorot_uniform(rng, (k, k, hid), k * k, k * k))
                self._add(f"{pre}.point", dc.glorot_uniform(rng, (hid, hid), hid, hid))
                self._add(f"{pre}.bias", np.zeros(hid))
        # the last decoder layer starts at zero, so an untrained model
        # predicts the training climatology set by the output buffers
        widths = (hid,) + cfg.decoder_mlp + (n_p,)
        last = len(widths) - 2
        for li, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            w = np.zeros((a, b)) if li == last else dc.glorot_uniform(rng, (a, b), a, b)
            self._add(f"decoder.mlp{li}.weight", w)
            self._add(f"decoder.mlp{li}.bias", np.zeros(b))
        self._add("readout.log_lengthscale", np.full(2, np.log(cfg.init_lengthscale)))

        n_topo = len(TOPO_COLUMNS[cfg.topo_mode])
        if n_topo:
            widths = (n_p + n_topo,) + cfg.mlp_layers + (n_p,)
            last = len(widths) - 2
            for li, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
                w = np.zeros((a, b)) if li == last else dc.glorot_uniform(rng, (a, b), a, b)
                self._add(f"topo.mlp{li}.weight", w)
                self._add(f"topo.mlp{li}.bias", np.zeros(b))

    def parameters(self):
        return list(self.params.values())

    def n_parameters(self):
        return int(sum(p.size for p in self.params.values()))

    @property
    def lengthscales(self):
        """Readout lengthscales in grid cells, (lat, lon)."""
        return np.exp(self.params["readout.log_lengthscale"].data)

    # -- model stages ---------------------------------------------------
    def encode(self, values, mask):
        """Normalised convolution: ``[conv(Z*M)/conv(M), conv(M)]`` per channel."""
        values = np.asarray(values, dtype=float)
        mask = np.asarray(mask, dtype=float)
        kernel = dc.softplus(self.params["encoder.kernel"])
        pad = self.config.padding_mode
        num = dc.depthwise_conv2d(values * mask, kernel, pad)
        den = dc.depthwise_conv2d(mask, kernel, pad)
        return dc.concat([dc.safe_div(num, den), den], axis=-1)

    def decode(self, encoded, skip_blocks=False):
        """ResNet decoder; returns pre-activation parameters ``[..., H, W, n_p]``."""
        p = self.params
        pad = self.config.padding_mode
        h = dc.pointwise(encoded, p["decoder.lift.weight"], p["decoder.lift.bias"])
        if not skip_blocks:
            for b in range(self.config.n_resnet_blocks):
                pre = f"decoder.block{b}"
                r = dc.depthwise_separable_conv(h, p[f"{pre}.conv1.depth"], p[f"{pre}.conv1.point"],
                                                pad, p[f"{pre}.conv1.bias"])
                r = dc.relu(r)
                r = dc.depthwise_separable_conv(r, p[f"{pre}.conv2.depth"], p[f"{pre}.conv2.point"],
                                                pad, p[f"{pre}.conv2.bias"])
                h = h + r
        n_layers = len(self.config.decoder_mlp) + 1
        for li in range(n_layers):
            h = dc.pointwise(h, p[f"decoder.mlp{li}.weight"], p[f"decoder.mlp{li}.bias"])
            if li < n_layers - 1:
                h = dc.relu(h)
        return h

    def readout(self, pgrid, day, fi, fj):
        """EQ-kernel translation of gridded parameters to target points.

        ``pgrid`` is ``[B, H, W, n_p]``; returns ``[T, n_p]``. The weights
        are normalised to sum to one unless ``normalize_readout`` is off.
        """
        B, H, W, n_p = pgrid.shape
        fi = np.asarray(fi, dtype=float)
        fj = np.asarray(fj, dtype=float)
        di = fi[:, None] - np.arange(H)[None, :]
        dj = fj[:, None] - np.arange(W)[None, :]
        if self.config.padding_mode == "circular":
            di = np.mod(di + H / 2.0, H) - H / 2.0
            dj = np.mod(dj + W / 2.0, W) - W / 2.0
        inv = dc.exp(self.params["readout.log_lengthscale"] * -2.0) * -0.5  # -1/(2 l^2)
        log_lat = inv[0] * (di * di)
        log_lon = inv[1] * (dj * dj)
        T = len(fi)
        logw = log_lat.reshape(T, H, 1) + log_lon.reshape(T, 1, W)
        if self.config.normalize_readout:
            shift = logw.data.max(axis=(1, 2), keepdims=True)
            w = dc.exp(logw - shift)
        else:
            w = dc.exp(logw)
        h = dc.take(pgrid, np.asarray(day, dtype=int), axis=0)  # [T, H, W, n_p]
        out = (h * w.reshape(T, H, W, 1)).sum(axis=(1, 2))
        if self.config.normalize_readout:
            out = out / w.sum(axis=(1, 2)).reshape(T, 1)
        return out

    def readout_weights(self, fi, fj, H, W):
        """Normalised readout weights ``[T, H, W]`` (numpy, for inspection)."""
        fi, fj = np.atleast_1d(fi), np.atleast_1d(fj)
        probe = dc.Tensor(np.eye(H * W).reshape(H, W, H * W)[None])
        out = self.readout(probe, np.zeros(len(fi), int), fi, fj)
        return out.data.reshape(-1, H, W)

    def topo_features(self, topo):
        cols = TOPO_COLUMNS[self.config.topo_mode]
        topo = np.asarray(topo, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(topo[:, list(cols)])):
            raise ValueError("non-finite topographic inputs")
        return ((topo - self.topo_mean) / self.topo_std)[:, list(cols)]

    def topo_adjust(self, raw, topo):
        """Residual topography correction ``raw + MLP([raw, e])``."""
        if self.config.topo_mode == "none":
            return raw
        p = self.params
        h = dc.concat([raw, dc.Tensor(self.topo_features(topo))], axis=-1)
        n_layers = len(self.config.mlp_layers) + 1
        for li in range(n_layers):
            h = dc.dense(h, p[f"topo.mlp{li}.weight"], p[f"topo.mlp{li}.bias"])
            if li < n_layers - 1:
                h = dc.relu(h)
        return raw + h

    def constrain(self, pre):
        """Link functions plus the fixed output scaling; returns tensors."""
        parts = dist.link(self.config.head, pre)
        if self.config.head == "gaussian":
            mu, sigma = parts
            return mu * self.output_scale + self.output_shift, sigma * self.output_scale
        rho, alpha, beta = parts
        return rho, alpha, beta * self.output_scale

    # -- composite passes -----------------------------------------------
    def predict_pre(self, values, mask, batch):
        """Pre-activation site parameters ``[T, n_p]`` for a batch of days."""
        values = np.asarray(values, dtype=float)
        mask = np.asarray(mask, dtype=float)
        if values.ndim == 3:
            values, mask = values[None], mask[None]
        if values.shape[-1] != len(self.config.channels):
            raise ValueError(f"grid has {values.shape[-1]} channels, model expects "
                             f"{len(self.config.channels)}")
        pgrid = self.decode(self.encode(values, mask))
        raw = self.readout(pgrid, batch.day, batch.fi, batch.fj)
        return self.topo_adjust(raw, batch.topo)

    def predict_parts(self, values, mask, batch):
        return self.constrain(self.predict_pre(values, mask, batch))

    def batch_nll(self, values, mask, batch):
        """Mean NLL over all target points in ``batch`` (a diffcore scalar)."""
        parts = self.predict_parts(values, mask, batch)
        return dist.nll_tensor(self.config.head, parts, batch.y, batch.wet).mean()

    def site_batch(self, grid, sites):
        periodic = self.config.padding_mode == "circular"
        fi, fj = fractional_index(grid.lons, grid.lats, [s.lon for s in sites],
                                  [s.lat for s in sites], periodic=periodic)
        topo = np.array([s.topo for s in sites]).reshape(-1, 3)
        return SiteBatch(day=np.zeros(len(sites), int), fi=np.atleast_1d(fi),
                         fj=np.atleast_1d(fj), topo=topo)

    def forward(self, grid: PredictorGrid, sites):
        """Constrained predictive parameters at ``sites`` for one grid day."""
        if tuple(grid.channels) != self.config.channels:
            raise ValueError("grid channel schema does not match the model")
        batch = self.site_batch(grid, sites)
        cols = np.stack([t.data for t in self.predict_parts(grid.values, grid.mask, batch)], axis=-1)
        return dist.params_from_columns(self.config.head, cols)

    # -- checkpoints ----------------------------------------------------
    def state_dict(self):
        return OrderedDict((k, p.data.copy()) for k, p in self.params.items())

    def load_state_dict(self, state):
        for k, p in self.params.items():
            if state[k].shape != p.shape:
                raise ValueError(f"shape mismatch for {k}")
            p.data = np.array(state[k], dtype=float)
            p.zero_grad()

    def save(self, directory, fold_id=None, extra=None):
        """Write a manifest plus one tensor file per parameter."""
        os.makedirs(os.path.join(directory, "params"), exist_ok=True)
        manifest = {
            "format_version": CHECKPOINT_VERSION,
            "config": self.config.to_dict(),
            "channels": list(self.config.channels),
            "fold_id": fold_id,
            "seed": self.seed,
            "output_shift": self.output_shift,
            "output_scale": self.output_scale,
            "topo_mean": [float(v) for v in self.topo_mean],
            "topo_std": [float(v) for v in self.topo_std],
            "params": list(self.params),
        }
        if extra:
            manifest["extra"] = extra
        with open(os.path.join(directory, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        for name, p in self.params.items():
            dc.save_tensor(os.path.join(directory, "params", name + ".dcnp"), p.data)

    @classmethod
    def load(cls, directory):
        path = os.path.join(directory, "manifest.json")
        with open(path) as fh:
            manifest = json.load(fh)
        if manifest.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version")
        model = cls(ModelConfig(**manifest["config"]), seed=manifest["seed"])
        model.output_shift = manifest["output_shift"]
        model.output_scale = manifest["output_scale"]
        model.topo_mean = np.array(manifest["topo_mean"])
        model.topo_std = np.array(manifest["topo_std"])
        state = {name: dc.load_tensor(os.path.join(directory, "params", name + ".dcnp"))
                 for name in manifest["params"]}
        model.load_state_dict(state)
        model.manifest = manifest
        return model


def sites_from_arrays(lon, lat, topo):
    return [TargetSite(float(a), float(b), *map(float, t)) for a, b, t in zip(lon, lat, topo)]
