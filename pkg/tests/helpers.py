"""Small shared builders for model-level tests."""

import numpy as np

from downcnp.convcnp import ConvCNP, ModelConfig, SiteBatch


def tiny_config(head="gaussian", n_channels=2, padding_mode="zero", topo_mode="all", **kw):
    base = dict(hidden_channels=4, n_resnet_blocks=1, kernel_size=3, encoder_kernel_size=3,
                decoder_mlp=(4,), mlp_layers=(4,))
    base.update(kw)
    return ModelConfig(head=head, channels=tuple(f"C{i}" for i in range(n_channels)),
                       padding_mode=padding_mode, topo_mode=topo_mode, **base)


def perturbed_model(config, seed=0, scale=0.3):
    """A model with every parameter jittered, so zero-initialised layers carry signal."""
    model = ConvCNP(config, seed=seed)
    rng = np.random.default_rng(seed + 1000)
    for p in model.parameters():
        p.data = p.data + scale * rng.standard_normal(p.shape)
    model.topo_mean = np.array([700.0, 0.0, 0.0])
    model.topo_std = np.array([400.0, 150.0, 1.0])
    return model


def random_problem(rng, H, W, n_channels, n_sites, head="gaussian", n_days=1):
    values = rng.standard_normal((n_days, H, W, n_channels))
    mask = np.ones_like(values)
    day = np.repeat(np.arange(n_days), n_sites)
    T = len(day)
    fi = rng.uniform(0, H - 1, T)
    fj = rng.uniform(0, W - 1, T)
    topo = np.column_stack([rng.uniform(0, 1500, T), rng.uniform(-300, 300, T), rng.normal(0, 1, T)])
    if head == "gaussian":
        y, wet = rng.normal(0, 2, T), None
    else:
        wet = rng.random(T) < 0.6
        y = np.where(wet, rng.gamma(2.0, 2.0, T) + 1.0, 0.0)
    return values, mask, SiteBatch(day=day, fi=fi, fj=fj, topo=topo, y=y, wet=wet)
