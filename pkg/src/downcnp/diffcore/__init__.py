"""Minimal float64 tensor core with reverse-mode differentiation."""

import numpy as np

from .functional import (
    PADDING_MODES,
    conv2d,
    dense,
    depthwise_conv2d,
    depthwise_separable_conv,
    exp,
    lgamma,
    log,
    pad2d,
    pointwise,
    relu,
    safe_div,
    sigmoid,
    softplus,
)
from .optim import Adam, AdamState, adam_step
from .serialize import TensorFormatError, load_tensor, save_tensor, tensor_from_bytes, tensor_to_bytes
from .tensor import (
    DiffcoreError,
    GraphConsumedError,
    NonFiniteError,
    Parameter,
    ShapeError,
    Tensor,
    as_tensor,
    backward,
    concat,
    take,
)


def glorot_uniform(rng, shape, fan_in, fan_out):
    """Uniform draw in +-sqrt(6 / (fan_in + fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


__all__ = [
    "Adam", "AdamState", "DiffcoreError", "GraphConsumedError", "NonFiniteError",
    "PADDING_MODES", "Parameter", "ShapeError", "Tensor", "TensorFormatError",
    "adam_step", "as_tensor", "backward", "concat", "conv2d", "dense",
    "depthwise_conv2d", "depthwise_separable_conv", "exp", "glorot_uniform",
    "lgamma", "load_tensor", "log", "pad2d", "pointwise", "relu", "safe_div",
    "save_tensor", "sigmoid", "softplus", "take", "tensor_from_bytes",
    "tensor_to_bytes",
]
