"""Pixel L1 plus a feature-space L1 under a frozen random conv stack."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError
from ..numerics import ops
from ..numerics.layers import Conv2d, Module
from ..numerics.tensor import Tensor, as_tensor

PERCEPTUAL_SEED = 19
PERCEPTUAL_WEIGHT = 1e-3


class PerceptualStack(Module):
    """conv(3->16,s2) -> lrelu -> conv(16->32,s2) -> lrelu -> conv(32->64,s2), never trained."""

    def __init__(self, dtype=np.float32, seed: int = PERCEPTUAL_SEED):
        self.conv1 = Conv2d("perceptual.conv1", 3, 16, stride=2, seed=seed, dtype=dtype, trainable=False)
        self.conv2 = Conv2d("perceptual.conv2", 16, 32, stride=2, seed=seed, dtype=dtype, trainable=False)
        self.conv3 = Conv2d("perceptual.conv3", 32, 64, stride=2, seed=seed, dtype=dtype, trainable=False)

    def __call__(self, x: Tensor) -> Tensor:
        h = ops.leaky_relu(self.conv1(x))
        h = ops.leaky_relu(self.conv2(h))
        return self.conv3(h)


_STACKS: dict = {}


def perceptual_stack(dtype=np.float32) -> PerceptualStack:
    key = np.dtype(dtype).str
    if key not in _STACKS:
        _STACKS[key] = PerceptualStack(dtype)
    return _STACKS[key]


def loss(pred: Tensor, target, perceptual_weight: float = PERCEPTUAL_WEIGHT) -> Tensor:
    """mean |pred - target| + w * mean |phi(pred) - phi(target)| for N x 3 x H x W images."""
    pred = as_tensor(pred)
    target = as_tensor(target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise ConfigurationError(f"loss shape mismatch: {pred.shape} vs {target.shape}")
    if not (np.isfinite(pred.data).all() and np.isfinite(target.data).all()):
        raise ValueError("loss inputs must be finite")
    pixel = ops.mean_abs_diff(pred, target)
    if perceptual_weight == 0:
        return pixel
    phi = perceptual_stack(pred.dtype)
    feat = ops.mean_abs_diff(phi(pred), phi(Tensor(target.data)))
    return ops.add(pixel, ops.scale(feat, perceptual_weight))
