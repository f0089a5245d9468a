"""Feature encoders, the iterative 1/8-resolution flow network, and 2D warping."""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .numerics import ops
from .numerics.layers import Conv2d, Module
from .numerics.tensor import Tensor, as_tensor

FEATURES = 64
FLOW_ITERATIONS = 3
FLOW_STRIDE = 8


class Encoder(Module):
    """conv(3->32) -> lrelu -> conv(32->64) -> lrelu -> conv(64->64), full resolution."""

    def __init__(self, name: str, seed: int = 0, dtype=np.float32):
        self.conv1 = Conv2d(f"{name}.conv1", 3, 32, seed=seed, dtype=dtype)
        self.conv2 = Conv2d(f"{name}.conv2", 32, 64, seed=seed, dtype=dtype)
        self.conv3 = Conv2d(f"{name}.conv3", 64, FEATURES, seed=seed, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[1] != 3:
            raise ValueError(f"encoder expects 3 input channels, got {x.shape}")
        h = ops.leaky_relu(self.conv1(x))
        h = ops.leaky_relu(self.conv2(h))
        return self.conv3(h)


def image_to_tensor(rgb: np.ndarray, dtype=np.float32) -> Tensor:
    """H x W x 3 image -> 1 x 3 x H x W tensor."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected an H x W x 3 image, got shape {rgb.shape}")
    return Tensor(np.ascontiguousarray(rgb.transpose(2, 0, 1)[None], dtype=dtype))


def encode(encoders: dict, image: np.ndarray, which: str) -> Tensor:
    """Encode an RGB image with the ``render`` or ``neighbor`` encoder."""
    if which not in ("render", "neighbor"):
        raise ValueError(f"which must be 'render' or 'neighbor', got {which!r}")
    enc = encoders[which]
    return enc(image_to_tensor(image, enc.conv1.weight.dtype))


def base_grid(h: int, w: int, dtype=np.float64) -> np.ndarray:
    v, u = np.mgrid[0:h, 0:w]
    return np.stack([u, v], axis=-1).astype(dtype)


def warp2d(features: Tensor, flow: Tensor) -> Tensor:
    """Sample ``features`` (N,C,H,W) at ``(x + dx, y + dy)`` for flow (N,2,H,W)."""
    features, flow = as_tensor(features), as_tensor(flow)
    n, _, h, w = features.shape
    if flow.shape != (n, 2, h, w):
        raise ConfigurationError(f"flow shape {flow.shape} does not match features {features.shape}")
    grid = ops.add(ops.transpose(flow, (0, 2, 3, 1)), Tensor(base_grid(h, w, features.dtype)))
    return ops.grid_sample(features, grid)


def upsample_flow(flow: Tensor, h: int, w: int) -> Tensor:
    """Bilinear resize of a flow field with its offsets rescaled to the new size."""
    hc, wc = flow.shape[-2:]
    up = ops.resize_bilinear(flow, h, w)
    factors = np.array([w / wc, h / hc], dtype=flow.dtype).reshape(1, 2, 1, 1)
    return ops.mul(up, Tensor(factors))


class FlowNet(Module):
    """Residual flow updates estimated at 1/8 resolution.

    Each iteration warps the source by the current flow, reduces the
    (warped source, target) pair to 1/8 resolution with three stride-2 convs,
    and predicts a flow increment from those features plus the current flow.
    The last update conv starts at zero so the initial output is zero flow.
    """

    def __init__(self, name: str = "flow", seed: int = 0, iterations: int = FLOW_ITERATIONS, dtype=np.float32):
        self.iterations = iterations
        self.head1 = Conv2d(f"{name}.head1", 2 * FEATURES, 64, stride=2, seed=seed, dtype=dtype)
        self.head2 = Conv2d(f"{name}.head2", 64, 64, stride=2, seed=seed, dtype=dtype)
        self.head3 = Conv2d(f"{name}.head3", 64, 64, stride=2, seed=seed, dtype=dtype)
        self.update1 = Conv2d(f"{name}.update1", 64 + 2, 64, seed=seed, dtype=dtype)
        self.update2 = Conv2d(f"{name}.update2", 64, 32, seed=seed, dtype=dtype)
        self.update3 = Conv2d(f"{name}.update3", 32, 2, seed=seed, dtype=dtype, zero=True)

    def coarse_shape(self, h: int, w: int) -> tuple[int, int]:
        for _ in range(3):
            h, w = -(-h // 2), -(-w // 2)
        return h, w

    def __call__(self, source: Tensor, target: Tensor) -> Tensor:
        if source.shape != target.shape:
            raise ValueError(f"flow inputs differ in shape: {source.shape} vs {target.shape}")
        n, _, h, w = source.shape
        hc, wc = self.coarse_shape(h, w)
        flow = Tensor(np.zeros((n, 2, hc, wc), dtype=source.dtype))
        for it in range(self.iterations):
            # the first iteration starts from exactly zero flow: skip the identity warp
            warped = source if it == 0 else warp2d(source, upsample_flow(flow, h, w))
            f = ops.leaky_relu(self.head1(ops.concat([warped, target])))
            f = ops.leaky_relu(self.head2(f))
            f = ops.leaky_relu(self.head3(f))
            u = ops.leaky_relu(self.update1(ops.concat([f, flow])))
            u = ops.leaky_relu(self.update2(u))
            flow = ops.add(flow, self.update3(u))
        return upsample_flow(flow, h, w)


def estimate_flow(net: FlowNet, source: Tensor, target: Tensor) -> Tensor:
    """Full-resolution flow (N,2,H,W) aligning ``source`` to ``target``."""
    return net(source, target)


def flow_to_hw2(flow: Tensor) -> np.ndarray:
    """(1,2,H,W) flow tensor -> H x W x 2 array of (dx, dy)."""
    return flow.data[0].transpose(1, 2, 0)
