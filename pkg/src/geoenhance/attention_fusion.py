"""Pixel and camera attention, max-pool fusion, and the enhancement backbone."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ConfigurationError
from .numerics import ops
from .numerics.layers import Conv2d, Linear, Module
from .numerics.tensor import Tensor, as_tensor


def normalize_depth(d: np.ndarray) -> np.ndarray:
    """d -> d / (1 + d); keeps depth channels in [0, 1)."""
    d = np.maximum(np.asarray(d), 0.0)
    return d / (1.0 + d)


class PixelAttention(Module):
    """conv(130->64) -> lrelu -> conv(64->1) -> sigmoid."""

    def __init__(self, name: str = "att_pix", seed: int = 0, dtype=np.float32):
        self.conv1 = Conv2d(f"{name}.conv1", 64 + 64 + 1 + 1, 64, seed=seed, dtype=dtype)
        self.conv2 = Conv2d(f"{name}.conv2", 64, 1, seed=seed, dtype=dtype)

    def __call__(self, neighbor: Tensor, render: Tensor, depth_aligned, depth_render) -> Tensor:
        return pixel_attention(self, neighbor, render, depth_aligned, depth_render)


def _depth_channel(d, like: Tensor) -> Tensor:
    if isinstance(d, Tensor):
        return d
    d = np.asarray(d, dtype=like.dtype)
    while d.ndim < 4:
        d = d[None]
    return Tensor(normalize_depth(d).astype(like.dtype))


def pixel_attention(net: PixelAttention, neighbor: Tensor, render: Tensor, depth_aligned, depth_render) -> Tensor:
    """Per-pixel gate (N,1,H,W) from [neighbour, render, aligned depth, render depth].

    Raw depth arrays are normalised with :func:`normalize_depth`; tensors are
    passed through unchanged.
    """
    neighbor, render = as_tensor(neighbor), as_tensor(render)
    da = _depth_channel(depth_aligned, neighbor)
    dr = _depth_channel(depth_render, neighbor)
    shapes = {neighbor.shape[-2:], render.shape[-2:], da.shape[-2:], dr.shape[-2:]}
    if len(shapes) != 1:
        raise ValueError(f"pixel attention inputs disagree in spatial size: {sorted(shapes)}")
    x = ops.concat([neighbor, render, da, dr])
    h = ops.leaky_relu(net.conv1(x))
    return ops.sigmoid(net.conv2(h))


class CameraAttention(Module):
    """linear(12->16) -> lrelu -> linear(16->1) -> sigmoid."""

    def __init__(self, name: str = "att_cam", seed: int = 0, dtype=np.float32):
        self.fc1 = Linear(f"{name}.fc1", 12, 16, seed=seed, dtype=dtype)
        self.fc2 = Linear(f"{name}.fc2", 16, 1, seed=seed, dtype=dtype)

    def __call__(self, euler_i, euler_k, t_i, t_k) -> Tensor:
        return camera_attention(self, euler_i, euler_k, t_i, t_k)


def camera_attention(net: CameraAttention, euler_i, euler_k, t_i, t_k) -> Tensor:
    """Scalar gate (shape (1,)) from neighbour and novel camera orientation and position."""
    parts = [np.asarray(v, dtype=np.float64).reshape(3) for v in (euler_i, euler_k, t_i, t_k)]
    x = Tensor(np.concatenate(parts).astype(net.fc1.weight.dtype))
    return camera_attention_tensor(net, x)


def camera_attention_tensor(net: CameraAttention, x: Tensor) -> Tensor:
    h = ops.leaky_relu(net.fc1(x))
    return ops.sigmoid(net.fc2(h))


def apply_attention(features: Tensor, psi_pix: Tensor, psi_cam: Tensor) -> Tensor:
    """features * psi_pix (broadcast over channels) * psi_cam (per image)."""
    features, psi_pix, psi_cam = as_tensor(features), as_tensor(psi_pix), as_tensor(psi_cam)
    cam = ops.reshape(psi_cam, (-1, 1, 1, 1)) if psi_cam.data.ndim < 4 else psi_cam
    return ops.mul(ops.mul(features, psi_pix), cam)


def fuse(features: Sequence[Tensor]) -> Tensor:
    """Elementwise max over any number of neighbour feature maps."""
    if len(features) == 0:
        raise ValueError("fuse needs at least one neighbour feature map")
    return ops.set_max(list(features))


class Backbone(Module):
    """Merge conv plus a two-level encoder-decoder with additive skips.

    merge(128->64) -> [enc 64->64 s2 -> 64->128 s2 -> 128->128 x2]
    -> up -> conv(128->64) + skip(1/2) -> up + skip(full) -> conv(64->32) -> conv(32->3)

    ``zero_out`` starts the last conv at zero, which together with a residual
    connection makes the untrained enhancer the identity.
    """

    def __init__(self, seed: int = 0, dtype=np.float32, zero_out: bool = False):
        self.merge = Conv2d("merge.conv", 128, 64, seed=seed, dtype=dtype)
        self.enc1 = Conv2d("backbone.enc1", 64, 64, stride=2, seed=seed, dtype=dtype)
        self.enc2 = Conv2d("backbone.enc2", 64, 128, stride=2, seed=seed, dtype=dtype)
        self.mid1 = Conv2d("backbone.mid1", 128, 128, seed=seed, dtype=dtype)
        self.mid2 = Conv2d("backbone.mid2", 128, 128, seed=seed, dtype=dtype)
        self.dec1 = Conv2d("backbone.dec1", 128, 64, seed=seed, dtype=dtype)
        self.dec2 = Conv2d("backbone.dec2", 64, 32, seed=seed, dtype=dtype)
        self.out = Conv2d("backbone.out", 32, 3, seed=seed, dtype=dtype, zero=zero_out)

    def __call__(self, render_features: Tensor, pooled: Tensor) -> Tensor:
        return enhance_backbone(self, render_features, pooled)


def enhance_backbone(net: Backbone, render_features: Tensor, pooled: Tensor, residual: Tensor | None = None) -> Tensor:
    """(N,3,H,W) image from render features and pooled neighbour features.

    Inputs whose size is not a multiple of 4 are reflect-padded and the
    output cropped back.  ``residual`` (the render itself) is added to the
    output when given.
    """
    render_features, pooled = as_tensor(render_features), as_tensor(pooled)
    if render_features.shape != pooled.shape:
        raise ConfigurationError(f"backbone inputs differ: {render_features.shape} vs {pooled.shape}")
    h, w = render_features.shape[-2:]
    ph, pw = (-h) % 4, (-w) % 4
    x = net.merge(ops.concat([render_features, pooled]))
    x = ops.reflect_pad(x, ph, pw)
    e1 = ops.leaky_relu(net.enc1(x))
    e2 = ops.leaky_relu(net.enc2(e1))
    m = ops.leaky_relu(net.mid1(e2))
    m = ops.leaky_relu(net.mid2(m))
    hh, ww = e1.shape[-2:]
    d1 = ops.add(ops.leaky_relu(net.dec1(ops.resize_bilinear(m, hh, ww))), e1)
    d2 = ops.add(ops.resize_bilinear(d1, h + ph, w + pw), x)
    d2 = ops.leaky_relu(net.dec2(d2))
    out = net.out(d2)
    if ph or pw:
        out = ops.crop(out, 0, 0, h, w)
    if residual is not None:
        out = ops.add(out, residual)
    return out
