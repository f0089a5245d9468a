"""Differentiable layer operations on :class:`Tensor`.

Feature maps are laid out N x C x H x W.  Every op returns a new tensor and,
when any operand requires gradients, records a backward closure.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigurationError
from . import kernels
from .tensor import Tensor, as_tensor, make_result

LEAKY_SLOPE = 0.01


def _same_padding(size: int, k: int, stride: int) -> tuple[int, int, int]:
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    return out, total // 2, total - total // 2


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1) -> Tensor:
    """Zero-padded cross-correlation with output size ``ceil(in / stride)``."""
    x = as_tensor(x)
    xd, wd = x.data, weight.data
    if xd.ndim != 4 or wd.ndim != 4 or wd.shape[2] != wd.shape[3]:
        raise ConfigurationError(f"conv2d expects NCHW input and OIkk weight, got {xd.shape} and {wd.shape}")
    if xd.shape[1] != wd.shape[1]:
        raise ConfigurationError(f"conv2d channel mismatch: input {xd.shape} vs weight {wd.shape}")
    if stride < 1:
        raise ConfigurationError(f"conv2d stride must be >= 1, got {stride}")
    if stride == 1 and wd.shape[2] % 2 == 1:
        return _conv2d_shifted(x, weight, bias)
    return _conv2d_im2col(x, weight, bias, stride)


def _conv2d_shifted(x: Tensor, weight: Tensor, bias: Tensor | None) -> Tensor:
    # Stride-1 odd kernels: with the padded image flattened row-major, the input
    # window for tap (i, j) is one contiguous slice, so each tap is a plain GEMM.
    # Output rows come out Wp wide; the trailing 2p columns are discarded.
    xd, wd = x.data, weight.data
    n, cin, h, w = xd.shape
    cout, _, k, _ = wd.shape
    p = k // 2
    xp = np.pad(xd, ((0, 0), (0, 0), (p, p + 1), (p, p)))
    hp, wp = xp.shape[2:]
    xf = xp.reshape(n, cin, hp * wp)
    span = h * wp
    taps = np.ascontiguousarray(wd.transpose(2, 3, 0, 1))  # (k, k, Cout, Cin)
    wide = np.zeros((n, cout, span), dtype=np.result_type(xd, wd))
    tmp = np.empty((cout, span), dtype=wide.dtype)
    for b in range(n):
        for i in range(k):
            for j in range(k):
                off = i * wp + j
                np.matmul(taps[i, j], xf[b, :, off : off + span], out=tmp)
                wide[b] += tmp
    out = wide.reshape(n, cout, h, wp)[:, :, :, :w]
    if bias is not None:
        out = out + bias.data[:, None, None]
    else:
        out = np.ascontiguousarray(out)
    parents = [x, weight] + ([bias] if bias is not None else [])

    def backward(g):
        gwide = np.zeros((n, cout, h, wp), dtype=g.dtype)
        gwide[:, :, :, :w] = g
        gwide = gwide.reshape(n, cout, span)
        gw = np.zeros((k, k, cout, cin), dtype=wd.dtype) if weight.requires_grad else None
        gxf = np.zeros((n, cin, hp * wp), dtype=xd.dtype) if x.requires_grad else None
        for b in range(n):
            for i in range(k):
                for j in range(k):
                    off = i * wp + j
                    if gw is not None:
                        gw[i, j] += gwide[b] @ xf[b, :, off : off + span].T
                    if gxf is not None:
                        gxf[b, :, off : off + span] += taps[i, j].T @ gwide[b]
        gx = None
        if gxf is not None:
            gx = gxf.reshape(n, cin, hp, wp)[:, :, p : p + h, p : p + w]
        if gw is not None:
            gw = gw.transpose(2, 3, 0, 1)
        gb = g.sum(axis=(0, 2, 3)) if bias is not None and bias.requires_grad else None
        return (gx, gw) + ((gb,) if bias is not None else ())

    return make_result(out, parents, backward)


def _conv2d_im2col(x: Tensor, weight: Tensor, bias: Tensor | None, stride: int) -> Tensor:
    xd, wd = x.data, weight.data
    n, cin, h, w = xd.shape
    cout, _, k, _ = wd.shape
    ho, pt, pb = _same_padding(h, k, stride)
    wo, pl, pr = _same_padding(w, k, stride)
    xp = np.pad(xd, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    # (C, k, k, N, Ho, Wo) -> (C*k*k, N*Ho*Wo)
    cols = np.ascontiguousarray(win.transpose(1, 4, 5, 0, 2, 3)).reshape(cin * k * k, n * ho * wo)
    w2 = wd.reshape(cout, -1)
    y = w2 @ cols
    if bias is not None:
        y += bias.data[:, None]
    out = y.reshape(cout, n, ho, wo).transpose(1, 0, 2, 3)
    out = np.ascontiguousarray(out)

    parents = [x, weight] + ([bias] if bias is not None else [])

    def backward(g):
        g2 = g.transpose(1, 0, 2, 3).reshape(cout, -1)
        gx = gw = gb = None
        if weight.requires_grad:
            gw = (g2 @ cols.T).reshape(wd.shape)
        if bias is not None and bias.requires_grad:
            gb = g2.sum(axis=1)
        if x.requires_grad:
            gcols = (w2.T @ g2).reshape(cin, k, k, n, ho, wo)
            gxp = np.zeros(xp.shape, dtype=xd.dtype)
            for i in range(k):
                for j in range(k):
                    gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += gcols[:, i, j].transpose(
                        1, 0, 2, 3
                    )
            gx = gxp[:, :, pt : pt + h, pl : pl + w]
        return (gx, gw) + ((gb,) if bias is not None else ())

    return make_result(out, parents, backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``weight @ x + bias`` for a 1-D input vector."""
    x = as_tensor(x)
    xd, wd = x.data, weight.data
    if xd.ndim != 1 or wd.ndim != 2 or wd.shape[1] != xd.shape[0]:
        raise ConfigurationError(f"linear shape mismatch: input {xd.shape} vs weight {wd.shape}")
    out = wd @ xd
    if bias is not None:
        out = out + bias.data
    parents = [x, weight] + ([bias] if bias is not None else [])

    def backward(g):
        gx = wd.T @ g if x.requires_grad else None
        gw = np.outer(g, xd) if weight.requires_grad else None
        return (gx, gw) + ((g,) if bias is not None else ())

    return make_result(out, parents, backward)


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    d = x.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(d))
    out = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(d.dtype)
    # keep strictly inside (0, 1) in float precision
    tiny = np.finfo(d.dtype).tiny
    out = np.clip(out, tiny, np.nextafter(np.asarray(1.0, d.dtype), 0))
    return make_result(out, [x], lambda g: (g * out * (1 - out),))


def leaky_relu(x: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    x = as_tensor(x)
    d = x.data
    pos = d >= 0
    out = np.where(pos, d, slope * d).astype(d.dtype)
    return make_result(out, [x], lambda g: (np.where(pos, g, slope * g),))


def activation(x: Tensor, kind: str) -> Tensor:
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "leaky_relu":
        return leaky_relu(x)
    raise ConfigurationError(f"unknown activation {kind!r}")


def grid_sample(x: Tensor, grid) -> Tensor:
    """Bilinear sampling with zero padding.

    ``grid`` holds source pixel coordinates (x=column, y=row), shape
    (H_out, W_out, 2) shared over the batch or (N, H_out, W_out, 2).  It may be
    a Tensor, in which case gradients flow to the coordinates too.
    """
    x = as_tensor(x)
    grid = as_tensor(grid)
    gd = grid.data
    if gd.ndim == 3:
        gd = np.broadcast_to(gd, (x.shape[0],) + gd.shape)
    if gd.ndim != 4 or gd.shape[-1] != 2 or gd.shape[0] != x.shape[0]:
        raise ConfigurationError(f"grid_sample grid shape {grid.shape} incompatible with input {x.shape}")
    out = kernels.sample_forward(x.data, gd)
    shared = grid.data.ndim == 3

    def backward(g):
        gin, ggrid = kernels.sample_backward(x.data, gd, g, x.requires_grad, grid.requires_grad)
        if ggrid is not None and shared:
            ggrid = ggrid.sum(axis=0)
        return gin, ggrid

    return make_result(out, [x, grid], backward)


def set_max(inputs: Sequence[Tensor]) -> Tensor:
    """Elementwise max across a list of same-shape tensors.

    The gradient of each element goes to the first (lowest-index) maximiser.
    """
    if len(inputs) == 0:
        raise ValueError("set_max needs at least one input")
    inputs = [as_tensor(t) for t in inputs]
    shape = inputs[0].shape
    for t in inputs[1:]:
        if t.shape != shape:
            raise ConfigurationError(f"set_max shape mismatch: {shape} vs {t.shape}")
    if len(inputs) == 1:
        only = inputs[0]
        return make_result(only.data.copy(), [only], lambda g: (g,))
    stacked = np.stack([t.data for t in inputs])
    arg = np.argmax(stacked, axis=0)
    out = np.take_along_axis(stacked, arg[None], axis=0)[0]

    def backward(g):
        return tuple(np.where(arg == i, g, 0).astype(g.dtype) if t.requires_grad else None for i, t in enumerate(inputs))

    return make_result(out, inputs, backward)


def concat(inputs: Sequence[Tensor], axis: int = 1) -> Tensor:
    inputs = [as_tensor(t) for t in inputs]
    try:
        out = np.concatenate([t.data for t in inputs], axis=axis)
    except ValueError as exc:
        raise ConfigurationError(f"concat shape mismatch: {[t.shape for t in inputs]}") from exc
    bounds = np.cumsum([0] + [t.shape[axis] for t in inputs])

    def backward(g):
        sl = [slice(None)] * g.ndim
        res = []
        for i in range(len(inputs)):
            sl[axis] = slice(bounds[i], bounds[i + 1])
            res.append(g[tuple(sl)])
        return res

    return make_result(out, inputs, backward)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data
    return make_result(out, [a, b], lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Broadcasting elementwise product."""
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_result(out, [a, b], backward)


def scale(x: Tensor, factor: float) -> Tensor:
    x = as_tensor(x)
    return make_result(x.data * factor, [x], lambda g: (g * factor,))


def reshape(x: Tensor, shape) -> Tensor:
    x = as_tensor(x)
    orig = x.shape
    return make_result(x.data.reshape(shape), [x], lambda g: (g.reshape(orig),))


def transpose(x: Tensor, axes) -> Tensor:
    x = as_tensor(x)
    inv = np.argsort(axes)
    return make_result(np.ascontiguousarray(x.data.transpose(axes)), [x], lambda g: (g.transpose(inv),))


def crop(x: Tensor, top: int, left: int, height: int, width: int) -> Tensor:
    """Spatial crop of an N x C x H x W map."""
    x = as_tensor(x)
    out = x.data[..., top : top + height, left : left + width].copy()

    def backward(g):
        full = np.zeros_like(x.data)
        full[..., top : top + height, left : left + width] = g
        return (full,)

    return make_result(out, [x], backward)


def reflect_pad(x: Tensor, bottom: int, right: int) -> Tensor:
    """Reflect-pad the bottom and right edges of an N x C x H x W map."""
    x = as_tensor(x)
    if bottom == 0 and right == 0:
        return x
    h, w = x.shape[-2:]
    rows = np.concatenate([np.arange(h), h - 2 - np.arange(bottom)])
    cols = np.concatenate([np.arange(w), w - 2 - np.arange(right)])
    if rows.min() < 0 or cols.min() < 0:
        raise ConfigurationError(f"reflect padding {bottom, right} too large for map {x.shape}")
    out = x.data[..., rows[:, None], cols[None, :]]

    def backward(g):
        gy = np.zeros(g.shape[:-2] + (h, g.shape[-1]), dtype=g.dtype)
        np.add.at(gy, (..., rows, slice(None)), g)
        gx = np.zeros(g.shape[:-2] + (h, w), dtype=g.dtype)
        np.add.at(gx, (..., slice(None), cols), gy)
        return (gx,)

    return make_result(out, [x], backward)


def resize_matrix(n_in: int, n_out: int, dtype=np.float64) -> np.ndarray:
    """Row-stochastic bilinear interpolation matrix with half-pixel centres."""
    m = np.zeros((n_out, n_in), dtype=dtype)
    scale_ = n_in / n_out
    for i in range(n_out):
        src = min(max((i + 0.5) * scale_ - 0.5, 0.0), n_in - 1)
        i0 = int(math.floor(src))
        i1 = min(i0 + 1, n_in - 1)
        f = src - i0
        m[i, i0] += 1 - f
        m[i, i1] += f
    return m


def resize_bilinear(x: Tensor, height: int, width: int) -> Tensor:
    """Separable bilinear resize of the last two axes."""
    x = as_tensor(x)
    h, w = x.shape[-2:]
    if (h, w) == (height, width):
        return x
    my = resize_matrix(h, height, x.dtype)
    mx = resize_matrix(w, width, x.dtype)
    out = np.matmul(np.matmul(my, x.data), mx.T)
    return make_result(out, [x], lambda g: (np.matmul(np.matmul(my.T, g), mx),))


def mean_abs_diff(a: Tensor, b: Tensor) -> Tensor:
    """Mean absolute difference as a 0-d tensor; d|x|/dx = 0 at x = 0."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ConfigurationError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a.data - b.data
    out = np.asarray(np.abs(diff).mean(), dtype=a.dtype)
    sign = np.sign(diff)
    n = diff.size

    def backward(g):
        s = sign * (g / n)
        return (s if a.requires_grad else None), (-s if b.requires_grad else None)

    return make_result(out, [a, b], backward)


def total(x: Tensor, weights: np.ndarray | None = None) -> Tensor:
    """Sum of all elements, optionally weighted; used to scalarise outputs."""
    x = as_tensor(x)
    if weights is None:
        return make_result(np.asarray(x.data.sum()), [x], lambda g: (np.broadcast_to(g, x.shape).copy(),))
    weights = np.asarray(weights, dtype=x.dtype)
    return make_result(np.asarray((x.data * weights).sum()), [x], lambda g: (g * weights,))
