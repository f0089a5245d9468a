"""Finite-difference checks for every differentiable op and network block.

Each case builds small float64 inputs (at most 8 x 8 spatially) and returns
the worst relative error reported by :func:`numerics.grad_check`.
"""

from __future__ import annotations

from typing import Callable, Iterator

import numpy as np

from . import alignment, attention_fusion, geometry
from .numerics import ops
from .numerics.gradcheck import grad_check
from .numerics.tensor import Tensor

F64 = np.float64


def _t(rng, *shape, low=None, high=None) -> Tensor:
    if low is None:
        return Tensor(rng.standard_normal(shape))
    return Tensor(rng.uniform(low, high, shape))


def _case_conv(rng, stride, k=3):
    x, w, b = _t(rng, 2, 3, 7, 6), _t(rng, 4, 3, k, k), _t(rng, 4)
    return lambda: ops.conv2d(x, w, b, stride), [x, w, b]


def _case_linear(rng):
    x, w, b = _t(rng, 5), _t(rng, 3, 5), _t(rng, 3)
    return lambda: ops.linear(x, w, b), [x, w, b]


def _case_unary(rng, op):
    x = _t(rng, 1, 2, 5, 5)
    return lambda: op(x), [x]


def _case_grid_sample(rng):
    x = _t(rng, 2, 3, 6, 7)
    grid = _t(rng, 5, 4, 2, low=-1.5, high=7.5)
    return lambda: ops.grid_sample(x, grid), [x, grid]


def _case_set_max(rng):
    # distinct values keep the argmax away from ties
    vals = rng.permutation(3 * 2 * 4 * 4).reshape(3, 1, 2, 4, 4) * 0.1
    xs = [Tensor(v) for v in vals]
    return lambda: ops.set_max(xs), xs


def _case_concat(rng):
    a, b = _t(rng, 1, 2, 4, 4), _t(rng, 1, 3, 4, 4)
    return lambda: ops.concat([a, b]), [a, b]


def _case_broadcast(rng, op):
    a, b = _t(rng, 2, 3, 4, 4), _t(rng, 2, 1, 4, 4)
    return lambda: op(a, b), [a, b]


def _case_shape(rng):
    x = _t(rng, 1, 2, 3, 4)
    return lambda: ops.transpose(ops.reshape(x, (2, 3, 4)), (2, 0, 1)), [x]


def _case_crop_pad(rng):
    x = _t(rng, 1, 2, 7, 6)
    return lambda: ops.reflect_pad(ops.crop(x, 1, 2, 5, 3), 3, 2), [x]


def _case_resize(rng, h, w):
    x = _t(rng, 1, 2, 5, 6)
    return lambda: ops.resize_bilinear(x, h, w), [x]


def _case_mean_abs(rng):
    a, b = _t(rng, 1, 3, 4, 4), _t(rng, 1, 3, 4, 4)
    return lambda: ops.mean_abs_diff(a, b), [a, b]


def _case_total(rng):
    x = _t(rng, 2, 3, 4)
    w = rng.standard_normal((2, 3, 4))
    return lambda: ops.total(x, w), [x]


def _case_encoder(rng):
    enc = alignment.Encoder("enc", seed=3, dtype=F64)
    x = _t(rng, 1, 3, 8, 8, low=0, high=1)
    return lambda: enc(x), [x] + enc.parameters()


def _case_warp(rng):
    f, flow = _t(rng, 1, 3, 6, 6), Tensor(rng.uniform(-1.3, 1.3, (1, 2, 6, 6)))
    return lambda: alignment.warp2d(f, flow), [f, flow]


def _case_upsample_flow(rng):
    flow = _t(rng, 1, 2, 2, 3)
    return lambda: alignment.upsample_flow(flow, 8, 8), [flow]


def _case_flownet(rng):
    net = alignment.FlowNet("flow", seed=5, dtype=F64)
    # a random last layer gives non-zero flow so the later warps are exercised
    net.update3.weight.data = rng.standard_normal(net.update3.weight.shape) * 0.3
    src, tgt = _t(rng, 1, 64, 8, 8), _t(rng, 1, 64, 8, 8)
    return lambda: net(src, tgt), [src, tgt] + net.parameters()


def _case_gather(rng):
    from .scene_io.synth import intrinsics_for, look_at_pose

    K = intrinsics_for(8, 8, 50.0)
    ck = look_at_pose((0.3, -1.6, 1.2), (0, 0, 0))
    ci = look_at_pose((-0.2, -1.7, 1.1), (0, 0, 0))
    dk = 1.9 + 0.1 * rng.random((8, 8))
    di = 1.9 + 0.1 * rng.random((8, 8))
    grid = geometry.reproject_map(dk, K, ck, K, ci)
    mask = geometry.visibility(grid, di, 0.25)
    feat = _t(rng, 1, 4, 8, 8)
    return lambda: geometry.gather_aligned(feat, di, grid, mask)[0], [feat]


def _case_pixel_attention(rng):
    net = attention_fusion.PixelAttention("att_pix", seed=7, dtype=F64)
    nb, rd = _t(rng, 1, 64, 6, 6), _t(rng, 1, 64, 6, 6)
    da, dr = rng.uniform(0.5, 3, (6, 6)), rng.uniform(0.5, 3, (6, 6))
    return lambda: attention_fusion.pixel_attention(net, nb, rd, da, dr), [nb, rd] + net.parameters()


def _case_camera_attention(rng):
    net = attention_fusion.CameraAttention("att_cam", seed=7, dtype=F64)
    x = _t(rng, 12)
    return lambda: attention_fusion.camera_attention_tensor(net, x), [x] + net.parameters()


def _case_attention_fusion(rng):
    feats = [_t(rng, 1, 4, 5, 5) for _ in range(3)]
    pix = [_t(rng, 1, 1, 5, 5, low=0.05, high=0.95) for _ in range(3)]
    cam = [_t(rng, 1, low=0.05, high=0.95) for _ in range(3)]

    def fn():
        return attention_fusion.fuse([attention_fusion.apply_attention(f, p, c) for f, p, c in zip(feats, pix, cam)])

    return fn, feats + pix + cam


def _case_backbone(rng, size):
    net = attention_fusion.Backbone(seed=11, dtype=F64)
    rf, pooled = _t(rng, 1, 64, size, size), _t(rng, 1, 64, size, size)
    res = _t(rng, 1, 3, size, size)
    return lambda: attention_fusion.enhance_backbone(net, rf, pooled, res), [rf, pooled, res] + net.parameters()


def _case_loss(rng):
    from .training.loss import loss

    pred = _t(rng, 1, 3, 8, 8, low=0, high=1)
    target = rng.uniform(0, 1, (1, 3, 8, 8))
    return lambda: loss(pred, target), [pred]


CASES: list[tuple[str, Callable]] = [
    ("conv2d stride 1", lambda r: _case_conv(r, 1)),
    ("conv2d stride 2", lambda r: _case_conv(r, 2)),
    ("conv2d 1x1", lambda r: _case_conv(r, 1, k=1)),
    ("linear", _case_linear),
    ("sigmoid", lambda r: _case_unary(r, ops.sigmoid)),
    ("leaky_relu", lambda r: _case_unary(r, ops.leaky_relu)),
    ("scale", lambda r: _case_unary(r, lambda x: ops.scale(x, -2.5))),
    ("grid_sample", _case_grid_sample),
    ("set_max", _case_set_max),
    ("concat", _case_concat),
    ("add (broadcast)", lambda r: _case_broadcast(r, ops.add)),
    ("mul (broadcast)", lambda r: _case_broadcast(r, ops.mul)),
    ("reshape/transpose", _case_shape),
    ("crop/reflect_pad", _case_crop_pad),
    ("resize up", lambda r: _case_resize(r, 8, 8)),
    ("resize down", lambda r: _case_resize(r, 3, 4)),
    ("mean_abs_diff", _case_mean_abs),
    ("total", _case_total),
    ("encoder", _case_encoder),
    ("warp2d", _case_warp),
    ("upsample_flow", _case_upsample_flow),
    ("flow net", _case_flownet),
    ("gather_aligned", _case_gather),
    ("pixel attention", _case_pixel_attention),
    ("camera attention", _case_camera_attention),
    ("attention + fusion", _case_attention_fusion),
    ("merge + backbone 8x8", lambda r: _case_backbone(r, 8)),
    ("merge + backbone 6x6", lambda r: _case_backbone(r, 6)),
    ("loss", _case_loss),
]


def run_case(name: str, seed: int = 0) -> float:
    factory = dict(CASES)[name]
    fn, tensors = factory(np.random.default_rng(seed))
    return grad_check(fn, tensors, seed=seed)


def run_suite(seed: int = 0) -> Iterator[tuple[str, float]]:
    for name, _ in CASES:
        yield name, run_case(name, seed)
