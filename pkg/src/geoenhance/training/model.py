"""The full enhancer: neighbour selection through backbone for one novel view."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .. import geometry
from ..alignment import Encoder, FlowNet, image_to_tensor, warp2d
from ..attention_fusion import (
    Backbone,
    CameraAttention,
    PixelAttention,
    apply_attention,
    camera_attention,
    enhance_backbone,
    fuse,
    pixel_attention,
)
from ..numerics import ops
from ..numerics.layers import Module
from ..numerics.tensor import Tensor
from ..rotations import euler_zyx
from ..scene_io.types import CameraPose, PinholeIntrinsics


@dataclass
class ViewInput:
    """A view as the enhancer sees it: an image with depth and calibration."""

    rgb: np.ndarray
    depth: np.ndarray
    pose: CameraPose
    intrinsics: PinholeIntrinsics


class Enhancer(Module):
    """All learnable parts; parameter names are the checkpoint keys."""

    def __init__(self, seed: int = 0, dtype=np.float32, flow_iterations: int = 3, residual: bool = False):
        self.residual = residual
        self.enc_render = Encoder("enc_render", seed, dtype)
        self.enc_neighbor = Encoder("enc_neighbor", seed, dtype)
        self.flow = FlowNet("flow", seed, flow_iterations, dtype)
        self.att_pix = PixelAttention("att_pix", seed, dtype)
        self.att_cam = CameraAttention("att_cam", seed, dtype)
        self.backbone = Backbone(seed, dtype, zero_out=residual)

    @property
    def dtype(self):
        return self.enc_render.conv1.weight.dtype


@dataclass
class Trace:
    """Intermediate results kept for inspection and tests."""

    neighbors: list
    masks: list
    flows: list
    psi_pix: list
    psi_cam: list


def camera_features(pose: CameraPose) -> tuple[np.ndarray, np.ndarray]:
    R, c = geometry.camera_descriptor(pose)
    return euler_zyx(R), c


def forward(
    model: Enhancer,
    render: ViewInput,
    neighbors: Sequence[ViewInput],
    leniency: float = geometry.DEFAULT_LENIENCY,
    crop_box: tuple[int, int, int, int] | None = None,
    attention: bool = True,
    trace: Trace | None = None,
) -> Tensor:
    """Enhanced image (1,3,h,w) for ``render`` given already-selected neighbours.

    Encoding, reprojection and flow run on full images; ``crop_box``
    (top, left, height, width) then restricts attention, fusion and the
    backbone to a window.  Every neighbour goes through the same per-item
    code path, so the result does not depend on neighbour order.
    """
    if len(neighbors) == 0:
        raise ValueError("at least one neighbour is required")
    dtype = model.dtype
    render_t = image_to_tensor(render.rgb, dtype)
    render_feat = model.enc_render(render_t)
    h, w = render.depth.shape
    top, left, ch, cw = crop_box if crop_box is not None else (0, 0, h, w)

    def cut(t: Tensor) -> Tensor:
        return t if crop_box is None else ops.crop(t, top, left, ch, cw)

    render_cut = cut(render_feat)
    depth_k = render.depth[top : top + ch, left : left + cw]
    euler_k, pos_k = camera_features(render.pose)
    attended = []
    for nb in neighbors:
        grid = geometry.reproject_map(render.depth, render.intrinsics, render.pose, nb.intrinsics, nb.pose)
        mask = geometry.visibility(grid, nb.depth, leniency)
        feat = model.enc_neighbor(image_to_tensor(nb.rgb, dtype))
        aligned, depth_ik = geometry.gather_aligned(feat, nb.depth, grid, mask)
        flow = model.flow(aligned, render_feat)
        warped = cut(warp2d(aligned, flow))
        psi_pix = pixel_attention(model.att_pix, warped, render_cut, depth_ik[top : top + ch, left : left + cw], depth_k)
        euler_i, pos_i = camera_features(nb.pose)
        psi_cam = camera_attention(model.att_cam, euler_i, euler_k, pos_i, pos_k)
        if not attention:
            psi_pix = Tensor(np.zeros(psi_pix.shape, dtype=dtype))
            psi_cam = Tensor(np.zeros(psi_cam.shape, dtype=dtype))
        attended.append(apply_attention(warped, psi_pix, psi_cam))
        if trace is not None:
            trace.masks.append(mask)
            trace.flows.append(flow.data)
            trace.psi_pix.append(psi_pix.data)
            trace.psi_cam.append(psi_cam.data)
    pooled = fuse(attended)
    residual = cut(render_t) if model.residual else None
    return enhance_backbone(model.backbone, render_cut, pooled, residual)


def to_image(out: Tensor, clamp: bool = True) -> np.ndarray:
    img = out.data[0].transpose(1, 2, 0).astype(np.float64)
    return np.clip(img, 0.0, 1.0) if clamp else img
